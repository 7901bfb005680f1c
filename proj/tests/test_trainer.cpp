#include <cmath>
#include <set>

#include "doctest.h"
#include "smpcl/error.hpp"
#include "smpcl/gradcheck.hpp"
#include "smpcl/trainer.hpp"
#include "support.hpp"

using namespace smpcl;
using smpcl::test::random_tensor;
using smpcl::test::values;

namespace {

NetworkConfig tiny_net(int k = 2) {
  NetworkConfig c;
  c.num_classes = k;
  c.widths = {3, 4};
  c.height = 16;
  c.width = 16;
  c.state_size = 2;
  return c;
}

Dataset tiny_data(int k = 2, int count = 6, std::uint64_t seed = 0) {
  SynthSpec s;
  s.seed = seed;
  s.count = count;
  s.size = 16;
  s.num_classes = k;
  return synth_dataset(s);
}

std::vector<Sample<double>> batch_of(const Dataset& d, std::size_t n) {
  std::vector<Sample<double>> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(make_sample<double>(d.cases[i].image, d.cases[i].scribbles, false, 0.0, 0));
  }
  return out;
}

std::vector<std::vector<double>> snapshot(const ParameterSet<double>& p) {
  std::vector<std::vector<double>> out;
  for (const auto& t : p.tensors()) out.push_back(values(t));
  return out;
}

// Decoder that multiplies by the frozen encoder weight: the guide tape then
// reads an encoder parameter.
class LeakyGuide final : public GuideModel<double> {
 public:
  LeakyGuide() : inner_(2, 4), scale_(Tensor<double>({1}, {1.0}, true)) {}
  std::string name() const override { return "leaky"; }
  int num_classes() const override { return 2; }
  std::size_t embedding_channels() const override { return 1; }
  Tensor<double> encode_image(const Tensor<double>& image) const override {
    return inner_.encode_image(image);
  }
  PromptEmbedding<double> encode_prompt(const PromptInput<double>& in) const override {
    return inner_.encode_prompt(in);
  }
  Tensor<double> decode(const Tensor<double>&, const PromptEmbedding<double>& p) const override {
    return softmax(mul_scalar(scale_, log(p.prior)), 0);
  }
  ParameterSet<double> encoder_parameters() const override {
    ParameterSet<double> s;
    s.add("scale", scale_);
    return s;
  }
  ParameterSet<double> decoder_parameters() const override { return {}; }

 private:
  IdentityGuide<double> inner_;
  Tensor<double> scale_;
};

}  // namespace

TEST_CASE("fusion: additive identity, commutativity, unit gradients") {
  auto a = random_tensor({3, 4, 4}, 1);
  auto b = random_tensor({3, 4, 4}, 2);
  CHECK(values(fuse_embeddings(a, Tensor<double>::zeros({3, 4, 4}))) == values(a));
  CHECK(values(fuse_embeddings(a, b)) == values(fuse_embeddings(b, a)));
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    auto loss = sum(fuse_embeddings(a, b));
    tape.backward(loss);
  }
  for (double g : values(a.grad())) CHECK(g == 1.0);
  for (double g : values(b.grad())) CHECK(g == 1.0);
  auto probe = random_tensor({3, 4, 4}, 3, -1, 1, false);
  auto r = gradcheck<double>([&] { return sum(mul(fuse_embeddings(a, b), probe)); }, {a, b});
  CHECK(r.max_rel_error <= 1e-9);
  CHECK_THROWS_AS(fuse_embeddings(a, random_tensor({3, 2, 2}, 4)), ShapeError);
}

TEST_CASE("projection maps the guide embedding onto the network embedding shape") {
  Rng rng(5);
  auto proj = Projection<double>::make(4, Shape{6, 2, 3}, rng);
  auto out = proj(random_tensor({4, 4, 4}, 6, -1, 1, false));
  CHECK(out.shape() == Shape{6, 2, 3});
  CHECK(proj.parameters().size() == 2);
}

TEST_CASE("poly learning rate and ramp-up weight") {
  CHECK(poly_lr(0.01, 0, 100) == 0.01);
  CHECK(poly_lr(0.01, 50, 100) == doctest::Approx(0.01 * std::pow(0.5, 0.9)).epsilon(1e-15));
  CHECK(poly_lr(0.01, 100, 100) == 0.0);
  CHECK(rampup_weight(0, 0) == 1.0);
  CHECK(rampup_weight(0, 10) == doctest::Approx(std::exp(-5.0)));
  CHECK(rampup_weight(10, 10) == 1.0);
  CHECK(rampup_weight(50, 10) == 1.0);
}

TEST_CASE("sgd with momentum and weight decay") {
  Tensor<double> w({2}, {1.0, -2.0}, true);
  ParameterSet<double> p;
  p.add("w", w);
  Sgd<double> opt(0.9, 0.1);
  auto set_grad = [&](double g0, double g1) {
    p.zero_grad();
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto loss = sum(mul(w, Tensor<double>({2}, {g0, g1})));
    tape.backward(loss);
  };
  set_grad(0.5, 0.25);
  opt.step(p, 0.1);
  // v = g + wd w; w -= lr v
  const double v0 = 0.5 + 0.1 * 1.0, v1 = 0.25 + 0.1 * -2.0;
  CHECK(w[0] == doctest::Approx(1.0 - 0.1 * v0).epsilon(1e-15));
  CHECK(w[1] == doctest::Approx(-2.0 - 0.1 * v1).epsilon(1e-15));
  const double w0 = w[0];
  set_grad(0.5, 0.25);
  opt.step(p, 0.1);
  const double v0b = 0.9 * v0 + 0.5 + 0.1 * w0;
  CHECK(w[0] == doctest::Approx(w0 - 0.1 * v0b).epsilon(1e-15));
}

TEST_CASE("identity guide with lambda = 1 leaves the network untouched") {
  SparseMambaNet<double> net(tiny_net(), 1);
  IdentityGuide<double> guide(2, 4);
  PclOptions opt;
  opt.lambda = 1.0;
  opt.weight_decay = 0.0;
  PclTrainer<double> trainer(net, guide, opt, 2);
  auto data = tiny_data();
  const auto before = snapshot(net.parameters());
  for (int i = 0; i < 3; ++i) {
    auto r = trainer.step(batch_of(data, 2), 0.01);
    CHECK(r.l1 == doctest::Approx(0.0).epsilon(1e-7));
    for (const auto& t : net.parameters().tensors()) {
      if (!t.has_grad()) continue;
      for (double g : values(t.grad())) CHECK(std::abs(g) <= 1e-7);
    }
  }
  const auto after = snapshot(net.parameters());
  for (std::size_t i = 0; i < before.size(); ++i) {
    for (std::size_t j = 0; j < before[i].size(); ++j) {
      CHECK(std::abs(after[i][j] - before[i][j]) <= 1e-7);
    }
  }
}

TEST_CASE("identity guide makes L1 twice the weighted scribble loss") {
  SparseMambaNet<double> net(tiny_net(), 3);
  IdentityGuide<double> guide(2, 4);
  PclOptions opt;
  opt.lambda = 0.5;
  PclTrainer<double> trainer(net, guide, opt, 4);
  auto data = tiny_data();
  auto batch = batch_of(data, 2);
  double pce = 0;
  {
    NoGradScope<double> ng;
    for (const auto& s : batch) pce += pce_loss(net.forward(s.image).probs, s.labels).item();
  }
  pce /= 2;
  auto r = trainer.step(batch, 0.0);
  CHECK(r.l1 == doctest::Approx(2 * 0.5 * pce).epsilon(1e-9));
}

TEST_CASE("lambda = 0 gives the plain partial cross-entropy gradient") {
  auto data = tiny_data();
  auto batch = batch_of(data, 2);
  SparseMambaNet<double> net(tiny_net(), 5), ref(tiny_net(), 5);
  SyntheticOracleGuide<double> guide(2, 4);
  PclOptions opt;
  opt.lambda = 0.0;
  PclTrainer<double> trainer(net, guide, opt, 6);
  trainer.step(batch, 0.0);

  ref.parameters().zero_grad();
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    Tensor<double> loss;
    for (const auto& s : batch) {
      auto l = pce_loss(ref.forward(s.image).probs, s.labels);
      loss = loss.defined() ? add(loss, l) : l;
    }
    loss = scale(loss, 0.5);
    tape.backward(loss);
  }
  const auto& a = net.parameters().entries();
  const auto& b = ref.parameters().entries();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    INFO(a[i].first);
    REQUIRE(a[i].second.has_grad() == b[i].second.has_grad());
    if (!a[i].second.has_grad()) continue;
    auto ga = values(a[i].second.grad()), gb = values(b[i].second.grad());
    for (std::size_t j = 0; j < ga.size(); ++j) {
      CHECK(ga[j] == doctest::Approx(gb[j]).epsilon(1e-10));
    }
  }
}

TEST_CASE("gradient isolation holds on every step of a 50-step run") {
  auto data = tiny_data(3, 8, 2);
  SparseMambaNet<double> net(tiny_net(3), 7);
  SyntheticOracleGuide<double> guide(3, static_cast<std::size_t>(tiny_net(3).widths.back()));
  PclOptions opt;
  PclTrainer<double> trainer(net, guide, opt, 8);
  const auto encoder_before = snapshot(guide.encoder_parameters());
  const auto decoder_before = snapshot(guide.decoder_parameters());
  for (int i = 0; i < 50; ++i) {
    std::vector<Sample<double>> batch;
    for (int j = 0; j < 2; ++j) {
      const auto& c = data.cases[static_cast<std::size_t>((2 * i + j) % 8)];
      batch.push_back(make_sample<double>(c.image, c.scribbles, true, 0.02,
                                          static_cast<std::uint64_t>(i * 2 + j)));
    }
    std::size_t present = 0;
    for (const auto& s : batch) {
      for (int c : s.labels.classes_present()) present += c > 0;
    }
    auto r = trainer.step(batch, poly_lr(0.01, i, 50));
    INFO("step " << i);
    CHECK(r.isolation.ok);
    CHECK(r.boxes >= present);
  }
  CHECK(snapshot(guide.encoder_parameters()) == encoder_before);
  CHECK(snapshot(guide.decoder_parameters()) != decoder_before);
  CHECK(trainer.steps_taken() == 50);
}

TEST_CASE("an encoder read on the guide tape is reported") {
  auto data = tiny_data();
  SparseMambaNet<double> net(tiny_net(), 9);
  LeakyGuide guide;
  PclOptions opt;
  PclTrainer<double> trainer(net, guide, opt, 10);
  CHECK_THROWS_AS(trainer.step(batch_of(data, 1), 0.01), AutogradError);
  opt.check_isolation = false;
  PclTrainer<double> lenient(net, guide, opt, 10);
  auto r = lenient.step(batch_of(data, 1), 0.01);
  CHECK_FALSE(r.isolation.ok);
  CHECK(r.isolation.violations.size() >= 1);
}

TEST_CASE("a step on a fixed micro-batch is bit-reproducible") {
  auto data = tiny_data(2, 4, 3);
  auto run = [&] {
    SparseMambaNet<double> net(tiny_net(), 11);
    SyntheticOracleGuide<double> guide(2, 4);
    PclTrainer<double> trainer(net, guide, PclOptions{}, 12);
    auto r1 = trainer.step(batch_of(data, 2), 0.01);
    auto r2 = trainer.step(batch_of(data, 2), 0.01);
    auto out = snapshot(net.parameters());
    out.push_back({r1.l1, r1.l2, r2.l1, r2.l2});
    for (auto& v : snapshot(trainer.guide_side_parameters())) out.push_back(v);
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("guide-side parameters are the decoder and the projection") {
  SparseMambaNet<double> net(tiny_net(), 13);
  SyntheticOracleGuide<double> guide(2, 4);
  PclTrainer<double> trainer(net, guide, PclOptions{}, 14);
  std::set<std::string> names;
  for (const auto& [n, t] : trainer.guide_side_parameters().entries()) names.insert(n);
  CHECK(names == std::set<std::string>{"guide.decoder.weight", "guide.decoder.bias",
                                       "projection.weight", "projection.bias"});
}

TEST_CASE("mismatched guides, empty batches and non-finite losses are rejected") {
  auto data = tiny_data();
  SparseMambaNet<double> net(tiny_net(), 15);
  IdentityGuide<double> three(3, 4);
  CHECK_THROWS_AS(PclTrainer<double>(net, three, PclOptions{}, 16), ValidationError);
  IdentityGuide<double> ok(2, 4);
  PclTrainer<double> trainer(net, ok, PclOptions{}, 16);
  CHECK_THROWS_AS(trainer.step({}, 0.01), ValidationError);

  SparseMambaNet<double> bad(tiny_net(), 17);
  auto head_bias = *bad.parameters().find("head.bias");
  head_bias.mutable_data()[0] = std::nan("");
  PclTrainer<double> t2(bad, ok, PclOptions{}, 18);
  CHECK_THROWS_AS(t2.step(batch_of(data, 1), 0.01), DivergenceError);
}

TEST_CASE("augmentation moves labels with pixels and is seeded") {
  GrayImage img(6, 6);
  LabelMap lab(6, 6);
  for (int i = 0; i < 36; ++i) {
    img[static_cast<std::size_t>(i)] = static_cast<float>(i) / 64.0f;
    lab[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i % 3 == 0 ? kUnlabeled : i % 2);
  }
  auto plain = make_sample<float>(img, lab, false, 0.0, 0);
  CHECK(plain.gray == img);
  CHECK(plain.labels == lab);
  std::set<std::vector<float>> layouts;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto s = make_sample<float>(img, lab, true, 0.0, seed);
    for (std::size_t i = 0; i < 36; ++i) {
      const int src = static_cast<int>(std::lround(s.gray[i] * 64.0f));
      CHECK(s.labels[i] == lab[static_cast<std::size_t>(src)]);
    }
    layouts.insert(s.gray.values());
    CHECK(make_sample<float>(img, lab, true, 0.02, seed).gray ==
          make_sample<float>(img, lab, true, 0.02, seed).gray);
  }
  CHECK(layouts.size() == 8);  // the dihedral group of the square
}

TEST_CASE("supervision labels: raw scribbles or enriched") {
  auto data = tiny_data(3, 3);
  auto raw = supervision_labels(data, false, SpobeConfig{});
  auto en = supervision_labels(data, true, SpobeConfig{});
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(raw[i] == data.cases[i].scribbles);
    CHECK(en[i].labeled_count() >= raw[i].labeled_count());
    for (std::size_t j = 0; j < raw[i].size(); ++j) {
      if (raw[i][j] != kUnlabeled) CHECK(en[i][j] == raw[i][j]);
    }
  }
}

TEST_CASE("max_iter = 0 returns the initial network and no history") {
  TrainConfig cfg;
  cfg.net = tiny_net();
  cfg.max_iter = 0;
  cfg.seed = 4;
  auto data = tiny_data();
  auto r = train(cfg, data.slice(0, 4), data.slice(4, 6));
  CHECK(r.history.empty());
  SparseMambaNet<float> fresh(cfg.net, mix_seed(4, 1));
  const auto& a = r.net->parameters().entries();
  const auto& b = fresh.parameters().entries();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(values(a[i].second) == values(b[i].second));
}

TEST_CASE("train is deterministic and logs every iteration") {
  TrainConfig cfg;
  cfg.net = tiny_net();
  cfg.max_iter = 4;
  cfg.batch_size = 2;
  cfg.eval_interval = 2;
  cfg.prefetch = 2;
  auto data = tiny_data(2, 6, 1);
  auto a = train(cfg, data.slice(0, 4), data.slice(4, 6));
  auto b = train(cfg, data.slice(0, 4), data.slice(4, 6));
  REQUIRE(a.history.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.history[i].iter == static_cast<int>(i) + 1);
    CHECK(a.history[i].l1 == b.history[i].l1);
    CHECK(a.history[i].l2 == b.history[i].l2);
    CHECK((a.history[i].val_dice >= 0) == (i % 2 == 1));
  }
  CHECK(a.final_val_dice == b.final_val_dice);
  auto csv = history_csv(a.history);
  CHECK(csv.rfind("iter,lr,L1,L2,val_dice\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("train validates its inputs") {
  TrainConfig cfg;
  cfg.net = tiny_net();
  auto data = tiny_data();
  cfg.lr = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.lr = 0.01;
  cfg.pcl.lambda = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.pcl.lambda = 0.5;
  cfg.net.num_classes = 3;
  CHECK_THROWS_AS(train(cfg, data.slice(0, 4), data.slice(4, 6)), ValidationError);
  cfg.net = tiny_net();
  cfg.net.height = cfg.net.width = 32;
  CHECK_THROWS_AS(train(cfg, data.slice(0, 4), data.slice(4, 6)), ValidationError);
}

TEST_CASE("evaluation scores foreground classes and the CSV has one mean row") {
  auto data = tiny_data(3, 2);
  SparseMambaNet<float> net(tiny_net(3), 19);
  auto r = evaluate(net, data);
  CHECK(r.rows.size() == 2 * 2);
  double total = 0;
  for (const auto& row : r.rows) {
    CHECK(row.cls >= 1);
    CHECK(row.dice >= 0.0);
    CHECK(row.dice <= 1.0);
    total += row.dice;
  }
  CHECK(r.mean_dice == doctest::Approx(total / 4));
  auto csv = metrics_csv(r);
  CHECK(csv.rfind("case,class,dice,hd95_mm,flags\n", 0) == 0);
  CHECK(csv.find("\nmean,all,") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  data.cases[0].ground_truth = LabelMap();
  CHECK_THROWS_AS(evaluate(net, data), ValidationError);
}
