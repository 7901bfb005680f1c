#include "smpcl/gradcheck_suite.hpp"

#include <cmath>

#include "smpcl/guide.hpp"
#include "smpcl/losses.hpp"
#include "smpcl/net.hpp"
#include "smpcl/s6.hpp"
#include "smpcl/trainer.hpp"

namespace smpcl {

namespace {

using D = Tensor<double>;

D random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                bool requires_grad = true) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return D(std::move(shape), std::move(v), requires_grad);
}

void fill_uniform(const D& t, Rng& rng, double lo, double hi) {
  auto handle = t;
  for (auto& v : handle.mutable_data()) v = rng.uniform(lo, hi);
}

D random_probs(std::size_t k, std::size_t h, std::size_t w, std::uint64_t seed) {
  auto p = softmax(random_tensor({k, h, w}, seed, -2, 2, false), 0).detach();
  p.set_requires_grad(true);
  return p;
}

LabelMap random_labels(int h, int w, int k, std::uint64_t seed) {
  Rng rng(seed);
  LabelMap m(h, w);
  for (auto& v : m.values()) {
    if (rng.uniform() < 0.5) v = static_cast<std::uint8_t>(rng.integer(0, k - 1));
  }
  return m;
}

GradCheckCase simple(std::string name, std::function<D()> fn, std::vector<D> wrt,
                     double threshold = 1e-5) {
  return {std::move(name), threshold, [fn = std::move(fn), wrt = std::move(wrt)] {
            return gradcheck<double>(fn, wrt);
          }};
}

GradCheckCase s6_case(std::size_t l, std::size_t c, std::size_t n, std::uint64_t seed,
                      double threshold) {
  auto name = "s6_forward L=" + std::to_string(l) + " C=" + std::to_string(c) +
              " N=" + std::to_string(n);
  return {name, threshold, [=] {
            GradCheckReport r;
            r.max_rel_error = s6_gradcheck(l, c, n, seed);
            r.coords_checked = 1;
            r.worst = "see s6_gradcheck";
            return r;
          }};
}

}  // namespace

std::vector<GradCheckCase> gradcheck_suite() {
  std::vector<GradCheckCase> out;

  {
    auto a = random_tensor({4, 5}, 1), b = random_tensor({5, 3}, 2);
    out.push_back(simple("matmul 4x5 * 5x3", [=] { return sum(silu(matmul(a, b))); }, {a, b}));
  }
  {
    auto x = random_tensor({1, 2, 4, 4}, 3), w = random_tensor({3, 2, 2, 2}, 4);
    out.push_back(simple("conv2d 1x2x4x4 k2", [=] { return sum(silu(conv2d(x, w, 1, 0))); }, {x, w}));
    auto x3 = random_tensor({2, 5, 5}, 5), w3 = random_tensor({3, 2, 3, 3}, 6);
    out.push_back(simple("conv2d stride 2 pad 1", [=] { return sum(silu(conv2d(x3, w3, 2, 1))); },
                         {x3, w3}));
  }
  {
    auto x = random_tensor({2, 3, 3}, 7), w = random_tensor({2, 3, 2, 2}, 8);
    out.push_back(simple("conv_transpose2d", [=] { return sum(silu(conv_transpose2d(x, w, 2, 0))); },
                         {x, w}));
  }
  {
    auto seq = random_tensor({6, 3}, 9), w = random_tensor({3, 3}, 10);
    out.push_back(simple("conv1d_depthwise", [=] { return sum(silu(conv1d_depthwise(seq, w))); },
                         {seq, w}));
  }
  {
    auto x = random_tensor({3, 4}, 11), probe = random_tensor({3, 4}, 12, -1, 1, false);
    for (auto [kind, label] : {std::pair{Activation::kSilu, "silu"}, {Activation::kRelu, "relu"},
                               {Activation::kSigmoid, "sigmoid"}, {Activation::kSoftplus, "softplus"},
                               {Activation::kExp, "exp"}}) {
      out.push_back(simple(std::string("activation ") + label,
                           [=] { return sum(mul(activation(x, kind), probe)); }, {x}));
    }
    auto pos = random_tensor({3, 4}, 13, 0.5, 1.5);
    out.push_back(simple("log", [=] { return sum(mul(log(pos), probe)); }, {pos}));
    out.push_back(simple("softmax", [=] { return sum(mul(softmax(x, 0), probe)); }, {x}));
  }
  {
    auto x = random_tensor({5, 3}, 14), g = random_tensor({3}, 15), b = random_tensor({3}, 16);
    auto probe = random_tensor({5, 3}, 17, -1, 1, false);
    out.push_back(simple("layer_norm_rows",
                         [=] { return sum(mul(layer_norm_rows(x, g, b), probe)); }, {x, g, b}));
  }
  {
    auto x = random_tensor({2, 3, 3}, 18);
    out.push_back(simple("resize_bilinear", [=] { return sum(silu(resize_bilinear(x, 7, 5))); }, {x}));
  }
  out.push_back(s6_case(8, 2, 2, 0, 1e-5));
  out.push_back(s6_case(1, 1, 1, 0, 1e-7));
  out.push_back(s6_case(16, 4, 4, 1, 1e-5));

  for (auto mode : {ScanMode::kSparse, ScanMode::kDense}) {
    Rng rng(19);
    auto smb = SparseMambaBlock<double>::make(2, 2, 3, mode, 2, rng);
    fill_uniform(smb.s6.b_delta, rng, 0.2, 0.4);
    for (const auto& [name, t] : smb.parameters().entries()) {
      if (name.find("bias") != std::string::npos && name.find("s6") == std::string::npos) {
        fill_uniform(t, rng, -0.2, 0.2);
      }
    }
    auto x = random_tensor({2, 4, 4}, 20);
    auto wrt = smb.parameters().tensors();
    wrt.push_back(x);
    out.push_back({std::string("smb_forward ") + (mode == ScanMode::kSparse ? "sparse" : "dense"),
                   1e-4, [=] {
                     GradCheckOptions opt;
                     opt.step = 1e-5;
                     return gradcheck<double>([&] { return sum(smb(x)); }, wrt, opt);
                   }});
  }
  {
    Rng rng(21);
    auto att = DualAttention<double>::make(2, rng);
    fill_uniform(att.gamma_position, rng, 0.5, 0.9);
    fill_uniform(att.gamma_channel, rng, -0.6, -0.2);
    auto x = random_tensor({2, 3, 3}, 22), probe = random_tensor({2, 3, 3}, 23, -1, 1, false);
    auto wrt = att.parameters().tensors();
    wrt.push_back(x);
    out.push_back(simple("dual_attention", [=] { return sum(mul(att(x), probe)); }, wrt, 1e-4));
  }
  {
    auto a = random_probs(3, 4, 5, 24), b = random_probs(3, 4, 5, 25);
    auto labels = random_labels(4, 5, 3, 26);
    out.push_back(simple("dice_loss squared", [=] { return dice_loss(a, b); }, {a, b}));
    out.push_back(simple("dice_loss sum",
                         [=] { return dice_loss(a, b, DiceDenominator::kSum); }, {a, b}));
    out.push_back(simple("pce_loss", [=] { return pce_loss(a, labels); }, {a}));
    for (double lambda : {0.0, 0.5, 1.0}) {
      out.push_back(simple("total_loss lambda=" + std::to_string(lambda).substr(0, 3),
                           [=] { return total_loss(a, b, labels, lambda); }, {a, b}));
    }
    auto logits = random_tensor({3, 4, 5}, 27);
    auto target = b.detach();
    out.push_back(simple("total_loss through softmax",
                         [=] { return total_loss(softmax(logits, 0), target, labels, 0.5); },
                         {logits}, 1e-4));
  }
  {
    OracleGuideConfig cfg;
    auto guide = std::make_shared<SyntheticOracleGuide<double>>(3, 2, cfg);
    Rng rng(28);
    for (const auto& t : guide->decoder_parameters().tensors()) fill_uniform(t, rng, -0.5, 0.5);
    auto proj = std::make_shared<Projection<double>>(
        Projection<double>::make(guide->embedding_channels(), Shape{2, 2, 2}, rng));
    auto net_emb = random_tensor({2, 2, 2}, 29, -1, 1, false);
    auto guide_emb = random_tensor({guide->embedding_channels(), 2, 2}, 30, -1, 1, false);
    PromptEmbedding<double> prompt{random_tensor({3, 8, 8}, 31, -2, 0, false),
                                   random_tensor({3, 8, 8}, 32, 0, 1, false)};
    auto labels = random_labels(8, 8, 3, 33);
    auto wrt = guide->decoder_parameters().tensors();
    for (const auto& t : proj->parameters().tensors()) wrt.push_back(t);
    out.push_back(simple("guide decode + projection",
                         [=] {
                           return pce_loss(guide->decode(fuse_embeddings(net_emb, (*proj)(guide_emb)),
                                                         prompt),
                                           labels);
                         },
                         wrt, 1e-4));
  }
  {
    NetworkConfig c;
    c.num_classes = 2;
    c.widths = {2, 3};
    c.height = 16;
    c.width = 16;
    c.state_size = 2;
    auto net = std::make_shared<SparseMambaNet<double>>(c, 4);
    Rng rng(34);
    for (const auto& [name, t] : net->parameters().entries()) {
      if (name.find("gamma") != std::string::npos) fill_uniform(t, rng, 0.4, 0.6);
    }
    auto x = random_tensor({1, 16, 16}, 35, 0, 1);
    auto probe = random_tensor({2, 16, 16}, 36, 0, 1, false);
    auto wrt = net->parameters().tensors();
    wrt.push_back(x);
    out.push_back({"micro network", 1e-4, [=] {
                     GradCheckOptions opt;
                     // The 2-channel row norm is nearly a sign function, so the
                     // truncation error at the default step is large.
                     opt.step = 1e-5;
                     opt.max_coords_per_tensor = 4;
                     opt.seed = 1;
                     return gradcheck<double>(
                         [&] { return sum(mul(net->forward(x).probs, probe)); }, wrt, opt);
                   }});
  }
  return out;
}

std::vector<GradCheckOutcome> run_gradcheck_suite(const std::string& filter) {
  std::vector<GradCheckOutcome> out;
  for (const auto& c : gradcheck_suite()) {
    if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
    GradCheckOutcome o{c.name, c.threshold, c.run(), false};
    o.passed = std::isfinite(o.report.max_rel_error) && o.report.max_rel_error <= c.threshold;
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace smpcl
