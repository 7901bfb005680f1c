#include "smpcl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "smpcl/error.hpp"
#include "smpcl/geometry.hpp"
#include "smpcl/metrics.hpp"

namespace smpcl {

namespace {

// Rotates by quarter turns (clockwise), then mirrors.
template <typename V>
Grid<V> transform_grid(const Grid<V>& g, int quarter_turns, bool flip_h, bool flip_v) {
  const int h = g.height(), w = g.width();
  const bool swap = quarter_turns % 2 != 0;
  Grid<V> out(swap ? w : h, swap ? h : w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      int nr = r, nc = c;
      switch (quarter_turns % 4) {
        case 1: nr = c; nc = h - 1 - r; break;
        case 2: nr = h - 1 - r; nc = w - 1 - c; break;
        case 3: nr = w - 1 - c; nc = r; break;
        default: break;
      }
      if (flip_h) nc = out.width() - 1 - nc;
      if (flip_v) nr = out.height() - 1 - nr;
      out.at(nr, nc) = g.at(r, c);
    }
  }
  return out;
}

template <typename T>
Tensor<T> image_tensor(const GrayImage& image) {
  std::vector<T> data(image.values().begin(), image.values().end());
  return Tensor<T>({1, static_cast<std::size_t>(image.height()),
                    static_cast<std::size_t>(image.width())},
                   std::move(data));
}

// Single producer running ahead of the trainer. Items come out in index
// order, so results do not depend on scheduling.
template <typename Item>
class PrefetchQueue {
 public:
  PrefetchQueue(int count, std::size_t capacity, std::function<Item(int)> make)
      : count_(count), capacity_(std::max<std::size_t>(1, capacity)), make_(std::move(make)) {
    worker_ = std::thread([this] { run(); });
  }
  ~PrefetchQueue() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    worker_.join();
  }

  Item pop() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return !items_.empty() || error_; });
    if (items_.empty()) std::rethrow_exception(error_);
    Item item = std::move(items_.front());
    items_.pop_front();
    cv_.notify_all();
    return item;
  }

 private:
  void run() {
    try {
      for (int i = 0; i < count_; ++i) {
        Item item = make_(i);
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return items_.size() < capacity_ || stop_; });
        if (stop_) return;
        items_.push_back(std::move(item));
        cv_.notify_all();
      }
    } catch (...) {
      std::lock_guard lock(mutex_);
      error_ = std::current_exception();
      cv_.notify_all();
    }
  }

  int count_;
  std::size_t capacity_;
  std::function<Item(int)> make_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Item> items_;
  std::exception_ptr error_;
  bool stop_ = false;
  std::thread worker_;
};

template <typename T>
Tensor<T> accumulate(const Tensor<T>& total, const Tensor<T>& term) {
  return total.defined() ? add(total, term) : term;
}

bool any_nonzero(std::span<const float> v) {
  return std::any_of(v.begin(), v.end(), [](float x) { return x != 0.0f; });
}
bool any_nonzero(std::span<const double> v) {
  return std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; });
}

}  // namespace

// ---- projection and fusion -----------------------------------------------------

template <typename T>
Projection<T> Projection<T>::make(std::size_t in_channels, const Shape& target, Rng& rng) {
  if (target.size() != 3) throw ShapeError("projection target must be (C,H,W)");
  Projection p;
  p.conv = Conv2dLayer<T>::make(in_channels, target[0], 1, 1, 0, rng);
  p.height = target[1];
  p.width = target[2];
  return p;
}

template <typename T>
Tensor<T> Projection<T>::operator()(const Tensor<T>& guide_embedding) const {
  return resize_bilinear(conv(guide_embedding), height, width);
}

template <typename T>
ParameterSet<T> Projection<T>::parameters() const {
  return conv.parameters();
}

template <typename T>
Tensor<T> fuse_embeddings(const Tensor<T>& net_embedding, const Tensor<T>& guide_embedding) {
  if (net_embedding.shape() != guide_embedding.shape()) {
    throw ShapeError("fuse_embeddings: " + shape_str(net_embedding.shape()) + " vs " +
                     shape_str(guide_embedding.shape()));
  }
  return add(net_embedding, guide_embedding);
}

double poly_lr(double base, int iter, int max_iter, double power) {
  if (max_iter <= 0 || iter >= max_iter) return 0.0;
  return base * std::pow(1.0 - static_cast<double>(iter) / max_iter, power);
}

template <typename T>
void Sgd<T>::step(const ParameterSet<T>& params, double lr) {
  const T mu = static_cast<T>(momentum_), wd = static_cast<T>(weight_decay_), rate = static_cast<T>(lr);
  for (auto [name, t] : params.entries()) {
    auto w = t.mutable_data();
    auto& v = velocity_[t.node().get()];
    if (v.empty()) v.assign(w.size(), T(0));
    const bool has = t.has_grad();
    const auto g = has ? t.grad() : std::span<const T>();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = mu * v[i] + (has ? g[i] : T(0)) + wd * w[i];
      w[i] -= rate * v[i];
    }
  }
}

// ---- PclTrainer ----------------------------------------------------------------

template <typename T>
PclTrainer<T>::PclTrainer(SparseMambaNet<T>& net, GuideModel<T>& guide, const PclOptions& options,
                          std::uint64_t seed)
    : net_(net),
      guide_(guide),
      options_(options),
      net_opt_(options.momentum, options.weight_decay),
      guide_opt_(options.momentum, options.weight_decay) {
  if (options.lambda < 0.0 || options.lambda > 1.0) throw ValidationError("lambda must lie in [0,1]");
  if (guide.num_classes() != net.config().num_classes) {
    throw ValidationError("guide and network disagree on the number of classes");
  }
  Rng rng(seed);
  projection_ = Projection<T>::make(guide.embedding_channels(), net.embedding_shape(), rng);
  guide_side_.append("guide", guide.decoder_parameters());
  guide_side_.append("projection", projection_.parameters());
}

template <typename T>
StepResult PclTrainer<T>::step(const std::vector<Sample<T>>& batch, double lr) {
  if (batch.empty()) throw ValidationError("pcl_step: empty batch");
  const auto net_params = net_.parameters();
  net_params.zero_grad();
  guide_side_.zero_grad();
  const T inv = T(1) / static_cast<T>(batch.size());
  StepResult result;

  Tape<T> net_tape, guide_tape;
  std::vector<NetOutput<T>> outs;
  {
    TapeScope<T> scope(net_tape);
    for (const auto& s : batch) outs.push_back(net_.forward(s.image));
  }

  std::vector<Tensor<T>> guide_embeddings;
  std::vector<PromptEmbedding<T>> prompts;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto y1 = outs[i].probs.detach();
    auto boxes = extract_bboxes(y1, batch[i].labels, options_.box_threshold);
    result.boxes += boxes.size();
    guide_embeddings.push_back(guide_.encode_image(batch[i].image));
    prompts.push_back(guide_.encode_prompt({std::move(boxes), batch[i].gray, batch[i].labels, y1}));
  }

  std::vector<Tensor<T>> y2s;
  Tensor<T> l2;
  {
    TapeScope<T> scope(guide_tape);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto fused = fuse_embeddings(outs[i].embedding.detach(), projection_(guide_embeddings[i]));
      auto y2 = guide_.decode(fused, prompts[i]);
      if (y2.shape() != outs[i].probs.shape()) {
        throw ShapeError("guide " + guide_.name() + " decoded " + shape_str(y2.shape()) +
                         ", expected " + shape_str(outs[i].probs.shape()));
      }
      l2 = accumulate(l2, pce_loss(y2, batch[i].labels));
      y2s.push_back(y2);
    }
    l2 = scale(l2, inv);
  }

  Tensor<T> l1;
  {
    TapeScope<T> scope(net_tape);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      l1 = accumulate(l1, total_loss(outs[i].probs, y2s[i].detach(), batch[i].labels,
                                     options_.lambda, options_.dice_denominator));
    }
    l1 = scale(l1, inv);
  }

  result.l1 = static_cast<double>(l1.item());
  result.l2 = static_cast<double>(l2.item());
  if (!std::isfinite(result.l1) || !std::isfinite(result.l2)) {
    std::ostringstream msg;
    msg << "training diverged at step " << steps_ << ": L1=" << result.l1 << " L2=" << result.l2
        << " lr=" << lr;
    throw DivergenceError(msg.str());
  }

  if (l1.requires_grad()) net_tape.backward(l1);
  if (l2.requires_grad()) guide_tape.backward(l2);

  auto& report = result.isolation;
  auto violate = [&](const std::string& what) {
    report.ok = false;
    report.violations.push_back(what);
  };
  const auto encoder_params = guide_.encoder_parameters();
  for (const auto& [name, t] : encoder_params.entries()) {
    if (net_tape.reads(t) || guide_tape.reads(t)) violate("guide encoder " + name + " was recorded");
    if (t.has_grad() && any_nonzero(t.grad())) violate("guide encoder " + name + " has a gradient");
  }
  for (const auto& [name, t] : guide_side_.entries()) {
    if (net_tape.reads(t)) violate(name + " is read by the network tape");
  }
  for (const auto& [name, t] : net_params.entries()) {
    if (guide_tape.reads(t)) violate("network " + name + " is read by the guide tape");
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (net_tape.reads(y2s[i])) violate("y2 reaches the network loss undetached");
    if (guide_tape.reads(outs[i].embedding)) violate("network embedding reaches the guide undetached");
  }
  if (options_.check_isolation && !report.ok) {
    throw AutogradError("gradient isolation violated: " + report.violations.front());
  }

  net_opt_.step(net_params, lr);
  guide_opt_.step(guide_side_, lr);
  ++steps_;
  return result;
}

// ---- training loop -------------------------------------------------------------

template <typename T>
void PclTrainer<T>::set_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0,1]");
  options_.lambda = lambda;
}

double rampup_weight(int iter, int length) {
  if (length <= 0) return 1.0;
  const double t = std::clamp(static_cast<double>(iter) / length, 0.0, 1.0);
  return std::exp(-5.0 * (1.0 - t) * (1.0 - t));
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("train config: " + m); };
  net.validate();
  spobe.validate();
  if (!(lr > 0.0)) fail("lr must be > 0");
  if (pcl.lambda < 0.0 || pcl.lambda > 1.0) fail("lambda must lie in [0,1]");
  if (pcl.momentum < 0.0 || pcl.momentum >= 1.0) fail("momentum must lie in [0,1)");
  if (pcl.weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (!(pcl.box_threshold > 0.0 && pcl.box_threshold < 1.0)) fail("box_threshold must lie in (0,1)");
  if (max_iter < 0) fail("max_iter must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (eval_interval < 1) fail("eval_interval must be >= 1");
  if (guide_patch < 2) fail("guide_patch must be >= 2");
  if (noise_std < 0.0) fail("noise_std must be >= 0");
  if (poly_power <= 0.0) fail("poly_power must be > 0");
  if (!(lambda_rampup >= 0.0 && lambda_rampup <= 1.0)) fail("lambda_rampup must lie in [0,1]");
}

std::vector<LabelMap> supervision_labels(const Dataset& data, bool use_spobe,
                                         const SpobeConfig& spobe_config) {
  std::vector<LabelMap> out;
  out.reserve(data.cases.size());
  for (const auto& c : data.cases) {
    if (use_spobe) {
      out.push_back(enrich_scribbles(c.scribbles,
                                     spobe(c.image, c.scribbles, data.num_classes, spobe_config)));
    } else {
      out.push_back(c.scribbles);
    }
  }
  return out;
}

template <typename T>
Sample<T> make_sample(const GrayImage& image, const LabelMap& labels, bool augment,
                      double noise_std, std::uint64_t seed) {
  if (!augment) return {image_tensor<T>(image), image, labels};
  Rng rng(seed);
  const int turns = image.height() == image.width() ? rng.integer(0, 3) : 2 * rng.integer(0, 1);
  const bool flip_h = rng.integer(0, 1) == 1;
  const bool flip_v = rng.integer(0, 1) == 1;
  GrayImage gray = transform_grid(image, turns, flip_h, flip_v);
  LabelMap lab;
  static_cast<Grid<std::uint8_t>&>(lab) = transform_grid(labels, turns, flip_h, flip_v);
  if (noise_std > 0.0) {
    for (auto& v : gray.values()) {
      v = static_cast<float>(std::clamp(v + rng.normal(0.0, noise_std), 0.0, 1.0));
    }
  }
  return {image_tensor<T>(gray), std::move(gray), std::move(lab)};
}

EvalResult evaluate(const SparseMambaNet<float>& net, const Dataset& data, double spacing) {
  NoGradScope<float> no_grad;
  EvalResult result;
  double dice_sum = 0.0, hd_sum = 0.0;
  for (const auto& c : data.cases) {
    if (c.ground_truth.empty()) throw ValidationError("case " + c.id + " has no ground truth");
    const auto pred = hard_labels(net.forward(image_tensor<float>(c.image)).probs);
    for (int cls = 1; cls < data.num_classes; ++cls) {
      const auto hd = hd95(pred, c.ground_truth, cls, spacing);
      CaseMetrics row{c.id, cls, dice_coefficient(pred, c.ground_truth, cls), hd.value,
                      to_string(hd.flag)};
      dice_sum += row.dice;
      hd_sum += row.hd95;
      result.rows.push_back(std::move(row));
    }
  }
  if (!result.rows.empty()) {
    result.mean_dice = dice_sum / static_cast<double>(result.rows.size());
    result.mean_hd95 = hd_sum / static_cast<double>(result.rows.size());
  }
  return result;
}

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& val_set,
                  const ProgressFn& progress) {
  config.validate();
  train_set.validate();
  val_set.validate();
  const auto& nc = config.net;
  for (const Dataset* d : {&train_set, &val_set}) {
    if (d->num_classes != nc.num_classes) {
      throw ValidationError("dataset has " + std::to_string(d->num_classes) +
                            " classes, network expects " + std::to_string(nc.num_classes));
    }
    for (const auto& c : d->cases) {
      if (!c.image.same_size(nc.height, nc.width)) {
        throw ValidationError("case " + c.id + " is not " + std::to_string(nc.height) + "x" +
                              std::to_string(nc.width));
      }
    }
  }
  if (train_set.cases.empty() && config.max_iter > 0) throw ValidationError("training set is empty");

  TrainResult result;
  result.net = std::make_unique<SparseMambaNet<float>>(nc, mix_seed(config.seed, 1));
  if (config.max_iter == 0) return result;

  auto guide = make_guide<float>(config.guide, nc.num_classes,
                                 static_cast<std::size_t>(nc.widths.back()), config.guide_patch);
  PclTrainer<float> trainer(*result.net, *guide, config.pcl, mix_seed(config.seed, 2));
  const auto labels = supervision_labels(train_set, config.use_spobe, config.spobe);

  const std::size_t n = train_set.cases.size();
  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order(n);
  std::size_t order_epoch = static_cast<std::size_t>(-1);
  auto make_batch = [&](int iter) {
    std::vector<Sample<float>> batch;
    for (std::size_t j = 0; j < batch_size; ++j) {
      const std::size_t g = static_cast<std::size_t>(iter) * batch_size + j;
      if (g / n != order_epoch) {
        order_epoch = g / n;
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle(mix_seed(config.seed, 1000 + order_epoch));
        std::shuffle(order.begin(), order.end(), shuffle.engine());
      }
      const std::size_t idx = order[g % n];
      batch.push_back(make_sample<float>(train_set.cases[idx].image, labels[idx], config.augment,
                                         config.noise_std, mix_seed(config.seed ^ 0xa5a5, g)));
    }
    return batch;
  };
  const int ramp = static_cast<int>(std::lround(config.lambda_rampup * config.max_iter));
  PrefetchQueue<std::vector<Sample<float>>> queue(config.max_iter, config.prefetch, make_batch);

  for (int iter = 0; iter < config.max_iter; ++iter) {
    const double lr = poly_lr(config.lr, iter, config.max_iter, config.poly_power);
    trainer.set_lambda(config.pcl.lambda * rampup_weight(iter, ramp));
    const auto step = trainer.step(queue.pop(), lr);
    LogRow row{iter + 1, lr, step.l1, step.l2, -1.0};
    if ((iter + 1) % config.eval_interval == 0 || iter + 1 == config.max_iter) {
      row.val_dice = val_set.cases.empty() ? 0.0 : evaluate(*result.net, val_set).mean_dice;
      result.final_val_dice = row.val_dice;
    }
    result.history.push_back(row);
    if (progress) progress(row);
  }
  return result;
}

std::string history_csv(const std::vector<LogRow>& history) {
  std::ostringstream out;
  out.precision(8);
  out << "iter,lr,L1,L2,val_dice\n";
  for (const auto& r : history) {
    out << r.iter << ',' << r.lr << ',' << r.l1 << ',' << r.l2 << ',';
    if (r.val_dice >= 0.0) out << r.val_dice;
    out << '\n';
  }
  return out.str();
}

std::string metrics_csv(const EvalResult& result) {
  std::ostringstream out;
  out.precision(8);
  out << "case,class,dice,hd95_mm,flags\n";
  for (const auto& r : result.rows) {
    out << r.case_id << ',' << r.cls << ',' << r.dice << ',' << r.hd95 << ',' << r.flags << '\n';
  }
  out << "mean,all," << result.mean_dice << ',' << result.mean_hd95 << ",\n";
  return out.str();
}

template struct Projection<float>;
template struct Projection<double>;
template Tensor<float> fuse_embeddings<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> fuse_embeddings<double>(const Tensor<double>&, const Tensor<double>&);
template class Sgd<float>;
template class Sgd<double>;
template class PclTrainer<float>;
template class PclTrainer<double>;
template Sample<float> make_sample<float>(const GrayImage&, const LabelMap&, bool, double,
                                          std::uint64_t);
template Sample<double> make_sample<double>(const GrayImage&, const LabelMap&, bool, double,
                                            std::uint64_t);

}  // namespace smpcl
