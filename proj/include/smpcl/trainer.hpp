#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "smpcl/dataset.hpp"
#include "smpcl/guide.hpp"
#include "smpcl/losses.hpp"
#include "smpcl/net.hpp"
#include "smpcl/spobe.hpp"

namespace smpcl {

/// 1x1 conv plus bilinear resize taking the guide embedding to the network
/// embedding's shape.
template <typename T>
struct Projection {
  Conv2dLayer<T> conv;
  std::size_t height = 0;
  std::size_t width = 0;

  static Projection make(std::size_t in_channels, const Shape& target, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& guide_embedding) const;
  ParameterSet<T> parameters() const;
};

/// I = I_s + I_m after projection.
template <typename T>
Tensor<T> fuse_embeddings(const Tensor<T>& net_embedding, const Tensor<T>& guide_embedding);

double poly_lr(double base, int iter, int max_iter, double power = 0.9);

/// exp(-5 (1 - t)^2) with t = iter / length clipped to [0,1]; 1 when length is 0.
double rampup_weight(int iter, int length);

/// SGD with momentum and L2 weight decay: v = mu v + g + wd w; w -= lr v.
template <typename T>
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(const ParameterSet<T>& params, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::unordered_map<const void*, std::vector<T>> velocity_;
};

/// One training example after augmentation.
template <typename T>
struct Sample {
  Tensor<T> image;   // (1,H,W)
  GrayImage gray;    // same pixels, for the guide
  LabelMap labels;   // supervision (scribbles or enriched scribbles)
};

struct PclOptions {
  double lambda = 0.5;
  double box_threshold = 0.5;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  DiceDenominator dice_denominator = DiceDenominator::kSquaredNorm;
  bool check_isolation = true;
};

struct IsolationReport {
  bool ok = true;
  std::vector<std::string> violations;
};

struct StepResult {
  double l1 = 0.0;
  double l2 = 0.0;
  std::size_t boxes = 0;
  IsolationReport isolation;
};

/// Owns the optimizers and projection; borrows the network and guide.
template <typename T>
class PclTrainer {
 public:
  PclTrainer(SparseMambaNet<T>& net, GuideModel<T>& guide, const PclOptions& options,
             std::uint64_t seed);

  /// Net update from L1 (y2 detached), then decoder and projection update
  /// from L2 (network embedding detached). Throws DivergenceError on a
  /// non-finite loss and AutogradError on an isolation violation when
  /// checking is on.
  StepResult step(const std::vector<Sample<T>>& batch, double lr);

  const Projection<T>& projection() const { return projection_; }
  /// Decoder plus projection parameters.
  const ParameterSet<T>& guide_side_parameters() const { return guide_side_; }
  int steps_taken() const { return steps_; }
  double lambda() const { return options_.lambda; }
  void set_lambda(double lambda);

 private:
  SparseMambaNet<T>& net_;
  GuideModel<T>& guide_;
  PclOptions options_;
  Projection<T> projection_;
  ParameterSet<T> guide_side_;
  Sgd<T> net_opt_;
  Sgd<T> guide_opt_;
  int steps_ = 0;
};

struct TrainConfig {
  NetworkConfig net;
  GuideKind guide = GuideKind::kSyntheticOracle;
  bool use_spobe = true;
  SpobeConfig spobe;
  PclOptions pcl;
  double lr = 0.01;
  double poly_power = 0.9;
  int max_iter = 2000;
  int batch_size = 4;
  int eval_interval = 200;
  std::uint64_t seed = 0;
  int guide_patch = 4;
  // >0: lambda grows to pcl.lambda over this fraction of max_iter
  double lambda_rampup = 0.0;
  bool augment = true;
  double noise_std = 0.02;
  std::size_t prefetch = 4;

  void validate() const;
};

struct LogRow {
  int iter = 0;
  double lr = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double val_dice = -1.0;  // negative when not evaluated at this row
};

struct CaseMetrics {
  std::string case_id;
  int cls = 0;
  double dice = 0.0;
  double hd95 = 0.0;
  std::string flags;
};

struct EvalResult {
  std::vector<CaseMetrics> rows;
  double mean_dice = 0.0;
  double mean_hd95 = 0.0;
};

struct TrainResult {
  std::unique_ptr<SparseMambaNet<float>> net;
  std::vector<LogRow> history;
  double final_val_dice = 0.0;
};

/// Supervision per case: enriched scribbles when use_spobe, raw otherwise.
std::vector<LabelMap> supervision_labels(const Dataset& data, bool use_spobe,
                                         const SpobeConfig& spobe);

/// Flips, quarter-turn rotations (square images only) and clamped Gaussian
/// noise, driven by `seed`.
template <typename T>
Sample<T> make_sample(const GrayImage& image, const LabelMap& labels, bool augment,
                      double noise_std, std::uint64_t seed);

/// Scores argmax(y1) on every foreground class of every case.
EvalResult evaluate(const SparseMambaNet<float>& net, const Dataset& data, double spacing = 1.0);

using ProgressFn = std::function<void(const LogRow&)>;

/// max_iter == 0 returns the freshly initialised network and an empty history.
TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& val_set,
                  const ProgressFn& progress = {});

std::string history_csv(const std::vector<LogRow>& history);
std::string metrics_csv(const EvalResult& result);

}  // namespace smpcl
