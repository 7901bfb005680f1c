#pragma once

#include <memory>
#include <string>
#include <vector>

#include "smpcl/geometry.hpp"
#include "smpcl/layers.hpp"

namespace smpcl {

/// Everything a guide may look at when turning boxes into a prompt embedding.
template <typename T>
struct PromptInput {
  std::vector<BBox> boxes;
  GrayImage image;
  LabelMap seeds;        // supervision labels for this case
  Tensor<T> prediction;  // detached y1, (K,H,W)
};

template <typename T>
struct PromptEmbedding {
  Tensor<T> prior;  // (K,H,W) log-probabilities
  Tensor<T> gate;   // (K,H,W) 1 inside some box, 0 elsewhere
};

/// Stand-in for a promptable foundation model: frozen image encoder, prompt
/// encoder, trainable mask decoder.
template <typename T>
class GuideModel {
 public:
  virtual ~GuideModel() = default;

  virtual std::string name() const = 0;
  virtual int num_classes() const = 0;
  /// Channels of encode_image's output.
  virtual std::size_t embedding_channels() const = 0;

  /// image: (1,H,W). Never tracked.
  virtual Tensor<T> encode_image(const Tensor<T>& image) const = 0;
  virtual PromptEmbedding<T> encode_prompt(const PromptInput<T>& input) const = 0;
  /// Returns (K,H,W) probabilities; differentiable w.r.t. decoder parameters
  /// and `fused`.
  virtual Tensor<T> decode(const Tensor<T>& fused, const PromptEmbedding<T>& prompt) const = 0;

  virtual ParameterSet<T> encoder_parameters() const = 0;
  virtual ParameterSet<T> decoder_parameters() const = 0;
};

/// y2 is a detached copy of y1; no parameters.
template <typename T>
class IdentityGuide final : public GuideModel<T> {
 public:
  IdentityGuide(int num_classes, int patch) : num_classes_(num_classes), patch_(patch) {}

  std::string name() const override { return "identity"; }
  int num_classes() const override { return num_classes_; }
  std::size_t embedding_channels() const override { return 1; }
  Tensor<T> encode_image(const Tensor<T>& image) const override;
  PromptEmbedding<T> encode_prompt(const PromptInput<T>& input) const override;
  Tensor<T> decode(const Tensor<T>& fused, const PromptEmbedding<T>& prompt) const override;
  ParameterSet<T> encoder_parameters() const override { return {}; }
  ParameterSet<T> decoder_parameters() const override { return {}; }

 private:
  int num_classes_;
  int patch_;
};

struct OracleGuideConfig {
  int patch = 4;              // encoder stride
  double confidence = 0.9;    // prior mass on the grown class
  double step_cost = 0.02;    // per-step path cost
  double contrast_cost = 1.0; // weight of |intensity difference|
  int smoothing = 3;          // open/close window
};

/// Seeded region growing inside the prompt boxes, softened into a prior, plus
/// a zero-initialised 1x1 decoder that learns a correction from the fused
/// embedding. The correction is gated to box interiors so everything outside
/// every box stays background.
template <typename T>
class SyntheticOracleGuide final : public GuideModel<T> {
 public:
  SyntheticOracleGuide(int num_classes, std::size_t fused_channels, OracleGuideConfig config = {});

  std::string name() const override { return "synthetic_oracle"; }
  int num_classes() const override { return num_classes_; }
  std::size_t embedding_channels() const override { return encoder_.dim(0); }
  Tensor<T> encode_image(const Tensor<T>& image) const override;
  PromptEmbedding<T> encode_prompt(const PromptInput<T>& input) const override;
  Tensor<T> decode(const Tensor<T>& fused, const PromptEmbedding<T>& prompt) const override;
  ParameterSet<T> encoder_parameters() const override;
  ParameterSet<T> decoder_parameters() const override;

  const OracleGuideConfig& config() const { return config_; }

 private:
  int num_classes_;
  OracleGuideConfig config_;
  Tensor<T> encoder_;  // (4,1,p,p) fixed filter bank
  Conv2dLayer<T> decoder_;
};

/// Geodesic region growing: every pixel takes the class of the cheapest seed
/// path, foreground class c confined to its box, background allowed anywhere;
/// pixels outside all boxes are background. Each foreground region is then
/// opened and closed with a `smoothing` window.
LabelMap grow_regions(const GrayImage& image, const LabelMap& seeds, const std::vector<BBox>& boxes,
                      int num_classes, const OracleGuideConfig& config);

enum class GuideKind { kSyntheticOracle, kIdentity };

GuideKind parse_guide_kind(const std::string& text);
std::string to_string(GuideKind kind);

template <typename T>
std::unique_ptr<GuideModel<T>> make_guide(GuideKind kind, int num_classes,
                                          std::size_t fused_channels, int patch);

}  // namespace smpcl
