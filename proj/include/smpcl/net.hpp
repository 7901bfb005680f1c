#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "smpcl/layers.hpp"

namespace smpcl {

struct NetworkConfig {
  int num_classes = 2;
  std::vector<int> widths{16, 32, 64};  // one encoder stage per entry
  int height = 32;
  int width = 32;
  int in_channels = 1;
  int state_size = 8;
  int skip_step = 2;
  int conv1d_kernel = 3;
  ScanMode scan_mode = ScanMode::kSparse;

  int downsample_factor() const { return 1 << widths.size(); }
  /// Throws ValidationError naming the offending field.
  void validate() const;

  std::map<std::string, std::string> to_meta() const;
  static NetworkConfig from_meta(const std::map<std::string, std::string>& meta);
};

template <typename T>
struct NetOutput {
  Tensor<T> probs;      // (K,H,W), softmax over classes
  Tensor<T> logits;     // (K,H,W)
  Tensor<T> embedding;  // bottleneck features after dual attention
};

/// Encoder (residual + SMB + stride-2 conv per stage), dual-attention
/// bottleneck, decoder (2x2 transposed conv, skip concat, 1x1 fuse,
/// residual), 1x1 head with softmax.
template <typename T>
class SparseMambaNet {
 public:
  SparseMambaNet(const NetworkConfig& config, std::uint64_t seed);

  /// image: (in_channels,H,W) with H,W matching the config.
  NetOutput<T> forward(const Tensor<T>& image) const;

  /// Shape of NetOutput::embedding.
  Shape embedding_shape() const;

  const NetworkConfig& config() const { return config_; }
  const ParameterSet<T>& parameters() const { return params_; }

  struct Stage {
    ResidualBlock<T> res;
    SparseMambaBlock<T> smb;
    Conv2dLayer<T> down;
  };
  struct UpStage {
    Conv2dLayer<T> up;
    Conv2dLayer<T> fuse;
    ResidualBlock<T> res;
  };

  const std::vector<Stage>& encoder() const { return encoder_; }
  const DualAttention<T>& attention() const { return attention_; }

 private:
  NetworkConfig config_;
  std::vector<Stage> encoder_;
  ResidualBlock<T> bottleneck_;
  DualAttention<T> attention_;
  std::vector<UpStage> decoder_;  // deepest first
  Conv2dLayer<T> head_;
  ParameterSet<T> params_;
};

}  // namespace smpcl
