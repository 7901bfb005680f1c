#include "smpcl/net.hpp"

#include <sstream>

#include "smpcl/error.hpp"

namespace smpcl {

void NetworkConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("network config: " + m); };
  if (num_classes < 2 || num_classes > 254) fail("num_classes must be in [2,254]");
  if (widths.empty()) fail("at least one encoder stage is required");
  for (int w : widths) {
    if (w < 1) fail("stage widths must be positive");
  }
  if (in_channels < 1) fail("in_channels must be positive");
  if (state_size < 1) fail("state_size must be positive");
  if (skip_step < 1) fail("skip_step must be positive");
  if (conv1d_kernel < 1) fail("conv1d_kernel must be positive");
  const int f = downsample_factor();
  if (height < 1 || width < 1 || height % f != 0 || width % f != 0) {
    fail("input " + std::to_string(height) + "x" + std::to_string(width) +
         " is not divisible by the downsampling factor " + std::to_string(f));
  }
}

std::map<std::string, std::string> NetworkConfig::to_meta() const {
  std::ostringstream ws;
  for (std::size_t i = 0; i < widths.size(); ++i) ws << (i ? "," : "") << widths[i];
  return {{"num_classes", std::to_string(num_classes)},
          {"widths", ws.str()},
          {"height", std::to_string(height)},
          {"width", std::to_string(width)},
          {"in_channels", std::to_string(in_channels)},
          {"state_size", std::to_string(state_size)},
          {"skip_step", std::to_string(skip_step)},
          {"conv1d_kernel", std::to_string(conv1d_kernel)},
          {"scan_mode", scan_mode == ScanMode::kDense ? "dense" : "sparse"}};
}

NetworkConfig NetworkConfig::from_meta(const std::map<std::string, std::string>& meta) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) throw ValidationError("checkpoint metadata lacks " + key);
    return it->second;
  };
  auto integer = [&](const std::string& key) {
    try {
      return std::stoi(get(key));
    } catch (const std::logic_error&) {
      throw ValidationError("checkpoint metadata " + key + " is not an integer");
    }
  };
  NetworkConfig c;
  c.num_classes = integer("num_classes");
  c.height = integer("height");
  c.width = integer("width");
  c.in_channels = integer("in_channels");
  c.state_size = integer("state_size");
  c.skip_step = integer("skip_step");
  c.conv1d_kernel = integer("conv1d_kernel");
  const auto& mode = get("scan_mode");
  if (mode != "dense" && mode != "sparse") throw ValidationError("unknown scan_mode " + mode);
  c.scan_mode = mode == "dense" ? ScanMode::kDense : ScanMode::kSparse;
  c.widths.clear();
  std::stringstream ss(get("widths"));
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      c.widths.push_back(std::stoi(item));
    } catch (const std::logic_error&) {
      throw ValidationError("checkpoint metadata widths is malformed");
    }
  }
  c.validate();
  return c;
}

template <typename T>
SparseMambaNet<T>::SparseMambaNet(const NetworkConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto width_at = [&](std::size_t i) { return static_cast<std::size_t>(config_.widths[i]); };
  const std::size_t stages = config_.widths.size();

  std::size_t channels = static_cast<std::size_t>(config_.in_channels);
  for (std::size_t i = 0; i < stages; ++i) {
    const std::size_t w = width_at(i);
    const std::size_t next = i + 1 < stages ? width_at(i + 1) : w;
    Stage s;
    s.res = ResidualBlock<T>::make(channels, w, rng);
    s.smb = SparseMambaBlock<T>::make(w, config_.state_size, config_.conv1d_kernel,
                                      config_.scan_mode, config_.skip_step, rng);
    s.down = Conv2dLayer<T>::make(w, next, 3, 2, 1, rng);
    encoder_.push_back(std::move(s));
    channels = next;
  }
  bottleneck_ = ResidualBlock<T>::make(channels, channels, rng);
  attention_ = DualAttention<T>::make(channels, rng);
  for (std::size_t i = stages; i-- > 0;) {
    const std::size_t w = width_at(i);
    UpStage u;
    u.up = Conv2dLayer<T>::make(channels, w, 2, 2, 0, rng, true);
    u.fuse = Conv2dLayer<T>::make(2 * w, w, 1, 1, 0, rng);
    u.res = ResidualBlock<T>::make(w, w, rng);
    decoder_.push_back(std::move(u));
    channels = w;
  }
  head_ = Conv2dLayer<T>::make(channels, static_cast<std::size_t>(config_.num_classes), 1, 1, 0,
                               rng);

  for (std::size_t i = 0; i < stages; ++i) {
    const std::string p = "enc" + std::to_string(i);
    params_.append(p + ".res", encoder_[i].res.parameters());
    params_.append(p + ".smb", encoder_[i].smb.parameters());
    params_.append(p + ".down", encoder_[i].down.parameters());
  }
  params_.append("bottleneck", bottleneck_.parameters());
  params_.append("attention", attention_.parameters());
  for (std::size_t j = 0; j < decoder_.size(); ++j) {
    const std::string p = "dec" + std::to_string(stages - 1 - j);
    params_.append(p + ".up", decoder_[j].up.parameters());
    params_.append(p + ".fuse", decoder_[j].fuse.parameters());
    params_.append(p + ".res", decoder_[j].res.parameters());
  }
  params_.append("head", head_.parameters());
}

template <typename T>
Shape SparseMambaNet<T>::embedding_shape() const {
  const auto f = static_cast<std::size_t>(config_.downsample_factor());
  return {static_cast<std::size_t>(config_.widths.back()),
          static_cast<std::size_t>(config_.height) / f, static_cast<std::size_t>(config_.width) / f};
}

template <typename T>
NetOutput<T> SparseMambaNet<T>::forward(const Tensor<T>& image) const {
  const Shape expected{static_cast<std::size_t>(config_.in_channels),
                       static_cast<std::size_t>(config_.height),
                       static_cast<std::size_t>(config_.width)};
  if (image.shape() != expected) {
    throw ShapeError("network input " + shape_str(image.shape()) + " does not match " +
                     shape_str(expected));
  }
  std::vector<Tensor<T>> skips;
  Tensor<T> x = image;
  for (const auto& s : encoder_) {
    x = s.smb(s.res(x));
    skips.push_back(x);
    x = s.down(x);
  }
  auto embedding = attention_(bottleneck_(x));
  x = embedding;
  for (std::size_t j = 0; j < decoder_.size(); ++j) {
    const auto& u = decoder_[j];
    const auto& skip = skips[skips.size() - 1 - j];
    x = u.res(u.fuse(concat<T>({u.up(x), skip})));
  }
  auto logits = head_(x);
  return {softmax(logits, 0), logits, embedding};
}

template class SparseMambaNet<float>;
template class SparseMambaNet<double>;

}  // namespace smpcl
