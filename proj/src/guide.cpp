#include "smpcl/guide.hpp"

#include <cmath>
#include <limits>
#include <queue>

#include "smpcl/edges.hpp"
#include "smpcl/error.hpp"

namespace smpcl {

namespace {

template <typename T>
Tensor<T> box_gate(const std::vector<BBox>& boxes, int k, int h, int w) {
  std::vector<T> plane(static_cast<std::size_t>(h * w), T(0));
  for (const auto& b : boxes) {
    for (int r = std::max(0, b.min_row); r <= std::min(h - 1, b.max_row); ++r) {
      for (int c = std::max(0, b.min_col); c <= std::min(w - 1, b.max_col); ++c) {
        plane[static_cast<std::size_t>(r * w + c)] = T(1);
      }
    }
  }
  std::vector<T> data;
  data.reserve(plane.size() * static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) data.insert(data.end(), plane.begin(), plane.end());
  return Tensor<T>({static_cast<std::size_t>(k), static_cast<std::size_t>(h),
                    static_cast<std::size_t>(w)},
                   std::move(data));
}

std::vector<double> geodesic_distance(const Grid<double>& image, const LabelMap& seeds, int cls,
                                      const BBox* box, const OracleGuideConfig& cfg) {
  const int h = image.height(), w = image.width();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(image.size(), kInf);
  auto allowed = [&](int r, int c) { return box == nullptr || box->contains(r, c); };
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (seeds.at(r, c) == cls && allowed(r, c)) {
        dist[static_cast<std::size_t>(r * w + c)] = 0.0;
        heap.emplace(0.0, r * w + c);
      }
    }
  }
  constexpr int dr[4] = {-1, 1, 0, 0};
  constexpr int dc[4] = {0, 0, -1, 1};
  while (!heap.empty()) {
    const auto [d, idx] = heap.top();
    heap.pop();
    if (d > dist[static_cast<std::size_t>(idx)]) continue;
    const int r = idx / w, c = idx % w;
    for (int i = 0; i < 4; ++i) {
      const int nr = r + dr[i], nc = c + dc[i];
      if (!image.contains(nr, nc) || !allowed(nr, nc)) continue;
      const double nd =
          d + cfg.step_cost + cfg.contrast_cost * std::abs(image.at(nr, nc) - image.at(r, c));
      auto& slot = dist[static_cast<std::size_t>(nr * w + nc)];
      if (nd < slot) {
        slot = nd;
        heap.emplace(nd, nr * w + nc);
      }
    }
  }
  return dist;
}

}  // namespace

LabelMap grow_regions(const GrayImage& image, const LabelMap& seeds, const std::vector<BBox>& boxes,
                      int num_classes, const OracleGuideConfig& config) {
  if (!seeds.same_size(image)) throw ShapeError("grow_regions: seeds and image differ in size");
  const int h = image.height(), w = image.width();
  Grid<double> smooth(h, w);
  for (std::size_t i = 0; i < image.size(); ++i) smooth[i] = image[i];
  smooth = gaussian_blur(smooth, 1.0);

  std::vector<const BBox*> box_of(static_cast<std::size_t>(num_classes), nullptr);
  for (const auto& b : boxes) {
    if (b.cls <= 0 || b.cls >= num_classes) throw ValidationError("prompt box has invalid class");
    box_of[static_cast<std::size_t>(b.cls)] = &b;
  }

  std::vector<std::vector<double>> dist(static_cast<std::size_t>(num_classes));
  dist[0] = geodesic_distance(smooth, seeds, 0, nullptr, config);
  for (int cls = 1; cls < num_classes; ++cls) {
    if (box_of[static_cast<std::size_t>(cls)]) {
      dist[static_cast<std::size_t>(cls)] =
          geodesic_distance(smooth, seeds, cls, box_of[static_cast<std::size_t>(cls)], config);
    }
  }

  LabelMap grown(h, w, 0);
  for (std::size_t i = 0; i < grown.size(); ++i) {
    double best = dist[0][i];
    for (int cls = 1; cls < num_classes; ++cls) {
      const auto& d = dist[static_cast<std::size_t>(cls)];
      if (!d.empty() && d[i] < best) {
        best = d[i];
        grown[i] = static_cast<std::uint8_t>(cls);
      }
    }
  }
  if (config.smoothing <= 1) return grown;

  LabelMap out(h, w, 0);
  for (int cls = 1; cls < num_classes; ++cls) {
    const BBox* box = box_of[static_cast<std::size_t>(cls)];
    if (!box) continue;
    const auto region = close(open(grown.mask(cls), config.smoothing), config.smoothing);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (region.at(r, c) && box->contains(r, c)) out.at(r, c) = static_cast<std::uint8_t>(cls);
      }
    }
  }
  return out;
}

// ---- IdentityGuide -------------------------------------------------------------

template <typename T>
Tensor<T> IdentityGuide<T>::encode_image(const Tensor<T>& image) const {
  const auto p = static_cast<std::size_t>(patch_);
  return Tensor<T>::zeros({1, std::max<std::size_t>(1, image.dim(1) / p),
                           std::max<std::size_t>(1, image.dim(2) / p)});
}

template <typename T>
PromptEmbedding<T> IdentityGuide<T>::encode_prompt(const PromptInput<T>& input) const {
  if (!input.prediction.defined()) throw ValidationError("identity guide needs the prediction");
  return {input.prediction.detach(), Tensor<T>()};
}

template <typename T>
Tensor<T> IdentityGuide<T>::decode(const Tensor<T>&, const PromptEmbedding<T>& prompt) const {
  return prompt.prior;
}

// ---- SyntheticOracleGuide ------------------------------------------------------

template <typename T>
SyntheticOracleGuide<T>::SyntheticOracleGuide(int num_classes, std::size_t fused_channels,
                                              OracleGuideConfig config)
    : num_classes_(num_classes), config_(config) {
  if (num_classes < 2) throw ValidationError("guide needs at least two classes");
  if (config.patch < 2) throw ValidationError("guide patch must be >= 2");
  if (!(config.confidence > 0.0 && config.confidence < 1.0)) {
    throw ValidationError("guide confidence must lie in (0,1)");
  }
  // Mean, horizontal step, vertical step, centre-surround.
  const int p = config.patch;
  const auto pp = static_cast<std::size_t>(p * p);
  std::vector<T> bank(4 * pp);
  const T norm = T(1) / static_cast<T>(pp);
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) {
      const auto i = static_cast<std::size_t>(r * p + c);
      const bool centre = r >= p / 4 && r < p - p / 4 && c >= p / 4 && c < p - p / 4;
      bank[i] = norm;
      bank[pp + i] = (c < p / 2 ? -norm : norm);
      bank[2 * pp + i] = (r < p / 2 ? -norm : norm);
      bank[3 * pp + i] = centre ? norm : -norm;
    }
  }
  encoder_ = Tensor<T>({4, 1, static_cast<std::size_t>(p), static_cast<std::size_t>(p)},
                       std::move(bank), true);
  decoder_.weight = Tensor<T>::zeros({static_cast<std::size_t>(num_classes), fused_channels, 1, 1}, true);
  decoder_.bias = Tensor<T>::zeros({static_cast<std::size_t>(num_classes)}, true);
}

template <typename T>
Tensor<T> SyntheticOracleGuide<T>::encode_image(const Tensor<T>& image) const {
  NoGradScope<T> frozen;
  return conv2d(image, encoder_, static_cast<std::size_t>(config_.patch), 0);
}

template <typename T>
PromptEmbedding<T> SyntheticOracleGuide<T>::encode_prompt(const PromptInput<T>& input) const {
  const int h = input.image.height(), w = input.image.width();
  const auto grown = grow_regions(input.image, input.seeds, input.boxes, num_classes_, config_);
  const auto k = static_cast<std::size_t>(num_classes_);
  const auto plane = static_cast<std::size_t>(h * w);
  const T hit = static_cast<T>(std::log(config_.confidence));
  const T miss = static_cast<T>(std::log((1.0 - config_.confidence) / static_cast<double>(k - 1)));
  std::vector<T> prior(k * plane);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < plane; ++i) prior[c * plane + i] = grown[i] == c ? hit : miss;
  }
  return {Tensor<T>({k, static_cast<std::size_t>(h), static_cast<std::size_t>(w)}, std::move(prior)),
          box_gate<T>(input.boxes, num_classes_, h, w)};
}

template <typename T>
Tensor<T> SyntheticOracleGuide<T>::decode(const Tensor<T>& fused,
                                          const PromptEmbedding<T>& prompt) const {
  const auto& prior = prompt.prior;
  if (prior.rank() != 3 || prior.dim(0) != static_cast<std::size_t>(num_classes_)) {
    throw ShapeError("guide decode: prior has shape " + shape_str(prior.shape()));
  }
  auto correction = resize_bilinear(decoder_(fused), prior.dim(1), prior.dim(2));
  return softmax(add(prior, mul(prompt.gate, correction)), 0);
}

template <typename T>
ParameterSet<T> SyntheticOracleGuide<T>::encoder_parameters() const {
  ParameterSet<T> p;
  p.add("encoder.weight", encoder_);
  return p;
}

template <typename T>
ParameterSet<T> SyntheticOracleGuide<T>::decoder_parameters() const {
  ParameterSet<T> p;
  p.append("decoder", decoder_.parameters());
  return p;
}

GuideKind parse_guide_kind(const std::string& text) {
  if (text == "synthetic_oracle") return GuideKind::kSyntheticOracle;
  if (text == "identity") return GuideKind::kIdentity;
  throw ValidationError("unknown guide kind '" + text + "' (synthetic_oracle|identity)");
}

std::string to_string(GuideKind kind) {
  return kind == GuideKind::kIdentity ? "identity" : "synthetic_oracle";
}

template <typename T>
std::unique_ptr<GuideModel<T>> make_guide(GuideKind kind, int num_classes,
                                          std::size_t fused_channels, int patch) {
  if (kind == GuideKind::kIdentity) return std::make_unique<IdentityGuide<T>>(num_classes, patch);
  OracleGuideConfig cfg;
  cfg.patch = patch;
  return std::make_unique<SyntheticOracleGuide<T>>(num_classes, fused_channels, cfg);
}

template class IdentityGuide<float>;
template class IdentityGuide<double>;
template class SyntheticOracleGuide<float>;
template class SyntheticOracleGuide<double>;
template std::unique_ptr<GuideModel<float>> make_guide<float>(GuideKind, int, std::size_t, int);
template std::unique_ptr<GuideModel<double>> make_guide<double>(GuideKind, int, std::size_t, int);

}  // namespace smpcl
