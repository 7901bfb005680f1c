#include "smpcl/spobe.hpp"

#include <string>

#include "smpcl/error.hpp"
#include "smpcl/log.hpp"

namespace smpcl {

int SpobeConfig::threshold(int cls, std::size_t iteration) const {
  if (class_thresholds.empty()) return 2 * schedule.at(iteration);
  return class_thresholds.at(static_cast<std::size_t>(cls));
}

void SpobeConfig::validate() const {
  if (schedule.empty()) throw ValidationError("spobe schedule needs at least one kernel size");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const int k = schedule[i];
    if (k < 1 || k % 2 == 0) {
      throw ValidationError("spobe kernel sizes must be odd and >= 1, got " + std::to_string(k));
    }
    if (i > 0 && k <= schedule[i - 1]) {
      throw ValidationError("spobe schedule must be strictly increasing");
    }
  }
  for (int n : class_thresholds) {
    if (n < 1) throw ValidationError("spobe thresholds must be >= 1");
  }
}

bool BoundaryMap::empty() const {
  for (const auto& m : classes) {
    if (m.count() > 0) return false;
  }
  return true;
}

BinaryMap dilate_class(const LabelMap& scribbles, int cls, int k) {
  return dilate(scribbles.mask(cls), k);
}

BinaryMap counting_map(const BinaryMap& boundary, int k, int n_c) {
  if (k < 1 || k % 2 == 0) {
    throw DomainError("counting window must be odd and >= 1, got " + std::to_string(k));
  }
  if (n_c < 1) throw DomainError("counting threshold must be positive");
  const int h = boundary.height(), w = boundary.width(), r = k / 2;
  // Integral image with a zero row/column in front.
  std::vector<int> integral(static_cast<std::size_t>(h + 1) * (w + 1), 0);
  auto I = [&](int y, int x) -> int& { return integral[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      I(y + 1, x + 1) = boundary.at(y, x) + I(y, x + 1) + I(y + 1, x) - I(y, x);
    }
  }
  BinaryMap gate(h, w);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r), y1 = std::min(h, y + r + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - r), x1 = std::min(w, x + r + 1);
      const int total = I(y1, x1) - I(y0, x1) - I(y1, x0) + I(y0, x0);
      gate.at(y, x) = total < n_c ? 1 : 0;
    }
  }
  return gate;
}

BoundaryMap spobe_from_edges(const BinaryMap& edges, const LabelMap& scribbles, int num_classes,
                             const SpobeConfig& config) {
  config.validate();
  if (!edges.same_size(scribbles)) {
    throw ShapeError("edge map and scribbles differ in size");
  }
  if (num_classes < 1 || num_classes > 254) throw ValidationError("num_classes out of range");
  scribbles.validate(num_classes);

  const int h = edges.height(), w = edges.width();
  BoundaryMap out;
  out.num_classes = num_classes;
  out.schedule = config.schedule;
  out.classes.assign(num_classes, BinaryMap(h, w));
  out.history.resize(num_classes);
  if (edges.count() == 0) {
    out.warnings.push_back("edge map is empty; scribbles are returned unchanged");
    warn("spobe: " + out.warnings.back());
  }

  for (int c = 0; c < num_classes; ++c) {
    auto& acc = out.classes[c];
    if (scribbles.mask(c).count() == 0) {
      out.warnings.push_back("class " + std::to_string(c) + " has no scribble pixels; skipped");
      warn("spobe: " + out.warnings.back());
      out.history[c].assign(config.schedule.size(), acc);
      continue;
    }
    for (std::size_t i = 0; i < config.schedule.size(); ++i) {
      const int k = config.schedule[i];
      const BinaryMap reach = dilate_class(scribbles, c, k);
      BinaryMap found = reach & edges;
      if (i > 0) found = found & counting_map(acc, k, config.threshold(c, i));
      acc = acc | found;
      out.history[c].push_back(acc);
    }
  }
  return out;
}

BoundaryMap spobe(const GrayImage& image, const LabelMap& scribbles, int num_classes,
                  const SpobeConfig& config) {
  if (!image.same_size(scribbles)) {
    throw ShapeError("image " + std::to_string(image.height()) + "x" +
                     std::to_string(image.width()) + " and scribbles " +
                     std::to_string(scribbles.height()) + "x" + std::to_string(scribbles.width()) +
                     " differ in size");
  }
  return spobe_from_edges(detect_edges(image, config.edges), scribbles, num_classes, config);
}

LabelMap enrich_scribbles(const LabelMap& scribbles, const BoundaryMap& boundaries) {
  LabelMap out = scribbles;
  for (const auto& m : boundaries.classes) {
    if (!m.same_size(scribbles)) throw ShapeError("boundary map and scribbles differ in size");
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] != kUnlabeled) continue;
    int claimed = -1;
    bool conflict = false;
    for (int c = 0; c < static_cast<int>(boundaries.classes.size()); ++c) {
      if (!boundaries.classes[c][i]) continue;
      if (claimed >= 0) conflict = true;
      claimed = c;
    }
    if (claimed >= 0 && !conflict) out[i] = static_cast<std::uint8_t>(claimed);
  }
  return out;
}

}  // namespace smpcl
