#include "smpcl/image.hpp"

#include <algorithm>
#include <string>

namespace smpcl {

std::size_t BinaryMap::count() const {
  std::size_t n = 0;
  for (auto v : values()) n += v ? 1 : 0;
  return n;
}

bool BinaryMap::subset_of(const BinaryMap& other) const {
  if (!same_size(other)) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if ((*this)[i] && !other[i]) return false;
  }
  return true;
}

BinaryMap BinaryMap::operator&(const BinaryMap& other) const {
  if (!same_size(other)) throw ShapeError("binary map size mismatch");
  BinaryMap out(height(), width());
  for (std::size_t i = 0; i < size(); ++i) out[i] = ((*this)[i] && other[i]) ? 1 : 0;
  return out;
}

BinaryMap BinaryMap::operator|(const BinaryMap& other) const {
  if (!same_size(other)) throw ShapeError("binary map size mismatch");
  BinaryMap out(height(), width());
  for (std::size_t i = 0; i < size(); ++i) out[i] = ((*this)[i] || other[i]) ? 1 : 0;
  return out;
}

std::size_t LabelMap::labeled_count() const {
  std::size_t n = 0;
  for (auto v : values()) n += v != kUnlabeled ? 1 : 0;
  return n;
}

BinaryMap LabelMap::mask(int cls) const {
  BinaryMap m(height(), width());
  for (std::size_t i = 0; i < size(); ++i) m[i] = (*this)[i] == cls ? 1 : 0;
  return m;
}

std::vector<int> LabelMap::classes_present() const {
  std::vector<bool> seen(256, false);
  for (auto v : values()) seen[v] = true;
  std::vector<int> out;
  for (int c = 0; c < 255; ++c) {
    if (seen[c]) out.push_back(c);
  }
  return out;
}

void LabelMap::validate(int num_classes) const {
  for (auto v : values()) {
    if (v != kUnlabeled && v >= num_classes) {
      throw ValidationError("label code " + std::to_string(v) + " outside [0," +
                            std::to_string(num_classes) + ") and not the unlabeled code");
    }
  }
}

namespace {

void check_kernel(int k) {
  if (k < 1 || k % 2 == 0) {
    throw DomainError("kernel size must be odd and >= 1, got " + std::to_string(k));
  }
}

// Separable square-window max (or min) filter, window clipped at borders.
BinaryMap window_extreme(const BinaryMap& m, int k, bool take_max) {
  check_kernel(k);
  const int r = k / 2;
  const int h = m.height(), w = m.width();
  BinaryMap rows(h, w), out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = take_max ? 0 : 1;
      for (int dx = std::max(0, x - r); dx <= std::min(w - 1, x + r); ++dx) {
        v = take_max ? std::max(v, m.at(y, dx)) : std::min(v, m.at(y, dx));
      }
      rows.at(y, x) = v;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = take_max ? 0 : 1;
      for (int dy = std::max(0, y - r); dy <= std::min(h - 1, y + r); ++dy) {
        v = take_max ? std::max(v, rows.at(dy, x)) : std::min(v, rows.at(dy, x));
      }
      out.at(y, x) = v;
    }
  }
  return out;
}

}  // namespace

BinaryMap dilate(const BinaryMap& m, int k) { return window_extreme(m, k, true); }
BinaryMap erode(const BinaryMap& m, int k) { return window_extreme(m, k, false); }
BinaryMap open(const BinaryMap& m, int k) { return dilate(erode(m, k), k); }
BinaryMap close(const BinaryMap& m, int k) { return erode(dilate(m, k), k); }

}  // namespace smpcl
