#pragma once

#include <cstdint>
#include <vector>

#include "smpcl/error.hpp"

namespace smpcl {

/// Row-major 2D grid. Coordinates are (row, col).
template <typename V>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, V fill = V{}) : height_(height), width_(width) {
    if (height <= 0 || width <= 0) throw ShapeError("grid extents must be positive");
    values_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  bool contains(int r, int c) const { return r >= 0 && c >= 0 && r < height_ && c < width_; }
  bool same_size(int h, int w) const { return h == height_ && w == width_; }
  template <typename U>
  bool same_size(const Grid<U>& other) const {
    return same_size(other.height(), other.width());
  }

  V& at(int r, int c) { return values_[index(r, c)]; }
  const V& at(int r, int c) const { return values_[index(r, c)]; }
  V& operator[](std::size_t i) { return values_[i]; }
  const V& operator[](std::size_t i) const { return values_[i]; }

  std::vector<V>& values() { return values_; }
  const std::vector<V>& values() const { return values_; }

  bool operator==(const Grid& other) const = default;

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<V> values_;
};

/// Grayscale intensities, nominally in [0,1].
using GrayImage = Grid<float>;

/// Per-pixel 0/1 indicator (edge maps, dilated scribbles, counting gates).
class BinaryMap : public Grid<std::uint8_t> {
 public:
  using Grid::Grid;
  std::size_t count() const;
  bool subset_of(const BinaryMap& other) const;
  BinaryMap operator&(const BinaryMap& other) const;
  BinaryMap operator|(const BinaryMap& other) const;
};

inline constexpr std::uint8_t kUnlabeled = 255;

/// Class codes 0..K-1 per pixel, kUnlabeled where no annotation exists.
class LabelMap : public Grid<std::uint8_t> {
 public:
  LabelMap() = default;
  LabelMap(int height, int width, std::uint8_t fill = kUnlabeled) : Grid(height, width, fill) {}

  bool labeled(int r, int c) const { return at(r, c) != kUnlabeled; }
  std::size_t labeled_count() const;
  BinaryMap mask(int cls) const;
  /// Sorted distinct class codes present (unlabeled excluded).
  std::vector<int> classes_present() const;
  /// Throws ValidationError if any code is neither < num_classes nor unlabeled.
  void validate(int num_classes) const;
};

// Square-window binary morphology, window clipped at the image border.
BinaryMap dilate(const BinaryMap& m, int k);
BinaryMap erode(const BinaryMap& m, int k);
BinaryMap open(const BinaryMap& m, int k);
BinaryMap close(const BinaryMap& m, int k);

}  // namespace smpcl
