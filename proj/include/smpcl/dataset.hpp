#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "smpcl/image.hpp"

namespace smpcl {

struct Case {
  std::string id;
  GrayImage image;          // [0,1]
  LabelMap scribbles;       // sparse labels, kUnlabeled elsewhere
  LabelMap ground_truth;    // dense; evaluation and scribble synthesis only
};

struct Dataset {
  int num_classes = 2;
  std::vector<Case> cases;

  /// Checks sizes agree per case and codes are in range.
  void validate() const;
  /// Cases [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;
};

struct SynthSpec {
  std::uint64_t seed = 0;
  int count = 80;
  int size = 32;
  int num_classes = 2;
  double noise = 0.05;
};

/// Random smooth blobs with intensity noise. K=2: one ellipse. K=3: an
/// annulus (class 2) around an interior (class 1). K=4: annulus plus a
/// separate ellipse (class 3). Scribbles are 1-pixel skeletons of every
/// class region, background included.
Dataset synth_dataset(const SynthSpec& spec);

/// Zhang-Suen thinning.
BinaryMap skeletonize(const BinaryMap& region);

// ---- image and label files ----------------------------------------------------

/// 8- or 16-bit grayscale PGM (P5) or PNG, scaled to [0,1].
GrayImage load_image(const std::filesystem::path& path);
/// 8-bit grayscale; PNG when the extension is .png, PGM otherwise.
void save_image(const std::filesystem::path& path, const GrayImage& image);

/// 8-bit label codes, 255 = unlabeled.
LabelMap load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const LabelMap& labels);

GrayImage resize_image(const GrayImage& image, int height, int width);   // bilinear
LabelMap resize_labels(const LabelMap& labels, int height, int width);   // nearest

/// Directory layout: dataset.txt ("num_classes K", then one case id per line)
/// and <id>_image.png, <id>_scribble.png, <id>_gt.png. `resize` > 0 resamples
/// every case to resize x resize.
Dataset load_dataset(const std::filesystem::path& dir, int resize = 0);
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);

}  // namespace smpcl
