#include "smpcl/dataset.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numbers>
#include <sstream>

#include "smpcl/edges.hpp"
#include "smpcl/error.hpp"
#include "smpcl/io.hpp"
#include "smpcl/ops.hpp"
#include "smpcl/random.hpp"

namespace smpcl {

namespace fs = std::filesystem;

void Dataset::validate() const {
  if (num_classes < 2 || num_classes > 254) throw ValidationError("dataset num_classes must be in [2,254]");
  for (const auto& c : cases) {
    if (c.image.empty()) throw ValidationError("case " + c.id + " has no image");
    if (!c.scribbles.same_size(c.image)) {
      throw ValidationError("case " + c.id + ": scribbles and image differ in size");
    }
    if (!c.ground_truth.empty() && !c.ground_truth.same_size(c.image)) {
      throw ValidationError("case " + c.id + ": ground truth and image differ in size");
    }
    c.scribbles.validate(num_classes);
    if (!c.ground_truth.empty()) c.ground_truth.validate(num_classes);
  }
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, cases.size());
  begin = std::min(begin, end);
  Dataset out;
  out.num_classes = num_classes;
  out.cases.assign(cases.begin() + static_cast<std::ptrdiff_t>(begin),
                   cases.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

// ---- synthesis -----------------------------------------------------------------

BinaryMap skeletonize(const BinaryMap& region) {
  BinaryMap m = region;
  const int h = m.height(), w = m.width();
  auto px = [&](int r, int c) -> int { return m.contains(r, c) && m.at(r, c) ? 1 : 0; };
  std::vector<std::pair<int, int>> removal;
  for (bool changed = true; changed;) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      removal.clear();
      for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
          if (!m.at(r, c)) continue;
          // P2..P9 clockwise from north.
          const int p[8] = {px(r - 1, c), px(r - 1, c + 1), px(r, c + 1), px(r + 1, c + 1),
                            px(r + 1, c), px(r + 1, c - 1), px(r, c - 1), px(r - 1, c - 1)};
          int b = 0, a = 0;
          for (int i = 0; i < 8; ++i) {
            b += p[i];
            a += (p[i] == 0 && p[(i + 1) % 8] == 1) ? 1 : 0;
          }
          if (b < 2 || b > 6 || a != 1) continue;
          const bool cond = pass == 0 ? (p[0] * p[2] * p[4] == 0 && p[2] * p[4] * p[6] == 0)
                                      : (p[0] * p[2] * p[6] == 0 && p[0] * p[4] * p[6] == 0);
          if (cond) removal.emplace_back(r, c);
        }
      }
      for (const auto& [r, c] : removal) m.at(r, c) = 0;
      changed = changed || !removal.empty();
    }
  }
  return m;
}

namespace {

struct Ellipse {
  double cy, cx, ry, rx, theta;

  // <= 1 inside.
  double radius(double r, double c) const {
    const double dy = r - cy, dx = c - cx;
    const double u = dx * std::cos(theta) + dy * std::sin(theta);
    const double v = -dx * std::sin(theta) + dy * std::cos(theta);
    return std::sqrt((u / rx) * (u / rx) + (v / ry) * (v / ry));
  }
};

// Elongated so the skeleton is a stroke rather than a dot.
Ellipse random_ellipse(Rng& rng, double size, double lo, double hi, double centre_lo,
                       double centre_hi, double aspect_lo = 1.5, double aspect_hi = 2.0) {
  const double major = rng.uniform(lo, hi) * size;
  return {rng.uniform(centre_lo, centre_hi) * size, rng.uniform(centre_lo, centre_hi) * size,
          major / rng.uniform(aspect_lo, aspect_hi), major, rng.uniform(0.0, std::numbers::pi)};
}

// Sampled at pixel centres.
bool inside(const Ellipse& e, int r, int c) { return e.radius(r + 0.5, c + 0.5) <= 1.0; }

}  // namespace

Dataset synth_dataset(const SynthSpec& spec) {
  if (spec.size < 16) throw ValidationError("synthetic size must be >= 16");
  if (spec.num_classes < 2 || spec.num_classes > 4) {
    throw ValidationError("synthetic datasets render 2, 3 or 4 classes, not " +
                          std::to_string(spec.num_classes));
  }
  if (spec.count < 0) throw ValidationError("synthetic count must be >= 0");
  if (spec.noise < 0.0) throw ValidationError("synthetic noise must be >= 0");
  Dataset data;
  data.num_classes = spec.num_classes;
  const int s = spec.size;
  const double size = s;
  for (int n = 0; n < spec.count; ++n) {
    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(n)));
    LabelMap gt(s, s, 0);
    const int k = spec.num_classes;
    const Ellipse outer = k == 2 ? random_ellipse(rng, size, 0.22, 0.35, 0.35, 0.65)
                                 : random_ellipse(rng, size, 0.28, 0.38, 0.4, 0.6, 1.3, 1.6);
    // Cavity: thinner than the outer wall so the ring stays >= ~3 px thick.
    Ellipse inner = outer;
    inner.rx = outer.rx * rng.uniform(0.6, 0.7);
    inner.ry = inner.rx / rng.uniform(2.0, 2.5);
    Ellipse extra{};
    if (k == 4) {
      // Small ellipse in the emptiest corner.
      const double cy = outer.cy < size / 2 ? 0.8 * size : 0.2 * size;
      const double cx = outer.cx < size / 2 ? 0.8 * size : 0.2 * size;
      extra = {cy, cx, rng.uniform(0.08, 0.12) * size, rng.uniform(0.08, 0.12) * size,
               rng.uniform(0.0, std::numbers::pi)};
    }
    for (int r = 0; r < s; ++r) {
      for (int c = 0; c < s; ++c) {
        std::uint8_t label = 0;
        if (inside(outer, r, c)) label = k == 2 ? 1 : (inside(inner, r, c) ? 1 : 2);
        if (k == 4 && label == 0 && inside(extra, r, c)) label = 3;
        gt.at(r, c) = label;
      }
    }

    // Class intensities kept apart so every boundary has contrast.
    std::vector<double> level(static_cast<std::size_t>(k));
    level[0] = rng.uniform(0.05, 0.2);
    if (k == 2) {
      level[1] = rng.uniform(0.6, 0.9);
    } else {
      level[1] = rng.uniform(0.75, 0.95);
      level[2] = rng.uniform(0.4, 0.55);
      if (k == 4) level[3] = rng.uniform(0.6, 0.7);
    }
    Grid<double> clean(s, s);
    for (std::size_t i = 0; i < clean.size(); ++i) clean[i] = level[gt[i]];
    clean = gaussian_blur(clean, 0.7);
    GrayImage image(s, s);
    for (std::size_t i = 0; i < image.size(); ++i) {
      image[i] = static_cast<float>(std::clamp(clean[i] + rng.normal(0.0, spec.noise), 0.0, 1.0));
    }

    LabelMap scribbles(s, s);
    for (int cls = 0; cls < k; ++cls) {
      const auto region = gt.mask(cls);
      if (region.count() == 0) continue;
      auto skeleton = skeletonize(region);
      if (skeleton.count() == 0) skeleton = region;
      for (std::size_t i = 0; i < skeleton.size(); ++i) {
        if (skeleton[i]) scribbles[i] = static_cast<std::uint8_t>(cls);
      }
    }
    std::ostringstream id;
    id << "case" << std::setw(4) << std::setfill('0') << n;
    data.cases.push_back({id.str(), std::move(image), std::move(scribbles), std::move(gt)});
  }
  return data;
}

// ---- file formats --------------------------------------------------------------

namespace {

struct RawGray {
  int height = 0;
  int width = 0;
  int depth = 8;  // 8 or 16
  std::vector<std::uint16_t> values;
};

bool has_png_extension(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png";
}

RawGray read_pgm(const fs::path& path) {
  const std::string bytes = read_file(path);
  auto fail = [&](const std::string& why) -> void {
    throw ValidationError(path.string() + ": " + why);
  };
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (token() != "P5") fail("not a binary PGM (P5) file");
  RawGray raw;
  int maxval = 0;
  try {
    raw.width = std::stoi(token());
    raw.height = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::logic_error&) {
    fail("malformed PGM header");
  }
  if (raw.width <= 0 || raw.height <= 0 || maxval <= 0 || maxval > 65535) fail("bad PGM header values");
  ++pos;  // single whitespace before the raster
  raw.depth = maxval < 256 ? 8 : 16;
  const std::size_t n = static_cast<std::size_t>(raw.width) * static_cast<std::size_t>(raw.height);
  const std::size_t need = n * (raw.depth == 8 ? 1 : 2);
  if (pos + need > bytes.size()) fail("truncated PGM raster");
  raw.values.resize(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + pos;
  for (std::size_t i = 0; i < n; ++i) {
    raw.values[i] = raw.depth == 8 ? p[i] : static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
  }
  if (maxval != 255 && maxval != 65535) {
    // Rescale odd maxvals onto the full range of the chosen depth.
    const double full = raw.depth == 8 ? 255.0 : 65535.0;
    for (auto& v : raw.values) {
      v = static_cast<std::uint16_t>(std::lround(std::min<double>(v, maxval) * full / maxval));
    }
  }
  return raw;
}

void write_pgm(const fs::path& path, int height, int width, const std::vector<std::uint8_t>& v) {
  std::string bytes = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  bytes.append(reinterpret_cast<const char*>(v.data()), v.size());
  atomic_write(path, bytes);
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

RawGray read_png(const fs::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) throw ValidationError(path.string() + ": cannot open");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw ValidationError(path.string() + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  RawGray raw;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError(path.string() + ": corrupt PNG");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError(path.string() + ": only grayscale PNG is supported");
  }
  if (bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  raw.width = static_cast<int>(png_get_image_width(png, info));
  raw.height = static_cast<int>(png_get_image_height(png, info));
  raw.depth = bit_depth == 16 ? 16 : 8;
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * static_cast<std::size_t>(raw.height));
  rows.resize(static_cast<std::size_t>(raw.height));
  for (int r = 0; r < raw.height; ++r) rows[static_cast<std::size_t>(r)] = buffer.data() + stride * r;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  raw.values.resize(static_cast<std::size_t>(raw.width) * static_cast<std::size_t>(raw.height));
  for (int r = 0; r < raw.height; ++r) {
    const png_byte* row = rows[static_cast<std::size_t>(r)];
    for (int c = 0; c < raw.width; ++c) {
      auto& v = raw.values[static_cast<std::size_t>(r * raw.width + c)];
      v = raw.depth == 8 ? row[c] : static_cast<std::uint16_t>((row[2 * c] << 8) | row[2 * c + 1]);
    }
  }
  return raw;
}

void write_png(const fs::path& path, int height, int width, const std::vector<std::uint8_t>& v) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, v.data(), 0, nullptr)) {
    throw std::runtime_error(path.string() + ": PNG encoding failed: " + image.message);
  }
  std::string bytes(size, '\0');
  if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, v.data(), 0, nullptr)) {
    throw std::runtime_error(path.string() + ": PNG encoding failed: " + image.message);
  }
  bytes.resize(size);
  atomic_write(path, bytes);
}

RawGray read_gray(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError(path.string() + ": no such file");
  return has_png_extension(path) ? read_png(path) : read_pgm(path);
}

void write_gray(const fs::path& path, int height, int width, const std::vector<std::uint8_t>& v) {
  if (has_png_extension(path)) {
    write_png(path, height, width, v);
  } else {
    write_pgm(path, height, width, v);
  }
}

}  // namespace

GrayImage load_image(const fs::path& path) {
  const auto raw = read_gray(path);
  GrayImage image(raw.height, raw.width);
  const float full = raw.depth == 8 ? 255.0f : 65535.0f;
  for (std::size_t i = 0; i < image.size(); ++i) image[i] = static_cast<float>(raw.values[i]) / full;
  return image;
}

void save_image(const fs::path& path, const GrayImage& image) {
  std::vector<std::uint8_t> v(image.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image[i], 0.0f, 1.0f) * 255.0f));
  }
  write_gray(path, image.height(), image.width(), v);
}

LabelMap load_labels(const fs::path& path) {
  const auto raw = read_gray(path);
  if (raw.depth != 8) throw ValidationError(path.string() + ": label maps must be 8-bit");
  LabelMap labels(raw.height, raw.width);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint8_t>(raw.values[i]);
  return labels;
}

void save_labels(const fs::path& path, const LabelMap& labels) {
  write_gray(path, labels.height(), labels.width(), labels.values());
}

GrayImage resize_image(const GrayImage& image, int height, int width) {
  if (height <= 0 || width <= 0) throw ValidationError("resize target must be positive");
  NoGradScope<float> no_grad;
  const Tensor<float> t({1, static_cast<std::size_t>(image.height()),
                         static_cast<std::size_t>(image.width())},
                        image.values());
  const auto r = resize_bilinear(t, static_cast<std::size_t>(height), static_cast<std::size_t>(width));
  GrayImage out(height, width);
  std::copy(r.data().begin(), r.data().end(), out.values().begin());
  return out;
}

LabelMap resize_labels(const LabelMap& labels, int height, int width) {
  if (height <= 0 || width <= 0) throw ValidationError("resize target must be positive");
  LabelMap out(height, width);
  for (int r = 0; r < height; ++r) {
    const int sr = std::min(labels.height() - 1, (2 * r + 1) * labels.height() / (2 * height));
    for (int c = 0; c < width; ++c) {
      const int sc = std::min(labels.width() - 1, (2 * c + 1) * labels.width() / (2 * width));
      out.at(r, c) = labels.at(sr, sc);
    }
  }
  return out;
}

Dataset load_dataset(const fs::path& dir, int resize) {
  const auto index = dir / "dataset.txt";
  std::istringstream in(read_file(index));
  Dataset data;
  bool have_k = false;
  for (std::string line; std::getline(in, line);) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    if (word == "num_classes") {
      if (!(ls >> data.num_classes)) throw ValidationError(index.string() + ": bad num_classes line");
      have_k = true;
      continue;
    }
    Case c;
    c.id = word;
    const auto image_path = dir / (word + "_image.png");
    const auto scribble_path = dir / (word + "_scribble.png");
    const auto gt_path = dir / (word + "_gt.png");
    c.image = load_image(image_path);
    c.scribbles = load_labels(scribble_path);
    if (!c.scribbles.same_size(c.image)) {
      throw ValidationError("size mismatch: " + image_path.string() + " vs " + scribble_path.string());
    }
    if (fs::exists(gt_path)) {
      c.ground_truth = load_labels(gt_path);
      if (!c.ground_truth.same_size(c.image)) {
        throw ValidationError("size mismatch: " + image_path.string() + " vs " + gt_path.string());
      }
    }
    if (resize > 0) {
      c.image = resize_image(c.image, resize, resize);
      c.scribbles = resize_labels(c.scribbles, resize, resize);
      if (!c.ground_truth.empty()) c.ground_truth = resize_labels(c.ground_truth, resize, resize);
    }
    data.cases.push_back(std::move(c));
  }
  if (!have_k) throw ValidationError(index.string() + ": missing num_classes line");
  data.validate();
  return data;
}

void save_dataset(const fs::path& dir, const Dataset& dataset) {
  dataset.validate();
  std::ostringstream index;
  index << "num_classes " << dataset.num_classes << '\n';
  for (const auto& c : dataset.cases) {
    save_image(dir / (c.id + "_image.png"), c.image);
    save_labels(dir / (c.id + "_scribble.png"), c.scribbles);
    if (!c.ground_truth.empty()) save_labels(dir / (c.id + "_gt.png"), c.ground_truth);
    index << c.id << '\n';
  }
  atomic_write(dir / "dataset.txt", index.str());
}

}  // namespace smpcl
