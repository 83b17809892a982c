#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lcad {

/// Data error raised by any pipeline stage (bad input, degenerate data, I/O).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Integer pixel coordinate; pixel centers sit on integer positions.
struct Pixel {
  int x = 0;
  int y = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Real-valued point in pixel-index units.
struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline bool is_supported_bit_depth(int bits) {
  return bits == 8 || bits == 10 || bits == 12 || bits == 16;
}

/// Default mm/pixel for an image whose spacing was never recorded.
inline double derived_pixel_spacing(int height) {
  if (height == 230) return 1.0;
  return 229.4 / static_cast<double>(height);
}

/// 2-D grayscale raster, row-major, values < 2^bit_depth.
struct GrayImage {
  int width = 0;
  int height = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> pixels;
  std::optional<double> pixel_spacing_mm;

  GrayImage() = default;
  GrayImage(int w, int h, int bits, std::uint16_t fill = 0) : width(w), height(h), bit_depth(bits) {
    if (w <= 0 || h <= 0) throw Error("image dimensions must be positive");
    if (!is_supported_bit_depth(bits)) throw Error("unsupported bit depth " + std::to_string(bits));
    if (fill > max_value()) throw Error("fill value exceeds bit depth");
    pixels.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
  }

  int max_value() const { return (1 << bit_depth) - 1; }
  std::size_t size() const { return pixels.size(); }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  std::uint16_t at(int x, int y) const { return pixels[index(x, y)]; }
  std::uint16_t& at(int x, int y) { return pixels[index(x, y)]; }
  double spacing_mm() const { return pixel_spacing_mm.value_or(derived_pixel_spacing(height)); }

  void validate() const {
    if (width <= 0 || height <= 0) throw Error("image dimensions must be positive");
    if (!is_supported_bit_depth(bit_depth)) throw Error("unsupported bit depth " + std::to_string(bit_depth));
    if (pixels.size() != static_cast<std::size_t>(width) * height) throw Error("pixel buffer size mismatch");
    const int maxv = max_value();
    if (std::any_of(pixels.begin(), pixels.end(), [maxv](std::uint16_t v) { return v > maxv; }))
      throw Error("pixel value exceeds bit depth");
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Binary breast/background raster.
struct BreastMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> mask;

  BreastMask() = default;
  BreastMask(int w, int h, bool value = false)
      : width(w), height(h), mask(static_cast<std::size_t>(w) * h, value ? 1 : 0) {}

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  bool at(int x, int y) const { return mask[index(x, y)] != 0; }
  void set(int x, int y, bool v) { mask[index(x, y)] = v ? 1 : 0; }
  /// In-bounds and inside the breast.
  bool inside(int x, int y) const { return contains(x, y) && at(x, y); }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  }
  bool matches(const GrayImage& img) const { return width == img.width && height == img.height; }

  friend bool operator==(const BreastMask&, const BreastMask&) = default;
};

/// 256-bin gray-level histogram; counts, or probabilities when normalized.
struct Histogram256 {
  std::array<double, 256> bins{};
  bool normalized = false;

  double total() const { return std::accumulate(bins.begin(), bins.end(), 0.0); }

  Histogram256 normalized_copy() const {
    Histogram256 out = *this;
    const double sum = total();
    if (sum > 0.0)
      for (double& b : out.bins) b /= sum;
    out.normalized = true;
    return out;
  }

  /// Inclusive prefix sums.
  std::array<double, 256> cdf() const {
    std::array<double, 256> c{};
    std::partial_sum(bins.begin(), bins.end(), c.begin());
    return c;
  }
};

/// Maps a gray level of the given bit depth onto an 8-bit bin: floor(t * 256 / 2^bits).
inline int to_bin8(std::uint32_t value, int bit_depth) {
  if (bit_depth <= 8) return static_cast<int>(value);
  return static_cast<int>((value * 256u) >> bit_depth);
}

/// Width an image gets when its height is rescaled with aspect ratio preserved.
inline int scaled_width(int width, int height, int target_height) {
  const double w = std::round(static_cast<double>(width) * target_height / height);
  return std::max(1, static_cast<int>(w));
}

/// Coordinate map between an original raster and a rescaled copy of it.
/// Pixel centers are aligned: orig = (scaled + 0.5) * s - 0.5.
struct FrameMap {
  double sx = 1.0;
  double sy = 1.0;

  static FrameMap between(int orig_w, int orig_h, int scaled_w, int scaled_h) {
    return {static_cast<double>(orig_w) / scaled_w, static_cast<double>(orig_h) / scaled_h};
  }
  Point2 to_original(Point2 p) const { return {(p.x + 0.5) * sx - 0.5, (p.y + 0.5) * sy - 0.5}; }
  Point2 to_scaled(Point2 p) const { return {(p.x + 0.5) / sx - 0.5, (p.y + 0.5) / sy - 0.5}; }
};

namespace detail {
inline double source_coord(int dst, double ratio, int src_size) {
  const double s = (dst + 0.5) * ratio - 0.5;
  return std::clamp(s, 0.0, static_cast<double>(src_size - 1));
}
}  // namespace detail

/// Bilinear rescale to the given height; width follows the aspect ratio.
inline GrayImage scale_to_height(const GrayImage& img, int target_height) {
  if (target_height < 1) throw Error("target height must be >= 1");
  if (target_height == img.height) return img;

  const int out_w = scaled_width(img.width, img.height, target_height);
  GrayImage out(out_w, target_height, img.bit_depth);
  const double rx = static_cast<double>(img.width) / out_w;
  const double ry = static_cast<double>(img.height) / target_height;
  const double maxv = img.max_value();

  std::vector<int> x0(out_w), x1(out_w);
  std::vector<double> ax(out_w);
  for (int x = 0; x < out_w; ++x) {
    const double sx = detail::source_coord(x, rx, img.width);
    x0[x] = static_cast<int>(std::floor(sx));
    x1[x] = std::min(x0[x] + 1, img.width - 1);
    ax[x] = sx - x0[x];
  }
  for (int y = 0; y < target_height; ++y) {
    const double sy = detail::source_coord(y, ry, img.height);
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ay = sy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double top = img.at(x0[x], y0) + ax[x] * (img.at(x1[x], y0) - img.at(x0[x], y0));
      const double bottom = img.at(x0[x], y1) + ax[x] * (img.at(x1[x], y1) - img.at(x0[x], y1));
      const double v = top + ay * (bottom - top);
      out.at(x, y) = static_cast<std::uint16_t>(std::clamp(std::floor(v + 0.5), 0.0, maxv));
    }
  }
  out.pixel_spacing_mm = img.spacing_mm() * img.height / target_height;
  return out;
}

/// Count histogram of 8-bit-binned gray levels over the w x w window at `center`,
/// clipped to the image and restricted to mask pixels.
inline Histogram256 window_histogram(const GrayImage& img, const BreastMask& mask, Pixel center, int w) {
  if (!img.contains(center.x, center.y)) throw Error("window center outside image");
  if (w < 1 || w % 2 == 0) throw Error("window side must be odd");
  if (!mask.matches(img)) throw Error("mask does not match image");
  const int h = w / 2;
  Histogram256 hist;
  for (int y = std::max(0, center.y - h); y <= std::min(img.height - 1, center.y + h); ++y)
    for (int x = std::max(0, center.x - h); x <= std::min(img.width - 1, center.x + h); ++x)
      if (mask.at(x, y)) hist.bins[to_bin8(img.at(x, y), img.bit_depth)] += 1.0;
  return hist;
}

/// 256-bin histogram of the whole image (8-bit binned).
inline std::array<std::uint64_t, 256> global_histogram(const GrayImage& img) {
  std::array<std::uint64_t, 256> h{};
  for (std::uint16_t v : img.pixels) ++h[to_bin8(v, img.bit_depth)];
  return h;
}

/// Per-pixel 8-bit bins.
inline std::vector<std::uint8_t> binned_levels(const GrayImage& img) {
  std::vector<std::uint8_t> out(img.size());
  std::transform(img.pixels.begin(), img.pixels.end(), out.begin(),
                 [bits = img.bit_depth](std::uint16_t v) { return static_cast<std::uint8_t>(to_bin8(v, bits)); });
  return out;
}

}  // namespace lcad
