#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lcad/image.hpp"
#include "lcad/parallel.hpp"
#include "lcad/segment.hpp"

namespace lcad {

enum class TargetFamily { Exponential, Uniform };

inline std::string to_string(TargetFamily f) { return f == TargetFamily::Uniform ? "uniform" : "exp"; }

inline TargetFamily parse_target_family(const std::string& s) {
  if (s == "exp" || s == "exponential") return TargetFamily::Exponential;
  if (s == "uniform") return TargetFamily::Uniform;
  throw Error("unknown target distribution: " + s);
}

struct EnhanceConfig {
  int window = 81;
  double lambda = 10.0;
  int target_height = 230;
  TargetFamily target = TargetFamily::Exponential;

  void validate() const {
    if (window < 3 || window % 2 == 0) throw Error("enhance window must be odd and >= 3");
    if (!(lambda > 0.0)) throw Error("lambda must be positive");
    if (target_height < 32) throw Error("enhance target height must be >= 32");
  }
  friend bool operator==(const EnhanceConfig&, const EnhanceConfig&) = default;
};

/// Target gray-level density over 256 bins.
/// Exponential: p(t) proportional to exp(-lambda * t / 255).
inline Histogram256 target_pdf(const EnhanceConfig& cfg) {
  cfg.validate();
  Histogram256 h;
  if (cfg.target == TargetFamily::Uniform) {
    h.bins.fill(1.0 / 256.0);
  } else {
    for (int t = 0; t < 256; ++t) h.bins[t] = std::exp(-cfg.lambda * t / 255.0);
    const double z = h.total();
    for (double& b : h.bins) b /= z;
  }
  h.normalized = true;
  return h;
}

/// Prefix sums of the target density, with the last entry pinned to exactly 1.
inline std::array<double, 256> target_cdf(const EnhanceConfig& cfg) {
  std::array<double, 256> cdf{};
  if (cfg.target == TargetFamily::Uniform) {
    for (int t = 0; t < 256; ++t) cdf[t] = (t + 1) / 256.0;
  } else {
    cdf = target_pdf(cfg).cdf();
  }
  cdf[255] = 1.0;
  return cdf;
}

/// Generalized inverse: smallest level whose CDF reaches p.
inline int inverse_cdf(const std::array<double, 256>& cdf, double p) {
  auto it = std::lower_bound(cdf.begin(), cdf.end(), p);
  if (it == cdf.end()) return 255;
  return static_cast<int>(it - cdf.begin());
}

/// New gray level for one breast pixel: inverse target CDF applied to the window CDF at
/// the pixel's own level. This is the per-pixel reference the sliding version must match.
inline int specify_pixel(const GrayImage& img, const BreastMask& mask, Pixel poi,
                         const std::array<double, 256>& target, const EnhanceConfig& cfg) {
  if (!mask.inside(poi.x, poi.y)) throw Error("pixel of interest outside breast mask");
  const Histogram256 hist = window_histogram(img, mask, poi, cfg.window);
  const auto counts = hist.cdf();
  const int level = to_bin8(img.at(poi.x, poi.y), img.bit_depth);
  const double p = counts[level] / counts[255];
  return inverse_cdf(target, p);
}

struct EnhancedImage {
  GrayImage image;  // 8-bit, background 0
  BreastMask mask;
};

/// Local histogram specification of every mask pixel (no rescaling, no segmentation).
/// Sliding-window histograms per row; bit-identical to specify_pixel.
inline EnhancedImage specify_histograms(const GrayImage& img, const BreastMask& mask, const EnhanceConfig& cfg,
                                        unsigned threads = 0) {
  cfg.validate();
  if (!mask.matches(img)) throw Error("mask does not match image");
  const auto target = target_cdf(cfg);
  const int w = img.width, h = img.height, half = cfg.window / 2;

  // level 256 marks out-of-mask pixels and is never counted
  std::vector<std::uint16_t> levels(img.size());
  for (std::size_t i = 0; i < img.size(); ++i)
    levels[i] = mask.mask[i] ? static_cast<std::uint16_t>(to_bin8(img.pixels[i], img.bit_depth)) : 256;

  EnhancedImage out{GrayImage(w, h, 8), mask};
  out.image.pixel_spacing_mm = img.pixel_spacing_mm;

  parallel_for(
      static_cast<std::size_t>(h),
      [&](std::size_t row) {
        const int y = static_cast<int>(row);
        int first = -1, last = -1;
        for (int x = 0; x < w; ++x)
          if (mask.at(x, y)) {
            if (first < 0) first = x;
            last = x;
          }
        if (first < 0) return;
        const int y0 = std::max(0, y - half), y1 = std::min(h - 1, y + half);
        std::array<std::uint32_t, 257> bins{};
        auto add_column = [&](int x, int delta) {
          if (x < 0 || x >= w) return;
          for (int yy = y0; yy <= y1; ++yy) bins[levels[static_cast<std::size_t>(yy) * w + x]] += delta;
        };
        for (int x = first - half; x <= first + half; ++x) add_column(x, 1);
        for (int x = first; x <= last; ++x) {
          if (x > first) {
            add_column(x - half - 1, -1);
            add_column(x + half, 1);
          }
          const std::uint16_t level = levels[static_cast<std::size_t>(y) * w + x];
          if (level == 256) continue;
          std::uint64_t below = 0, n = 0;
          for (int t = 0; t <= level; ++t) below += bins[t];
          n = below;
          for (int t = level + 1; t < 256; ++t) n += bins[t];
          const double p = static_cast<double>(below) / static_cast<double>(n);
          out.image.at(x, y) = static_cast<std::uint16_t>(inverse_cdf(target, p));
        }
      },
      threads);
  return out;
}

/// Rescale to the configured height, segment, then specify every breast pixel.
inline EnhancedImage enhance_image(const GrayImage& img, const EnhanceConfig& cfg,
                                   const SegmentationConfig& seg = {}, unsigned threads = 0) {
  cfg.validate();
  const GrayImage scaled = scale_to_height(img, cfg.target_height);
  const BreastMask mask = segment_breast(scaled, seg);
  if (mask.count() == 0) throw Error("segmentation produced an empty breast mask");
  EnhancedImage out = specify_histograms(scaled, mask, cfg, threads);
  out.image.pixel_spacing_mm = scaled.spacing_mm();
  return out;
}

}  // namespace lcad
