#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lcad/image.hpp"

namespace lcad {

struct SegmentationConfig {
  double stop_fraction = 0.002;
  int max_iterations = 100;

  void validate() const {
    if (!(stop_fraction > 0.0 && stop_fraction < 1.0)) throw Error("stop_fraction must lie in (0,1)");
    if (max_iterations < 1) throw Error("max_iterations must be >= 1");
  }
};

/// Otsu threshold on a 256-bin histogram; levels > threshold form the upper class.
inline int otsu_threshold(const std::array<std::uint64_t, 256>& hist) {
  int occupied = 0;
  double total = 0.0, level_sum = 0.0;
  for (int t = 0; t < 256; ++t) {
    occupied += hist[t] > 0;
    total += static_cast<double>(hist[t]);
    level_sum += static_cast<double>(t) * hist[t];
  }
  if (occupied < 2) throw Error("degenerate histogram");

  double w0 = 0.0, s0 = 0.0, best = -1.0;
  int best_t = 0;
  for (int t = 0; t < 255; ++t) {
    w0 += static_cast<double>(hist[t]);
    s0 += static_cast<double>(t) * hist[t];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    // between-class variance up to the constant factor 1/total^2
    const double d = level_sum * w0 - s0 * total;
    const double between = d * d / (w0 * w1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t;
}

/// Threshold over the 8-bit-binned global histogram of the image.
inline int otsu_threshold(const GrayImage& img) { return otsu_threshold(global_histogram(img)); }

/// Segmentation result with the per-iteration reassignment counts.
struct SegmentationTrace {
  BreastMask mask;
  int otsu_level = 0;
  int iterations = 0;
  std::vector<std::uint64_t> reassigned;
};

namespace detail {

struct GaussianClass {
  double count = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

inline GaussianClass fit_class(const std::array<std::uint64_t, 256>& hist, const std::array<bool, 256>& member,
                               bool want) {
  GaussianClass c;
  double sum = 0.0;
  for (int t = 0; t < 256; ++t)
    if (member[t] == want) {
      c.count += static_cast<double>(hist[t]);
      sum += static_cast<double>(t) * hist[t];
    }
  if (c.count == 0.0) return c;
  c.mean = sum / c.count;
  double ss = 0.0;
  for (int t = 0; t < 256; ++t)
    if (member[t] == want) ss += (t - c.mean) * (t - c.mean) * static_cast<double>(hist[t]);
  // quantization floor keeps single-level classes well defined
  c.variance = ss / c.count + 1.0 / 12.0;
  return c;
}

inline double qda_log_posterior(const GaussianClass& c, double total, double t) {
  const double z = t - c.mean;
  return std::log(c.count / total) - 0.5 * std::log(c.variance) - z * z / (2.0 * c.variance);
}

}  // namespace detail

/// Otsu seed followed by iterative 1-D QDA reassignment of gray levels between the
/// breast and background classes. All pixels of a gray level share a class, so the
/// iteration runs on the global histogram.
inline SegmentationTrace segment_breast_traced(const GrayImage& img, const SegmentationConfig& cfg = {}) {
  cfg.validate();
  const auto hist = global_histogram(img);
  SegmentationTrace trace;
  trace.otsu_level = otsu_threshold(hist);

  std::array<bool, 256> breast{};
  for (int t = 0; t < 256; ++t) breast[t] = t > trace.otsu_level;

  const double total = static_cast<double>(img.size());
  const double stop = cfg.stop_fraction * total;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    auto fg = detail::fit_class(hist, breast, true);
    auto bg = detail::fit_class(hist, breast, false);
    if (fg.count == 0.0 || bg.count == 0.0) break;
    // breast is the brighter class by convention
    bool flip = fg.mean < bg.mean;
    if (flip) std::swap(fg, bg);

    std::array<bool, 256> next = breast;
    std::uint64_t moved = 0;
    for (int t = 0; t < 256; ++t) {
      const bool current = breast[t] != flip;
      const double sf = detail::qda_log_posterior(fg, total, t);
      const double sb = detail::qda_log_posterior(bg, total, t);
      const bool assign = sf > sb ? true : (sb > sf ? false : current);
      next[t] = assign;
      if (assign != current) moved += hist[t];
    }
    bool has_fg = false, has_bg = false;
    for (int t = 0; t < 256; ++t) {
      if (hist[t] == 0) continue;
      (next[t] ? has_fg : has_bg) = true;
    }
    ++trace.iterations;
    trace.reassigned.push_back(moved);
    if (!has_fg || !has_bg) break;  // class collapse: keep the previous assignment
    breast = next;
    if (static_cast<double>(moved) < stop) break;
  }

  trace.mask = BreastMask(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i)
    trace.mask.mask[i] = breast[to_bin8(img.pixels[i], img.bit_depth)] ? 1 : 0;
  return trace;
}

inline BreastMask segment_breast(const GrayImage& img, const SegmentationConfig& cfg = {}) {
  return segment_breast_traced(img, cfg).mask;
}

}  // namespace lcad
