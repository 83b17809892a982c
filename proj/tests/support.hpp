#pragma once
// Independent reference implementations used as oracles by the unit and acceptance
// tests. They are deliberately naive and share no code paths with include/lcad.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "lcad/lcad.hpp"

namespace oracle {

using lcad::GrayImage;

/// Otsu by exhaustive search with exact rational comparisons. Class 0 is levels <= t.
/// Counts must stay small (<= ~1000 per bin) so 128-bit products cannot overflow.
inline int otsu_exhaustive(const std::array<std::uint64_t, 256>& hist) {
  __int128 total = 0, level_sum = 0;
  for (int t = 0; t < 256; ++t) total += hist[t], level_sum += static_cast<__int128>(t) * hist[t];
  int best_t = -1;
  __int128 best_num = 0, best_den = 1;
  for (int t = 0; t < 255; ++t) {
    __int128 w0 = 0, s0 = 0;
    for (int u = 0; u <= t; ++u) w0 += hist[u], s0 += static_cast<__int128>(u) * hist[u];
    const __int128 w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    // sigma_b^2 * total^2 = (level_sum*w0 - s0*total)^2 / (w0*w1)
    const __int128 d = level_sum * w0 - s0 * total;
    const __int128 num = d * d, den = w0 * w1;
    if (best_t < 0 || num * best_den > best_num * den) best_t = t, best_num = num, best_den = den;
  }
  return best_t;
}

/// Score by sorting every centroid distance; ties go to the lower combined index.
inline double knn_sorted(const std::vector<double>& q, const lcad::RealMatrix& mass, const lcad::RealMatrix& normal,
                         int k) {
  std::vector<std::pair<double, int>> all;
  const int nm = static_cast<int>(mass.rows());
  for (int r = 0; r < nm + normal.rows(); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double c = r < nm ? mass(r, j) : normal(r - nm, j);
      s += (q[j] - c) * (q[j] - c);
    }
    all.emplace_back(s, r);
  }
  std::sort(all.begin(), all.end());
  int n1 = 0;
  for (int i = 0; i < k; ++i) n1 += all[i].second < nm;
  return std::log((n1 + 1.0) / (k - n1 + 1.0));
}

/// Mann-Whitney by the O(n1 n2) pair count.
inline double auc_pairs(const std::vector<double>& normal, const std::vector<double>& malignant) {
  double wins = 0.0;
  for (double y : malignant)
    for (double x : normal) wins += y > x ? 1.0 : (y == x ? 0.5 : 0.0);
  return wins / (static_cast<double>(normal.size()) * static_cast<double>(malignant.size()));
}

/// Direct spatial cross-correlation, zeros beyond the image.
inline std::vector<double> correlate_direct(const std::vector<double>& img, int w, int h, const lcad::NestedKernel& k) {
  std::vector<double> out(img.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int r = 0; r < k.side; ++r)
        for (int c = 0; c < k.side; ++c) {
          const int yy = y + r - k.anchor, xx = x + c - k.anchor;
          if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
          s += k.weights[r * k.side + c] * img[yy * w + xx];
        }
      out[y * w + x] = s;
    }
  return out;
}

/// Connected components of the "closer than d" graph via union-find.
inline std::vector<std::vector<std::size_t>> union_find_clusters(const std::vector<lcad::Point2>& pts,
                                                                 double spacing, double d) {
  std::vector<std::size_t> parent(pts.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      if (std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y) * spacing < d) parent[find(i)] = find(j);
  std::vector<std::vector<std::size_t>> groups(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& g : groups)
    if (!g.empty()) out.push_back(g);
  std::sort(out.begin(), out.end());
  return out;
}

/// Local histogram equalization in integer arithmetic: new level = ceil(256 c / n) - 1,
/// c = in-mask window pixels at or below the pixel's bin, n = in-mask window pixels.
inline std::vector<int> lhe_integer(const GrayImage& img, const lcad::BreastMask& mask, int window) {
  const int half = window / 2;
  std::vector<int> out(img.size(), 0);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (!mask.at(x, y)) continue;
      const int own = (img.at(x, y) * 256) >> img.bit_depth;
      long c = 0, n = 0;
      for (int yy = std::max(0, y - half); yy <= std::min(img.height - 1, y + half); ++yy)
        for (int xx = std::max(0, x - half); xx <= std::min(img.width - 1, x + half); ++xx) {
          if (!mask.at(xx, yy)) continue;
          ++n;
          c += ((img.at(xx, yy) * 256) >> img.bit_depth) <= own;
        }
      out[y * img.width + x] = static_cast<int>((256 * c + n - 1) / n) - 1;
    }
  return out;
}

/// Discrete exponential CDF over 256 levels computed independently of the library.
inline std::array<double, 256> exponential_cdf(double lambda) {
  std::array<double, 256> cdf{};
  long double z = 0.0L, acc = 0.0L;
  for (int t = 0; t < 256; ++t) z += std::exp(-static_cast<long double>(lambda) * t / 255.0L);
  for (int t = 0; t < 256; ++t) {
    acc += std::exp(-static_cast<long double>(lambda) * t / 255.0L);
    cdf[t] = static_cast<double>(acc / z);
  }
  return cdf;
}

/// Kolmogorov-Smirnov distance between a 256-bin count histogram and a target CDF.
inline double ks_distance(const std::array<std::uint32_t, 256>& counts, const std::array<double, 256>& cdf) {
  double n = 0.0;
  for (auto c : counts) n += c;
  double acc = 0.0, ks = 0.0;
  for (int t = 0; t < 256; ++t) {
    acc += counts[t];
    ks = std::max(ks, std::abs(acc / n - cdf[t]));
  }
  return ks;
}

/// Random image with levels drawn uniformly from [0, 2^bits).
inline GrayImage random_image(std::mt19937_64& rng, int w, int h, int bits) {
  GrayImage img(w, h, bits);
  std::uniform_int_distribution<int> level(0, (1 << bits) - 1);
  for (auto& p : img.pixels) p = static_cast<std::uint16_t>(level(rng));
  return img;
}

}  // namespace oracle
