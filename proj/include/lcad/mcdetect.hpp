#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "lcad/annotation.hpp"
#include "lcad/enhance.hpp"
#include "lcad/image.hpp"

namespace lcad {

struct McConfig {
  int inner_w2 = 2;
  double threshold_th = 2.4;
  int target_height = 2294;
  double merge_distance_mm = 3.0;
  int min_foci_per_cluster = 1;

  void validate() const {
    if (inner_w2 < 1) throw Error("inner filter size w2 must be >= 1");
    if (target_height < 32) throw Error("microcalcification target height must be >= 32");
    if (!(merge_distance_mm > 0.0)) throw Error("merge distance must be positive");
    if (min_foci_per_cluster < 0) throw Error("min foci per cluster must be >= 0");
  }
};

/// Square correlation kernel; the POI sits at (anchor, anchor).
struct NestedKernel {
  int side = 0;
  int anchor = 0;
  std::vector<double> weights;  // row-major side x side

  double at(int row, int col) const { return weights[static_cast<std::size_t>(row) * side + col]; }
};

/// 3*w2 square: central w2 x w2 block of 1/w2^2, ring of -1/(8 w2^2). Sums to zero.
inline NestedKernel build_nested_filter(int w2) {
  if (w2 < 1) throw Error("inner filter size w2 must be >= 1");
  NestedKernel k;
  k.side = 3 * w2;
  k.anchor = w2;
  const double inner = 1.0 / (static_cast<double>(w2) * w2);
  const double outer = -1.0 / (8.0 * w2 * w2);
  k.weights.assign(static_cast<std::size_t>(k.side) * k.side, outer);
  for (int r = w2; r < 2 * w2; ++r)
    for (int c = w2; c < 2 * w2; ++c) k.weights[static_cast<std::size_t>(r) * k.side + c] = inner;
  return k;
}

struct RealRaster {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

inline RealRaster to_raster(const GrayImage& img) {
  RealRaster r{img.width, img.height, std::vector<double>(img.pixels.begin(), img.pixels.end())};
  return r;
}

namespace detail {

// The FFTW planner is not thread-safe; execution is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

inline int fft_friendly_size(int n) {
  for (int m = std::max(n, 1);; ++m) {
    int r = m;
    for (int f : {2, 3, 5, 7})
      while (r % f == 0) r /= f;
    if (r == 1) return m;
  }
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t bytes) : ptr(fftw_malloc(bytes)) {
    if (!ptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  void* ptr;
};

struct FftwPlan {
  fftw_plan plan = nullptr;
  ~FftwPlan() {
    if (plan) {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
};

}  // namespace detail

/// Cross-correlation with the kernel (POI at the kernel anchor, zeros beyond the raster),
/// computed in the frequency domain.
inline RealRaster correlate_fft(const RealRaster& src, const NestedKernel& k) {
  if (k.side > std::min(src.width, src.height)) throw Error("kernel larger than image");
  const int n0 = detail::fft_friendly_size(src.height + k.side - 1);
  const int n1 = detail::fft_friendly_size(src.width + k.side - 1);
  const int nc = n1 / 2 + 1;
  const std::size_t real_count = static_cast<std::size_t>(n0) * n1;
  const std::size_t complex_count = static_cast<std::size_t>(n0) * nc;

  detail::FftwBuffer image(sizeof(double) * real_count), kernel(sizeof(double) * real_count);
  detail::FftwBuffer image_f(sizeof(fftw_complex) * complex_count), kernel_f(sizeof(fftw_complex) * complex_count);
  auto* im = static_cast<double*>(image.ptr);
  auto* ke = static_cast<double*>(kernel.ptr);
  auto* imf = static_cast<fftw_complex*>(image_f.ptr);
  auto* kef = static_cast<fftw_complex*>(kernel_f.ptr);

  detail::FftwPlan fwd_image, fwd_kernel, inverse;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fwd_image.plan = fftw_plan_dft_r2c_2d(n0, n1, im, imf, FFTW_ESTIMATE);
    fwd_kernel.plan = fftw_plan_dft_r2c_2d(n0, n1, ke, kef, FFTW_ESTIMATE);
    inverse.plan = fftw_plan_dft_c2r_2d(n0, n1, imf, im, FFTW_ESTIMATE);
  }
  std::fill(im, im + real_count, 0.0);
  std::fill(ke, ke + real_count, 0.0);
  for (int y = 0; y < src.height; ++y)
    std::copy_n(src.values.data() + static_cast<std::size_t>(y) * src.width, src.width,
                im + static_cast<std::size_t>(y) * n1);
  // kernel shifted so the anchor lands on the origin, wrapped circularly
  for (int r = 0; r < k.side; ++r)
    for (int c = 0; c < k.side; ++c) {
      const int y = (r - k.anchor + n0) % n0, x = (c - k.anchor + n1) % n1;
      ke[static_cast<std::size_t>(y) * n1 + x] = k.at(r, c);
    }
  fftw_execute(fwd_image.plan);
  fftw_execute(fwd_kernel.plan);
  const double scale = 1.0 / static_cast<double>(real_count);
  for (std::size_t i = 0; i < complex_count; ++i) {
    // F * conj(K)
    const double a = imf[i][0], b = imf[i][1], c = kef[i][0], d = -kef[i][1];
    imf[i][0] = (a * c - b * d) * scale;
    imf[i][1] = (a * d + b * c) * scale;
  }
  fftw_execute(inverse.plan);

  RealRaster out{src.width, src.height, std::vector<double>(static_cast<std::size_t>(src.width) * src.height)};
  for (int y = 0; y < src.height; ++y)
    std::copy_n(im + static_cast<std::size_t>(y) * n1, src.width,
                out.values.data() + static_cast<std::size_t>(y) * src.width);
  return out;
}

/// Nested-filter response of an image; zero outside the mask.
inline RealRaster filter_response(const GrayImage& img, const BreastMask& mask, const NestedKernel& k) {
  if (!mask.matches(img)) throw Error("mask does not match image");
  RealRaster r = correlate_fft(to_raster(img), k);
  for (std::size_t i = 0; i < r.values.size(); ++i)
    if (!mask.mask[i]) r.values[i] = 0.0;
  return r;
}

inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

/// Centers of 8-connected components of response > threshold. Component centroids are
/// shifted by (w2-1)/2 so they refer to the inner block's center, not the anchor cell.
inline std::vector<Point2> focus_centers(const RealRaster& response, double threshold, int w2) {
  const int w = response.width, h = response.height;
  std::vector<char> on(response.values.size()), seen(response.values.size(), 0);
  for (std::size_t i = 0; i < on.size(); ++i) on[i] = response.values[i] > threshold;
  const double shift = (w2 - 1) / 2.0;
  std::vector<Point2> centers;
  std::deque<Pixel> queue;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!on[i] || seen[i]) continue;
      seen[i] = 1;
      queue.assign(1, {x, y});
      double sx = 0.0, sy = 0.0;
      std::size_t n = 0;
      while (!queue.empty()) {
        const Pixel p = queue.front();
        queue.pop_front();
        sx += p.x, sy += p.y, ++n;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = p.x + dx, ny = p.y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
            if (on[j] && !seen[j]) seen[j] = 1, queue.push_back({nx, ny});
          }
      }
      centers.push_back({static_cast<double>(round_half_up(sx / n + shift)),
                         static_cast<double>(round_half_up(sy / n + shift))});
    }
  return centers;
}

/// Agglomerative merging: one cluster per focus, then any two clusters holding foci
/// closer than the merge distance are joined, repeated until nothing merges.
/// Returns member lists (ascending) ordered by their first member.
inline std::vector<std::vector<std::size_t>> merge_foci(std::span<const Point2> foci, double spacing_mm,
                                                        double merge_distance_mm) {
  const std::size_t n = foci.size();
  const double radius_px = merge_distance_mm / spacing_mm;
  auto close = [&](std::size_t a, std::size_t b) {
    return std::hypot(foci[a].x - foci[b].x, foci[a].y - foci[b].y) * spacing_mm < merge_distance_mm;
  };
  // candidate pairs via a uniform grid of cell size radius_px
  std::map<std::pair<long, long>, std::vector<std::size_t>> grid;
  auto cell = [&](const Point2& p) {
    return std::pair<long, long>{static_cast<long>(std::floor(p.x / radius_px)),
                                 static_cast<long>(std::floor(p.y / radius_px))};
  };
  for (std::size_t i = 0; i < n; ++i) grid[cell(foci[i])].push_back(i);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [cx, cy] = cell(foci[i]);
    for (long gy = cy - 1; gy <= cy + 1; ++gy)
      for (long gx = cx - 1; gx <= cx + 1; ++gx) {
        auto it = grid.find({gx, gy});
        if (it == grid.end()) continue;
        for (std::size_t j : it->second)
          if (j > i && close(i, j)) pairs.emplace_back(i, j);
      }
  }

  std::vector<std::vector<std::size_t>> clusters(n);
  std::vector<std::size_t> owner(n);
  for (std::size_t i = 0; i < n; ++i) clusters[i] = {i}, owner[i] = i;
  for (bool merged = true; merged;) {
    merged = false;
    for (const auto& [a, b] : pairs) {
      std::size_t ca = owner[a], cb = owner[b];
      if (ca == cb) continue;
      if (clusters[ca].size() < clusters[cb].size()) std::swap(ca, cb);
      for (std::size_t m : clusters[cb]) owner[m] = ca;
      clusters[ca].insert(clusters[ca].end(), clusters[cb].begin(), clusters[cb].end());
      clusters[cb].clear();
      merged = true;
    }
  }
  std::vector<std::vector<std::size_t>> out;
  for (auto& c : clusters)
    if (!c.empty()) {
      std::sort(c.begin(), c.end());
      out.push_back(std::move(c));
    }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

struct FociCluster {
  std::vector<std::size_t> members;  // indices into FociSet::foci
  Pixel center;                      // rounded centroid of member foci
  std::size_t count() const { return members.size(); }
};

/// Detected foci and their clusters, in original-image pixel coordinates.
struct FociSet {
  std::vector<Pixel> foci;
  std::vector<FociCluster> clusters;
};

inline FociCluster make_cluster(const std::vector<Pixel>& foci, std::vector<std::size_t> members) {
  double sx = 0.0, sy = 0.0;
  for (std::size_t m : members) sx += foci[m].x, sy += foci[m].y;
  const double n = static_cast<double>(members.size());
  return {std::move(members), {round_half_up(sx / n), round_half_up(sy / n)}};
}

/// Threshold, component centers and clustering over an already enhanced raster.
inline FociSet detect_foci_enhanced(const EnhancedImage& enhanced, const McConfig& cfg, const FrameMap& frame) {
  cfg.validate();
  const NestedKernel kernel = build_nested_filter(cfg.inner_w2);
  const RealRaster response = filter_response(enhanced.image, enhanced.mask, kernel);
  const auto centers = focus_centers(response, cfg.threshold_th, cfg.inner_w2);
  const auto groups = merge_foci(centers, enhanced.image.spacing_mm(), cfg.merge_distance_mm);

  FociSet out;
  out.foci.reserve(centers.size());
  for (const auto& c : centers) {
    const Point2 o = frame.to_original(c);
    out.foci.push_back({round_half_up(o.x), round_half_up(o.y)});
  }
  for (const auto& g : groups) out.clusters.push_back(make_cluster(out.foci, g));
  return out;
}

/// Enhance at the microcalcification height, filter, threshold, extract and cluster foci.
inline FociSet detect_foci(const GrayImage& img, const McConfig& cfg, EnhanceConfig enhance = {},
                           const SegmentationConfig& seg = {}, unsigned threads = 0) {
  cfg.validate();
  enhance.target_height = cfg.target_height;
  const EnhancedImage enhanced = enhance_image(img, enhance, seg, threads);
  const FrameMap frame = FrameMap::between(img.width, img.height, enhanced.image.width, enhanced.image.height);
  return detect_foci_enhanced(enhanced, cfg, frame);
}

/// One marker per cluster with more than min_foci members; score = count / max count.
inline MarkerSet cluster_markers(const FociSet& foci, int min_foci) {
  MarkerSet out;
  std::size_t max_count = 0;
  for (const auto& c : foci.clusters) max_count = std::max(max_count, c.count());
  for (const auto& c : foci.clusters)
    if (static_cast<long>(c.count()) > min_foci)
      out.markers.push_back({static_cast<double>(c.center.x), static_cast<double>(c.center.y),
                             static_cast<double>(c.count()) / static_cast<double>(max_count)});
  out.sort();
  return out;
}

}  // namespace lcad
