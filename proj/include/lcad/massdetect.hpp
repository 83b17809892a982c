#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "lcad/annotation.hpp"
#include "lcad/enhance.hpp"
#include "lcad/image.hpp"
#include "lcad/parallel.hpp"

namespace lcad {

struct MassConfig {
  int patch_w1 = 21;
  int centroids_r = 100;
  int pca_C = 10;
  int knn_K = 141;
  int smooth_side = 10;
  std::vector<int> mcs_windows{9, 15, 21, 27, 33, 39};

  void validate() const {
    if (patch_w1 < 3 || patch_w1 % 2 == 0) throw Error("patch window w1 must be odd and >= 3");
    if (centroids_r < 1) throw Error("centroid count r must be >= 1");
    if (pca_C < 1 || pca_C > patch_w1 * patch_w1) throw Error("PCA component count must lie in [1, w1^2]");
    if (knn_K < 1 || knn_K % 2 == 0) throw Error("KNN K must be odd and >= 1");
    if (smooth_side < 1) throw Error("smoothing side must be >= 1");
    for (int w : mcs_windows)
      if (w < 3 || w % 2 == 0) throw Error("MCS windows must be odd and >= 3");
  }
  /// Same settings at another patch window.
  MassConfig with_window(int w1) const {
    MassConfig c = *this;
    c.patch_w1 = w1;
    c.pca_C = std::min(c.pca_C, w1 * w1);
    return c;
  }
  friend bool operator==(const MassConfig&, const MassConfig&) = default;
};

enum class RegionSelector { Mass, Normal, All };

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RealMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PatchFeatures {
  FeatureMatrix rows;
  std::vector<Pixel> pixels;
};

namespace detail {

inline bool selected(RegionSelector region, bool in_lesion) {
  switch (region) {
    case RegionSelector::Mass: return in_lesion;
    case RegionSelector::Normal: return !in_lesion;
    case RegionSelector::All: return true;
  }
  return false;
}

inline void fill_patch(const GrayImage& img, Pixel c, int w1, float* out) {
  const int h = w1 / 2;
  for (int dy = -h; dy <= h; ++dy) {
    const int y = std::clamp(c.y + dy, 0, img.height - 1);
    for (int dx = -h; dx <= h; ++dx) {
      const int x = std::clamp(c.x + dx, 0, img.width - 1);
      *out++ = static_cast<float>(img.at(x, y));
    }
  }
}

}  // namespace detail

/// Breast pixels of the requested region, in row-major scan order.
inline std::vector<Pixel> select_pixels(const BreastMask& mask, const BreastMask& lesion, RegionSelector region) {
  std::vector<Pixel> out;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y) && detail::selected(region, lesion.at(x, y))) out.push_back({x, y});
  return out;
}

/// Raw w1 x w1 gray-level patches (row-major, edge-replicated at image borders).
inline FeatureMatrix patch_rows(const GrayImage& img, std::span<const Pixel> pixels, int w1) {
  FeatureMatrix rows(static_cast<Eigen::Index>(pixels.size()), w1 * w1);
  for (std::size_t i = 0; i < pixels.size(); ++i)
    detail::fill_patch(img, pixels[i], w1, rows.row(static_cast<Eigen::Index>(i)).data());
  return rows;
}

/// One feature row per selected breast pixel. `lesion` marks mass-annotation pixels.
inline PatchFeatures extract_patch_features(const GrayImage& img, const BreastMask& mask, const BreastMask& lesion,
                                            RegionSelector region, int w1) {
  if (w1 < 1 || w1 % 2 == 0) throw Error("patch window must be odd");
  if (!mask.matches(img) || !lesion.matches(img)) throw Error("mask does not match image");
  PatchFeatures f;
  f.pixels = select_pixels(mask, lesion, region);
  if (region == RegionSelector::Mass && f.pixels.empty()) throw Error("no mass pixels: image has no mass annotation");
  f.rows = patch_rows(img, f.pixels, w1);
  return f;
}

/// Annotation-driven overload; annotations must be in the image's frame.
inline PatchFeatures extract_patch_features(const GrayImage& img, const BreastMask& mask,
                                            const AnnotationSet& annotations, RegionSelector region, int w1) {
  if (region == RegionSelector::Mass && !annotations.has(LesionKind::Mass))
    throw Error("no mass pixels: image has no mass annotation");
  return extract_patch_features(img, mask, rasterize(annotations, img.width, img.height, LesionKind::Mass), region, w1);
}

// ---------------------------------------------------------------------------
// K-means

namespace detail {

// Uniform double in [0,1) from the top 53 bits; identical across standard libraries.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

struct KMeansResult {
  RealMatrix centroids;
  std::vector<int> assignment;
  int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. k is clamped to the row count.
/// Empty clusters are re-seeded from the point farthest from its centroid.
inline KMeansResult kmeans(const FeatureMatrix& data, int k, std::uint64_t seed, int max_iterations = 100) {
  const Eigen::Index n = data.rows(), d = data.cols();
  if (n == 0) throw Error("k-means on empty data");
  if (k < 1) throw Error("k-means needs k >= 1");
  k = static_cast<int>(std::min<Eigen::Index>(k, n));

  const Eigen::RowVectorXd mean = data.cast<double>().colwise().mean();
  const FeatureMatrix x = data - mean.cast<float>().replicate(n, 1);
  const Eigen::VectorXf row_norm = x.rowwise().squaredNorm();

  std::mt19937_64 rng(seed);
  RealMatrix centers(k, d);
  std::vector<double> nearest(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  Eigen::Index pick = static_cast<Eigen::Index>(detail::unit_uniform(rng) * static_cast<double>(n));
  for (int c = 0; c < k; ++c) {
    centers.row(c) = x.row(pick).cast<double>();
    chosen[pick] = 1;
    if (c + 1 == k) break;
    const Eigen::RowVectorXf center = x.row(pick);
    const Eigen::VectorXf dist = (x.rowwise() - center).rowwise().squaredNorm();
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], static_cast<double>(dist(i)));
      total += nearest[i];
    }
    if (total <= 0.0) {
      // all remaining points coincide with a center
      pick = 0;
      while (chosen[pick]) ++pick;
      continue;
    }
    double target = detail::unit_uniform(rng) * total, acc = 0.0;
    pick = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      acc += nearest[i];
      if (acc > target && nearest[i] > 0.0) {
        pick = i;
        break;
      }
    }
    if (pick < 0)
      for (Eigen::Index i = n - 1; i >= 0; --i)
        if (nearest[i] > 0.0) {
          pick = i;
          break;
        }
  }

  KMeansResult result;
  result.assignment.assign(static_cast<std::size_t>(n), -1);
  std::vector<float> best_dist(static_cast<std::size_t>(n));
  for (int it = 0; it < max_iterations; ++it) {
    const FeatureMatrix cf = centers.cast<float>();
    const Eigen::RowVectorXf cnorm = cf.rowwise().squaredNorm().transpose();
    const Eigen::MatrixXf dots = x * cf.transpose();
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      float bd = cnorm(0) - 2.0f * dots(i, 0);
      for (int c = 1; c < k; ++c) {
        const float v = cnorm(c) - 2.0f * dots(i, c);
        if (v < bd) bd = v, best = c;
      }
      best_dist[i] = bd + row_norm(i);
      if (result.assignment[i] != best) result.assignment[i] = best, changed = true;
    }
    ++result.iterations;
    if (!changed && it > 0) break;

    RealMatrix sums = RealMatrix::Zero(k, d);
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(result.assignment[i]) += x.row(i).cast<double>();
      ++counts[result.assignment[i]];
    }
    std::vector<char> used(static_cast<std::size_t>(n), 0);
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[c]);
        continue;
      }
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i)
        if (!used[i] && (far < 0 || best_dist[i] > best_dist[far])) far = i;
      used[far] = 1;
      centers.row(c) = x.row(far).cast<double>();
    }
  }
  result.centroids = centers.rowwise() + mean;
  return result;
}

// ---------------------------------------------------------------------------
// PCA

struct PcaBasis {
  Eigen::RowVectorXd mean;
  RealMatrix components;  // one orthonormal component per row
  Eigen::VectorXd eigenvalues;
};

/// Covariance eigendecomposition; components by descending eigenvalue, each signed so
/// its largest-magnitude entry is positive.
inline PcaBasis fit_pca(const RealMatrix& data, int components) {
  const Eigen::Index n = data.rows(), d = data.cols();
  if (n < 1) throw Error("PCA on empty data");
  if (components < 1 || components > d) throw Error("PCA component count out of range");
  PcaBasis pca;
  pca.mean = data.colwise().mean();
  const RealMatrix centered = data.rowwise() - pca.mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / std::max<double>(1.0, static_cast<double>(n - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("PCA eigendecomposition failed");
  pca.components.resize(components, d);
  pca.eigenvalues.resize(components);
  for (int c = 0; c < components; ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - c);
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < d; ++j)
      if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
    if (v(arg) < 0) v = -v;
    pca.components.row(c) = v.transpose();
    pca.eigenvalues(c) = solver.eigenvalues()(d - 1 - c);
  }
  return pca;
}

// ---------------------------------------------------------------------------
// Model

struct TrainedMassModel {
  MassConfig config;  // patch_w1 is the model's window
  EnhanceConfig enhance;
  int training_images = 0;
  Eigen::RowVectorXd pc_mean;
  RealMatrix pc_basis;          // pca_C x w1^2
  RealMatrix mass_centroids;    // projected
  RealMatrix normal_centroids;  // projected

  int patch_w1() const { return config.patch_w1; }
  Eigen::Index centroid_count() const { return mass_centroids.rows() + normal_centroids.rows(); }

  /// Rows projected onto the principal components.
  template <typename Derived>
  RealMatrix project(const Eigen::MatrixBase<Derived>& rows) const {
    return (rows.template cast<double>().rowwise() - pc_mean) * pc_basis.transpose();
  }

  friend bool operator==(const TrainedMassModel& a, const TrainedMassModel& b) {
    return a.config == b.config && a.enhance == b.enhance && a.training_images == b.training_images &&
           a.pc_mean == b.pc_mean && a.pc_basis == b.pc_basis && a.mass_centroids == b.mass_centroids &&
           a.normal_centroids == b.normal_centroids;
  }
};

struct TrainingImage {
  GrayImage image;
  AnnotationSet annotations;  // original frame
};

/// Enhanced training view with its mass region in the enhanced frame.
struct PreparedImage {
  EnhancedImage enhanced;
  BreastMask lesion;
};

inline PreparedImage prepare_training_image(const TrainingImage& t, const EnhanceConfig& enhance,
                                            const SegmentationConfig& seg = {}) {
  if (!t.annotations.has(LesionKind::Mass)) throw Error("training image has no mass annotation");
  PreparedImage p{enhance_image(t.image, enhance, seg), {}};
  const FrameMap frame = FrameMap::between(t.image.width, t.image.height, p.enhanced.image.width,
                                           p.enhanced.image.height);
  p.lesion = rasterize(to_scaled_frame(t.annotations, frame), p.enhanced.image.width, p.enhanced.image.height,
                       LesionKind::Mass);
  return p;
}

/// Centroid extraction, PCA and projection over already-enhanced images.
inline TrainedMassModel train_prepared(std::span<const PreparedImage> images, const MassConfig& cfg,
                                       const EnhanceConfig& enhance, std::uint64_t seed, unsigned threads = 0) {
  cfg.validate();
  if (images.empty()) throw Error("training needs at least one image");
  const int d = cfg.patch_w1 * cfg.patch_w1;
  std::vector<RealMatrix> mass(images.size()), normal(images.size());
  parallel_for(
      images.size(),
      [&](std::size_t m) {
        const auto& p = images[m];
        const auto mf =
            extract_patch_features(p.enhanced.image, p.enhanced.mask, p.lesion, RegionSelector::Mass, cfg.patch_w1);
        const auto nf =
            extract_patch_features(p.enhanced.image, p.enhanced.mask, p.lesion, RegionSelector::Normal, cfg.patch_w1);
        if (nf.rows.rows() == 0) throw Error("training image has no normal breast pixels");
        mass[m] = kmeans(mf.rows, cfg.centroids_r, seed).centroids;
        normal[m] = kmeans(nf.rows, cfg.centroids_r, seed).centroids;
      },
      threads);
  auto stack = [d](const std::vector<RealMatrix>& parts) {
    Eigen::Index rows = 0;
    for (const auto& p : parts) rows += p.rows();
    RealMatrix out(rows, d);
    Eigen::Index r = 0;
    for (const auto& p : parts) out.middleRows(r, p.rows()) = p, r += p.rows();
    return out;
  };
  const RealMatrix mass_list = stack(mass), normal_list = stack(normal);
  RealMatrix joined(normal_list.rows() + mass_list.rows(), d);
  joined << normal_list, mass_list;
  const PcaBasis pca = fit_pca(joined, cfg.pca_C);

  TrainedMassModel model;
  model.config = cfg;
  model.enhance = enhance;
  model.training_images = static_cast<int>(images.size());
  model.pc_mean = pca.mean;
  model.pc_basis = pca.components;
  model.mass_centroids = model.project(mass_list);
  model.normal_centroids = model.project(normal_list);
  return model;
}

inline std::vector<PreparedImage> prepare_training_set(std::span<const TrainingImage> set, const EnhanceConfig& enhance,
                                                       const SegmentationConfig& seg, unsigned threads) {
  std::vector<PreparedImage> prepared(set.size());
  parallel_for(set.size(), [&](std::size_t i) { prepared[i] = prepare_training_image(set[i], enhance, seg); }, threads);
  return prepared;
}

/// Full training: enhance each image, K-means per region, PCA, projection.
inline TrainedMassModel train(std::span<const TrainingImage> set, const MassConfig& cfg, std::uint64_t seed,
                              const EnhanceConfig& enhance = {}, const SegmentationConfig& seg = {},
                              unsigned threads = 0) {
  cfg.validate();
  enhance.validate();
  return train_prepared(prepare_training_set(set, enhance, seg, threads), cfg, enhance, seed, threads);
}

/// One model per MCS window, sharing one enhancement pass per image.
inline std::vector<TrainedMassModel> train_mcs(std::span<const TrainingImage> set, const MassConfig& cfg,
                                               std::uint64_t seed, const EnhanceConfig& enhance = {},
                                               const SegmentationConfig& seg = {}, unsigned threads = 0) {
  cfg.validate();
  enhance.validate();
  const auto prepared = prepare_training_set(set, enhance, seg, threads);
  std::vector<TrainedMassModel> models;
  for (int w : cfg.mcs_windows) models.push_back(train_prepared(prepared, cfg.with_window(w), enhance, seed, threads));
  return models;
}

// ---------------------------------------------------------------------------
// Scoring

/// KNN log-ratio over the combined centroid list (mass rows first, then normal rows);
/// distance ties go to the lower combined index. Returns log((n1+1)/(n2+1)).
inline double knn_score(std::span<const double> feature, const TrainedMassModel& model, int k) {
  const Eigen::Index nm = model.mass_centroids.rows(), total = model.centroid_count();
  const Eigen::Index dims = model.mass_centroids.cols();
  if (k < 1 || k > total) throw Error("KNN K exceeds centroid count");
  if (static_cast<Eigen::Index>(feature.size()) != dims) throw Error("feature length does not match model");
  std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(total));
  for (Eigen::Index r = 0; r < total; ++r) {
    const double* c = r < nm ? model.mass_centroids.row(r).data() : model.normal_centroids.row(r - nm).data();
    double s = 0.0;
    for (Eigen::Index j = 0; j < dims; ++j) {
      const double diff = feature[j] - c[j];
      s += diff * diff;
    }
    dist[r] = {s, r};
  }
  std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
  int n1 = 0;
  for (int i = 0; i < k; ++i) n1 += dist[i].second < nm;
  const int n2 = k - n1;
  return std::log(static_cast<double>(n1 + 1) / static_cast<double>(n2 + 1));
}

/// Per-pixel scores in [0,1] over an enhanced raster; zero outside the mask.
struct ScoreImage {
  int width = 0;
  int height = 0;
  std::vector<double> scores;
  BreastMask mask;
  FrameMap frame;  // score-image coordinates to original-image coordinates

  double at(int x, int y) const { return scores[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return scores[static_cast<std::size_t>(y) * width + x]; }
};

/// Min-max normalization over mask pixels; all-equal scores become 0.
inline void normalize_scores(ScoreImage& s) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < s.scores.size(); ++i)
    if (s.mask.mask[i]) lo = std::min(lo, s.scores[i]), hi = std::max(hi, s.scores[i]);
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    if (!s.mask.mask[i] || !(hi > lo))
      s.scores[i] = 0.0;
    else
      s.scores[i] = (s.scores[i] - lo) / (hi - lo);
  }
}

/// Mean filter over a side x side window (POI at offset side/2) intersected with the mask.
inline ScoreImage smooth_scores(const ScoreImage& in, int side) {
  if (side < 1) throw Error("smoothing side must be >= 1");
  const int w = in.width, h = in.height;
  const std::size_t sw = static_cast<std::size_t>(w) + 1;
  std::vector<double> sum(sw * (h + 1), 0.0), cnt(sw * (h + 1), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double m = in.mask.mask[i] ? 1.0 : 0.0;
      const std::size_t o = (y + 1) * sw + (x + 1);
      sum[o] = m * in.scores[i] + sum[o - 1] + sum[o - sw] - sum[o - sw - 1];
      cnt[o] = m + cnt[o - 1] + cnt[o - sw] - cnt[o - sw - 1];
    }
  ScoreImage out = in;
  const int before = side / 2, after = side - 1 - before;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!in.mask.at(x, y)) continue;
      const int x0 = std::max(0, x - before), x1 = std::min(w - 1, x + after);
      const int y0 = std::max(0, y - before), y1 = std::min(h - 1, y + after);
      auto box = [&](const std::vector<double>& t) {
        return t[(y1 + 1) * sw + (x1 + 1)] - t[y0 * sw + (x1 + 1)] - t[(y1 + 1) * sw + x0] + t[y0 * sw + x0];
      };
      out.at(x, y) = std::clamp(box(sum) / box(cnt), 0.0, 1.0);
    }
  return out;
}

/// Normalized, unsmoothed score image of an enhanced raster.
inline ScoreImage score_enhanced(const EnhancedImage& enhanced, const TrainedMassModel& model, int k,
                                 const FrameMap& frame, unsigned threads = 0) {
  const auto pixels = select_pixels(enhanced.mask, enhanced.mask, RegionSelector::All);
  if (pixels.empty()) throw Error("empty breast mask");
  ScoreImage s{enhanced.image.width, enhanced.image.height,
               std::vector<double>(enhanced.image.size(), 0.0), enhanced.mask, frame};
  constexpr std::size_t chunk = 512;
  const std::size_t chunks = (pixels.size() + chunk - 1) / chunk;
  parallel_for(
      chunks,
      [&](std::size_t c) {
        const std::size_t begin = c * chunk, end = std::min(pixels.size(), begin + chunk);
        const std::span<const Pixel> part(pixels.data() + begin, end - begin);
        const RealMatrix projected = model.project(patch_rows(enhanced.image, part, model.patch_w1()));
        for (std::size_t i = 0; i < part.size(); ++i) {
          const auto row = projected.row(static_cast<Eigen::Index>(i));
          s.at(part[i].x, part[i].y) =
              knn_score(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), model, k);
        }
      },
      threads);
  normalize_scores(s);
  return s;
}

/// Enhance, score every breast pixel, normalize, smooth.
inline ScoreImage score_image(const GrayImage& img, const TrainedMassModel& model, const MassConfig& cfg,
                              const SegmentationConfig& seg = {}, unsigned threads = 0) {
  if (cfg.patch_w1 != model.patch_w1()) throw Error("model and config disagree on patch window");
  const EnhancedImage enhanced = enhance_image(img, model.enhance, seg, threads);
  const FrameMap frame = FrameMap::between(img.width, img.height, enhanced.image.width, enhanced.image.height);
  return smooth_scores(score_enhanced(enhanced, model, cfg.knn_K, frame, threads), cfg.smooth_side);
}

/// Pixel-wise mean of equally sized score images (no smoothing).
inline ScoreImage average_scores(std::span<const ScoreImage> parts) {
  if (parts.empty()) throw Error("nothing to average");
  ScoreImage out = parts[0];
  for (std::size_t p = 1; p < parts.size(); ++p) {
    if (parts[p].width != out.width || parts[p].height != out.height)
      throw Error("internal error: score image dimensions differ");
    for (std::size_t i = 0; i < out.scores.size(); ++i) out.scores[i] += parts[p].scores[i];
  }
  for (double& v : out.scores) v /= static_cast<double>(parts.size());
  return out;
}

/// Multi-window ensemble: unsmoothed per-window scores averaged, then smoothed once.
inline ScoreImage score_image_mcs(const GrayImage& img, std::span<const TrainedMassModel> models, const MassConfig& cfg,
                                  const SegmentationConfig& seg = {}, unsigned threads = 0) {
  if (models.empty()) throw Error("MCS needs at least one model");
  for (const auto& m : models)
    if (!(m.enhance == models[0].enhance)) throw Error("MCS models disagree on enhancement settings");
  const EnhancedImage enhanced = enhance_image(img, models[0].enhance, seg, threads);
  const FrameMap frame = FrameMap::between(img.width, img.height, enhanced.image.width, enhanced.image.height);
  std::vector<ScoreImage> parts;
  for (const auto& m : models) parts.push_back(score_enhanced(enhanced, m, cfg.knn_K, frame, threads));
  return smooth_scores(average_scores(parts), cfg.smooth_side);
}

/// Strict local maxima (plateaus of equal value collapse to one marker) with score at
/// or above the threshold, in original-image coordinates, sorted by score.
inline MarkerSet find_markers(const ScoreImage& s, double threshold) {
  if (threshold < 0.0 || threshold > 1.0) throw Error("marker threshold must lie in [0,1]");
  const int w = s.width, h = s.height;
  std::vector<char> seen(s.scores.size(), 0);
  MarkerSet out;
  std::vector<Pixel> plateau;
  std::deque<Pixel> queue;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (seen[i] || !s.mask.mask[i]) continue;
      const double v = s.scores[i];
      plateau.clear();
      queue.assign(1, {x, y});
      seen[i] = 1;
      bool is_max = true;
      while (!queue.empty()) {
        const Pixel p = queue.front();
        queue.pop_front();
        plateau.push_back(p);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (!dx && !dy) continue;
            const int nx = p.x + dx, ny = p.y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
            const double u = s.scores[j];
            if (u == v && s.mask.mask[j]) {
              if (!seen[j]) seen[j] = 1, queue.push_back({nx, ny});
            } else if (u >= v) {
              is_max = false;
            }
          }
      }
      if (!is_max || v < threshold) continue;
      double cx = 0.0, cy = 0.0;
      for (const Pixel& p : plateau) cx += p.x, cy += p.y;
      cx /= static_cast<double>(plateau.size());
      cy /= static_cast<double>(plateau.size());
      Pixel best = plateau[0];
      double best_d = std::numeric_limits<double>::infinity();
      for (const Pixel& p : plateau) {
        const double dd = (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy);
        if (dd < best_d) best_d = dd, best = p;
      }
      const Pixel rounded{static_cast<int>(std::floor(cx + 0.5)), static_cast<int>(std::floor(cy + 0.5))};
      const bool centroid_inside =
          std::find(plateau.begin(), plateau.end(), rounded) != plateau.end();
      const Point2 at = centroid_inside ? Point2{cx, cy} : Point2{static_cast<double>(best.x), static_cast<double>(best.y)};
      const Point2 orig = s.frame.to_original(at);
      out.markers.push_back({orig.x, orig.y, v});
    }
  out.sort();
  return out;
}

}  // namespace lcad
