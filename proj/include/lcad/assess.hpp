#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lcad/annotation.hpp"
#include "lcad/massdetect.hpp"

namespace lcad {

enum class Criterion { PerCase, PerSide, PerImage, PerLabel };

inline std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::PerCase: return "per-case";
    case Criterion::PerSide: return "per-side";
    case Criterion::PerImage: return "per-image";
    case Criterion::PerLabel: return "per-label";
  }
  return "?";
}

inline Criterion parse_criterion(const std::string& s) {
  for (Criterion c : {Criterion::PerCase, Criterion::PerSide, Criterion::PerImage, Criterion::PerLabel})
    if (to_string(c) == s) return c;
  throw Error("unknown TPF criterion: " + s);
}

struct ViewRecord {
  std::string view_id;  // key into Detections
  std::string view;     // CC or MLO
  AnnotationSet annotations;
};

struct SideRecord {
  char side = 'L';
  std::vector<ViewRecord> views;
};

struct CaseRecord {
  std::string case_id;
  std::vector<SideRecord> sides;
};

/// Markers per view id. Views without an entry have no markers.
using Detections = std::map<std::string, MarkerSet>;

struct MatchResult {
  std::set<int> tp_labels;
  std::size_t false_markers = 0;
};

/// A marker inside (boundary-inclusive) any label is a true positive for that label;
/// a marker inside no label is one false marker.
inline MatchResult match_markers(const MarkerSet& markers, const AnnotationSet& annotations) {
  MatchResult r;
  for (const auto& m : markers.markers) {
    bool hit = false;
    for (const auto& l : annotations.labels)
      if (point_in_polygon({m.x, m.y}, l.boundary)) {
        r.tp_labels.insert(l.id);
        hit = true;
      }
    if (!hit) ++r.false_markers;
  }
  return r;
}

namespace detail {

inline AnnotationSet filtered(const AnnotationSet& a, std::optional<LesionKind> kind) {
  return kind ? a.only(*kind) : a;
}

inline const MarkerSet& markers_for(const Detections& d, const std::string& id) {
  static const MarkerSet empty;
  auto it = d.find(id);
  return it == d.end() ? empty : it->second;
}

}  // namespace detail

/// True-positive fraction under one of the four unit definitions. An optional lesion
/// kind restricts which labels make a unit positive and which can be hit.
inline double tpf(std::span<const CaseRecord> cases, const Detections& detections, Criterion criterion,
                  std::optional<LesionKind> kind = {}) {
  std::size_t positive = 0, detected = 0;
  for (const auto& c : cases) {
    bool case_pos = false, case_hit = false;
    for (const auto& s : c.sides) {
      bool side_pos = false, side_hit = false;
      for (const auto& v : s.views) {
        const AnnotationSet labels = detail::filtered(v.annotations, kind);
        if (labels.labels.empty()) continue;
        const auto match = match_markers(detail::markers_for(detections, v.view_id), labels);
        side_pos = true;
        side_hit = side_hit || !match.tp_labels.empty();
        if (criterion == Criterion::PerImage) positive += 1, detected += !match.tp_labels.empty();
        if (criterion == Criterion::PerLabel) positive += labels.labels.size(), detected += match.tp_labels.size();
      }
      if (criterion == Criterion::PerSide && side_pos) positive += 1, detected += side_hit;
      case_pos = case_pos || side_pos;
      case_hit = case_hit || side_hit;
    }
    if (criterion == Criterion::PerCase && case_pos) positive += 1, detected += case_hit;
  }
  if (positive == 0) throw Error("undefined TPF: no positive units");
  return static_cast<double>(detected) / static_cast<double>(positive);
}

/// False markers on normal views divided by the number of normal views.
inline double fm_per_image(std::span<const ViewRecord> normal_views, const Detections& detections) {
  if (normal_views.empty()) throw Error("FM/image needs at least one normal view");
  std::size_t false_markers = 0;
  for (const auto& v : normal_views)
    false_markers += match_markers(detail::markers_for(detections, v.view_id), v.annotations).false_markers;
  return static_cast<double>(false_markers) / static_cast<double>(normal_views.size());
}

struct OperatingPoint {
  double threshold = 0.0;
  double tpf = 0.0;
  double fm_per_image = 0.0;
  Criterion criterion = Criterion::PerImage;
};

inline Detections threshold_detections(const Detections& all, double threshold) {
  Detections out;
  for (const auto& [id, markers] : all) out[id] = markers.at_threshold(threshold);
  return out;
}

/// One operating point per threshold (thresholds must be non-increasing).
inline std::vector<OperatingPoint> froc_sweep(std::span<const CaseRecord> cases, std::span<const ViewRecord> normal_views,
                                              const std::function<Detections(double)>& detections_at,
                                              std::span<const double> thresholds, Criterion criterion,
                                              std::optional<LesionKind> kind = {}) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end(), std::greater<>()))
    throw Error("FROC thresholds must be sorted in descending order");
  std::vector<OperatingPoint> points;
  for (double t : thresholds) {
    const Detections d = detections_at(t);
    points.push_back({t, tpf(cases, d, criterion, kind), fm_per_image(normal_views, d), criterion});
  }
  return points;
}

/// Mann-Whitney AUC of y (malignant) over x (normal); ties count 1/2.
inline double mann_whitney_auc(std::span<const double> normal, std::span<const double> malignant) {
  if (normal.empty() || malignant.empty()) throw Error("AUC needs non-empty normal and malignant sets");
  std::vector<double> x(normal.begin(), normal.end());
  std::sort(x.begin(), x.end());
  std::uint64_t twice = 0;
  for (double y : malignant) {
    const auto lo = std::lower_bound(x.begin(), x.end(), y);
    const auto hi = std::upper_bound(lo, x.end(), y);
    twice += 2 * static_cast<std::uint64_t>(lo - x.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(normal.size()) * static_cast<double>(malignant.size()));
}

/// AUC of breast scores inside lesion labels against the rest of the breast.
/// Annotations are in the original frame.
inline double score_auc(const ScoreImage& score, const AnnotationSet& annotations,
                        std::optional<LesionKind> kind = {}) {
  const BreastMask lesion =
      rasterize(to_scaled_frame(detail::filtered(annotations, kind), score.frame), score.width, score.height);
  std::vector<double> normal, malignant;
  for (std::size_t i = 0; i < score.scores.size(); ++i) {
    if (!score.mask.mask[i]) continue;
    (lesion.mask[i] ? malignant : normal).push_back(score.scores[i]);
  }
  if (normal.empty() || malignant.empty()) throw Error("AUC region empty within the breast mask");
  return mann_whitney_auc(normal, malignant);
}

}  // namespace lcad
