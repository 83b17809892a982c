#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lcad/image.hpp"

namespace lcad {

enum class LesionKind { Mass, Microcalc };

inline std::string to_string(LesionKind k) { return k == LesionKind::Mass ? "mass" : "microcalc"; }

inline LesionKind parse_lesion_kind(const std::string& s) {
  if (s == "mass") return LesionKind::Mass;
  if (s == "microcalc") return LesionKind::Microcalc;
  throw Error("unknown lesion kind: " + s);
}

/// One radiologist-style label: a closed polygon in pixel-index coordinates.
struct Label {
  int id = 0;
  LesionKind kind = LesionKind::Mass;
  std::vector<Point2> boundary;
  std::optional<int> birads;
  friend bool operator==(const Label&, const Label&) = default;
};

struct AnnotationSet {
  std::vector<Label> labels;

  bool has(LesionKind kind) const {
    return std::any_of(labels.begin(), labels.end(), [kind](const Label& l) { return l.kind == kind; });
  }
  AnnotationSet only(LesionKind kind) const {
    AnnotationSet out;
    std::copy_if(labels.begin(), labels.end(), std::back_inserter(out.labels),
                 [kind](const Label& l) { return l.kind == kind; });
    return out;
  }
  friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;
};

namespace detail {

inline double cross(Point2 o, Point2 a, Point2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

inline bool on_segment(Point2 p, Point2 a, Point2 b) {
  constexpr double eps = 1e-9;
  if (std::abs(cross(a, b, p)) > eps * std::max(1.0, std::hypot(b.x - a.x, b.y - a.y))) return false;
  return p.x >= std::min(a.x, b.x) - eps && p.x <= std::max(a.x, b.x) + eps && p.y >= std::min(a.y, b.y) - eps &&
         p.y <= std::max(a.y, b.y) + eps;
}

inline bool segments_cross(Point2 a, Point2 b, Point2 c, Point2 d) {
  const double d1 = cross(c, d, a), d2 = cross(c, d, b), d3 = cross(a, b, c), d4 = cross(a, b, d);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 && d4 != 0;
}

}  // namespace detail

/// Even-odd point-in-polygon; points on an edge or vertex count as inside.
inline bool point_in_polygon(Point2 p, const std::vector<Point2>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++)
    if (detail::on_segment(p, poly[j], poly[i])) return true;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xcross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < xcross) inside = !inside;
    }
  }
  return inside;
}

/// Rejects polygons with fewer than 3 vertices or crossing non-adjacent edges.
inline void validate_polygon(const std::vector<Point2>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) throw Error("annotation polygon needs at least 3 vertices");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      if (detail::segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]))
        throw Error("annotation polygon is self-intersecting");
    }
}

inline void validate(const AnnotationSet& set) {
  for (const auto& l : set.labels) {
    validate_polygon(l.boundary);
    if (l.birads && (*l.birads < 0 || *l.birads > 5)) throw Error("BIRADS must lie in 0..5");
  }
}

/// Maps every vertex from an original frame into a rescaled one.
inline AnnotationSet to_scaled_frame(const AnnotationSet& set, const FrameMap& map) {
  AnnotationSet out = set;
  for (auto& l : out.labels)
    for (auto& p : l.boundary) p = map.to_scaled(p);
  return out;
}

/// Pixels whose centers fall inside any label of the given kind.
inline BreastMask rasterize(const AnnotationSet& set, int width, int height, std::optional<LesionKind> kind = {}) {
  BreastMask out(width, height);
  for (const auto& l : set.labels) {
    if (kind && l.kind != *kind) continue;
    double x0 = l.boundary[0].x, x1 = x0, y0 = l.boundary[0].y, y1 = y0;
    for (const auto& p : l.boundary) {
      x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
    for (int y = std::max(0, static_cast<int>(std::floor(y0))); y <= std::min(height - 1, static_cast<int>(std::ceil(y1))); ++y)
      for (int x = std::max(0, static_cast<int>(std::floor(x0))); x <= std::min(width - 1, static_cast<int>(std::ceil(x1))); ++x)
        if (point_in_polygon({static_cast<double>(x), static_cast<double>(y)}, l.boundary)) out.set(x, y, true);
  }
  return out;
}

// Annotation text format, one label per line:
//   <id> <mass|microcalc> <birads|-> <n> x1 y1 ... xn yn
// '#' starts a comment line.

inline std::string format_annotations(const AnnotationSet& set) {
  std::ostringstream out;
  out << "# lcad annotations v1\n";
  out << std::setprecision(17);
  for (const auto& l : set.labels) {
    out << l.id << ' ' << to_string(l.kind) << ' ';
    if (l.birads)
      out << *l.birads;
    else
      out << '-';
    out << ' ' << l.boundary.size();
    for (const auto& p : l.boundary) out << ' ' << p.x << ' ' << p.y;
    out << '\n';
  }
  return out.str();
}

inline AnnotationSet parse_annotations(const std::string& text) {
  AnnotationSet set;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Label l;
    std::string kind, birads;
    std::size_t n = 0;
    if (!(ls >> l.id >> kind >> birads >> n)) throw Error("bad annotation line " + std::to_string(lineno));
    l.kind = parse_lesion_kind(kind);
    if (birads != "-") l.birads = std::stoi(birads);
    l.boundary.resize(n);
    for (auto& p : l.boundary)
      if (!(ls >> p.x >> p.y)) throw Error("truncated vertex list on annotation line " + std::to_string(lineno));
    set.labels.push_back(std::move(l));
  }
  validate(set);
  return set;
}

inline AnnotationSet load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read annotations: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_annotations(ss.str());
}

/// Candidate finding: location (original-image pixels) and score in [0,1].
struct Marker {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
  friend bool operator==(const Marker&, const Marker&) = default;
};

/// Markers sorted by score, descending.
struct MarkerSet {
  std::vector<Marker> markers;

  void sort() {
    std::stable_sort(markers.begin(), markers.end(), [](const Marker& a, const Marker& b) { return a.score > b.score; });
  }
  MarkerSet at_threshold(double threshold) const {
    MarkerSet out;
    std::copy_if(markers.begin(), markers.end(), std::back_inserter(out.markers),
                 [threshold](const Marker& m) { return m.score >= threshold; });
    return out;
  }
  friend bool operator==(const MarkerSet&, const MarkerSet&) = default;
};

/// One marker per line: "x y score".
inline std::string format_markers(const MarkerSet& set) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const auto& m : set.markers) out << m.x << ' ' << m.y << ' ' << m.score << '\n';
  return out.str();
}

inline MarkerSet parse_markers(const std::string& text) {
  MarkerSet set;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Marker m;
    if (!(ls >> m.x >> m.y >> m.score)) throw Error("bad marker line: " + line);
    set.markers.push_back(m);
  }
  return set;
}

inline MarkerSet load_markers(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read markers: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_markers(ss.str());
}

}  // namespace lcad
