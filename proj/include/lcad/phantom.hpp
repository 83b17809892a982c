#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lcad/annotation.hpp"
#include "lcad/assess.hpp"
#include "lcad/image.hpp"
#include "lcad/image_io.hpp"
#include "lcad/parallel.hpp"

namespace lcad {

/// Background texture: base level plus correlated Gaussian texture (std `sigma`,
/// correlation length in pixels) plus uncorrelated grain (std `grain_sigma`).
struct BackgroundSpec {
  double base = 1800.0;
  double correlation_px = 40.0;
  double sigma = 120.0;
  double grain_sigma = 40.0;
};

/// Half-ellipse whose flat side (chest wall) is the vertical line x = chest_x - 0.5.
struct BreastShape {
  double chest_x = 0.0;
  double center_y = 0.0;
  double semi_x = 0.0;
  double semi_y = 0.0;

  bool contains(Point2 p) const {
    const double dx = p.x + 0.5 - chest_x;
    const double u = dx / semi_x, v = (p.y - center_y) / semi_y;
    return dx >= 0.0 && u * u + v * v <= 1.0;
  }
};

struct MassSpec {
  Point2 center;
  double radius_mm = 6.0;
  double contrast = 480.0;
  double edge_softness_px = 4.0;
};

/// 2 x 2 bright impulse with its top-left pixel at `origin`.
struct SpeckSpec {
  Pixel origin;
  double contrast = 720.0;
};

struct PhantomSpec {
  int width = 0;
  int height = 0;
  int bit_depth = 12;
  double pixel_spacing_mm = 0.1;
  BackgroundSpec background;
  BreastShape breast;
  std::vector<MassSpec> masses;
  std::vector<SpeckSpec> specks;
  std::uint64_t seed = 0;

  static constexpr int kSpeckSide = 2;
  static constexpr double kSpeckBoxHalf = 5.0;
  static constexpr int kMassVertices = 32;

  void validate() const;
};

struct Phantom {
  GrayImage image;
  AnnotationSet annotations;
  BreastMask truth;
};

namespace detail {

inline double standard_normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - unit_uniform(rng), u2 = unit_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline void box_blur_rows(std::vector<double>& v, int w, int h, int radius) {
  std::vector<double> line(static_cast<std::size_t>(w));
  const double norm = 1.0 / (2 * radius + 1);
  for (int y = 0; y < h; ++y) {
    double* row = v.data() + static_cast<std::size_t>(y) * w;
    double acc = 0.0;
    for (int k = -radius; k <= radius; ++k) acc += row[std::clamp(k, 0, w - 1)];
    for (int x = 0; x < w; ++x) {
      line[x] = acc * norm;
      acc += row[std::min(x + radius + 1, w - 1)] - row[std::max(x - radius, 0)];
    }
    std::copy(line.begin(), line.end(), row);
  }
}

inline void box_blur_cols(std::vector<double>& v, int w, int h, int radius) {
  std::vector<double> col(static_cast<std::size_t>(h)), out(static_cast<std::size_t>(h));
  const double norm = 1.0 / (2 * radius + 1);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col[y] = v[static_cast<std::size_t>(y) * w + x];
    double acc = 0.0;
    for (int k = -radius; k <= radius; ++k) acc += col[std::clamp(k, 0, h - 1)];
    for (int y = 0; y < h; ++y) {
      out[y] = acc * norm;
      acc += col[std::min(y + radius + 1, h - 1)] - col[std::max(y - radius, 0)];
    }
    for (int y = 0; y < h; ++y) v[static_cast<std::size_t>(y) * w + x] = out[y];
  }
}

inline std::vector<Point2> circle_polygon(Point2 c, double r, int vertices) {
  std::vector<Point2> poly(static_cast<std::size_t>(vertices));
  for (int i = 0; i < vertices; ++i) {
    const double a = 2.0 * std::numbers::pi * i / vertices;
    poly[i] = {c.x + r * std::cos(a), c.y + r * std::sin(a)};
  }
  return poly;
}

inline std::vector<Point2> speck_box(const SpeckSpec& s) {
  const double cx = s.origin.x + 0.5, cy = s.origin.y + 0.5, h = PhantomSpec::kSpeckBoxHalf;
  return {{cx - h, cy - h}, {cx + h, cy - h}, {cx + h, cy + h}, {cx - h, cy + h}};
}

}  // namespace detail

inline void PhantomSpec::validate() const {
  if (width <= 0 || height <= 0) throw Error("phantom dimensions must be positive");
  if (!is_supported_bit_depth(bit_depth)) throw Error("unsupported phantom bit depth");
  if (!(pixel_spacing_mm > 0.0)) throw Error("phantom pixel spacing must be positive");
  if (!(breast.semi_x > 0.0 && breast.semi_y > 0.0) || breast.chest_x < 0.0)
    throw Error("breast shape axes must be positive and the chest wall inside the image");
  if (!(background.correlation_px >= 1.0) || background.sigma < 0.0 || background.grain_sigma < 0.0)
    throw Error("bad background texture parameters");
  for (const auto& m : masses) {
    if (!(m.contrast > 0.0) || !(m.radius_mm > 0.0) || !(m.edge_softness_px > 0.0))
      throw Error("mass contrast, radius and softness must be positive");
    for (const auto& p : detail::circle_polygon(m.center, m.radius_mm / pixel_spacing_mm, kMassVertices))
      if (!breast.contains(p)) throw Error("lesion outside breast: mass boundary leaves the breast shape");
  }
  for (const auto& s : specks) {
    if (!(s.contrast > 0.0)) throw Error("speck contrast must be positive");
    for (const auto& p : detail::speck_box(s))
      if (!breast.contains(p)) throw Error("lesion outside breast: speck annotation leaves the breast shape");
  }
}

/// Deterministic synthetic mammogram with exact ground truth.
inline Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const int w = spec.width, h = spec.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::mt19937_64 rng(spec.seed);

  std::vector<double> texture(n);
  for (double& v : texture) v = detail::standard_normal(rng);
  const int radius = std::max(1, static_cast<int>(std::lround(spec.background.correlation_px / 2.0)));
  for (int pass = 0; pass < 2; ++pass) {
    detail::box_blur_rows(texture, w, h, radius);
    detail::box_blur_cols(texture, w, h, radius);
  }
  double mean = 0.0, sq = 0.0;
  for (double v : texture) mean += v;
  mean /= static_cast<double>(n);
  for (double v : texture) sq += (v - mean) * (v - mean);
  const double norm = sq > 0.0 ? spec.background.sigma / std::sqrt(sq / static_cast<double>(n)) : 0.0;

  Phantom out{GrayImage(w, h, spec.bit_depth), {}, BreastMask(w, h)};
  out.image.pixel_spacing_mm = spec.pixel_spacing_mm;
  std::vector<double> field(n, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double grain = detail::standard_normal(rng) * spec.background.grain_sigma;
      if (!spec.breast.contains({static_cast<double>(x), static_cast<double>(y)})) continue;
      out.truth.mask[i] = 1;
      field[i] = spec.background.base + (texture[i] - mean) * norm + grain;
    }

  int label_id = 1;
  for (const auto& m : spec.masses) {
    const double r_px = m.radius_mm / spec.pixel_spacing_mm;
    const double reach = r_px + 6.0 * m.edge_softness_px;
    for (int y = std::max(0, static_cast<int>(m.center.y - reach)); y <= std::min(h - 1, static_cast<int>(m.center.y + reach)); ++y)
      for (int x = std::max(0, static_cast<int>(m.center.x - reach)); x <= std::min(w - 1, static_cast<int>(m.center.x + reach)); ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!out.truth.mask[i]) continue;
        const double r = std::hypot(x - m.center.x, y - m.center.y);
        field[i] += m.contrast * 0.5 * (1.0 - std::tanh((r - r_px) / m.edge_softness_px));
      }
    out.annotations.labels.push_back(
        {label_id++, LesionKind::Mass, detail::circle_polygon(m.center, r_px, PhantomSpec::kMassVertices), 4});
  }
  for (const auto& s : spec.specks) {
    for (int dy = 0; dy < PhantomSpec::kSpeckSide; ++dy)
      for (int dx = 0; dx < PhantomSpec::kSpeckSide; ++dx) {
        const int x = s.origin.x + dx, y = s.origin.y + dy;
        if (out.truth.inside(x, y)) field[static_cast<std::size_t>(y) * w + x] += s.contrast;
      }
    out.annotations.labels.push_back({label_id++, LesionKind::Microcalc, detail::speck_box(s), 4});
  }

  const double maxv = out.image.max_value();
  for (std::size_t i = 0; i < n; ++i)
    if (out.truth.mask[i]) out.image.pixels[i] = static_cast<std::uint16_t>(std::clamp(std::round(field[i]), 1.0, maxv));
  return out;
}

// ---------------------------------------------------------------------------
// Corpus

enum class Difficulty { Easy, Hard };

inline std::string to_string(Difficulty d) { return d == Difficulty::Easy ? "easy" : "hard"; }

inline Difficulty parse_difficulty(const std::string& s) {
  if (s == "easy") return Difficulty::Easy;
  if (s == "hard") return Difficulty::Hard;
  throw Error("unknown difficulty: " + s);
}

/// Lesion contrasts in units of the texture sigma; hard halves them.
struct ContrastTable {
  static constexpr double kEasyMass = 4.0;
  static constexpr double kEasySpeck = 6.0;
  static double mass(Difficulty d) { return d == Difficulty::Easy ? kEasyMass : kEasyMass * 0.5; }
  static double speck(Difficulty d) { return d == Difficulty::Easy ? kEasySpeck : kEasySpeck * 0.5; }
};

struct CorpusOptions {
  int height = 2294;
  double field_of_view_mm = 229.4;
  double mass_radius_min_mm = 5.0;
  double mass_radius_max_mm = 8.0;
  double texture_correlation_mm = 4.0;
  double chest_margin_mm = 4.0;  // background strip between image edge and chest wall
  BackgroundSpec background;
};

/// One planned view of a synthetic corpus.
struct PlannedView {
  std::string case_id;
  char side = 'L';
  std::string view;
  std::string stem;
  bool positive = false;
  PhantomSpec spec;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline double uniform_in(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng); }

// Samples a point at normalized elliptic radius <= rmax, at least `min_x` from the chest wall.
inline Point2 sample_in_breast(std::mt19937_64& rng, const BreastShape& b, double rmax, double min_x) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const double u = uniform_in(rng, 0.0, 1.0), v = uniform_in(rng, -1.0, 1.0);
    if (u * u + v * v > rmax * rmax) continue;
    const Point2 p{b.chest_x - 0.5 + u * b.semi_x, b.center_y + v * b.semi_y};
    if (u * b.semi_x >= min_x) return p;
  }
  throw Error("could not place lesion inside breast");
}

inline PhantomSpec plan_view_spec(std::uint64_t seed, int masses, int specks, Difficulty difficulty,
                                  const CorpusOptions& opt) {
  std::mt19937_64 rng(seed);
  PhantomSpec s;
  s.height = opt.height;
  s.width = static_cast<int>(std::lround(0.45 * opt.height));
  s.pixel_spacing_mm = opt.field_of_view_mm / opt.height;
  s.background = opt.background;
  s.background.correlation_px = std::max(1.0, opt.texture_correlation_mm / s.pixel_spacing_mm);
  s.breast.chest_x = std::round(opt.chest_margin_mm / s.pixel_spacing_mm);
  s.breast.semi_x = uniform_in(rng, 0.78, 0.9) * s.width;
  s.breast.semi_y = uniform_in(rng, 0.42, 0.47) * s.height;
  s.breast.center_y = s.height / 2.0 + uniform_in(rng, -0.02, 0.02) * s.height;
  s.seed = splitmix64(seed);
  const double mm = 1.0 / s.pixel_spacing_mm;

  for (int i = 0; i < masses; ++i) {
    MassSpec m;
    m.radius_mm = uniform_in(rng, opt.mass_radius_min_mm, opt.mass_radius_max_mm);
    m.contrast = ContrastTable::mass(difficulty) * s.background.sigma;
    m.edge_softness_px = std::max(0.5, 0.4 * mm);
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000) throw Error("could not place masses");
      m.center = sample_in_breast(rng, s.breast, 0.65, (m.radius_mm + 10.0) * mm);
      bool ok = true;
      for (const auto& o : s.masses)
        ok = ok && std::hypot(o.center.x - m.center.x, o.center.y - m.center.y) > (o.radius_mm + m.radius_mm + 20.0) * mm;
      if (ok) break;
    }
    s.masses.push_back(m);
  }
  for (int i = 0; i < specks; ++i) {
    SpeckSpec sp;
    sp.contrast = ContrastTable::speck(difficulty) * s.background.sigma;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000) throw Error("could not place specks");
      const Point2 c = sample_in_breast(rng, s.breast, 0.8, 10.0 * mm);
      sp.origin = {static_cast<int>(c.x), static_cast<int>(c.y)};
      bool ok = true;
      for (const auto& m : s.masses)
        ok = ok && std::hypot(m.center.x - sp.origin.x, m.center.y - sp.origin.y) > (m.radius_mm + 12.0) * mm;
      for (const auto& o : s.specks)
        ok = ok && std::hypot(o.origin.x - sp.origin.x, o.origin.y - sp.origin.y) > 8.0 * mm;
      if (ok) break;
    }
    s.specks.push_back(sp);
  }
  return s;
}

}  // namespace detail

/// Case/side/view layout for a corpus. Positive cases cycle through three layouts so
/// every TPF criterion is exercised:
///   0: one side, CC and MLO, one mass and one speck in each view
///   1: one side, CC only, two masses and two specks
///   2: left CC positive (one mass, one speck), right CC normal
/// Normal cases have one side with CC and MLO views.
inline std::vector<PlannedView> plan_corpus(int n_positive, int n_normal, Difficulty difficulty, std::uint64_t seed,
                                            const CorpusOptions& opt = {}) {
  if (n_positive < 0 || n_normal < 0) throw Error("corpus counts must be >= 0");
  std::vector<PlannedView> views;
  std::uint64_t index = 0;
  auto add = [&](const std::string& case_id, char side, const std::string& view, int masses, int specks) {
    PlannedView v;
    v.case_id = case_id;
    v.side = side;
    v.view = view;
    v.stem = case_id + "_" + side + "_" + view;
    v.positive = masses + specks > 0;
    v.spec = detail::plan_view_spec(detail::splitmix64(seed * 1000003ull + index++), masses, specks, difficulty, opt);
    views.push_back(std::move(v));
  };
  char buf[16];
  for (int i = 0; i < n_positive; ++i) {
    std::snprintf(buf, sizeof buf, "P%03d", i);
    switch (i % 3) {
      case 0:
        add(buf, 'L', "CC", 1, 1);
        add(buf, 'L', "MLO", 1, 1);
        break;
      case 1:
        add(buf, 'R', "CC", 2, 2);
        break;
      default:
        add(buf, 'L', "CC", 1, 1);
        add(buf, 'R', "CC", 0, 0);
        break;
    }
  }
  for (int i = 0; i < n_normal; ++i) {
    std::snprintf(buf, sizeof buf, "N%03d", i);
    add(buf, 'L', "CC", 0, 0);
    add(buf, 'L', "MLO", 0, 0);
  }
  return views;
}

// ---------------------------------------------------------------------------
// Manifest: tab-separated, header line, one record per view:
//   case_id side view image annotation status(positive|normal)
// Paths are relative to the manifest's directory.

struct ManifestRecord {
  std::string case_id;
  char side = 'L';
  std::string view;
  std::string image;
  std::string annotation;
  bool positive = false;

  std::string view_id() const { return std::filesystem::path(image).stem().string(); }
  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct Manifest {
  std::filesystem::path root;
  std::vector<ManifestRecord> records;
};

inline std::string format_manifest(const Manifest& m) {
  std::ostringstream out;
  out << "case_id\tside\tview\timage\tannotation\tstatus\n";
  for (const auto& r : m.records)
    out << r.case_id << '\t' << r.side << '\t' << r.view << '\t' << r.image << '\t' << r.annotation << '\t'
        << (r.positive ? "positive" : "normal") << '\n';
  return out.str();
}

inline Manifest parse_manifest(const std::string& text, const std::filesystem::path& root) {
  Manifest m{root, {}};
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      if (line.rfind("case_id", 0) == 0) continue;
    }
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string tok; std::getline(ls, tok, '\t');) f.push_back(tok);
    if (f.size() != 6 || f[1].size() != 1 || (f[1][0] != 'L' && f[1][0] != 'R'))
      throw Error("bad manifest line: " + line);
    if (f[5] != "positive" && f[5] != "normal") throw Error("bad manifest status: " + f[5]);
    m.records.push_back({f[0], f[1][0], f[2], f[3], f[4], f[5] == "positive"});
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read manifest: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

/// Cases (with annotations loaded) and the list of normal views.
struct Dataset {
  std::vector<CaseRecord> cases;
  std::vector<ViewRecord> normal_views;
};

inline Dataset load_dataset(const Manifest& m) {
  Dataset d;
  for (const auto& r : m.records) {
    ViewRecord v{r.view_id(), r.view, load_annotations(m.root / r.annotation)};
    if (v.annotations.labels.empty()) d.normal_views.push_back(v);
    auto c = std::find_if(d.cases.begin(), d.cases.end(), [&](const CaseRecord& x) { return x.case_id == r.case_id; });
    if (c == d.cases.end()) c = d.cases.insert(d.cases.end(), CaseRecord{r.case_id, {}});
    auto s = std::find_if(c->sides.begin(), c->sides.end(), [&](const SideRecord& x) { return x.side == r.side; });
    if (s == c->sides.end()) s = c->sides.insert(c->sides.end(), SideRecord{r.side, {}});
    s->views.push_back(std::move(v));
  }
  return d;
}

/// Generates every planned view and writes images/, annotations/ and manifest.tsv.
inline Manifest make_corpus(const std::filesystem::path& dir, int n_positive, int n_normal, Difficulty difficulty,
                            std::uint64_t seed, const CorpusOptions& opt = {}, unsigned threads = 0) {
  const auto plan = plan_corpus(n_positive, n_normal, difficulty, seed, opt);
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "annotations");
  Manifest m{dir, std::vector<ManifestRecord>(plan.size())};
  parallel_for(
      plan.size(),
      [&](std::size_t i) {
        const auto& v = plan[i];
        const Phantom p = generate_phantom(v.spec);
        const std::string image = "images/" + v.stem + ".pgm", ann = "annotations/" + v.stem + ".ann";
        save_image(p.image, dir / image);
        write_text(dir / ann, format_annotations(p.annotations));
        m.records[i] = {v.case_id, v.side, v.view, image, ann, v.positive};
      },
      threads);
  write_text(dir / "manifest.tsv", format_manifest(m));
  return m;
}

}  // namespace lcad
