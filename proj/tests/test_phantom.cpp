#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "lcad/assess.hpp"
#include "lcad/image_io.hpp"
#include "lcad/phantom.hpp"
#include "support.hpp"

using namespace lcad;
namespace fs = std::filesystem;

namespace {

PhantomSpec base_spec(std::uint64_t seed = 1) {
  PhantomSpec s;
  s.width = 300, s.height = 400, s.pixel_spacing_mm = 0.2, s.seed = seed;
  s.background.correlation_px = 10;
  s.breast = {10, 200, 260, 180};
  return s;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lcad_test_phantom_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string file_bytes(const fs::path& p) {
  const auto b = lcad::detail::read_all(p);
  return {b.begin(), b.end()};
}

}  // namespace

TEST(Phantom, NoLesionsGivesEmptyAnnotationsAndHalfEllipseMask) {
  const PhantomSpec s = base_spec();
  const Phantom p = generate_phantom(s);
  EXPECT_TRUE(p.annotations.labels.empty());
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      // independent half-ellipse test: chest wall at x = 9.5
      const double u = (x - 9.5) / 260.0, v = (y - 200.0) / 180.0;
      const bool inside = x >= 10 && u * u + v * v <= 1.0;
      ASSERT_EQ(p.truth.at(x, y), inside) << x << "," << y;
      ASSERT_EQ(p.image.at(x, y) > 0, inside);
    }
}

TEST(Phantom, SameSeedBitIdenticalDifferentSeedNot) {
  PhantomSpec s = base_spec(7);
  s.masses = {{{120, 200}, 5, 480, 2}};
  s.specks = {{{200, 150}, 720}};
  const Phantom a = generate_phantom(s), b = generate_phantom(s);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.annotations, b.annotations);
  s.seed = 8;
  EXPECT_NE(generate_phantom(s).image, a.image);
}

TEST(Phantom, MassContrastIsMeasurable) {
  for (std::uint64_t seed : {1, 2, 3}) {
    PhantomSpec s = base_spec(seed);
    s.background.grain_sigma = 0;
    s.masses = {{{120, 200}, 8, 3 * s.background.sigma, 1}};
    const Phantom p = generate_phantom(s);
    const BreastMask lesion = rasterize(p.annotations, s.width, s.height);
    double in = 0, out = 0;
    int nin = 0, nout = 0;
    for (std::size_t i = 0; i < p.image.size(); ++i) {
      if (!p.truth.mask[i]) continue;
      (lesion.mask[i] ? in : out) += p.image.pixels[i];
      (lesion.mask[i] ? nin : nout) += 1;
    }
    EXPECT_GE(in / nin - out / nout, 2 * s.background.sigma) << "seed " << seed;
  }
}

TEST(Phantom, BackgroundStatisticsFollowSpec) {
  PhantomSpec s = base_spec(4);
  s.background = {2000, 6, 100, 30};
  const Phantom p = generate_phantom(s);
  double sum = 0, sq = 0;
  int n = 0;
  for (std::size_t i = 0; i < p.image.size(); ++i)
    if (p.truth.mask[i]) sum += p.image.pixels[i], sq += double(p.image.pixels[i]) * p.image.pixels[i], ++n;
  const double mean = sum / n, sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(mean, 2000, 10);
  EXPECT_NEAR(sd, std::hypot(100.0, 30.0), 8);
}

TEST(Phantom, SpeckIsTwoByTwoAndAnnotatedWithABox) {
  PhantomSpec s = base_spec(5);
  s.background = {1000, 10, 0, 0};
  s.specks = {{{100, 120}, 500}};
  const Phantom p = generate_phantom(s);
  for (int y = 118; y < 124; ++y)
    for (int x = 98; x < 104; ++x) {
      const bool in = x >= 100 && x < 102 && y >= 120 && y < 122;
      ASSERT_EQ(p.image.at(x, y), in ? 1500 : 1000) << x << "," << y;
    }
  ASSERT_EQ(p.annotations.labels.size(), 1u);
  const Label& l = p.annotations.labels[0];
  EXPECT_EQ(l.kind, LesionKind::Microcalc);
  EXPECT_TRUE(point_in_polygon({100.5, 120.5}, l.boundary));
  EXPECT_TRUE(point_in_polygon({96, 125}, l.boundary));
  EXPECT_FALSE(point_in_polygon({94, 120}, l.boundary));
}

TEST(Phantom, ValuesClampedToBitDepth) {
  PhantomSpec s = base_spec(6);
  s.bit_depth = 8;
  s.background = {200, 10, 60, 20};
  s.masses = {{{120, 200}, 8, 400, 1}};
  const Phantom p = generate_phantom(s);
  EXPECT_NO_THROW(p.image.validate());
  for (std::size_t i = 0; i < p.image.size(); ++i)
    if (p.truth.mask[i]) { ASSERT_GE(p.image.pixels[i], 1); }
}

TEST(Phantom, LesionOutsideBreastRejected) {
  PhantomSpec s = base_spec();
  s.masses = {{{5, 200}, 5, 480, 2}};
  try {
    generate_phantom(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("lesion outside breast"), std::string::npos);
  }
  s = base_spec();
  s.specks = {{{12, 200}, 720}};
  EXPECT_THROW(generate_phantom(s), Error);
  s = base_spec();
  s.width = 0;
  EXPECT_THROW(generate_phantom(s), Error);
}

TEST(PlanCorpus, LayoutCountsAndNames) {
  CorpusOptions opt;
  opt.height = 460;
  const auto plan = plan_corpus(3, 2, Difficulty::Easy, 9, opt);
  // P000: 2 views, P001: 1 view, P002: 2 views (one normal), N000/N001: 2 each
  ASSERT_EQ(plan.size(), 9u);
  std::set<std::string> cases, stems;
  int positive = 0;
  for (const auto& v : plan) {
    cases.insert(v.case_id);
    stems.insert(v.stem);
    positive += v.positive;
    EXPECT_EQ(v.spec.height, 460);
    EXPECT_EQ(v.spec.width, 207);
    EXPECT_EQ(v.positive, !v.spec.masses.empty() || !v.spec.specks.empty());
  }
  EXPECT_EQ(cases, (std::set<std::string>{"P000", "P001", "P002", "N000", "N001"}));
  EXPECT_EQ(stems.size(), plan.size());
  EXPECT_EQ(positive, 4);
  EXPECT_EQ(plan[2].spec.masses.size(), 2u);
  EXPECT_EQ(plan[2].spec.specks.size(), 2u);
  EXPECT_EQ(plan[4].stem, "P002_R_CC");
  EXPECT_FALSE(plan[4].positive);
}

TEST(PlanCorpus, HardHalvesContrast) {
  CorpusOptions opt;
  opt.height = 460;
  const auto easy = plan_corpus(1, 0, Difficulty::Easy, 3, opt), hard = plan_corpus(1, 0, Difficulty::Hard, 3, opt);
  EXPECT_DOUBLE_EQ(hard[0].spec.masses[0].contrast, 0.5 * easy[0].spec.masses[0].contrast);
  EXPECT_DOUBLE_EQ(hard[0].spec.specks[0].contrast, 0.5 * easy[0].spec.specks[0].contrast);
  EXPECT_EQ(parse_difficulty("hard"), Difficulty::Hard);
  EXPECT_THROW(parse_difficulty("medium"), Error);
}

TEST(PlanCorpus, PlacementRulesHoldAcrossSeeds) {
  CorpusOptions opt;
  opt.height = 690;
  for (std::uint64_t seed = 1; seed <= 20; ++seed)
    for (const auto& v : plan_corpus(3, 0, Difficulty::Easy, seed, opt)) {
      const PhantomSpec& s = v.spec;
      ASSERT_NO_THROW(s.validate());
      const double mm = 1.0 / s.pixel_spacing_mm;
      for (std::size_t i = 0; i < s.specks.size(); ++i)
        for (std::size_t j = i + 1; j < s.specks.size(); ++j)
          ASSERT_GT(std::hypot(s.specks[i].origin.x - s.specks[j].origin.x, s.specks[i].origin.y - s.specks[j].origin.y),
                    3.0 * mm);  // never inside one merge radius
      for (const auto& m : s.masses) ASSERT_GE(m.center.x - s.breast.chest_x, (m.radius_mm + 10.0) * mm - 1);
    }
}

TEST(MakeCorpus, WritesManifestImagesAndAnnotations) {
  CorpusOptions opt;
  opt.height = 460;
  const fs::path dir = scratch("make");
  const Manifest m = make_corpus(dir, 2, 2, Difficulty::Easy, 17, opt, 2);
  const Manifest back = load_manifest(dir / "manifest.tsv");
  EXPECT_EQ(back.records, m.records);
  ASSERT_EQ(back.records.size(), 2u + 1u + 4u);
  std::set<std::string> normal_cases;
  for (const auto& r : back.records) {
    const GrayImage img = load_image(dir / r.image);
    EXPECT_EQ(img.height, 460);
    const AnnotationSet a = load_annotations(dir / r.annotation);
    EXPECT_EQ(r.positive, !a.labels.empty());
    if (r.case_id[0] == 'N') normal_cases.insert(r.case_id);
  }
  EXPECT_EQ(normal_cases.size(), 2u);
  const Dataset d = load_dataset(back);
  EXPECT_EQ(d.cases.size(), 4u);
  EXPECT_EQ(d.normal_views.size(), 4u);
  fs::remove_all(dir);
}

TEST(MakeCorpus, RegenerationIsByteIdentical) {
  CorpusOptions opt;
  opt.height = 300;
  const fs::path a = scratch("a"), b = scratch("b");
  make_corpus(a, 3, 1, Difficulty::Hard, 5, opt, 1);
  make_corpus(b, 3, 1, Difficulty::Hard, 5, opt, 3);
  EXPECT_EQ(file_bytes(a / "manifest.tsv"), file_bytes(b / "manifest.tsv"));
  for (const auto& r : load_manifest(a / "manifest.tsv").records) {
    EXPECT_EQ(file_bytes(a / r.image), file_bytes(b / r.image)) << r.image;
    EXPECT_EQ(file_bytes(a / r.annotation), file_bytes(b / r.annotation)) << r.annotation;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Manifest, RejectsMalformedLines) {
  EXPECT_THROW(parse_manifest("case_id\tside\tview\timage\tannotation\tstatus\nA\tX\tCC\ti\ta\tpositive\n", "."), Error);
  EXPECT_THROW(parse_manifest("A\tL\tCC\ti\ta\tmaybe\n", "."), Error);
  EXPECT_THROW(parse_manifest("A\tL\tCC\ti\n", "."), Error);
  EXPECT_THROW(load_manifest("/nonexistent/manifest.tsv"), Error);
}

// ---------------------------------------------------------------------------
// annotation files and geometry

TEST(Annotations, FormatParseRoundTrip) {
  AnnotationSet a;
  a.labels.push_back({1, LesionKind::Mass, {{1.25, 2.5}, {10, 2.5}, {10, 9.75}}, 4});
  a.labels.push_back({2, LesionKind::Microcalc, {{0.1, 0.2}, {0.3, 0.2}, {0.3, 0.4}, {0.1, 0.4}}, std::nullopt});
  EXPECT_EQ(parse_annotations(format_annotations(a)), a);
  EXPECT_THROW(parse_annotations("1 tumour 4 0 0 1 0 1 1\n"), Error);
}

TEST(Annotations, PointInPolygonMatchesRasterOfSquare) {
  AnnotationSet a;
  a.labels.push_back({1, LesionKind::Mass, {{2, 3}, {6, 3}, {6, 8}, {2, 8}}, 4});
  const BreastMask r = rasterize(a, 10, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) EXPECT_EQ(r.at(x, y), x >= 2 && x <= 6 && y >= 3 && y <= 8) << x << "," << y;
}

TEST(Annotations, ConcavePolygonEvenOdd) {
  // U shape opening upwards
  const std::vector<Point2> u{{0, 0}, {3, 0}, {3, 10}, {7, 10}, {7, 0}, {10, 0}, {10, 12}, {0, 12}};
  EXPECT_TRUE(point_in_polygon({1, 5}, u));
  EXPECT_FALSE(point_in_polygon({5, 5}, u));
  EXPECT_TRUE(point_in_polygon({5, 11}, u));
  EXPECT_TRUE(point_in_polygon({5, 10}, u));  // on an edge
}

TEST(Markers, FormatParseRoundTripExact) {
  std::mt19937_64 rng(71);
  MarkerSet m;
  for (int i = 0; i < 20; ++i)
    m.markers.push_back({static_cast<double>(rng() % 100000) / 7.0, static_cast<double>(rng() % 100000) / 3.0,
                         static_cast<double>(rng() % 1000) / 999.0});
  m.sort();
  EXPECT_EQ(parse_markers(format_markers(m)), m);
  EXPECT_THROW(parse_markers("1 2\n"), Error);
}
