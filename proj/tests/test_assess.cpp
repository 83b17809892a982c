#include <gtest/gtest.h>

#include <random>

#include "lcad/assess.hpp"
#include "support.hpp"

using namespace lcad;

namespace {

Label square(int id, double x, double y, double side = 10, LesionKind kind = LesionKind::Mass) {
  return {id, kind, {{x, y}, {x + side, y}, {x + side, y + side}, {x, y + side}}, 4};
}

AnnotationSet labels(std::vector<Label> l) { return {std::move(l)}; }

MarkerSet at(std::vector<Point2> pts, double score = 1.0) {
  MarkerSet m;
  for (auto p : pts) m.markers.push_back({p.x, p.y, score});
  return m;
}

ViewRecord view(const std::string& id, AnnotationSet a = {}) { return {id, "CC", std::move(a)}; }

// Random corpus with one lesion per positive view, as the unit-ordering property needs.
struct RandomCorpus {
  std::vector<CaseRecord> cases;
  std::vector<ViewRecord> normals;
  Detections detections;
};

RandomCorpus random_corpus(std::mt19937_64& rng) {
  RandomCorpus c;
  const int ncases = 1 + static_cast<int>(rng() % 6);
  int serial = 0;
  for (int i = 0; i < ncases; ++i) {
    CaseRecord rec{"C" + std::to_string(i), {}};
    for (char side : {'L', 'R'}) {
      SideRecord s{side, {}};
      for (int v = 0; v < 2; ++v) {
        const std::string id = "v" + std::to_string(serial++);
        const bool positive = rng() % 2 == 0 || (i == 0 && side == 'L' && v == 0);
        ViewRecord vr = view(id, positive ? labels({square(1, 20, 20)}) : AnnotationSet{});
        MarkerSet ms;
        for (int k = static_cast<int>(rng() % 4); k > 0; --k)
          ms.markers.push_back({static_cast<double>(rng() % 60), static_cast<double>(rng() % 60),
                                static_cast<double>(rng() % 11) / 10.0});
        ms.sort();
        c.detections[id] = ms;
        if (!positive) c.normals.push_back(vr);
        s.views.push_back(std::move(vr));
      }
      rec.sides.push_back(std::move(s));
    }
    c.cases.push_back(std::move(rec));
  }
  if (c.normals.empty()) c.normals.push_back(view("extra-normal"));
  return c;
}

ScoreImage scores(int w, int h, std::vector<double> v) {
  return {w, h, std::move(v), BreastMask(w, h, true), FrameMap::between(w, h, w, h)};
}

}  // namespace

TEST(MatchMarkers, CountsLabelsOnceAndFalseMarkersEach) {
  const AnnotationSet a = labels({square(1, 0, 0)});
  auto r = match_markers(at({{5, 5}}), a);
  EXPECT_EQ(r.tp_labels, std::set<int>{1});
  EXPECT_EQ(r.false_markers, 0u);
  r = match_markers(at({{5, 5}, {6, 6}, {50, 50}}), a);
  EXPECT_EQ(r.tp_labels, std::set<int>{1});
  EXPECT_EQ(r.false_markers, 1u);
}

TEST(MatchMarkers, BoundaryIsInclusive) {
  const AnnotationSet a = labels({square(1, 0, 0)});
  EXPECT_EQ(match_markers(at({{0, 0}}), a).tp_labels.size(), 1u);
  EXPECT_EQ(match_markers(at({{10, 4}}), a).tp_labels.size(), 1u);
  EXPECT_EQ(match_markers(at({{10.001, 4}}), a).false_markers, 1u);
}

TEST(Tpf, DefinitionOneWorkedContrast) {
  const std::vector<CaseRecord> cases{{"C", {{'L', {view("v", labels({square(1, 0, 0), square(2, 50, 50)}))}}}}};
  Detections d;
  d["v"] = at({{5, 5}});
  EXPECT_EQ(tpf(cases, d, Criterion::PerLabel), 0.5);
  EXPECT_EQ(tpf(cases, d, Criterion::PerImage), 1.0);
}

TEST(Tpf, PerCaseHalf) {
  const std::vector<CaseRecord> cases{{"A", {{'L', {view("a", labels({square(1, 0, 0)}))}}}},
                                      {"B", {{'R', {view("b", labels({square(1, 0, 0)}))}}}}};
  Detections d;
  d["a"] = at({{1, 1}});
  EXPECT_EQ(tpf(cases, d, Criterion::PerCase), 0.5);
}

TEST(Tpf, SideSeenInBothViewsDetectedInOne) {
  const std::vector<CaseRecord> cases{
      {"A", {{'L', {view("cc", labels({square(1, 0, 0)})), view("mlo", labels({square(1, 30, 30)}))}}}}};
  Detections d;
  d["cc"] = at({{2, 2}});
  EXPECT_EQ(tpf(cases, d, Criterion::PerSide), 1.0);
  EXPECT_EQ(tpf(cases, d, Criterion::PerImage), 0.5);
}

TEST(Tpf, NoPositiveUnitsIsAnError) {
  const std::vector<CaseRecord> cases{{"N", {{'L', {view("n")}}}}};
  try {
    tpf(cases, {}, Criterion::PerImage);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("undefined TPF"), std::string::npos);
  }
  const std::vector<CaseRecord> pos{{"P", {{'L', {view("p", labels({square(1, 0, 0)}))}}}}};
  EXPECT_EQ(tpf(pos, {}, Criterion::PerImage), 0.0);
}

TEST(Tpf, KindFilterIgnoresOtherLesions) {
  const std::vector<CaseRecord> cases{
      {"C", {{'L', {view("v", labels({square(1, 0, 0), square(2, 50, 50, 4, LesionKind::Microcalc)}))}}}}};
  Detections d;
  d["v"] = at({{52, 52}});
  EXPECT_EQ(tpf(cases, d, Criterion::PerLabel, LesionKind::Microcalc), 1.0);
  EXPECT_EQ(tpf(cases, d, Criterion::PerLabel, LesionKind::Mass), 0.0);
  EXPECT_EQ(tpf(cases, d, Criterion::PerLabel), 0.5);
}

// Unit ordering as fractions does not hold in general (a side with two detected views
// outweighs a missed single-view side per image but not per side). What does hold: with
// one lesion per positive view, per-label equals per-image, and on a single case the
// per-case fraction dominates every finer one.
TEST(Tpf, UnitOrderingWhereItHolds) {
  std::mt19937_64 rng(61);
  for (int c = 0; c < 300; ++c) {
    RandomCorpus rc = random_corpus(rng);
    ASSERT_EQ(tpf(rc.cases, rc.detections, Criterion::PerLabel), tpf(rc.cases, rc.detections, Criterion::PerImage));
    rc.cases.resize(1);
    const double kase = tpf(rc.cases, rc.detections, Criterion::PerCase);
    for (Criterion cr : {Criterion::PerSide, Criterion::PerImage, Criterion::PerLabel})
      ASSERT_LE(tpf(rc.cases, rc.detections, cr), kase);
  }
}

TEST(Tpf, PerImageCanExceedPerSide) {
  const std::vector<CaseRecord> cases{
      {"A",
       {{'L', {view("l1", labels({square(1, 0, 0)})), view("l2", labels({square(1, 0, 0)}))}},
        {'R', {view("r1", labels({square(1, 0, 0)}))}}}}};
  Detections d;
  d["l1"] = at({{1, 1}});
  d["l2"] = at({{1, 1}});
  EXPECT_DOUBLE_EQ(tpf(cases, d, Criterion::PerImage), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(tpf(cases, d, Criterion::PerSide), 0.5);
}

TEST(FmPerImage, Examples) {
  std::vector<ViewRecord> normals{view("a"), view("b"), view("c"), view("d")};
  Detections d;
  EXPECT_EQ(fm_per_image(normals, d), 0.0);
  d["a"] = at({{1, 1}, {2, 2}, {3, 3}, {4, 4}});
  d["b"] = at({{1, 1}, {2, 2}, {3, 3}});
  d["c"] = at({{1, 1}, {2, 2}, {3, 3}});
  EXPECT_EQ(fm_per_image(normals, d), 2.5);
  d.clear();
  d["a"] = at({{1, 1}});
  d["b"] = at({{1, 1}});
  d["c"] = at({{1, 1}});
  EXPECT_EQ(fm_per_image(normals, d), 0.75);
  EXPECT_THROW(fm_per_image(std::vector<ViewRecord>{}, d), Error);
}

TEST(FrocSweep, EndpointsAndMonotonicity) {
  std::mt19937_64 rng(62);
  std::vector<double> thresholds;
  for (int i = 20; i >= 0; --i) thresholds.push_back(i / 20.0);
  thresholds.insert(thresholds.begin(), 2.0);
  for (int c = 0; c < 100; ++c) {
    const RandomCorpus rc = random_corpus(rng);
    for (Criterion cr : {Criterion::PerCase, Criterion::PerSide, Criterion::PerImage, Criterion::PerLabel}) {
      const auto pts = froc_sweep(
          rc.cases, rc.normals, [&](double t) { return threshold_detections(rc.detections, t); }, thresholds, cr);
      ASSERT_EQ(pts.size(), thresholds.size());
      EXPECT_EQ(pts.front().tpf, 0.0);
      EXPECT_EQ(pts.front().fm_per_image, 0.0);
      EXPECT_EQ(pts.back().tpf, tpf(rc.cases, rc.detections, cr));
      EXPECT_EQ(pts.back().fm_per_image, fm_per_image(rc.normals, rc.detections));
      for (std::size_t i = 1; i < pts.size(); ++i) {
        ASSERT_GE(pts[i].tpf, pts[i - 1].tpf);
        ASSERT_GE(pts[i].fm_per_image, pts[i - 1].fm_per_image);
        ASSERT_GE(pts[i].tpf, 0.0);
        ASSERT_LE(pts[i].tpf, 1.0);
      }
    }
  }
}

TEST(FrocSweep, RejectsAscendingThresholds) {
  const std::vector<double> up{0.1, 0.2};
  const std::vector<CaseRecord> cases{{"P", {{'L', {view("p", labels({square(1, 0, 0)}))}}}}};
  const std::vector<ViewRecord> normals{view("n")};
  EXPECT_THROW(froc_sweep(cases, normals, [](double) { return Detections{}; }, up, Criterion::PerImage), Error);
}

TEST(Auc, PerfectSeparationAndAllTies) {
  EXPECT_EQ(mann_whitney_auc(std::vector<double>{0.1, 0.2}, std::vector<double>{0.3, 0.9}), 1.0);
  EXPECT_EQ(mann_whitney_auc(std::vector<double>{0.5, 0.5, 0.5}, std::vector<double>{0.5, 0.5}), 0.5);
  EXPECT_THROW(mann_whitney_auc(std::vector<double>{}, std::vector<double>{1.0}), Error);
}

TEST(Auc, MatchesDoubleLoopOracle) {
  std::mt19937_64 rng(63);
  for (int c = 0; c < 50; ++c) {
    std::vector<double> x(200), y(200);
    const int levels = 2 + static_cast<int>(rng() % 50);  // force ties
    for (auto& v : x) v = static_cast<double>(rng() % levels);
    for (auto& v : y) v = static_cast<double>(rng() % levels) + (c % 2 ? 0.5 : 0.0);
    ASSERT_EQ(mann_whitney_auc(x, y), oracle::auc_pairs(x, y));
  }
}

TEST(Auc, SwappingRegionsComplements) {
  std::mt19937_64 rng(64);
  for (int c = 0; c < 50; ++c) {
    std::vector<double> x(1 + rng() % 40), y(1 + rng() % 40);
    for (auto& v : x) v = static_cast<double>(rng() % 7);
    for (auto& v : y) v = static_cast<double>(rng() % 7);
    ASSERT_DOUBLE_EQ(mann_whitney_auc(y, x), 1.0 - mann_whitney_auc(x, y));
  }
}

TEST(ScoreAuc, LesionRegionFromAnnotations) {
  std::vector<double> v(20 * 20, 0.2);
  for (int y = 5; y <= 8; ++y)
    for (int x = 5; x <= 8; ++x) v[static_cast<std::size_t>(y) * 20 + x] = 0.9;
  const ScoreImage s = scores(20, 20, v);
  EXPECT_EQ(score_auc(s, labels({square(1, 5, 5, 3)})), 1.0);
  // 16 malignant pixels at 0.2 tie with 368 of the 384 normal ones
  EXPECT_DOUBLE_EQ(score_auc(s, labels({square(1, 12, 12, 3)})), 0.5 * 368 / 384);
  EXPECT_THROW(score_auc(s, AnnotationSet{}), Error);
}

TEST(CriterionNames, RoundTrip) {
  for (Criterion c : {Criterion::PerCase, Criterion::PerSide, Criterion::PerImage, Criterion::PerLabel})
    EXPECT_EQ(parse_criterion(to_string(c)), c);
  EXPECT_THROW(parse_criterion("per-breast"), Error);
}
