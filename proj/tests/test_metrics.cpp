#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tao/metrics.hpp"

using namespace tao;

namespace {

PixelEvalInput random_instance(Rng& rng, int w, int h, int frames, int levels) {
  PixelEvalInput in;
  for (int f = 0; f < frames; ++f) {
    auto gt = oracle::random_blobs(rng, w, h, static_cast<int>(rng.integer(0, 3)));
    in.scores.push_back(oracle::random_scores(rng, gt, levels));
    in.gt.push_back(std::move(gt));
  }
  // both classes present somewhere
  in.gt[0].set(0, 0, true);
  in.gt[0].set(w - 1, h - 1, false);
  return in;
}

ScoreMap map_scores(const ScoreMap& s, double (*fn)(double)) {
  std::vector<double> v(s.values());
  for (auto& x : v) x = fn(x);
  return ScoreMap(s.width(), s.height(), std::move(v));
}

MaskPlane invert(const MaskPlane& m) {
  MaskPlane out(m.width(), m.height());
  for (std::size_t i = 0; i < m.size(); ++i) out.set_index(i, !m.test(i));
  return out;
}

GtRegion region(std::uint32_t id, const BBox& b) { return {id, b, {}}; }

}  // namespace

TEST(PixelAuroc, PerfectAndConstant) {
  MaskPlane gt(4, 4);
  gt.set(1, 1);
  gt.set(2, 1);
  PixelEvalInput perfect{{ScoreMap::from_mask(gt)}, {gt}};
  EXPECT_EQ(pixel_auroc(perfect), 1.0);
  PixelEvalInput constant{{ScoreMap(4, 4, std::vector<double>(16, 0.7))}, {gt}};
  EXPECT_EQ(pixel_auroc(constant), 0.5);
}

TEST(PixelAuroc, SingleClassIsUndefined) {
  MaskPlane gt(3, 3);
  PixelEvalInput in{{ScoreMap::from_mask(gt)}, {gt}};
  EXPECT_THROW(pixel_auroc(in), UndefinedMetricError);
  in.gt[0] = invert(gt);
  EXPECT_THROW(pixel_auroc(in), UndefinedMetricError);
}

TEST(PixelAuroc, EqualsPairwiseOracleExactly) {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    const auto in = random_instance(rng, 16, 16, 4, static_cast<int>(rng.integer(2, 20)));
    EXPECT_EQ(pixel_auroc(in), oracle::auroc(in.scores, in.gt));
  }
}

TEST(PixelAuroc, MonotoneTransformInvariance) {
  Rng rng(22);
  for (int t = 0; t < 20; ++t) {
    auto in = random_instance(rng, 12, 12, 3, 10);
    const double base = pixel_auroc(in);
    for (auto& s : in.scores) s = map_scores(s, [](double x) { return std::exp(3 * x) - 7; });
    EXPECT_EQ(pixel_auroc(in), base);
  }
}

TEST(PixelAuroc, ComplementSymmetry) {
  Rng rng(23);
  for (int t = 0; t < 20; ++t) {
    auto in = random_instance(rng, 10, 10, 2, 6);
    const double base = pixel_auroc(in);
    for (auto& g : in.gt) g = invert(g);
    EXPECT_NEAR(pixel_auroc(in), 1.0 - base, 1e-15);
  }
}

TEST(PixelAp, PerfectConstantAndUndefined) {
  MaskPlane gt(5, 4);
  gt.set(0, 0);
  gt.set(4, 3);
  gt.set(2, 2);
  EXPECT_EQ(pixel_ap({{ScoreMap::from_mask(gt)}, {gt}}), 1.0);
  EXPECT_DOUBLE_EQ(pixel_ap({{ScoreMap(5, 4, std::vector<double>(20, 0.3))}, {gt}}), 3.0 / 20.0);
  MaskPlane none(5, 4);
  EXPECT_THROW(pixel_ap({{ScoreMap::from_mask(gt)}, {none}}), UndefinedMetricError);
}

TEST(PixelAp, MatchesSweepOracle) {
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    const auto in = random_instance(rng, 16, 16, 4, static_cast<int>(rng.integer(2, 30)));
    EXPECT_NEAR(pixel_ap(in), oracle::ap(in.scores, in.gt), 1e-12);
  }
}

TEST(PixelAupro, PerfectEmptyAndUndefined) {
  MaskPlane gt(8, 8);
  for (int x = 2; x < 5; ++x) gt.set(x, 3);
  gt.set(7, 7);
  EXPECT_EQ(pixel_aupro({{ScoreMap::from_mask(gt)}, {gt}}), 1.0);
  EXPECT_EQ(pixel_aupro({{ScoreMap::from_mask(MaskPlane(8, 8))}, {gt}}), 0.0);
  MaskPlane none(8, 8);
  EXPECT_THROW(pixel_aupro({{ScoreMap::from_mask(gt)}, {none}}), UndefinedMetricError);
  EXPECT_THROW(pixel_aupro({{ScoreMap::from_mask(gt)}, {gt}}, 0.0), ValidationError);
}

TEST(PixelAupro, MatchesSweepOracle) {
  Rng rng(41);
  for (int t = 0; t < 50; ++t) {
    const auto in = random_instance(rng, 16, 16, 3, static_cast<int>(rng.integer(2, 30)));
    for (double limit : {0.05, 0.3, 1.0}) {
      EXPECT_NEAR(pixel_aupro(in, limit), oracle::aupro(in.scores, in.gt, limit), 1e-6) << "limit " << limit;
    }
  }
}

TEST(PixelAupro, SingleRegionFullRangeEqualsAuroc) {
  Rng rng(43);
  for (int t = 0; t < 20; ++t) {
    MaskPlane gt(12, 12);
    const int x = static_cast<int>(rng.integer(0, 6)), y = static_cast<int>(rng.integer(0, 6));
    for (int yy = y; yy < y + 4; ++yy) {
      for (int xx = x; xx < x + 5; ++xx) gt.set(xx, yy);
    }
    const PixelEvalInput in{{oracle::random_scores(rng, gt, 8)}, {gt}};
    EXPECT_NEAR(pixel_aupro(in, 1.0), pixel_auroc(in), 1e-12);
  }
}

TEST(PixelF1, CountsAndEdgeCases) {
  MaskPlane gt(4, 4), pred(4, 4);
  gt.set(0, 0);
  gt.set(1, 0);
  pred.set(1, 0);
  pred.set(3, 3);
  const std::vector<MaskPlane> g{gt}, p{pred}, empty{MaskPlane(4, 4)};
  const auto c = pixel_counts(p, g);
  EXPECT_EQ(c.tp, 1u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(c.tn, 13u);
  EXPECT_EQ(pixel_f1(p, g), 0.5);
  EXPECT_EQ(pixel_f1(g, g), 1.0);
  EXPECT_EQ(pixel_f1(empty, g), 0.0);
  EXPECT_THROW(pixel_f1(empty, empty), UndefinedMetricError);
  const std::vector<MaskPlane> wrong{MaskPlane(3, 4)};
  EXPECT_THROW(pixel_f1(wrong, g), ValidationError);
}

TEST(PixelF1, MatchesCountOracle) {
  Rng rng(51);
  for (int t = 0; t < 200; ++t) {
    std::vector<MaskPlane> p, g;
    for (int f = 0; f < 3; ++f) {
      p.push_back(oracle::random_mask(rng, 8, 8, rng.uniform()));
      g.push_back(oracle::random_mask(rng, 8, 8, rng.uniform()));
    }
    g[0].set(0, 0);
    EXPECT_EQ(pixel_f1(p, g), oracle::f1(p, g));
  }
}

TEST(Binarize, StrictThreshold) {
  EXPECT_EQ(binarize(ScoreMap(3, 2, std::vector<double>(6, 0.0))).count(), 0u);
  EXPECT_EQ(binarize(ScoreMap(3, 2, std::vector<double>(6, 1.0))).count(), 6u);
  Rng rng(61);
  std::vector<double> v(100);
  for (auto& x : v) x = std::floor(rng.uniform() * 4) / 4;  // hits 0.5 exactly
  const ScoreMap s(10, 10, v);
  const auto m = binarize(s, 0.5);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(m.test(i), v[i] > 0.5);
}

TEST(Rbdc, IdenticalAndEmpty) {
  ObjectEvalInput in;
  in.gt = {{region(0, {0, 0, 4, 4}), region(1, {10, 10, 14, 14})}, {region(0, {1, 0, 5, 4})}};
  in.detected = {{{{0, 0, 4, 4}, 0.9}, {{10, 10, 14, 14}, 0.4}}, {{{1, 0, 5, 4}, 0.7}}};
  for (auto mode : {EvalMode::point, EvalMode::curve}) {
    EXPECT_EQ(rbdc(in, mode), 1.0) << to_string(mode);
    EXPECT_EQ(tbdc(in, 0.1, mode), 1.0) << to_string(mode);
  }
  ObjectEvalInput none{{{}, {}}, in.gt, 0.1};
  for (auto mode : {EvalMode::point, EvalMode::curve}) {
    EXPECT_EQ(rbdc(none, mode), 0.0);
    EXPECT_EQ(tbdc(none, 0.1, mode), 0.0);
  }
  ObjectEvalInput no_gt{{{}, {}}, {{}, {}}, 0.1};
  EXPECT_THROW(rbdc(no_gt, EvalMode::point), UndefinedMetricError);
  EXPECT_THROW(tbdc(no_gt, 0.1, EvalMode::point), UndefinedMetricError);
}

TEST(Rbdc, OneMissedTrackOfThree) {
  ObjectEvalInput in;
  for (int f = 0; f < 10; ++f) {
    std::vector<GtRegion> g;
    std::vector<DetRegion> d;
    for (std::uint32_t t = 0; t < 3; ++t) {
      const BBox b(20.0 * t + f, 5, 20.0 * t + f + 8, 13);
      g.push_back(region(t, b));
      if (t != 1) d.push_back({b, 1.0});
    }
    in.gt.push_back(g);
    in.detected.push_back(d);
  }
  EXPECT_DOUBLE_EQ(rbdc(in, EvalMode::point), 20.0 / 30.0);
  EXPECT_DOUBLE_EQ(tbdc(in, 0.1, EvalMode::point), 2.0 / 3.0);
}

TEST(Rbdc, OneToOneMatchingAndFalsePositives) {
  // two detections on one GT region: one match, one false positive
  ObjectEvalInput in{{{{{0, 0, 4, 4}, 1.0}, {{0, 0, 4, 4.5}, 1.0}}}, {{region(0, {0, 0, 4, 4})}}, 0.1};
  const auto r = rbdc_eval(in, EvalMode::point);
  EXPECT_EQ(r.value, 1.0);
  EXPECT_EQ(r.fp_per_frame, 1.0);
}

TEST(Rbdc, CurveModeIntegratesOverFpRate) {
  // frame 0: a high-score hit; frame 1: a low-score false positive plus a
  // low-score hit. Curve: (0,0) -> (0, 0.5) at s=0.9 -> (0.5, 1) at s=0.2,
  // then held at 1 up to 1 FP/frame.
  ObjectEvalInput in;
  in.gt = {{region(0, {0, 0, 4, 4})}, {region(0, {0, 0, 4, 4})}};
  in.detected = {{{{0, 0, 4, 4}, 0.9}}, {{{0, 0, 4, 4}, 0.2}, {{20, 20, 24, 24}, 0.2}}};
  const auto r = rbdc_eval(in, EvalMode::curve);
  EXPECT_DOUBLE_EQ(r.value, 0.5 * (0.5 + 1.0) / 2 + 0.5 * 1.0);
  EXPECT_EQ(r.fp_per_frame, 0.5);
  EXPECT_EQ(rbdc(in, EvalMode::point), 1.0);
}

TEST(Tbdc, CoverageRule) {
  ObjectEvalInput in;
  for (int f = 0; f < 10; ++f) {
    const BBox b(f, 0, f + 6, 6);
    in.gt.push_back({region(7, b)});
    in.detected.push_back(f < 4 ? std::vector<DetRegion>{{b, 1.0}} : std::vector<DetRegion>{});
  }
  EXPECT_EQ(tbdc(in, 0.5, EvalMode::point), 0.0);
  EXPECT_EQ(tbdc(in, 0.4, EvalMode::point), 1.0);
  EXPECT_THROW(tbdc(in, 0.0, EvalMode::point), ValidationError);
}

TEST(ObjectMetrics, MonotoneNonIncreasingInAlpha) {
  Rng rng(71);
  for (int t = 0; t < 50; ++t) {
    ObjectEvalInput in;
    for (int f = 0; f < 6; ++f) {
      std::vector<GtRegion> g;
      std::vector<DetRegion> d;
      for (std::uint32_t k = 0; k < 3; ++k) {
        const BBox b = oracle::lattice_box(rng, 40.0, 2);
        g.push_back(region(k, b));
        if (rng.bernoulli(0.8)) {
          const double dx = rng.uniform(-3, 3), dy = rng.uniform(-3, 3);
          d.push_back({BBox(std::max(0.0, b.x1() + dx), std::max(0.0, b.y1() + dy), b.x2() + dx + 3, b.y2() + dy + 3),
                       rng.uniform()});
        }
      }
      in.gt.push_back(g);
      in.detected.push_back(d);
    }
    double prev_r = 2, prev_t = 2;
    for (double a : {0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9}) {
      in.alpha = a;
      const double r = rbdc(in, EvalMode::point), tb = tbdc(in, 0.3, EvalMode::point);
      EXPECT_LE(r, prev_r);
      EXPECT_LE(tb, prev_t);
      prev_r = r;
      prev_t = tb;
    }
  }
}

TEST(ObjectMetrics, RejectsBadAlpha) {
  ObjectEvalInput in{{{}}, {{region(0, {0, 0, 1, 1})}}, 0.0};
  EXPECT_THROW(rbdc(in, EvalMode::point), ValidationError);
  in.alpha = 1.0;
  EXPECT_THROW(rbdc(in, EvalMode::point), ValidationError);
}

TEST(RegionsFromSegmentation, ComponentsBoxedAndScored) {
  SegmentationResult seg({1, 10, 10});
  MaskPlane m(10, 10);
  m.set(1, 1);
  m.set(2, 1);
  m.set(7, 7);
  seg.put(0, 3, m);
  const auto regions = regions_from_segmentation(seg, {{3, 0.25}}, 0.2);
  ASSERT_EQ(regions[0].size(), 2u);
  EXPECT_EQ(regions[0][0].bbox, BBox(1, 1, 3, 2));
  EXPECT_EQ(regions[0][1].bbox, BBox(7, 7, 8, 8));
  EXPECT_EQ(regions[0][0].score, 0.25);
}

TEST(Evaluate, PredEqualsGtIsPerfectEmptyPredIsZero) {
  GroundTruth gt;
  gt.width = 8;
  gt.height = 8;
  for (std::size_t f = 0; f < 3; ++f) {
    MaskPlane m(8, 8);
    for (int y = 2; y < 5; ++y) {
      for (int x = 1 + static_cast<int>(f); x < 4 + static_cast<int>(f); ++x) m.set(x, y);
    }
    GtRegion r{0, *mask_to_bbox(m), {}};
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m.test(i)) r.pixels.push_back(static_cast<std::uint32_t>(i));
    }
    gt.masks.push_back(m);
    gt.regions.push_back({r});
  }
  SegmentationResult seg({3, 8, 8});
  for (std::size_t f = 0; f < 3; ++f) seg.put(f, 0, gt.masks[f]);
  const auto rep = evaluate(seg, {}, gt, {});
  EXPECT_FALSE(rep.any_undefined());
  for (const auto& v : {rep.pixel_auroc, rep.pixel_ap, rep.pixel_aupro, rep.pixel_f1, rep.rbdc, rep.tbdc}) {
    EXPECT_EQ(v, std::optional<double>(1.0));
  }
  const auto empty = evaluate(SegmentationResult({3, 8, 8}), {}, gt, {});
  EXPECT_EQ(empty.pixel_f1, std::optional<double>(0.0));
  EXPECT_EQ(empty.rbdc, std::optional<double>(0.0));
  EXPECT_EQ(empty.tbdc, std::optional<double>(0.0));
  EXPECT_THROW(evaluate(SegmentationResult({2, 8, 8}), {}, gt, {}), ValidationError);
}

TEST(Evaluate, UndefinedMetricsAreRecordedNotThrown) {
  GroundTruth gt;
  gt.width = 4;
  gt.height = 4;
  gt.masks = {MaskPlane(4, 4)};
  gt.regions = {{}};
  const auto rep = evaluate(SegmentationResult({1, 4, 4}), {}, gt, {});
  EXPECT_FALSE(rep.pixel_auroc);
  EXPECT_FALSE(rep.rbdc);
  EXPECT_EQ(rep.undefined.size(), 6u);
}

TEST(FormatReport, Golden) {
  MetricsReport r;
  r.pixel_auroc = 0.75111;
  r.pixel_ap = 1.0;
  r.pixel_aupro = 0.0;
  r.pixel_f1 = 2.0 / 3.0;
  r.rbdc = 0.836;
  r.rbdc_fp_per_frame = 0.125;
  EXPECT_EQ(format_report(r),
            "pixel_auroc=75.11\n"
            "pixel_ap=100.00\n"
            "pixel_aupro=0.00\n"
            "pixel_f1=66.67\n"
            "rbdc=83.60\n"
            "tbdc=undefined\n"
            "mode=point\n"
            "rbdc_fp_per_frame=0.1250\n");
  const auto j = report_json(r);
  EXPECT_TRUE(j.at("tbdc").is_null());
  EXPECT_EQ(j.at("options").at("alpha"), 0.1);
}

TEST(CurveCsv, InfiniteThresholdSpelledOut) {
  EXPECT_EQ(curve_csv({{INFINITY, 0, 0}, {0.5, 0.25, 1}}), "threshold,x,y\ninf,0.0,0.0\n0.5,0.25,1.0\n");
}
