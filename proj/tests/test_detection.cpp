#include <gtest/gtest.h>

#include <algorithm>
#include <functional>

#include "countkit/data/detsynth.hpp"
#include "countkit/data/synth.hpp"
#include "countkit/detboost.hpp"
#include "countkit/detcount.hpp"
#include "oracles.hpp"

using namespace countkit;

namespace {

CategoryTable one_category() { return CategoryTable({{1, "a", "a"}}); }

std::vector<Detection> random_detections(Rng& rng, int n) {
  std::vector<Detection> d;
  for (int i = 0; i < n; ++i) {
    const double w = rng.uniform(5, 40), h = rng.uniform(5, 40);
    // Coarse scores so ties occur.
    d.push_back({{rng.uniform(0, 60), rng.uniform(0, 60), w, h}, std::round(rng.uniform() * 20) / 20, 1});
  }
  return d;
}

}  // namespace

TEST(Iou, HandValues) {
  EXPECT_NEAR(iou({0, 0, 2, 2}, {1, 0, 2, 2}), 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(iou({0, 0, 2, 2}, {1, 1, 2, 2}), 1.0 / 7.0, 1e-15);
  EXPECT_EQ(iou({0, 0, 1, 1}, {1, 0, 1, 1}), 0.0);
  EXPECT_EQ(iou({3, 3, 2, 5}, {3, 3, 2, 5}), 1.0);
}

TEST(Nms, MatchesBruteForceReference) {
  Rng rng(1);
  for (int t = 0; t < 500; ++t) {
    const auto d = random_detections(rng, static_cast<int>(rng.uniform_int(0, 25)));
    const double th = rng.uniform(0.05, 0.95);
    EXPECT_EQ(nms_indices(d, th), oracles::brute_force_nms(d, th)) << "set " << t;
  }
}

TEST(Nms, KeepsEverythingAtThresholdOneAndOnlyDisjointAtZero) {
  Rng rng(2);
  const auto d = random_detections(rng, 20);
  EXPECT_EQ(nms_indices(d, 1.0).size(), d.size());
  const auto kept = nms(d, 0.0);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    for (std::size_t j = i + 1; j < kept.size(); ++j) EXPECT_EQ(iou(kept[i].bbox, kept[j].bbox), 0.0);
  }
}

TEST(DetectCount, NonIncreasingInScoreThreshold) {
  Rng rng(3);
  const auto grid = threshold_grid(21);
  for (int t = 0; t < 500; ++t) {
    const DetectionSet set{1, random_detections(rng, static_cast<int>(rng.uniform_int(0, 25)))};
    const double nms_t = rng.uniform();
    double prev = 1e9;
    for (double s : grid) {
      const double c = detect_count(set, ThresholdConfig::uniform(1, s, nms_t), one_category())[0];
      EXPECT_LE(c, prev);
      prev = c;
    }
  }
}

TEST(DetectCount, CountsSurvivorsAboveThresholdPerCategory) {
  const CategoryTable cats({{1, "a", "x"}, {2, "b", "x"}});
  const DetectionSet set{7,
                         {{{0, 0, 10, 10}, 0.9, 1},
                          {{1, 1, 10, 10}, 0.85, 1},  // suppressed by the first
                          {{50, 50, 10, 10}, 0.5, 1},
                          {{0, 0, 10, 10}, 0.95, 2}}};
  EXPECT_EQ(detect_count(set, ThresholdConfig::uniform(2, 0.8, 0.3), cats), (ImageCounts{1, 1}));
  EXPECT_EQ(detect_count(set, ThresholdConfig::uniform(2, 0.4, 0.3), cats), (ImageCounts{2, 1}));
  EXPECT_EQ(detect_count(set, ThresholdConfig::uniform(2, 0.4, 0.9), cats), (ImageCounts{3, 1}));
}

TEST(Tuning, RecoversAPlantedScoreThreshold) {
  Rng rng(4);
  std::vector<DetectionSet> dets;
  std::vector<ImageCounts> gts;
  for (int i = 0; i < 60; ++i) {
    DetectionSet s{i, {}};
    const int trues = static_cast<int>(rng.uniform_int(i == 0 ? 1 : 0, 4)), falses = static_cast<int>(rng.uniform_int(i == 0 ? 1 : 0, 3));
    for (int j = 0; j < trues + falses; ++j) {
      double score = j < trues ? rng.uniform(0.6, 1.0) : rng.uniform(0.1, 0.595);
      if (i == 0 && j == 0) score = 0.6;
      if (i == 0 && j == trues) score = 0.595;
      s.detections.push_back({{j * 100.0, 0, 10, 10}, score, 1});
    }
    dets.push_back(s);
    gts.push_back({static_cast<double>(trues)});
  }
  const auto cfg = tune_thresholds(dets, gts, one_category());
  EXPECT_DOUBLE_EQ(cfg.per_category[0].score, 0.6);
}

TEST(Tuning, TwoPassEqualsExhaustiveEnumerationOnAFivePointGrid) {
  const CategoryTable cats({{1, "a", "x"}, {2, "b", "x"}});
  SynthConfig sc;
  sc.scene_count = 80;
  sc.num_categories = 2;
  sc.seed = 5;
  const auto ann = generate_synthetic(sc).annotations;
  DetSynthConfig dc;
  dc.seed = 6;
  const auto dets = synthesize_detections(ann, dc);
  std::vector<ImageCounts> gts;
  for (const auto& s : ann.scenes) gts.push_back(instance_counts(s, ann.categories));
  const auto grid = threshold_grid(5);
  const auto tuned = tune_thresholds(dets, gts, ann.categories, grid);

  for (std::size_t k = 0; k < ann.categories.size(); ++k) {
    const CategoryId id = ann.categories[k].id;
    auto err = [&](double s, double n) {
      double se = 0.0;
      for (std::size_t i = 0; i < dets.size(); ++i) {
        std::vector<Detection> mine;
        for (const auto& d : dets[i].detections) {
          if (d.category_id == id) mine.push_back(d);
        }
        double c = 0.0;
        for (std::size_t j : oracles::brute_force_nms(mine, n)) c += mine[j].score >= s ? 1.0 : 0.0;
        se += (c - gts[i][k]) * (c - gts[i][k]);
      }
      return std::sqrt(se / static_cast<double>(dets.size()));
    };
    // Full table, then the two-pass choice read off it.
    std::vector<double> first(5);
    std::vector<std::vector<double>> table(5, std::vector<double>(5));
    for (int a = 0; a < 5; ++a) {
      first[a] = err(grid[a], 0.3);
      for (int b = 0; b < 5; ++b) table[a][b] = err(grid[a], grid[b]);
    }
    int sa = 0;
    for (int a = 1; a < 5; ++a) sa = first[a] < first[sa] ? a : sa;
    int nb = 0;
    for (int b = 1; b < 5; ++b) nb = table[sa][b] < table[sa][nb] ? b : nb;
    EXPECT_EQ(tuned.per_category[k].score, grid[sa]) << "category " << k;
    EXPECT_EQ(tuned.per_category[k].nms, grid[nb]) << "category " << k;
  }
}

TEST(Tuning, ThresholdFileRoundTrip) {
  const CategoryTable cats({{3, "a", "x"}, {9, "b", "x"}});
  const ThresholdConfig cfg{{{0.25, 0.5}, {0.8, 0.3}}};
  EXPECT_EQ(thresholds_from_json(thresholds_to_json(cfg, cats), cats).per_category, cfg.per_category);
  Json bad = thresholds_to_json(cfg, cats);
  bad["9"]["score_threshold"] = 1.5;
  EXPECT_THROW(thresholds_from_json(bad, cats), SchemaError);
  bad.erase("3");
  EXPECT_THROW(thresholds_from_json(bad, cats), SchemaError);
}

TEST(DetectionFiles, RoundTripAndValidation) {
  const CategoryTable cats = one_category();
  const std::vector<DetectionSet> sets{{1, {{{1, 2, 3, 4}, 0.5, 1}}}, {2, {}}};
  EXPECT_EQ(detections_from_json(detections_to_json(sets), {1, 2}, cats), sets);
  Json bad = detections_to_json(sets);
  bad[0]["score"] = 1.2;
  EXPECT_THROW(detections_from_json(bad, {1, 2}, cats), SchemaError);
  bad = detections_to_json(sets);
  bad[0]["image_id"] = 5;
  EXPECT_THROW(detections_from_json(bad, {1, 2}, cats), SchemaError);
  bad = detections_to_json(sets);
  bad[0]["bbox"] = {0, 0, 0, 3};
  EXPECT_THROW(detections_from_json(bad, {1, 2}, cats), SchemaError);
}

TEST(Matching, GreedyMatchesMaximumMatchingOnDisjointGroundTruth) {
  Rng rng(7);
  for (int t = 0; t < 300; ++t) {
    const int ng = static_cast<int>(rng.uniform_int(0, 5));
    std::vector<BBox> gts;
    for (int g = 0; g < ng; ++g) gts.push_back({g * 50.0, 0, 20, 20});
    std::vector<Detection> dets;
    const int nd = static_cast<int>(rng.uniform_int(0, 6));
    for (int d = 0; d < nd; ++d) {
      const double cx = rng.uniform_int(0, std::max(0, ng - 1)) * 50.0 + rng.uniform(-8, 8);
      dets.push_back({{cx, rng.uniform(-8, 8), rng.uniform(14, 26), rng.uniform(14, 26)}, rng.uniform(), 1});
    }
    // Exhaustive maximum matching over detection -> gt assignments.
    std::function<int(std::size_t, std::vector<bool>&)> best = [&](std::size_t d, std::vector<bool>& used) -> int {
      if (d == dets.size()) return 0;
      int b = best(d + 1, used);
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (used[g] || iou(dets[d].bbox, gts[g]) < 0.5) continue;
        used[g] = true;
        b = std::max(b, 1 + best(d + 1, used));
        used[g] = false;
      }
      return b;
    };
    std::vector<bool> used(gts.size(), false);
    const auto m = match_detections(dets, gts);
    EXPECT_EQ(static_cast<int>(m.tp()), best(0, used));
    EXPECT_EQ(m.tp() + m.fp(), dets.size());
    EXPECT_EQ(m.tp() + m.fn(), gts.size());
  }
}

TEST(Matching, HigherScoreClaimsFirst) {
  const std::vector<BBox> gts{{0, 0, 10, 10}};
  const std::vector<Detection> dets{{{0, 0, 10, 10}, 0.4, 1}, {{1, 0, 10, 10}, 0.9, 1}};
  const auto m = match_detections(dets, gts);
  ASSERT_EQ(m.tp(), 1u);
  EXPECT_EQ(m.pairs[0].first, 1u);
  EXPECT_EQ(m.false_positives, (std::vector<std::size_t>{0}));
}

TEST(Matching, BestOverlapIsClaimed) {
  const std::vector<BBox> gts{{0, 0, 10, 10}, {2, 0, 10, 10}};
  const std::vector<Detection> dets{{{2, 0, 10, 10}, 0.9, 1}};
  const auto m = match_detections(dets, gts);
  EXPECT_EQ(m.pairs[0].second, 1u);
  EXPECT_EQ(m.false_negatives, (std::vector<std::size_t>{0}));
}

TEST(FMeasure, HandValues) {
  MatchResult m;
  m.pairs = {{0, 0}};
  m.false_positives = {1};
  m.false_negatives = {1};
  const auto f = f_measure(m);
  EXPECT_DOUBLE_EQ(f.precision, 0.5);
  EXPECT_DOUBLE_EQ(f.recall, 0.5);
  EXPECT_DOUBLE_EQ(f.f, 0.5);
  EXPECT_EQ(f_measure(MatchResult{}).f, 0.0);
  EXPECT_THROW(mean_f_measure({}), SchemaError);
}

TEST(FMeasure, EmptyPairsAreSkipped) {
  const CategoryTable cats({{1, "a", "x"}, {2, "b", "x"}});
  const std::vector<SceneAnnotation> scenes{{1, 100, 100, {{1, {0, 0, 10, 10}}}}};
  const std::vector<DetectionSet> sel{{1, {{{0, 0, 10, 10}, 0.9, 1}}}};
  const auto f = pair_f_values(sel, scenes, cats);
  EXPECT_EQ(f, (std::vector<double>{1.0}));
}

TEST(BaseThresholds, PlantedAndTies) {
  const std::vector<SceneAnnotation> scenes{{1, 100, 100, {{1, {0, 0, 10, 10}}}}};
  const std::vector<DetectionSet> dets{{1, {{{0, 0, 10, 10}, 0.7, 1}, {{50, 50, 10, 10}, 0.3, 1}}}};
  // Any threshold in (0.3, 0.7] gives F = 1; the lowest such grid point wins.
  EXPECT_DOUBLE_EQ(fit_base_thresholds(dets, scenes, one_category())[0], 0.31);
  EXPECT_DOUBLE_EQ(fit_base_thresholds(dets, scenes, one_category(), threshold_grid(5))[0], 0.5);
}

TEST(CountGuided, TopCOrBaseThreshold) {
  const CategoryTable cats({{1, "a", "x"}, {2, "b", "x"}});
  const DetectionSet set{1,
                         {{{0, 0, 1, 1}, 0.2, 1},
                          {{5, 0, 1, 1}, 0.9, 1},
                          {{9, 0, 1, 1}, 0.5, 1},
                          {{0, 0, 1, 1}, 0.6, 2},
                          {{5, 0, 1, 1}, 0.3, 2}}};
  const auto sel = count_guided_select(set, {1.6, 0.3}, {0.1, 0.5}, cats);
  ASSERT_EQ(sel.detections.size(), 3u);
  EXPECT_EQ(sel.detections[0].score, 0.9);
  EXPECT_EQ(sel.detections[1].score, 0.5);
  EXPECT_EQ(sel.detections[2].score, 0.6);
  EXPECT_EQ(count_guided_select(set, {9.0, 0.0}, {0.1, 0.9}, cats).detections.size(), 3u);
}

TEST(DetSynth, TrueDetectionsOutscoreSpuriousOnesAndRerunsMatch) {
  SynthConfig sc;
  sc.scene_count = 100;
  sc.seed = 9;
  const auto ann = generate_synthetic(sc).annotations;
  DetSynthConfig dc;
  dc.seed = 3;
  const auto a = synthesize_detections(ann, dc);
  EXPECT_EQ(a, synthesize_detections(ann, dc));
  for (std::size_t i = 0; i < a.size(); ++i) {
    double min_true = 2.0, max_false = -1.0;
    for (const auto& d : a[i].detections) {
      bool hit = false;
      for (const auto& inst : ann.scenes[i].instances) {
        if (inst.category_id == d.category_id && iou(inst.box, d.bbox) >= 0.3) hit = true;
      }
      if (hit) {
        min_true = std::min(min_true, d.score);
      } else {
        max_false = std::max(max_false, d.score);
      }
    }
    EXPECT_GT(min_true, max_false) << "image " << i;
  }
}
