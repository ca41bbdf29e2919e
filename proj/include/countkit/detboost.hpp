#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "countkit/data/annotations.hpp"
#include "countkit/detcount.hpp"
#include "countkit/metrics.hpp"

namespace countkit {

inline constexpr double kMatchIou = 0.5;

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (detection index, gt index)
  std::vector<std::size_t> false_positives;
  std::vector<std::size_t> false_negatives;

  std::size_t tp() const { return pairs.size(); }
  std::size_t fp() const { return false_positives.size(); }
  std::size_t fn() const { return false_negatives.size(); }
};

/// Detections in descending score order (ties by index) each claim their
/// highest-IoU unclaimed ground truth when that IoU is at least 0.5.
inline MatchResult match_detections(const std::vector<Detection>& dets, const std::vector<BBox>& gts) {
  MatchResult m;
  std::vector<bool> claimed(gts.size(), false);
  for (std::size_t d : score_order(dets)) {
    std::optional<std::size_t> best;
    double best_iou = kMatchIou;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (claimed[g]) continue;
      const double v = iou(dets[d].bbox, gts[g]);
      if (v >= best_iou && (!best || v > best_iou)) {
        best = g;
        best_iou = v;
      }
    }
    if (best) {
      claimed[*best] = true;
      m.pairs.emplace_back(d, *best);
    } else {
      m.false_positives.push_back(d);
    }
  }
  std::sort(m.false_positives.begin(), m.false_positives.end());
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (!claimed[g]) m.false_negatives.push_back(g);
  }
  return m;
}

struct FMeasure {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

// Undefined ratios (no detections, or no ground truth) count as 0.
inline FMeasure f_measure(const MatchResult& m) {
  FMeasure r;
  const double tp = static_cast<double>(m.tp());
  if (m.tp() + m.fp() > 0) r.precision = tp / static_cast<double>(m.tp() + m.fp());
  if (m.tp() + m.fn() > 0) r.recall = tp / static_cast<double>(m.tp() + m.fn());
  if (r.precision + r.recall > 0.0) r.f = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

inline double mean_f_measure(const std::vector<double>& f_values) {
  if (f_values.empty()) throw SchemaError("mF: no image-category pairs to average");
  double s = 0.0;
  for (double f : f_values) s += f;
  return s / static_cast<double>(f_values.size());
}

// Ground-truth boxes of one scene grouped by category index.
inline std::vector<std::vector<BBox>> gt_boxes_by_category(const SceneAnnotation& scene, const CategoryTable& categories) {
  std::vector<std::vector<BBox>> out(categories.size());
  for (const auto& inst : scene.instances) out[categories.index_of(inst.category_id)].push_back(inst.box);
  return out;
}

/// NMS per image and category at one overlap threshold; survivors keep their
/// descending-score order.
inline std::vector<DetectionSet> apply_nms(const std::vector<DetectionSet>& sets, const CategoryTable& categories,
                                           double threshold) {
  std::vector<DetectionSet> out;
  out.reserve(sets.size());
  for (const auto& s : sets) {
    DetectionSet kept{s.image_id, {}};
    for (const auto& group : split_by_category(s, categories)) {
      for (auto& d : nms(group, threshold)) kept.detections.push_back(d);
    }
    out.push_back(std::move(kept));
  }
  return out;
}

/// F values of every (image, category) pair that has ground truth or
/// detections; pairs with neither are skipped.
inline std::vector<double> pair_f_values(const std::vector<DetectionSet>& selected, const std::vector<SceneAnnotation>& scenes,
                                         const CategoryTable& categories) {
  if (selected.size() != scenes.size()) throw SchemaError("mF: detections and scenes are not aligned");
  std::vector<double> out;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto gts = gt_boxes_by_category(scenes[i], categories);
    const auto dets = split_by_category(selected[i], categories);
    for (std::size_t k = 0; k < categories.size(); ++k) {
      if (gts[k].empty() && dets[k].empty()) continue;
      out.push_back(f_measure(match_detections(dets[k], gts[k])).f);
    }
  }
  return out;
}

inline std::vector<Detection> filter_score(const std::vector<Detection>& dets, double threshold) {
  std::vector<Detection> out;
  for (const auto& d : dets) {
    if (d.score >= threshold) out.push_back(d);
  }
  return out;
}

/// Per category, the grid score threshold maximizing the mean per-image
/// F-measure on post-NMS validation detections; ties go to the lower value.
inline std::vector<double> fit_base_thresholds(const std::vector<DetectionSet>& val_dets,
                                               const std::vector<SceneAnnotation>& val_scenes,
                                               const CategoryTable& categories,
                                               const std::vector<double>& grid = threshold_grid()) {
  if (val_dets.empty()) throw SchemaError("fit_base_thresholds: empty validation set");
  if (val_dets.size() != val_scenes.size()) throw SchemaError("fit_base_thresholds: detections and scenes are not aligned");
  const std::size_t K = categories.size();
  std::vector<std::vector<std::vector<Detection>>> dets(K);
  std::vector<std::vector<std::vector<BBox>>> gts(K);
  for (std::size_t i = 0; i < val_dets.size(); ++i) {
    auto d = split_by_category(val_dets[i], categories);
    auto g = gt_boxes_by_category(val_scenes[i], categories);
    for (std::size_t k = 0; k < K; ++k) {
      dets[k].push_back(std::move(d[k]));
      gts[k].push_back(std::move(g[k]));
    }
  }
  std::vector<double> out(K, grid.front());
  for (std::size_t k = 0; k < K; ++k) {
    double best = -1.0;
    for (double t : grid) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < dets[k].size(); ++i) {
        const auto kept = filter_score(dets[k][i], t);
        if (kept.empty() && gts[k][i].empty()) continue;
        sum += f_measure(match_detections(kept, gts[k][i])).f;
        ++n;
      }
      const double mean = n ? sum / static_cast<double>(n) : 0.0;
      if (mean > best) {
        best = mean;
        out[k] = t;
      }
    }
  }
  return out;
}

/// Per category: the top-c detections by score when the rounded predicted
/// count c is positive, otherwise the base score threshold.
inline DetectionSet count_guided_select(const DetectionSet& dets, const ImageCounts& predicted,
                                        const std::vector<double>& base_thresholds, const CategoryTable& categories) {
  if (predicted.size() != categories.size() || base_thresholds.size() != categories.size()) {
    throw SchemaError("count_guided_select: counts or thresholds do not match categories");
  }
  const auto counts = postprocess(predicted);
  DetectionSet out{dets.image_id, {}};
  const auto groups = split_by_category(dets, categories);
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const auto c = static_cast<std::size_t>(counts[k]);
    if (c > 0) {
      const auto order = score_order(groups[k]);
      for (std::size_t j = 0; j < std::min(c, order.size()); ++j) out.detections.push_back(groups[k][order[j]]);
    } else {
      for (auto& d : filter_score(groups[k], base_thresholds[k])) out.detections.push_back(d);
    }
  }
  return out;
}

inline std::vector<DetectionSet> count_guided_select_all(const std::vector<DetectionSet>& dets,
                                                         const std::vector<ImageCounts>& predicted,
                                                         const std::vector<double>& base_thresholds,
                                                         const CategoryTable& categories) {
  if (dets.size() != predicted.size()) throw SchemaError("count_guided_select: detections and counts are not aligned");
  std::vector<DetectionSet> out;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    out.push_back(count_guided_select(dets[i], predicted[i], base_thresholds, categories));
  }
  return out;
}

inline std::vector<DetectionSet> base_select_all(const std::vector<DetectionSet>& dets,
                                                 const std::vector<double>& base_thresholds,
                                                 const CategoryTable& categories) {
  std::vector<DetectionSet> out;
  for (const auto& s : dets) {
    DetectionSet kept{s.image_id, {}};
    const auto groups = split_by_category(s, categories);
    for (std::size_t k = 0; k < groups.size(); ++k) {
      for (auto& d : filter_score(groups[k], base_thresholds.at(k))) kept.detections.push_back(d);
    }
    out.push_back(std::move(kept));
  }
  return out;
}

struct MfRow {
  std::string method;
  double mf = 0.0;
  std::size_t pairs = 0;
};

inline MfRow mf_row(const std::string& method, const std::vector<DetectionSet>& selected,
                    const std::vector<SceneAnnotation>& scenes, const CategoryTable& categories) {
  const auto f = pair_f_values(selected, scenes, categories);
  return {method, mean_f_measure(f), f.size()};
}

struct DetBoostReport {
  double nms_threshold = 0.3;
  std::vector<double> base_thresholds;
  std::vector<MfRow> rows;  // base, count-guided, oracle
};

/// Base thresholds are fitted on the validation split; the test split is then
/// scored with the fixed base thresholds, with predicted counts, and with the
/// ground-truth counts.
inline DetBoostReport run_detboost(const std::vector<DetectionSet>& val_dets, const std::vector<SceneAnnotation>& val_scenes,
                                   const std::vector<DetectionSet>& test_dets, const std::vector<SceneAnnotation>& test_scenes,
                                   const std::vector<ImageCounts>& predicted, const CategoryTable& categories,
                                   double nms_threshold = 0.3) {
  DetBoostReport rep;
  rep.nms_threshold = nms_threshold;
  const auto val = apply_nms(val_dets, categories, nms_threshold);
  const auto test = apply_nms(test_dets, categories, nms_threshold);
  rep.base_thresholds = fit_base_thresholds(val, val_scenes, categories);
  std::vector<ImageCounts> oracle;
  for (const auto& s : test_scenes) oracle.push_back(instance_counts(s, categories));
  rep.rows.push_back(mf_row("base", base_select_all(test, rep.base_thresholds, categories), test_scenes, categories));
  rep.rows.push_back(mf_row("count-guided", count_guided_select_all(test, predicted, rep.base_thresholds, categories),
                            test_scenes, categories));
  rep.rows.push_back(mf_row("oracle", count_guided_select_all(test, oracle, rep.base_thresholds, categories),
                            test_scenes, categories));
  return rep;
}

inline Json to_json(const DetBoostReport& rep, const CategoryTable& categories) {
  Json base = Json::object();
  for (std::size_t k = 0; k < categories.size(); ++k) base[std::to_string(categories[k].id)] = rep.base_thresholds.at(k);
  Json rows = Json::array();
  for (const auto& r : rep.rows) rows.push_back({{"method", r.method}, {"mF", r.mf}, {"pairs", r.pairs}});
  return {{"nms_threshold", rep.nms_threshold}, {"base_thresholds", base}, {"rows", rows}};
}

}  // namespace countkit
