#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "countkit/data/types.hpp"
#include "countkit/json_io.hpp"

namespace countkit {

struct Detection {
  BBox bbox;
  double score = 0.0;
  CategoryId category_id = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct DetectionSet {
  ImageId image_id = 0;
  std::vector<Detection> detections;

  friend bool operator==(const DetectionSet&, const DetectionSet&) = default;
};

struct CategoryThresholds {
  double score = 0.8;
  double nms = 0.3;

  friend bool operator==(const CategoryThresholds&, const CategoryThresholds&) = default;
};

// Indexed like the CategoryTable.
struct ThresholdConfig {
  std::vector<CategoryThresholds> per_category;

  static ThresholdConfig uniform(std::size_t num_categories, double score, double nms) {
    return {std::vector<CategoryThresholds>(num_categories, {score, nms})};
  }

  void validate() const {
    for (const auto& t : per_category) {
      if (!(t.score >= 0.0 && t.score <= 1.0) || !(t.nms >= 0.0 && t.nms <= 1.0)) {
        throw SchemaError("threshold config: thresholds must lie in [0, 1]");
      }
    }
  }
};

inline double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  return std::min(1.0, inter / (a.area() + b.area() - inter));
}

/// Indices of `dets` in descending score order; equal scores keep list order.
inline std::vector<std::size_t> score_order(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}

/// Greedy non-maximum suppression for a single category. Returns the indices
/// of the kept detections in descending score order.
inline std::vector<std::size_t> nms_indices(const std::vector<Detection>& dets, double threshold) {
  std::vector<std::size_t> kept;
  for (std::size_t i : score_order(dets)) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (iou(dets[i].bbox, dets[k].bbox) > threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

inline std::vector<Detection> nms(const std::vector<Detection>& dets, double threshold) {
  std::vector<Detection> out;
  for (std::size_t i : nms_indices(dets, threshold)) out.push_back(dets[i]);
  return out;
}

// Per-category detection lists, indexed like the CategoryTable.
inline std::vector<std::vector<Detection>> split_by_category(const DetectionSet& set, const CategoryTable& categories) {
  std::vector<std::vector<Detection>> out(categories.size());
  for (const auto& d : set.detections) out[categories.index_of(d.category_id)].push_back(d);
  return out;
}

inline std::size_t count_kept(const std::vector<Detection>& dets, const CategoryThresholds& t) {
  std::size_t n = 0;
  for (std::size_t i : nms_indices(dets, t.nms)) {
    if (dets[i].score >= t.score) ++n;
  }
  return n;
}

/// Per category: NMS at the category's overlap threshold, then the number of
/// survivors scoring at least the score threshold.
inline ImageCounts detect_count(const DetectionSet& set, const ThresholdConfig& config, const CategoryTable& categories) {
  if (config.per_category.size() != categories.size()) {
    throw SchemaError("detect_count: threshold config does not match categories");
  }
  const auto groups = split_by_category(set, categories);
  ImageCounts counts(categories.size(), 0.0);
  for (std::size_t k = 0; k < groups.size(); ++k) {
    counts[k] = static_cast<double>(count_kept(groups[k], config.per_category[k]));
  }
  return counts;
}

inline std::vector<double> threshold_grid(int points = 101) {
  if (points < 2) throw SchemaError("threshold grid needs at least 2 points");
  std::vector<double> g(points);
  for (int i = 0; i < points; ++i) g[i] = static_cast<double>(i) / (points - 1);
  return g;
}

namespace detail {

inline double count_rmse(const std::vector<std::vector<Detection>>& per_image, const std::vector<double>& gts,
                         const CategoryThresholds& t) {
  double se = 0.0;
  for (std::size_t i = 0; i < per_image.size(); ++i) {
    const double d = static_cast<double>(count_kept(per_image[i], t)) - gts[i];
    se += d * d;
  }
  return std::sqrt(se / static_cast<double>(per_image.size()));
}

// Index of the smallest value; the first (lowest threshold) wins ties.
inline std::size_t argmin_first(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[best]) best = i;
  }
  return best;
}

}  // namespace detail

/// Two-pass coordinate search per category: score threshold at NMS 0.3, then
/// the NMS threshold at that score. Minimizes per-category count RMSE.
inline ThresholdConfig tune_thresholds(const std::vector<DetectionSet>& val_dets, const std::vector<ImageCounts>& val_gts,
                                       const CategoryTable& categories, const std::vector<double>& grid = threshold_grid(),
                                       double first_pass_nms = 0.3) {
  if (val_dets.empty()) throw SchemaError("tune_thresholds: empty validation set");
  if (val_dets.size() != val_gts.size()) throw SchemaError("tune_thresholds: detections and counts are not aligned");
  if (grid.empty()) throw SchemaError("tune_thresholds: empty grid");
  const std::size_t K = categories.size();
  std::vector<std::vector<std::vector<Detection>>> by_cat(K, std::vector<std::vector<Detection>>(val_dets.size()));
  std::vector<std::vector<double>> gts(K, std::vector<double>(val_dets.size()));
  for (std::size_t i = 0; i < val_dets.size(); ++i) {
    if (val_gts[i].size() != K) throw SchemaError("tune_thresholds: count vector does not match categories");
    const auto groups = split_by_category(val_dets[i], categories);
    for (std::size_t k = 0; k < K; ++k) {
      by_cat[k][i] = groups[k];
      gts[k][i] = val_gts[i][k];
    }
  }
  ThresholdConfig cfg;
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> err(grid.size());
    for (std::size_t s = 0; s < grid.size(); ++s) err[s] = detail::count_rmse(by_cat[k], gts[k], {grid[s], first_pass_nms});
    const double score = grid[detail::argmin_first(err)];
    for (std::size_t t = 0; t < grid.size(); ++t) err[t] = detail::count_rmse(by_cat[k], gts[k], {score, grid[t]});
    cfg.per_category.push_back({score, grid[detail::argmin_first(err)]});
  }
  return cfg;
}

// ---- files -----------------------------------------------------------------

inline Json detections_to_json(const std::vector<DetectionSet>& sets) {
  Json arr = Json::array();
  for (const auto& s : sets) {
    for (const auto& d : s.detections) {
      arr.push_back({{"image_id", s.image_id},
                     {"category_id", d.category_id},
                     {"bbox", {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h}},
                     {"score", d.score}});
    }
  }
  return arr;
}

/// Groups a flat detection array by image, one set per entry of `image_ids`
/// (images without detections get an empty set).
inline std::vector<DetectionSet> detections_from_json(const Json& arr, const std::vector<ImageId>& image_ids,
                                                      const CategoryTable& categories) {
  if (!arr.is_array()) throw SchemaError("detections: expected a JSON array");
  std::map<ImageId, std::size_t> slot;
  std::vector<DetectionSet> sets;
  for (ImageId id : image_ids) {
    slot.emplace(id, sets.size());
    sets.push_back({id, {}});
  }
  for (std::size_t n = 0; n < arr.size(); ++n) {
    const std::string where = "detections[" + std::to_string(n) + "]";
    const Json& e = arr[n];
    const auto image_id = json_field<ImageId>(e, "image_id", where);
    const auto category_id = json_field<CategoryId>(e, "category_id", where);
    const auto box = json_field<std::vector<double>>(e, "bbox", where);
    const auto score = json_field<double>(e, "score", where);
    auto it = slot.find(image_id);
    if (it == slot.end()) throw SchemaError(where + ": unknown image id " + std::to_string(image_id));
    if (!categories.contains(category_id)) throw SchemaError(where + ": unknown category id " + std::to_string(category_id));
    if (box.size() != 4) throw SchemaError(where + ": bbox must have 4 numbers");
    const BBox b{box[0], box[1], box[2], box[3]};
    if (!b.valid() || !std::isfinite(b.x) || !std::isfinite(b.y)) throw SchemaError(where + ": bbox must have positive area");
    if (!std::isfinite(score) || score < 0.0 || score > 1.0) throw SchemaError(where + ": score must lie in [0, 1]");
    sets[it->second].detections.push_back({b, score, category_id});
  }
  return sets;
}

inline Json thresholds_to_json(const ThresholdConfig& cfg, const CategoryTable& categories) {
  Json j = Json::object();
  for (std::size_t k = 0; k < categories.size(); ++k) {
    j[std::to_string(categories[k].id)] = {{"score_threshold", cfg.per_category.at(k).score},
                                           {"nms_threshold", cfg.per_category.at(k).nms}};
  }
  return j;
}

inline ThresholdConfig thresholds_from_json(const Json& j, const CategoryTable& categories) {
  if (!j.is_object()) throw SchemaError("thresholds: expected an object keyed by category id");
  ThresholdConfig cfg;
  for (const auto& c : categories) {
    const std::string key = std::to_string(c.id);
    if (!j.contains(key)) throw SchemaError("thresholds: missing category " + key);
    const std::string where = "thresholds[" + key + "]";
    cfg.per_category.push_back(
        {json_field<double>(j[key], "score_threshold", where), json_field<double>(j[key], "nms_threshold", where)});
  }
  cfg.validate();
  return cfg;
}

}  // namespace countkit
