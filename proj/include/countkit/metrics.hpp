#pragma once

#include <array>
#include <charconv>
#include <functional>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "countkit/data/raster.hpp"
#include "countkit/data/types.hpp"
#include "countkit/gridgt.hpp"
#include "countkit/json_io.hpp"
#include "countkit/rng.hpp"

namespace countkit {

/// Clamp at zero, then round to the nearest integer with halves going away
/// from zero (2.5 -> 3).
inline ImageCounts postprocess(const ImageCounts& raw) {
  ImageCounts out(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    if (!std::isfinite(raw[k])) throw NumericError("postprocess: non-finite count");
    out[k] = std::round(std::max(0.0, raw[k]));
  }
  return out;
}

inline std::vector<ImageCounts> postprocess_all(const std::vector<ImageCounts>& raw) {
  std::vector<ImageCounts> out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back(postprocess(r));
  return out;
}

namespace detail {

inline void check_aligned(const std::vector<ImageCounts>& preds, const std::vector<ImageCounts>& gts) {
  if (preds.size() != gts.size()) throw SchemaError("metrics: predictions and ground truth are not aligned");
  if (preds.empty()) throw SchemaError("metrics: no images");
}

// sqrt(mean((pred - gt)^2 / (gt + 1)^relative)) over the selected images.
inline std::optional<double> root_mean_error(const std::vector<ImageCounts>& preds,
                                             const std::vector<ImageCounts>& gts, std::size_t k, bool relative,
                                             bool nonzero_only, const std::vector<std::size_t>* index = nullptr) {
  double sum = 0.0;
  std::size_t n = 0;
  const std::size_t total = index ? index->size() : preds.size();
  for (std::size_t j = 0; j < total; ++j) {
    const std::size_t i = index ? (*index)[j] : j;
    const double gt = gts[i][k];
    if (nonzero_only && !(gt > 0.0)) continue;
    const double d = preds[i][k] - gt;
    sum += relative ? d * d / (gt + 1.0) : d * d;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return std::sqrt(sum / static_cast<double>(n));
}

}  // namespace detail

/// Root mean squared count error for category index k.
inline double rmse(const std::vector<ImageCounts>& preds, const std::vector<ImageCounts>& gts, std::size_t k) {
  detail::check_aligned(preds, gts);
  return *detail::root_mean_error(preds, gts, k, false, false);
}

/// RMSE with each squared deviation divided by (ground truth + 1).
inline double rel_rmse(const std::vector<ImageCounts>& preds, const std::vector<ImageCounts>& gts, std::size_t k) {
  detail::check_aligned(preds, gts);
  return *detail::root_mean_error(preds, gts, k, true, false);
}

enum MetricIndex : std::size_t { kRmse = 0, kRelRmse = 1, kRmseNz = 2, kRelRmseNz = 3 };
inline constexpr std::array<const char*, 4> kMetricNames = {"rmse", "rel_rmse", "rmse_nz", "rel_rmse_nz"};
inline constexpr std::array<const char*, 4> kMeanNames = {"mRMSE", "m-relRMSE", "mRMSE-nz", "m-relRMSE-nz"};

// A nonzero variant is absent when the category has no nonzero ground truth.
using MetricSet = std::array<std::optional<double>, 4>;

struct Spread {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over resamples
  int samples = 0;
};

struct CategoryMetrics {
  CategoryId id = 0;
  std::string name;
  MetricSet value;
  std::array<Spread, 4> bootstrap;
};

struct MetricsReport {
  std::vector<CategoryMetrics> categories;
  MetricSet means;  // nonzero means skip categories without nonzero ground truth
  std::array<Spread, 4> mean_bootstrap;
  std::size_t images = 0;  // N, also the size of every resample
  int resamples = 0;
  std::uint64_t seed = 0;
};

struct EvalOptions {
  int resamples = 10;
  std::uint64_t seed = 0;
  // Every resample is the test set itself; reproduces the plain metrics.
  bool identity_resamples = false;
};

namespace detail {

inline std::vector<MetricSet> category_metrics(const std::vector<ImageCounts>& preds,
                                               const std::vector<ImageCounts>& gts, std::size_t num_categories,
                                               const std::vector<std::size_t>* index) {
  std::vector<MetricSet> out(num_categories);
  for (std::size_t k = 0; k < num_categories; ++k) {
    out[k][kRmse] = root_mean_error(preds, gts, k, false, false, index);
    out[k][kRelRmse] = root_mean_error(preds, gts, k, true, false, index);
    out[k][kRmseNz] = root_mean_error(preds, gts, k, false, true, index);
    out[k][kRelRmseNz] = root_mean_error(preds, gts, k, true, true, index);
  }
  return out;
}

inline MetricSet mean_over_categories(const std::vector<MetricSet>& per) {
  MetricSet out;
  for (std::size_t m = 0; m < 4; ++m) {
    double sum = 0.0;
    int n = 0;
    for (const auto& c : per) {
      if (c[m]) {
        sum += *c[m];
        ++n;
      }
    }
    if (n > 0) out[m] = sum / n;
  }
  return out;
}

inline Spread spread(const std::vector<double>& xs) {
  Spread s;
  s.samples = static_cast<int>(xs.size());
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

}  // namespace detail

/// Post-processes the raw predictions, computes every metric family per
/// category and averaged over categories, and repeats the computation on
/// `resamples` with-replacement resamples of the images (each of size N) to
/// report mean and standard deviation.
inline MetricsReport evaluate(const std::vector<ImageCounts>& raw_preds, const std::vector<ImageCounts>& gts,
                              const CategoryTable& categories, const EvalOptions& opt = {}) {
  detail::check_aligned(raw_preds, gts);
  if (opt.resamples < 1) throw SchemaError("evaluate: resamples must be >= 1");
  const auto preds = postprocess_all(raw_preds);
  const std::size_t K = categories.size();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].size() != K || gts[i].size() != K) throw SchemaError("evaluate: count vectors do not match categories");
  }
  MetricsReport rep;
  rep.images = preds.size();
  rep.resamples = opt.resamples;
  rep.seed = opt.seed;
  const auto plain = detail::category_metrics(preds, gts, K, nullptr);
  rep.means = detail::mean_over_categories(plain);

  std::vector<std::array<std::vector<double>, 4>> per_samples(K);
  std::array<std::vector<double>, 4> mean_samples;
  Rng rng = stream(opt.seed, "bootstrap");
  std::vector<std::size_t> index(preds.size());
  for (int r = 0; r < opt.resamples; ++r) {
    for (std::size_t i = 0; i < index.size(); ++i) {
      index[i] = opt.identity_resamples ? i : static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(index.size()) - 1));
    }
    const auto per = detail::category_metrics(preds, gts, K, &index);
    const auto means = detail::mean_over_categories(per);
    for (std::size_t m = 0; m < 4; ++m) {
      for (std::size_t k = 0; k < K; ++k) {
        if (per[k][m]) per_samples[k][m].push_back(*per[k][m]);
      }
      if (means[m]) mean_samples[m].push_back(*means[m]);
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    CategoryMetrics c{categories[k].id, categories[k].name, plain[k], {}};
    for (std::size_t m = 0; m < 4; ++m) c.bootstrap[m] = detail::spread(per_samples[k][m]);
    rep.categories.push_back(std::move(c));
  }
  for (std::size_t m = 0; m < 4; ++m) rep.mean_bootstrap[m] = detail::spread(mean_samples[m]);
  return rep;
}

inline Json to_json(const MetricsReport& rep) {
  auto metric_obj = [](const MetricSet& v, const std::array<Spread, 4>& bs) {
    Json j = Json::object();
    for (std::size_t m = 0; m < 4; ++m) {
      j[kMetricNames[m]] = v[m] ? Json(*v[m]) : Json(nullptr);
      j[std::string(kMetricNames[m]) + "_bootstrap_mean"] = bs[m].samples ? Json(bs[m].mean) : Json(nullptr);
      j[std::string(kMetricNames[m]) + "_bootstrap_std"] = bs[m].samples ? Json(bs[m].std) : Json(nullptr);
    }
    return j;
  };
  Json cats = Json::array();
  for (const auto& c : rep.categories) {
    Json j = metric_obj(c.value, c.bootstrap);
    j["category_id"] = c.id;
    j["name"] = c.name;
    cats.push_back(j);
  }
  Json means = metric_obj(rep.means, rep.mean_bootstrap);
  return {{"images", rep.images}, {"resamples", rep.resamples}, {"seed", rep.seed},
          {"categories", cats},   {"mean", means}};
}

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// One row per category plus a "mean" row; absent nonzero metrics are empty.
inline std::string to_csv(const MetricsReport& rep) {
  std::string out = "row,category_id,name,images,resamples,seed";
  for (const char* m : kMetricNames) {
    out += std::string(",") + m + "," + m + "_bootstrap_mean," + m + "_bootstrap_std";
  }
  out += "\n";
  auto cells = [](const MetricSet& v, const std::array<Spread, 4>& bs) {
    std::string s;
    for (std::size_t m = 0; m < 4; ++m) {
      s += "," + (v[m] ? format_double(*v[m]) : std::string());
      s += "," + (bs[m].samples ? format_double(bs[m].mean) : std::string());
      s += "," + (bs[m].samples ? format_double(bs[m].std) : std::string());
    }
    return s;
  };
  const std::string common = "," + std::to_string(rep.images) + "," + std::to_string(rep.resamples) + "," +
                             std::to_string(rep.seed);
  for (const auto& c : rep.categories) {
    out += "category," + std::to_string(c.id) + "," + c.name + common + cells(c.value, c.bootstrap) + "\n";
  }
  out += "mean,,mean" + common + cells(rep.means, rep.mean_bootstrap) + "\n";
  return out;
}

// ---- baselines -------------------------------------------------------------

enum class BaselineKind { always_0, mean, always_1, category_mean, gt_class };

inline std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::always_0: return "always-0";
    case BaselineKind::mean: return "mean";
    case BaselineKind::always_1: return "always-1";
    case BaselineKind::category_mean: return "category-mean";
    case BaselineKind::gt_class: return "gt-class";
  }
  return "?";
}

inline BaselineKind baseline_kind_from_string(const std::string& s) {
  for (auto k : {BaselineKind::always_0, BaselineKind::mean, BaselineKind::always_1, BaselineKind::category_mean,
                 BaselineKind::gt_class}) {
    if (to_string(k) == s) return k;
  }
  throw SchemaError("unknown baseline '" + s + "' (always-0 | mean | always-1 | category-mean | gt-class)");
}

struct BaselineSpec {
  BaselineKind kind = BaselineKind::always_0;
  std::vector<double> means;  // one value for `mean`, one per category for `category-mean`
};

/// Statistic baselines. gt-class is a trained classifier and is fitted with
/// the model trainer instead.
inline BaselineSpec fit_baseline(BaselineKind kind, const std::vector<ImageCounts>& train_gts, std::size_t num_categories) {
  BaselineSpec spec{kind, {}};
  if (kind == BaselineKind::gt_class) {
    throw SchemaError("gt-class is a trained model; fit it with the trainer (model kind gt-class)");
  }
  if (kind == BaselineKind::mean || kind == BaselineKind::category_mean) {
    if (train_gts.empty()) throw SchemaError("baseline " + to_string(kind) + ": empty training set");
    std::vector<double> sums(num_categories, 0.0);
    for (const auto& g : train_gts) {
      if (g.size() != num_categories) throw SchemaError("baseline: count vector does not match categories");
      for (std::size_t k = 0; k < num_categories; ++k) sums[k] += g[k];
    }
    const auto n = static_cast<double>(train_gts.size());
    if (kind == BaselineKind::mean) {
      double total = 0.0;
      for (double s : sums) total += s;
      spec.means = {total / (n * static_cast<double>(num_categories))};
    } else {
      for (auto& s : sums) s /= n;
      spec.means = sums;
    }
  }
  return spec;
}

// Raw (un-rounded) baseline prediction; evaluation post-processes it.
inline ImageCounts predict_baseline(const BaselineSpec& spec, std::size_t num_categories) {
  switch (spec.kind) {
    case BaselineKind::always_0: return ImageCounts(num_categories, 0.0);
    case BaselineKind::always_1: return ImageCounts(num_categories, 1.0);
    case BaselineKind::mean: return ImageCounts(num_categories, spec.means.at(0));
    case BaselineKind::category_mean: return spec.means;
    case BaselineKind::gt_class: break;
  }
  throw SchemaError("gt-class predictions come from a trained model");
}

// ---- analyses --------------------------------------------------------------

struct ProfileBucket {
  std::size_t instances = 0;
  double rmse = 0.0;
};

/// RMSE of post-processed predictions grouped by ground-truth count value over
/// all (image, category) instances. With max_count >= 0, larger counts share
/// the max_count bucket.
inline std::map<int, ProfileBucket> count_error_profile(const std::vector<ImageCounts>& raw_preds,
                                                        const std::vector<ImageCounts>& gts, int max_count = -1) {
  if (raw_preds.size() != gts.size()) throw SchemaError("profile: predictions and ground truth are not aligned");
  std::map<int, std::pair<std::size_t, double>> acc;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto p = postprocess(raw_preds[i]);
    for (std::size_t k = 0; k < gts[i].size(); ++k) {
      int v = static_cast<int>(std::lround(gts[i][k]));
      if (max_count >= 0) v = std::min(v, max_count);
      const double d = p[k] - gts[i][k];
      acc[v].first += 1;
      acc[v].second += d * d;
    }
  }
  std::map<int, ProfileBucket> out;
  for (const auto& [v, a] : acc) out[v] = {a.first, std::sqrt(a.second / static_cast<double>(a.first))};
  return out;
}

struct BiasStats {
  double undercount = 0.0;  // percentages over nonzero-ground-truth instances
  double overcount = 0.0;
  double equal = 0.0;
  std::size_t instances = 0;
};

inline BiasStats count_bias_stats(const std::vector<ImageCounts>& raw_preds, const std::vector<ImageCounts>& gts) {
  if (raw_preds.size() != gts.size()) throw SchemaError("bias stats: predictions and ground truth are not aligned");
  std::size_t under = 0, over = 0, equal = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto p = postprocess(raw_preds[i]);
    for (std::size_t k = 0; k < gts[i].size(); ++k) {
      if (!(gts[i][k] > 0.0)) continue;
      if (p[k] < gts[i][k]) {
        ++under;
      } else if (p[k] > gts[i][k]) {
        ++over;
      } else {
        ++equal;
      }
    }
  }
  const std::size_t n = under + over + equal;
  if (n == 0) throw SchemaError("bias stats: no instances with nonzero ground truth");
  const double scale = 100.0 / static_cast<double>(n);
  return {under * scale, over * scale, equal * scale, n};
}

/// Element-wise mean of raw member predictions.
inline std::vector<ImageCounts> ensemble(const std::vector<std::vector<ImageCounts>>& members) {
  if (members.empty()) throw SchemaError("ensemble: no members");
  const auto& first = members.front();
  std::vector<ImageCounts> out(first.size());
  for (std::size_t i = 0; i < first.size(); ++i) out[i].assign(first[i].size(), 0.0);
  for (const auto& m : members) {
    if (m.size() != first.size()) throw SchemaError("ensemble: members cover different image sets");
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i].size() != first[i].size()) throw SchemaError("ensemble: members have different category counts");
      for (std::size_t k = 0; k < m[i].size(); ++k) out[i][k] += m[i][k];
    }
  }
  const auto n = static_cast<double>(members.size());
  for (auto& v : out) {
    for (auto& x : v) x /= n;
  }
  return out;
}

using RasterPredictor = std::function<ImageCounts(const Raster&)>;

/// Blanks each block of an m x m partition of the raster in turn and records
/// the change in the category's predicted count (masked minus original), in
/// row-major block order.
inline std::vector<double> occlusion_map(const RasterPredictor& predict, const Raster& raster, std::size_t category,
                                         int mask_grid = 4) {
  if (mask_grid < 1 || mask_grid > raster.width || mask_grid > raster.height) {
    throw SchemaError("occlusion map: a " + std::to_string(mask_grid) + "x" + std::to_string(mask_grid) +
                      " mask grid does not fit a " + std::to_string(raster.width) + "x" +
                      std::to_string(raster.height) + " image");
  }
  const double base = predict(raster).at(category);
  const GridPartition p = make_partition(raster.width, raster.height, mask_grid, mask_grid);
  std::vector<double> deltas;
  for (int r = 0; r < mask_grid; ++r) {
    for (int c = 0; c < mask_grid; ++c) {
      Raster masked = raster;
      for (int y = p.y_edges[r]; y < p.y_edges[r + 1]; ++y) {
        for (int x = p.x_edges[c]; x < p.x_edges[c + 1]; ++x) masked.at(x, y) = 0;
      }
      deltas.push_back(predict(masked).at(category) - base);
    }
  }
  return deltas;
}

}  // namespace countkit
