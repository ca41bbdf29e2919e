#pragma once

#include <algorithm>
#include <vector>

#include "countkit/data/annotations.hpp"
#include "countkit/detcount.hpp"
#include "countkit/rng.hpp"

namespace countkit {

/// Simulated detector output over annotated scenes. Each image draws a score
/// offset shared by all its detections, so within an image every true box
/// outscores every spurious one while no single global threshold separates
/// them.
struct DetSynthConfig {
  double miss_rate = 0.1;       // probability a true object yields no detection
  double duplicate_rate = 0.3;  // probability of an extra, lower-scored copy
  int max_false_positives = 3;  // per image and category, drawn uniformly in [0, max]
  double offset_range = 0.2;    // per-image score offset in [-range, range]
  double true_score = 0.7;      // centre of true-detection scores before the offset
  double false_score = 0.35;    // centre of spurious scores before the offset
  double score_spread = 0.1;    // half-width of the uniform score noise
  double jitter = 0.08;         // box jitter as a fraction of the box size
  std::uint64_t seed = 1;

  void validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(miss_rate) || !unit(duplicate_rate)) throw SchemaError("detection synth: rates must lie in [0, 1]");
    if (max_false_positives < 0) throw SchemaError("detection synth: max_false_positives must be >= 0");
    if (!(offset_range >= 0.0) || !(score_spread >= 0.0) || !(jitter >= 0.0 && jitter < 0.5)) {
      throw SchemaError("detection synth: offset, spread and jitter must be non-negative (jitter < 0.5)");
    }
  }
};

namespace detail {

inline BBox jitter_box(Rng& rng, const BBox& b, double frac) {
  const double dx = rng.uniform(-frac, frac) * b.w;
  const double dy = rng.uniform(-frac, frac) * b.h;
  const double sw = 1.0 + rng.uniform(-frac, frac);
  const double sh = 1.0 + rng.uniform(-frac, frac);
  return {b.x + dx, b.y + dy, b.w * sw, b.h * sh};
}

}  // namespace detail

inline std::vector<DetectionSet> synthesize_detections(const AnnotationSet& ann, const DetSynthConfig& cfg) {
  cfg.validate();
  Rng rng = stream(cfg.seed, "detections");
  std::vector<DetectionSet> out;
  out.reserve(ann.scenes.size());
  for (const auto& scene : ann.scenes) {
    DetectionSet set{scene.image_id, {}};
    const double offset = rng.uniform(-cfg.offset_range, cfg.offset_range);
    auto score = [&](double centre) {
      return std::clamp(centre + offset + rng.uniform(-cfg.score_spread, cfg.score_spread), 0.0, 1.0);
    };
    for (const auto& inst : scene.instances) {
      if (rng.uniform() < cfg.miss_rate) continue;
      const double s = score(cfg.true_score);
      set.detections.push_back({detail::jitter_box(rng, inst.box, cfg.jitter), s, inst.category_id});
      if (rng.uniform() < cfg.duplicate_rate) {
        const double ds = std::max(0.0, s - rng.uniform(0.01, 0.1));
        set.detections.push_back({detail::jitter_box(rng, inst.box, cfg.jitter), ds, inst.category_id});
      }
    }
    for (const auto& cat : ann.categories) {
      const auto n = rng.uniform_int(0, cfg.max_false_positives);
      for (std::int64_t f = 0; f < n; ++f) {
        // Rejection-sample a box that cannot match any object of this category.
        for (int attempt = 0; attempt < 100; ++attempt) {
          const double side = rng.uniform(0.05, 0.15) * scene.width;
          const BBox b{rng.uniform(0.0, scene.width - side), rng.uniform(0.0, scene.height - side), side,
                       side * rng.uniform(0.8, 1.25)};
          bool clear = true;
          for (const auto& inst : scene.instances) {
            if (inst.category_id == cat.id && iou(b, inst.box) >= 0.3) clear = false;
          }
          if (clear) {
            set.detections.push_back({b, score(cfg.false_score), cat.id});
            break;
          }
        }
      }
    }
    out.push_back(std::move(set));
  }
  return out;
}

}  // namespace countkit
