#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "countkit/data/annotations.hpp"
#include "countkit/data/raster.hpp"
#include "countkit/rng.hpp"

namespace countkit {

struct SynthConfig {
  int num_categories = 5;
  int scene_count = 100;
  int image_size = 120;
  int count_min = 0;
  int count_max = 8;
  double scale_min = 0.06;  // object side as a fraction of image_size
  double scale_max = 0.14;
  std::uint64_t seed = 1;

  void validate() const {
    if (num_categories < 1 || num_categories > 254) throw SchemaError("synth: num_categories must be in [1, 254]");
    if (scene_count < 0) throw SchemaError("synth: scene_count must be >= 0");
    if (image_size <= 0) throw SchemaError("synth: image_size must be > 0");
    if (count_min < 0 || count_min > count_max) throw SchemaError("synth: bad count_range");
    if (!(scale_min > 0.0) || scale_min > scale_max || scale_max > 1.0) {
      throw SchemaError("synth: bad scale_range");
    }
  }
};

enum class Shape { square, circle, diamond, triangle, cross, ring, bar, saltire };

inline constexpr int kShapeCount = 8;

inline const char* shape_name(Shape s) {
  switch (s) {
    case Shape::square: return "square";
    case Shape::circle: return "circle";
    case Shape::diamond: return "diamond";
    case Shape::triangle: return "triangle";
    case Shape::cross: return "cross";
    case Shape::ring: return "ring";
    case Shape::bar: return "bar";
    case Shape::saltire: return "saltire";
  }
  return "?";
}

inline const char* shape_family(Shape s) {
  switch (s) {
    case Shape::square:
    case Shape::diamond:
    case Shape::triangle:
    case Shape::bar: return "polygon";
    case Shape::circle:
    case Shape::ring: return "curve";
    case Shape::cross:
    case Shape::saltire: return "mark";
  }
  return "?";
}

inline Shape shape_of_index(std::size_t k) { return static_cast<Shape>(k % kShapeCount); }

// Categories are shapes; past eight categories the names gain a numeric suffix.
inline CategoryTable synthetic_categories(int num_categories) {
  CategoryTable table;
  for (int k = 0; k < num_categories; ++k) {
    const Shape s = shape_of_index(k);
    std::string name = shape_name(s);
    if (k >= kShapeCount) name += std::to_string(k / kShapeCount + 1);
    table.add({k + 1, name, shape_family(s)});
  }
  return table;
}

// Whether the unit-square point (u, v) is inside the shape.
inline bool shape_contains(Shape s, double u, double v) {
  const double du = u - 0.5, dv = v - 0.5;
  const double r2 = du * du + dv * dv;
  switch (s) {
    case Shape::square: return true;
    case Shape::circle: return r2 <= 0.25;
    case Shape::diamond: return std::abs(du) + std::abs(dv) <= 0.5;
    case Shape::triangle: return 2.0 * std::abs(du) <= v;
    case Shape::cross: return std::abs(du) < 0.17 || std::abs(dv) < 0.17;
    case Shape::ring: return r2 <= 0.25 && r2 >= 0.09;
    case Shape::bar: return std::abs(dv) < 0.25;
    case Shape::saltire: return std::abs(du - dv) < 0.2 || std::abs(du + dv) < 0.2;
  }
  return false;
}

// Paints the category shape into its box; pixels are tested at their centres.
inline void render_instance(Raster& raster, const BBox& box, std::size_t category_index) {
  const Shape s = shape_of_index(category_index);
  const auto label = static_cast<std::uint8_t>(category_index + 1);
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y)));
  const int x1 = std::min(raster.width, static_cast<int>(std::ceil(box.right())));
  const int y1 = std::min(raster.height, static_cast<int>(std::ceil(box.bottom())));
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const double u = (x + 0.5 - box.x) / box.w;
      const double v = (y + 0.5 - box.y) / box.h;
      if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) continue;
      if (shape_contains(s, u, v)) raster.at(x, y) = label;
    }
  }
}

inline Raster render_scene(const SceneAnnotation& scene, const CategoryTable& categories) {
  Raster r(scene.width, scene.height);
  for (const auto& inst : scene.instances) render_instance(r, inst.box, categories.index_of(inst.category_id));
  return r;
}

struct SyntheticDataset {
  AnnotationSet annotations;
  std::vector<Raster> rasters;  // aligned with annotations.scenes
};

inline constexpr int kPlacementRetries = 100;

/// Scenes of non-overlapping shapes. Per scene and category the instance
/// count is uniform on [count_min, count_max]; each box has integer corners
/// and lies fully inside the image.
inline SyntheticDataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  SyntheticDataset out;
  out.annotations.categories = synthetic_categories(config.num_categories);
  Rng rng = stream(config.seed, "synth");
  const int size = config.image_size;
  for (int s = 0; s < config.scene_count; ++s) {
    SceneAnnotation scene;
    scene.image_id = s + 1;
    scene.width = size;
    scene.height = size;
    std::vector<int> counts(config.num_categories);
    for (auto& c : counts) c = static_cast<int>(rng.uniform_int(config.count_min, config.count_max));
    for (int k = 0; k < config.num_categories; ++k) {
      for (int n = 0; n < counts[k]; ++n) {
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
          const double scale = rng.uniform(config.scale_min, config.scale_max);
          const double aspect = rng.uniform(0.8, 1.25);
          const int w = std::clamp(static_cast<int>(std::lround(scale * size * std::sqrt(aspect))), 1, size);
          const int h = std::clamp(static_cast<int>(std::lround(scale * size / std::sqrt(aspect))), 1, size);
          const auto x = static_cast<double>(rng.uniform_int(0, size - w));
          const auto y = static_cast<double>(rng.uniform_int(0, size - h));
          const BBox box{x, y, static_cast<double>(w), static_cast<double>(h)};
          bool clash = false;
          for (const auto& other : scene.instances) {
            if (intersection_area(other.box, box) > 0.0) {
              clash = true;
              break;
            }
          }
          if (!clash) {
            scene.instances.push_back({out.annotations.categories[k].id, box});
            placed = true;
          }
        }
        if (!placed) {
          throw GenerationError("synth: could not place instance " + std::to_string(n) +
                                " of category " + std::to_string(k) + " in scene " +
                                std::to_string(s) + " after " + std::to_string(kPlacementRetries) +
                                " attempts");
        }
      }
    }
    out.rasters.push_back(render_scene(scene, out.annotations.categories));
    out.annotations.scenes.push_back(std::move(scene));
  }
  return out;
}

}  // namespace countkit
