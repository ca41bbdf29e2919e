#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "countkit/data/types.hpp"
#include "countkit/json_io.hpp"

namespace countkit {

/// Non-overlapping rows x cols tiling of a width x height image. Cell edges
/// sit at floor(i * extent / parts), so neighbouring cells differ by at most
/// one pixel and the cells cover the image exactly.
struct GridPartition {
  int width = 0;
  int height = 0;
  int rows = 0;
  int cols = 0;
  std::vector<int> x_edges;  // cols + 1 entries
  std::vector<int> y_edges;  // rows + 1 entries

  int size() const { return rows * cols; }
  int index(int r, int c) const { return r * cols + c; }

  BBox cell(int r, int c) const {
    return {static_cast<double>(x_edges[c]), static_cast<double>(y_edges[r]),
            static_cast<double>(x_edges[c + 1] - x_edges[c]),
            static_cast<double>(y_edges[r + 1] - y_edges[r])};
  }
  BBox cell(int i) const { return cell(i / cols, i % cols); }
};

inline std::vector<int> floor_edges(int extent, int parts) {
  std::vector<int> edges(parts + 1);
  for (int i = 0; i <= parts; ++i) {
    edges[i] = static_cast<int>((static_cast<long long>(i) * extent) / parts);
  }
  return edges;
}

inline GridPartition make_partition(int width, int height, int rows, int cols) {
  if (width < 1 || height < 1 || rows < 1 || cols < 1) {
    throw SchemaError("partition: dimensions and grid size must be >= 1");
  }
  if (cols > width || rows > height) {
    throw SchemaError("partition: grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " is finer than the " + std::to_string(width) + "x" +
                      std::to_string(height) + " image");
  }
  return {width, height, rows, cols, floor_edges(width, cols), floor_edges(height, rows)};
}

/// Real-valued counts per grid cell and category; layout is
/// values[(r * cols + c) * num_categories + k].
struct CellCounts {
  int rows = 0;
  int cols = 0;
  int num_categories = 0;
  std::vector<double> values;

  CellCounts() = default;
  CellCounts(int rows_, int cols_, int k)
      : rows(rows_), cols(cols_), num_categories(k),
        values(static_cast<std::size_t>(rows_) * cols_ * k, 0.0) {}

  int num_cells() const { return rows * cols; }
  double& at(int cell, int k) { return values[static_cast<std::size_t>(cell) * num_categories + k]; }
  double at(int cell, int k) const {
    return values[static_cast<std::size_t>(cell) * num_categories + k];
  }

  friend bool operator==(const CellCounts&, const CellCounts&) = default;
};

/// Fractional per-cell targets: for each cell p and category k,
///   sum over boxes b of category k of area(p ∩ clip(b)) / area(b).
/// The denominator is the unclipped box area, so a box hanging off the image
/// contributes less than one instance in total.
inline CellCounts cell_ground_truth(const SceneAnnotation& scene, const GridPartition& partition,
                                    const CategoryTable& categories) {
  CellCounts out(partition.rows, partition.cols, static_cast<int>(categories.size()));
  for (std::size_t j = 0; j < scene.instances.size(); ++j) {
    const auto& inst = scene.instances[j];
    const double full_area = inst.box.area();
    if (!(full_area > 0.0)) {
      throw SchemaError("scene " + std::to_string(scene.image_id) + ", instance " +
                        std::to_string(j) + ": zero-area box");
    }
    const int k = static_cast<int>(categories.index_of(inst.category_id));
    const BBox clipped = clip_box(inst.box, partition.width, partition.height);
    if (!clipped.valid()) continue;
    // Only cells whose edge ranges overlap the clipped box can intersect it.
    auto first = [](const std::vector<int>& edges, double lo) {
      auto it = std::upper_bound(edges.begin(), edges.end(), lo);
      return std::max<int>(0, static_cast<int>(it - edges.begin()) - 1);
    };
    const int c0 = first(partition.x_edges, clipped.x);
    const int r0 = first(partition.y_edges, clipped.y);
    for (int r = r0; r < partition.rows && partition.y_edges[r] < clipped.bottom(); ++r) {
      for (int c = c0; c < partition.cols && partition.x_edges[c] < clipped.right(); ++c) {
        const double inter = intersection_area(partition.cell(r, c), clipped);
        if (inter > 0.0) out.at(partition.index(r, c), k) += inter / full_area;
      }
    }
  }
  return out;
}

/// Image-level count: per category, the sum of cell values clamped below at 0.
inline ImageCounts aggregate_counts(const CellCounts& cells) {
  ImageCounts out(cells.num_categories, 0.0);
  for (int i = 0; i < cells.num_cells(); ++i) {
    for (int k = 0; k < cells.num_categories; ++k) out[k] += std::max(0.0, cells.at(i, k));
  }
  return out;
}

inline Json ground_truth_to_json(ImageId image_id, const CellCounts& cells,
                                 const CategoryTable& categories) {
  Json counts = Json::object();
  for (int k = 0; k < cells.num_categories; ++k) {
    std::vector<double> flat(cells.num_cells());
    for (int i = 0; i < cells.num_cells(); ++i) flat[i] = cells.at(i, k);
    counts[std::to_string(categories[k].id)] = flat;
  }
  return {{"image_id", image_id}, {"rows", cells.rows}, {"cols", cells.cols}, {"counts", counts}};
}

}  // namespace countkit
