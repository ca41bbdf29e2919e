#pragma once

#include <vector>

#include "countkit/data/featurize.hpp"
#include "countkit/data/synth.hpp"
#include "countkit/gridgt.hpp"
#include "countkit/models/model.hpp"

namespace countkit {

/// Training/evaluation samples: features on the given grid plus both the
/// fractional cell targets and the integer image counts.
inline std::vector<Sample> make_samples(const std::vector<SceneAnnotation>& scenes,
                                        const std::vector<FeatureGrid>& features, const CategoryTable& categories) {
  if (scenes.size() != features.size()) throw SchemaError("samples: scenes and features are not aligned");
  std::vector<Sample> out;
  out.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& f = features[i];
    const GridPartition p = make_partition(scenes[i].width, scenes[i].height, f.rows, f.cols);
    out.push_back({f, cell_ground_truth(scenes[i], p, categories), instance_counts(scenes[i], categories)});
  }
  return out;
}

inline std::vector<FeatureGrid> featurize_all(const std::vector<Raster>& rasters, int rows, int cols) {
  std::vector<FeatureGrid> out;
  out.reserve(rasters.size());
  for (const auto& r : rasters) out.push_back(featurize(r, rows, cols));
  return out;
}

inline std::vector<Sample> make_samples(const SyntheticDataset& ds, int rows, int cols) {
  return make_samples(ds.annotations.scenes, featurize_all(ds.rasters, rows, cols), ds.annotations.categories);
}

}  // namespace countkit
