#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "countkit/data/raster.hpp"
#include "countkit/gridgt.hpp"
#include "countkit/json_io.hpp"

namespace countkit {

/// Per-cell feature vectors, values[(r * cols + c) * dim + d].
struct FeatureGrid {
  int rows = 0;
  int cols = 0;
  int dim = 0;
  std::vector<double> values;

  FeatureGrid() = default;
  FeatureGrid(int r, int c, int d)
      : rows(r), cols(c), dim(d), values(static_cast<std::size_t>(r) * c * d, 0.0) {}

  int num_cells() const { return rows * cols; }
  std::span<const double> cell(int i) const {
    return {values.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
  }
  std::span<double> cell(int i) {
    return {values.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
  }

  friend bool operator==(const FeatureGrid&, const FeatureGrid&) = default;
};

namespace featurizer {

inline constexpr int kChannels = 8;     // shape channels; category k -> k % 8
inline constexpr int kResample = 8;     // each cell is resampled to 8x8
inline constexpr int kPool = 4;         // 4x4 coarse intensity pooling
inline constexpr int kStatsPerChannel = 6;
inline constexpr int kDim = kPool * kPool + kChannels * kStatsPerChannel;  // 64

struct AxisWeight {
  int bin;
  double weight;
};

// Overlap of each pixel [i, i+1) with the `kResample` equal bins of [0, extent).
inline std::vector<std::vector<AxisWeight>> axis_weights(int extent) {
  const double step = static_cast<double>(extent) / kResample;
  std::vector<std::vector<AxisWeight>> out(extent);
  for (int i = 0; i < extent; ++i) {
    for (int b = std::min(kResample - 1, static_cast<int>(i / step)); b < kResample && b * step < i + 1; ++b) {
      const double w = std::min<double>(i + 1, (b + 1) * step) - std::max<double>(i, b * step);
      if (w > 0.0) out[i].push_back({b, w});
    }
  }
  return out;
}

}  // namespace featurizer

/// Fixed 64-dim descriptor of one rectangular cell, computed from the cell's
/// own pixels only. The cell is area-resampled to an 8x8 occupancy map per
/// shape channel and pooled to a 4x4 intensity map. Each channel then adds six
/// component statistics: the number of components lying fully inside the cell
/// (saturating at 3, scaled to [0, 1]), their mass, and the mass of cut
/// components touching the left, right, top and bottom cell sides.
inline void featurize_cell(const Raster& raster, int x0, int y0, int x1, int y1,
                           std::span<double> out) {
  using namespace featurizer;
  constexpr int R = kResample;
  const int cw = x1 - x0, ch = y1 - y0;
  const auto wx = axis_weights(cw);
  const auto wy = axis_weights(ch);
  const double bin_area = (static_cast<double>(cw) / R) * (static_cast<double>(ch) / R);

  std::array<std::array<double, R * R>, kChannels> occ{};
  for (int j = 0; j < ch; ++j) {
    for (int i = 0; i < cw; ++i) {
      const int label = raster.at(x0 + i, y0 + j);
      if (label == 0) continue;
      auto& o = occ[(label - 1) % kChannels];
      for (const auto& ay : wy[j]) {
        for (const auto& ax : wx[i]) o[ay.bin * R + ax.bin] += ax.weight * ay.weight;
      }
    }
  }
  for (auto& o : occ) {
    for (auto& v : o) v /= bin_area;
  }

  std::fill(out.begin(), out.end(), 0.0);
  constexpr int block = R / kPool;
  for (int c = 0; c < kChannels; ++c) {
    const double gray = static_cast<double>(c + 1) / kChannels;
    for (int v = 0; v < R; ++v) {
      for (int u = 0; u < R; ++u) {
        out[(v / block) * kPool + u / block] += gray * occ[c][v * R + u] / (block * block);
      }
    }
  }

  // Connected components (8-neighbourhood) of each channel inside the cell.
  // Components clear of the cell border add to a count that saturates at 3
  // and to the interior mass; a component cut by the border adds its mass to
  // every side it touches.
  std::vector<int> seen(static_cast<std::size_t>(cw) * ch, 0);
  std::vector<int> stack;
  const double mass_scale = 16.0 / (static_cast<double>(cw) * ch);
  for (int j = 0; j < ch; ++j) {
    for (int i = 0; i < cw; ++i) {
      const int label = raster.at(x0 + i, y0 + j);
      if (label == 0 || seen[j * cw + i]) continue;
      const int channel = (label - 1) % kChannels;
      double mass = 0.0;
      bool left = false, right = false, top = false, bottom = false;
      seen[j * cw + i] = 1;
      stack.assign(1, j * cw + i);
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int pi = p % cw, pj = p / cw;
        mass += 1.0;
        left = left || pi == 0;
        right = right || pi + 1 == cw;
        top = top || pj == 0;
        bottom = bottom || pj + 1 == ch;
        for (int dj = -1; dj <= 1; ++dj) {
          for (int di = -1; di <= 1; ++di) {
            const int qi = pi + di, qj = pj + dj;
            if (qi < 0 || qj < 0 || qi >= cw || qj >= ch || seen[qj * cw + qi]) continue;
            const int ql = raster.at(x0 + qi, y0 + qj);
            if (ql == 0 || (ql - 1) % kChannels != channel) continue;
            seen[qj * cw + qi] = 1;
            stack.push_back(qj * cw + qi);
          }
        }
      }
      double* f = out.data() + kPool * kPool + channel * kStatsPerChannel;
      const double m = mass * mass_scale;
      if (left || right || top || bottom) {
        if (left) f[2] += m;
        if (right) f[3] += m;
        if (top) f[4] += m;
        if (bottom) f[5] += m;
      } else {
        f[0] = std::min(3.0, f[0] * 3.0 + 1.0) / 3.0;
        f[1] += m;
      }
    }
  }
}

inline FeatureGrid featurize(const Raster& raster, int rows, int cols) {
  if (raster.empty()) throw SchemaError("featurize: empty raster");
  const GridPartition p = make_partition(raster.width, raster.height, rows, cols);
  FeatureGrid grid(rows, cols, featurizer::kDim);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      featurize_cell(raster, p.x_edges[c], p.y_edges[r], p.x_edges[c + 1], p.y_edges[r + 1],
                     grid.cell(p.index(r, c)));
    }
  }
  return grid;
}

inline Json feature_grid_to_json(const FeatureGrid& g) {
  return {{"rows", g.rows}, {"cols", g.cols}, {"dim", g.dim}, {"data", g.values}};
}

inline FeatureGrid feature_grid_from_json(const Json& j, const std::string& where) {
  FeatureGrid g;
  g.rows = json_field<int>(j, "rows", where);
  g.cols = json_field<int>(j, "cols", where);
  g.dim = json_field<int>(j, "dim", where);
  g.values = json_field<std::vector<double>>(j, "data", where);
  if (g.rows < 1 || g.cols < 1 || g.dim < 1) throw SchemaError(where + ": rows, cols, dim must be >= 1");
  if (g.values.size() != static_cast<std::size_t>(g.rows) * g.cols * g.dim) {
    throw SchemaError(where + ": data length does not match rows*cols*dim");
  }
  for (double v : g.values) {
    if (!std::isfinite(v)) throw SchemaError(where + ": non-finite feature value");
  }
  return g;
}

// Manifest: {"features": {"<image_id>": {rows, cols, dim, data}}}.
inline Json feature_manifest_to_json(const std::vector<ImageId>& ids, const std::vector<FeatureGrid>& grids) {
  Json features = Json::object();
  for (std::size_t i = 0; i < ids.size(); ++i) features[std::to_string(ids[i])] = feature_grid_to_json(grids[i]);
  return {{"features", features}};
}

inline std::vector<FeatureGrid> features_for_scenes(const Json& manifest,
                                                    const std::vector<SceneAnnotation>& scenes) {
  if (!manifest.is_object() || !manifest.contains("features")) {
    throw SchemaError("feature manifest: missing 'features' object");
  }
  const auto& f = manifest["features"];
  std::vector<FeatureGrid> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) {
    const std::string key = std::to_string(s.image_id);
    if (!f.contains(key)) throw SchemaError("feature manifest: no entry for image " + key);
    out.push_back(feature_grid_from_json(f[key], "features[" + key + "]"));
  }
  return out;
}

}  // namespace countkit
