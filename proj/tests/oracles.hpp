#pragma once

// Independent reference implementations used as test oracles. They favour
// directness over speed.

#include <algorithm>
#include <cmath>
#include <vector>

#include "countkit/data/types.hpp"
#include "countkit/detcount.hpp"
#include "countkit/gridgt.hpp"

namespace oracles {

using countkit::BBox;

/// Fraction of box b in every cell, by rasterizing the image at `ss` samples
/// per pixel with exact per-sample coverage. Samples are assigned to the cell
/// holding their centre; cell edges are integers, so each sample lies in one
/// cell.
inline std::vector<double> coverage_fractions(const BBox& b, const countkit::GridPartition& p, int ss) {
  std::vector<double> out(p.size(), 0.0);
  const double step = 1.0 / ss;
  const int W = p.width * ss, H = p.height * ss;
  std::vector<double> cx(W), cy(H);
  for (int i = 0; i < W; ++i) {
    const double x0 = i * step, x1 = x0 + step;
    cx[i] = std::max(0.0, std::min(x1, b.x + b.w) - std::max(x0, b.x));
  }
  for (int j = 0; j < H; ++j) {
    const double y0 = j * step, y1 = y0 + step;
    cy[j] = std::max(0.0, std::min(y1, b.y + b.h) - std::max(y0, b.y));
  }
  for (int j = 0; j < H; ++j) {
    if (cy[j] == 0.0) continue;
    const double yc = (j + 0.5) * step;
    int r = 0;
    while (p.y_edges[r + 1] <= yc) ++r;
    for (int i = 0; i < W; ++i) {
      if (cx[i] == 0.0) continue;
      const double xc = (i + 0.5) * step;
      int c = 0;
      while (p.x_edges[c + 1] <= xc) ++c;
      out[r * p.cols + c] += cx[i] * cy[j];
    }
  }
  for (auto& v : out) v /= b.w * b.h;
  return out;
}

/// Centre-sampled rasterization on an n x n pixel canvas spanning the image:
/// a pixel counts fully when its centre lies inside the box.
inline std::vector<double> centre_sample_fractions(const BBox& b, const countkit::GridPartition& p, int n) {
  std::vector<double> out(p.size(), 0.0);
  const double sx = static_cast<double>(p.width) / n, sy = static_cast<double>(p.height) / n;
  for (int j = 0; j < n; ++j) {
    const double yc = (j + 0.5) * sy;
    if (yc < b.y || yc >= b.y + b.h) continue;
    int r = 0;
    while (p.y_edges[r + 1] <= yc) ++r;
    for (int i = 0; i < n; ++i) {
      const double xc = (i + 0.5) * sx;
      if (xc < b.x || xc >= b.x + b.w) continue;
      int c = 0;
      while (p.x_edges[c + 1] <= xc) ++c;
      out[r * p.cols + c] += sx * sy;
    }
  }
  for (auto& v : out) v /= b.w * b.h;
  return out;
}

/// Quadratic NMS reference: repeatedly take the best remaining detection
/// (highest score, lowest index) and drop everything overlapping it beyond
/// the threshold.
inline std::vector<std::size_t> brute_force_nms(const std::vector<countkit::Detection>& d, double threshold) {
  auto overlap = [](const BBox& a, const BBox& b) {
    const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
    const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.w * a.h + b.w * b.h - inter);
  };
  std::vector<bool> alive(d.size(), true);
  std::vector<std::size_t> kept;
  while (true) {
    std::size_t best = d.size();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (alive[i] && (best == d.size() || d[i].score > d[best].score)) best = i;
    }
    if (best == d.size()) break;
    kept.push_back(best);
    alive[best] = false;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (alive[i] && overlap(d[i].bbox, d[best].bbox) > threshold) alive[i] = false;
    }
  }
  return kept;
}

}  // namespace oracles
