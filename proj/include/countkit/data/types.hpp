#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "countkit/error.hpp"

namespace countkit {

using CategoryId = std::int64_t;
using ImageId = std::int64_t;

// Axis-aligned box in pixel coordinates, (x, y) is the top-left corner.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  bool valid() const { return w > 0.0 && h > 0.0; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

inline double intersection_area(const BBox& a, const BBox& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  return (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
}

// Box restricted to the [0,width]x[0,height] image rectangle; w or h may be 0
// when the box lies outside.
inline BBox clip_box(const BBox& b, double width, double height) {
  const double x0 = std::clamp(b.x, 0.0, width);
  const double y0 = std::clamp(b.y, 0.0, height);
  const double x1 = std::clamp(b.right(), 0.0, width);
  const double y1 = std::clamp(b.bottom(), 0.0, height);
  return {x0, y0, x1 - x0, y1 - y0};
}

struct Instance {
  CategoryId category_id = 0;
  BBox box;  // original (unclipped) extent

  friend bool operator==(const Instance&, const Instance&) = default;
};

struct SceneAnnotation {
  ImageId image_id = 0;
  int width = 0;
  int height = 0;
  std::vector<Instance> instances;

  friend bool operator==(const SceneAnnotation&, const SceneAnnotation&) = default;
};

struct Category {
  CategoryId id = 0;
  std::string name;
  std::string supercategory;

  friend bool operator==(const Category&, const Category&) = default;
};

/// Ordered category list. Position in the table is the category index used by
/// every per-category vector (ImageCounts, CellCounts, model outputs).
class CategoryTable {
 public:
  CategoryTable() = default;
  explicit CategoryTable(std::vector<Category> entries) {
    for (auto& e : entries) add(std::move(e));
  }

  void add(Category c) {
    if (by_id_.count(c.id)) {
      throw SchemaError("duplicate category id " + std::to_string(c.id));
    }
    if (by_name_.count(c.name)) {
      throw SchemaError("duplicate category name '" + c.name + "'");
    }
    by_id_.emplace(c.id, entries_.size());
    by_name_.emplace(c.name, entries_.size());
    entries_.push_back(std::move(c));
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Category& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<Category>& entries() const { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  bool contains(CategoryId id) const { return by_id_.count(id) != 0; }

  std::size_t index_of(CategoryId id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) {
      throw SchemaError("unknown category id " + std::to_string(id));
    }
    return it->second;
  }

  std::optional<std::size_t> find_name(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
  }

  // Distinct super-category names in first-appearance order.
  std::vector<std::string> supercategories() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) {
      if (std::find(out.begin(), out.end(), e.supercategory) == out.end()) {
        out.push_back(e.supercategory);
      }
    }
    return out;
  }

  std::vector<std::size_t> members_of(const std::string& supercategory) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].supercategory == supercategory) out.push_back(i);
    }
    return out;
  }

  friend bool operator==(const CategoryTable& a, const CategoryTable& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<Category> entries_;
  std::unordered_map<CategoryId, std::size_t> by_id_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

// Per-category counts for one image, indexed like the CategoryTable.
using ImageCounts = std::vector<double>;

// Integer ground-truth counts of annotated instances per category.
inline ImageCounts instance_counts(const SceneAnnotation& scene,
                                   const CategoryTable& categories) {
  ImageCounts counts(categories.size(), 0.0);
  for (const auto& inst : scene.instances) {
    counts[categories.index_of(inst.category_id)] += 1.0;
  }
  return counts;
}

}  // namespace countkit
