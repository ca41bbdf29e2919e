#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "countkit/data/types.hpp"
#include "countkit/json_io.hpp"

namespace countkit {

struct AnnotationSet {
  std::vector<SceneAnnotation> scenes;
  CategoryTable categories;

  friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;
};

/// Reads the COCO-style instances subset:
///   {"images":[{id,width,height}], "categories":[{id,name,supercategory}],
///    "annotations":[{image_id,category_id,bbox:[x,y,w,h]}]}
/// Unknown keys are ignored so real COCO files load unchanged.
inline AnnotationSet annotations_from_json(const Json& root) {
  if (!root.is_object()) throw SchemaError("annotation file: top level must be an object");
  AnnotationSet out;

  for (const auto& c : root.value("categories", Json::array())) {
    Category cat;
    cat.id = json_field<CategoryId>(c, "id", "category");
    cat.name = json_field<std::string>(c, "name", "category " + std::to_string(cat.id));
    cat.supercategory = c.contains("supercategory") ? c["supercategory"].get<std::string>() : cat.name;
    out.categories.add(std::move(cat));
  }

  std::unordered_map<ImageId, std::size_t> image_index;
  for (const auto& im : root.value("images", Json::array())) {
    SceneAnnotation scene;
    scene.image_id = json_field<ImageId>(im, "id", "image");
    const std::string where = "image " + std::to_string(scene.image_id);
    scene.width = json_field<int>(im, "width", where);
    scene.height = json_field<int>(im, "height", where);
    if (scene.width <= 0 || scene.height <= 0) {
      throw SchemaError(where + ": non-positive dimensions");
    }
    if (!image_index.emplace(scene.image_id, out.scenes.size()).second) {
      throw SchemaError("duplicate image id " + std::to_string(scene.image_id));
    }
    out.scenes.push_back(std::move(scene));
  }

  const Json annotations = root.value("annotations", Json::array());
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& a = annotations[i];
    const std::string where = "annotation " + std::to_string(i);
    const auto image_id = json_field<ImageId>(a, "image_id", where);
    const auto category_id = json_field<CategoryId>(a, "category_id", where);
    auto bbox = json_field<std::vector<double>>(a, "bbox", where);
    auto it = image_index.find(image_id);
    if (it == image_index.end()) {
      throw SchemaError(where + ": unknown image id " + std::to_string(image_id));
    }
    if (!out.categories.contains(category_id)) {
      throw SchemaError(where + ": unknown category id " + std::to_string(category_id));
    }
    if (bbox.size() != 4) throw SchemaError(where + ": bbox must have 4 numbers");
    const BBox box{bbox[0], bbox[1], bbox[2], bbox[3]};
    if (!box.valid()) throw SchemaError(where + ": bbox has non-positive width or height");
    auto& scene = out.scenes[it->second];
    if (!clip_box(box, scene.width, scene.height).valid()) {
      throw SchemaError(where + ": bbox lies outside image " + std::to_string(image_id));
    }
    scene.instances.push_back({category_id, box});
  }
  return out;
}

inline Json annotations_to_json(const AnnotationSet& set) {
  Json images = Json::array();
  Json annotations = Json::array();
  for (const auto& s : set.scenes) {
    images.push_back({{"id", s.image_id}, {"width", s.width}, {"height", s.height}});
    for (const auto& inst : s.instances) {
      annotations.push_back({{"image_id", s.image_id},
                             {"category_id", inst.category_id},
                             {"bbox", {inst.box.x, inst.box.y, inst.box.w, inst.box.h}}});
    }
  }
  Json categories = Json::array();
  for (const auto& c : set.categories) {
    categories.push_back({{"id", c.id}, {"name", c.name}, {"supercategory", c.supercategory}});
  }
  return {{"images", images}, {"categories", categories}, {"annotations", annotations}};
}

inline AnnotationSet load_annotations(const std::filesystem::path& path) {
  return annotations_from_json(read_json_file(path));
}

inline void save_annotations(const std::filesystem::path& path, const AnnotationSet& set) {
  write_text_file(path, annotations_to_json(set).dump() + "\n");
}

}  // namespace countkit
