#pragma once

// Data model, parsing, validation and serialization for COCO-format
// annotation files and detection-result files. Datasets are immutable
// after construction; the id indexes are built once and shared freely
// across threads.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "json.hpp"

#include "ctxmask/errors.hpp"
#include "ctxmask/mask.hpp"

namespace ctxmask {

using PolygonSet = std::vector<std::vector<double>>;
using Segmentation = std::variant<PolygonSet, Rle>;

struct Category {
  std::int64_t id = 0;
  std::string name;
  std::string supercategory;

  friend bool operator==(const Category&, const Category&) = default;
};

struct ImageInfo {
  std::int64_t id = 0;
  int width = 0;
  int height = 0;
  std::string file_name;

  friend bool operator==(const ImageInfo&, const ImageInfo&) = default;
};

struct Annotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  std::array<double, 4> bbox{};  // x, y, w, h in pixels
  double area = 0.0;
  Segmentation segmentation;
  bool iscrowd = false;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct Detection {
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  std::array<double, 4> bbox{};
  double score = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// A parsed COCO-style dataset with referential integrity guaranteed:
/// every annotation's image_id and category_id resolve, ids are unique.
/// Value invariants (positive bbox sizes, crowd segmentation kind, ...)
/// are *not* enforced here — validate() reports them as violations.
class Dataset {
 public:
  Dataset() = default;

  static Dataset build(std::vector<ImageInfo> images,
                       std::vector<Annotation> annotations,
                       std::vector<Category> categories) {
    Dataset ds;
    ds.images_ = std::move(images);
    ds.annotations_ = std::move(annotations);
    ds.categories_ = std::move(categories);
    for (std::size_t i = 0; i < ds.images_.size(); ++i) {
      if (!ds.image_index_.emplace(ds.images_[i].id, i).second)
        throw ParseError("duplicate image id " + std::to_string(ds.images_[i].id));
    }
    for (std::size_t i = 0; i < ds.categories_.size(); ++i) {
      if (!ds.category_index_.emplace(ds.categories_[i].id, i).second)
        throw ParseError("duplicate category id " +
                         std::to_string(ds.categories_[i].id));
    }
    std::unordered_map<std::int64_t, std::size_t> ann_ids;
    for (std::size_t i = 0; i < ds.annotations_.size(); ++i) {
      const Annotation& a = ds.annotations_[i];
      if (!ann_ids.emplace(a.id, i).second)
        throw ParseError("duplicate annotation id " + std::to_string(a.id));
      if (!ds.image_index_.contains(a.image_id))
        throw ParseError("annotation " + std::to_string(a.id) +
                         ": unknown image id " + std::to_string(a.image_id));
      if (!ds.category_index_.contains(a.category_id))
        throw ParseError("annotation " + std::to_string(a.id) +
                         ": unknown category id " + std::to_string(a.category_id));
      ds.anns_by_image_[a.image_id].push_back(i);
      ds.anns_by_category_[a.category_id].push_back(i);
    }
    return ds;
  }

  const std::vector<ImageInfo>& images() const { return images_; }
  const std::vector<Annotation>& annotations() const { return annotations_; }
  const std::vector<Category>& categories() const { return categories_; }

  const ImageInfo* find_image(std::int64_t id) const {
    auto it = image_index_.find(id);
    return it == image_index_.end() ? nullptr : &images_[it->second];
  }
  const Category* find_category(std::int64_t id) const {
    auto it = category_index_.find(id);
    return it == category_index_.end() ? nullptr : &categories_[it->second];
  }
  const Category* find_category_by_name(std::string_view name) const {
    for (const Category& c : categories_)
      if (c.name == name) return &c;
    return nullptr;
  }

  /// Indices (into annotations()) of the annotations on one image;
  /// empty for unknown ids.
  const std::vector<std::size_t>& annotations_of_image(std::int64_t id) const {
    auto it = anns_by_image_.find(id);
    return it == anns_by_image_.end() ? empty_ : it->second;
  }
  const std::vector<std::size_t>& annotations_of_category(std::int64_t id) const {
    auto it = anns_by_category_.find(id);
    return it == anns_by_category_.end() ? empty_ : it->second;
  }

 private:
  std::vector<ImageInfo> images_;
  std::vector<Annotation> annotations_;
  std::vector<Category> categories_;
  std::unordered_map<std::int64_t, std::size_t> image_index_;
  std::unordered_map<std::int64_t, std::size_t> category_index_;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> anns_by_image_;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> anns_by_category_;
  inline static const std::vector<std::size_t> empty_{};
};

namespace detail {

using json = nlohmann::json;

inline const json& require_field(const json& obj, const char* key,
                                 const std::string& context) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw ParseError(context + ": missing field \"" + key + "\"");
  return *it;
}

inline std::int64_t as_id(const json& v, const char* key,
                          const std::string& context) {
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw ParseError(context + ": field \"" + key + "\" must be an integer");
  return v.get<std::int64_t>();
}

inline double as_number(const json& v, const char* key,
                        const std::string& context) {
  if (!v.is_number())
    throw ParseError(context + ": field \"" + key + "\" must be a number");
  return v.get<double>();
}

inline std::array<double, 4> parse_bbox(const json& v, const std::string& context) {
  if (!v.is_array() || v.size() != 4)
    throw ParseError(context + ": \"bbox\" must be an array of 4 numbers");
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) out[i] = as_number(v[i], "bbox", context);
  return out;
}

inline Segmentation parse_segmentation(const json& v, const std::string& context) {
  if (v.is_array()) {
    PolygonSet polys;
    for (const auto& p : v) {
      if (!p.is_array())
        throw ParseError(context + ": polygon segmentation must be a list of "
                                   "coordinate lists");
      std::vector<double> flat;
      flat.reserve(p.size());
      for (const auto& x : p) flat.push_back(as_number(x, "segmentation", context));
      polys.push_back(std::move(flat));
    }
    return polys;
  }
  if (v.is_object()) {
    const json& size = require_field(v, "size", context + " segmentation");
    if (!size.is_array() || size.size() != 2)
      throw ParseError(context + ": RLE \"size\" must be [height, width]");
    const int h = static_cast<int>(as_id(size[0], "size", context));
    const int w = static_cast<int>(as_id(size[1], "size", context));
    const json& counts = require_field(v, "counts", context + " segmentation");
    if (counts.is_string()) {
      try {
        return rle_decode(counts.get<std::string>(), h, w);
      } catch (const ParseError& e) {
        throw ParseError(context + ": " + e.what());
      }
    }
    if (counts.is_array()) {  // uncompressed form, normalized on write
      Rle r;
      r.height = h;
      r.width = w;
      std::int64_t total = 0;
      for (const auto& c : counts) {
        const std::int64_t n = as_id(c, "counts", context);
        if (n < 0) throw ParseError(context + ": negative RLE count");
        total += n;
        r.counts.push_back(static_cast<std::uint32_t>(n));
      }
      if (total != static_cast<std::int64_t>(h) * w)
        throw ParseError(context + ": RLE counts sum to " + std::to_string(total) +
                         ", expected " + std::to_string(static_cast<std::int64_t>(h) * w));
      return r;
    }
    throw ParseError(context + ": RLE \"counts\" must be a string or int array");
  }
  throw ParseError(context + ": unrecognized segmentation value");
}

inline json dump_segmentation(const Segmentation& seg) {
  if (const auto* polys = std::get_if<PolygonSet>(&seg)) {
    json arr = json::array();
    for (const auto& p : *polys) arr.push_back(p);
    return arr;
  }
  const Rle& r = std::get<Rle>(seg);
  return json{{"size", {r.height, r.width}},
              {"counts", rle_counts_to_string(r.counts)}};
}

}  // namespace detail

inline Dataset parse_dataset(std::string_view text) {
  using detail::as_id;
  using detail::as_number;
  using detail::require_field;
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  if (!root.is_object())
    throw ParseError("annotation file must be a JSON object");

  std::vector<ImageInfo> images;
  const auto& jimages = require_field(root, "images", "annotation file");
  for (std::size_t i = 0; i < jimages.size(); ++i) {
    const auto& j = jimages[i];
    const std::string ctx = "image entry #" + std::to_string(i);
    ImageInfo info;
    info.id = as_id(require_field(j, "id", ctx), "id", ctx);
    const std::string ictx = "image " + std::to_string(info.id);
    info.width = static_cast<int>(as_id(require_field(j, "width", ictx), "width", ictx));
    info.height = static_cast<int>(as_id(require_field(j, "height", ictx), "height", ictx));
    info.file_name = require_field(j, "file_name", ictx).get<std::string>();
    images.push_back(std::move(info));
  }

  std::vector<Category> categories;
  const auto& jcats = require_field(root, "categories", "annotation file");
  for (std::size_t i = 0; i < jcats.size(); ++i) {
    const auto& j = jcats[i];
    const std::string ctx = "category entry #" + std::to_string(i);
    Category cat;
    cat.id = as_id(require_field(j, "id", ctx), "id", ctx);
    cat.name = require_field(j, "name", "category " + std::to_string(cat.id))
                   .get<std::string>();
    if (auto it = j.find("supercategory"); it != j.end() && it->is_string())
      cat.supercategory = it->get<std::string>();
    categories.push_back(std::move(cat));
  }

  std::vector<Annotation> annotations;
  const auto& janns = require_field(root, "annotations", "annotation file");
  for (std::size_t i = 0; i < janns.size(); ++i) {
    const auto& j = janns[i];
    const std::string ctx = "annotation entry #" + std::to_string(i);
    Annotation ann;
    ann.id = as_id(require_field(j, "id", ctx), "id", ctx);
    const std::string actx = "annotation " + std::to_string(ann.id);
    ann.image_id = as_id(require_field(j, "image_id", actx), "image_id", actx);
    ann.category_id =
        as_id(require_field(j, "category_id", actx), "category_id", actx);
    ann.bbox = detail::parse_bbox(require_field(j, "bbox", actx), actx);
    ann.area = as_number(require_field(j, "area", actx), "area", actx);
    ann.segmentation =
        detail::parse_segmentation(require_field(j, "segmentation", actx), actx);
    if (auto it = j.find("iscrowd"); it != j.end()) {
      if (it->is_boolean())
        ann.iscrowd = it->get<bool>();
      else
        ann.iscrowd = as_id(*it, "iscrowd", actx) != 0;
    }
    annotations.push_back(std::move(ann));
  }

  return Dataset::build(std::move(images), std::move(annotations),
                        std::move(categories));
}

inline std::string write_dataset(const Dataset& ds) {
  nlohmann::json root;
  root["images"] = nlohmann::json::array();
  for (const ImageInfo& im : ds.images())
    root["images"].push_back({{"id", im.id},
                              {"width", im.width},
                              {"height", im.height},
                              {"file_name", im.file_name}});
  root["categories"] = nlohmann::json::array();
  for (const Category& c : ds.categories())
    root["categories"].push_back(
        {{"id", c.id}, {"name", c.name}, {"supercategory", c.supercategory}});
  root["annotations"] = nlohmann::json::array();
  for (const Annotation& a : ds.annotations())
    root["annotations"].push_back({{"id", a.id},
                                   {"image_id", a.image_id},
                                   {"category_id", a.category_id},
                                   {"bbox", a.bbox},
                                   {"area", a.area},
                                   {"segmentation", detail::dump_segmentation(a.segmentation)},
                                   {"iscrowd", a.iscrowd ? 1 : 0}});
  return root.dump(2);
}

/// Parses a COCO detection-results array and checks every record against
/// the dataset. In lenient mode records for images absent from the dataset
/// are kept (the evaluator never visits them); unknown categories and
/// out-of-range scores are always errors.
inline std::vector<Detection> parse_detections(std::string_view text,
                                               const Dataset& dataset,
                                               bool lenient = false) {
  using detail::as_id;
  using detail::as_number;
  using detail::require_field;
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  if (!root.is_array())
    throw ParseError("detection results must be a JSON array");
  std::vector<Detection> out;
  out.reserve(root.size());
  for (std::size_t i = 0; i < root.size(); ++i) {
    const auto& j = root[i];
    const std::string ctx = "detection #" + std::to_string(i);
    Detection d;
    d.image_id = as_id(require_field(j, "image_id", ctx), "image_id", ctx);
    d.category_id = as_id(require_field(j, "category_id", ctx), "category_id", ctx);
    d.bbox = detail::parse_bbox(require_field(j, "bbox", ctx), ctx);
    d.score = as_number(require_field(j, "score", ctx), "score", ctx);
    if (!lenient && dataset.find_image(d.image_id) == nullptr)
      throw ParseError(ctx + ": unknown image id " + std::to_string(d.image_id));
    if (dataset.find_category(d.category_id) == nullptr)
      throw ParseError(ctx + ": unknown category id " +
                       std::to_string(d.category_id));
    if (!(d.score >= 0.0 && d.score <= 1.0))
      throw ParseError(ctx + ": score " + std::to_string(d.score) +
                       " outside [0, 1]");
    out.push_back(d);
  }
  return out;
}

inline std::string write_detections(const std::vector<Detection>& dets) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Detection& d : dets)
    arr.push_back({{"image_id", d.image_id},
                   {"category_id", d.category_id},
                   {"bbox", d.bbox},
                   {"score", d.score}});
  return arr.dump(2);
}

/// Per-category annotation counts; every dataset category appears in the
/// result (absent ones map to 0).
inline std::map<std::int64_t, std::int64_t> annotation_counts(const Dataset& ds) {
  std::map<std::int64_t, std::int64_t> counts;
  for (const Category& c : ds.categories()) counts[c.id] = 0;
  for (const Annotation& a : ds.annotations()) ++counts[a.category_id];
  return counts;
}

/// Reports violations of the value-level invariants. Referential
/// integrity and id uniqueness cannot be violated post-construction and
/// are not re-checked. Out-of-bounds bboxes are flagged, not rejected:
/// COCO ground truth contains such boxes.
inline std::vector<std::string> validate(const Dataset& ds) {
  std::vector<std::string> out;
  auto flag = [&out](const std::string& s) { out.push_back(s); };

  std::map<std::string, std::int64_t> names;
  for (const Category& c : ds.categories()) {
    if (c.id <= 0)
      flag("category " + std::to_string(c.id) + ": id must be positive");
    if (c.name.empty())
      flag("category " + std::to_string(c.id) + ": name must be non-empty");
    auto [it, inserted] = names.emplace(c.name, c.id);
    if (!inserted && !c.name.empty())
      flag("category " + std::to_string(c.id) + ": duplicate name \"" + c.name +
           "\" (also category " + std::to_string(it->second) + ")");
  }
  for (const ImageInfo& im : ds.images()) {
    if (im.id <= 0) flag("image " + std::to_string(im.id) + ": id must be positive");
    if (im.width < 1)
      flag("image " + std::to_string(im.id) + ": width must be >= 1");
    if (im.height < 1)
      flag("image " + std::to_string(im.id) + ": height must be >= 1");
  }
  for (const Annotation& a : ds.annotations()) {
    const std::string ctx = "annotation " + std::to_string(a.id);
    if (a.id <= 0) flag(ctx + ": id must be positive");
    if (!(a.bbox[2] > 0)) flag(ctx + ": bbox width must be > 0");
    if (!(a.bbox[3] > 0)) flag(ctx + ": bbox height must be > 0");
    if (a.bbox[0] < 0) flag(ctx + ": bbox x must be >= 0");
    if (a.bbox[1] < 0) flag(ctx + ": bbox y must be >= 0");
    if (!(a.area > 0)) flag(ctx + ": area must be > 0");
    if (a.iscrowd && !std::holds_alternative<Rle>(a.segmentation))
      flag(ctx + ": iscrowd requires RLE segmentation");
    if (const auto* polys = std::get_if<PolygonSet>(&a.segmentation)) {
      for (const auto& p : *polys)
        if (p.size() < 6 || p.size() % 2 != 0)
          flag(ctx + ": polygon with fewer than 3 vertices");
    }
    if (const ImageInfo* im = ds.find_image(a.image_id)) {
      if (const auto* rle = std::get_if<Rle>(&a.segmentation)) {
        if (rle->height != im->height || rle->width != im->width)
          flag(ctx + ": RLE size " + std::to_string(rle->height) + "x" +
               std::to_string(rle->width) + " disagrees with image " +
               std::to_string(im->height) + "x" + std::to_string(im->width));
      }
      if (a.bbox[0] + a.bbox[2] > im->width || a.bbox[1] + a.bbox[3] > im->height)
        flag(ctx + ": bbox extends past image bounds");
    }
  }
  return out;
}

/// Rasterizes one annotation onto its image's pixel grid, dispatching on
/// the segmentation kind.
inline BinaryMask ann_to_mask(const Annotation& ann, const ImageInfo& image) {
  if (const auto* polys = std::get_if<PolygonSet>(&ann.segmentation))
    return rasterize_polygons(*polys, image.height, image.width);
  const Rle& rle = std::get<Rle>(ann.segmentation);
  if (rle.height != image.height || rle.width != image.width)
    throw ValidationError("annotation " + std::to_string(ann.id) + ": RLE size " +
                          std::to_string(rle.height) + "x" + std::to_string(rle.width) +
                          " disagrees with image " + std::to_string(image.height) +
                          "x" + std::to_string(image.width));
  return rle_to_mask(rle);
}

}  // namespace ctxmask
