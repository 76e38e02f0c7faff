#pragma once

// Masked-dataset generation: for one chosen category, grey-fills the
// union of its instance masks minus every other category's pixels, image
// by image. Pixels shared with another category are skipped, so the
// number of deleted pixels is equal to or smaller than the category's
// own pixel count. Annotations are never modified; only pixels change.

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "ctxmask/coco.hpp"
#include "ctxmask/image_io.hpp"

namespace ctxmask {

using Rgb = std::array<std::uint8_t, 3>;

/// Provenance record of one masked dataset.
struct MaskManifest {
  std::int64_t masked_category_id = 0;
  Rgb grey{128, 128, 128};

  struct ImageRecord {
    std::int64_t image_id = 0;
    std::int64_t masked_pixel_count = 0;
    std::int64_t skipped_overlap_pixel_count = 0;
    std::string output_file_name;
  };
  std::vector<ImageRecord> per_image;  // ascending image id
  std::int64_t total_masked = 0;
  std::int64_t total_skipped = 0;
  std::vector<std::int64_t> degenerate_annotation_ids;  // empty instance masks

  const ImageRecord* find_image(std::int64_t id) const {
    for (const ImageRecord& r : per_image)
      if (r.image_id == id) return &r;
    return nullptr;
  }
};

/// Union of the instance masks of (image, category); empty mask when the
/// category is absent from the image.
inline BinaryMask build_category_mask(const Dataset& ds, std::int64_t image_id,
                                      std::int64_t category_id) {
  const ImageInfo* image = ds.find_image(image_id);
  if (!image)
    throw std::invalid_argument("unknown image id " + std::to_string(image_id));
  BinaryMask acc(image->width, image->height);
  for (std::size_t ai : ds.annotations_of_image(image_id)) {
    const Annotation& a = ds.annotations()[ai];
    if (a.category_id != category_id) continue;
    acc = mask_union(acc, ann_to_mask(a, *image));
  }
  return acc;
}

/// Union of the instance masks of every *other* category on the image.
inline BinaryMask build_exclusion_mask(const Dataset& ds, std::int64_t image_id,
                                       std::int64_t category_id) {
  const ImageInfo* image = ds.find_image(image_id);
  if (!image)
    throw std::invalid_argument("unknown image id " + std::to_string(image_id));
  BinaryMask acc(image->width, image->height);
  for (std::size_t ai : ds.annotations_of_image(image_id)) {
    const Annotation& a = ds.annotations()[ai];
    if (a.category_id == category_id) continue;
    acc = mask_union(acc, ann_to_mask(a, *image));
  }
  return acc;
}

/// Returns a copy of the image with every pixel inside the region set to
/// grey; pixels outside the region are bit-identical to the input.
inline RasterImage apply_grey(const RasterImage& image, const BinaryMask& region,
                              Rgb grey) {
  if (region.width != image.width || region.height != image.height)
    throw std::invalid_argument("apply_grey: region dimensions differ from image");
  RasterImage out = image;
  for (int r = 0; r < image.height; ++r)
    for (int c = 0; c < image.width; ++c)
      if (region.at(r, c)) {
        std::uint8_t* p = out.px(r, c);
        p[0] = grey[0];
        p[1] = grey[1];
        p[2] = grey[2];
      }
  return out;
}

struct MaskOptions {
  Rgb grey{128, 128, 128};
  bool jpeg_output = false;  // invariants then hold only pre-encoding
  int jpeg_quality = 92;
  int jobs = 1;              // <= 0 means hardware concurrency
};

inline void write_manifest(const MaskManifest& m,
                           const std::filesystem::path& out_root) {
  nlohmann::json root;
  root["masked_category_id"] = m.masked_category_id;
  root["grey"] = {m.grey[0], m.grey[1], m.grey[2]};
  root["images"] = nlohmann::json::array();
  for (const auto& r : m.per_image)
    root["images"].push_back(
        {{"image_id", r.image_id},
         {"masked_pixel_count", r.masked_pixel_count},
         {"skipped_overlap_pixel_count", r.skipped_overlap_pixel_count},
         {"output_file_name", r.output_file_name}});
  root["total_masked_pixel_count"] = m.total_masked;
  root["total_skipped_overlap_pixel_count"] = m.total_skipped;
  root["degenerate_annotation_ids"] = m.degenerate_annotation_ids;
  const auto path =
      out_root / ("manifest_" + std::to_string(m.masked_category_id) + ".json");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << root.dump(2) << '\n';
}

inline MaskManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed manifest " + path.string() + ": " + e.what());
  }
  MaskManifest m;
  m.masked_category_id = root.at("masked_category_id").get<std::int64_t>();
  const auto& grey = root.at("grey");
  for (int i = 0; i < 3; ++i) m.grey[i] = grey.at(i).get<std::uint8_t>();
  for (const auto& j : root.at("images")) {
    MaskManifest::ImageRecord r;
    r.image_id = j.at("image_id").get<std::int64_t>();
    r.masked_pixel_count = j.at("masked_pixel_count").get<std::int64_t>();
    r.skipped_overlap_pixel_count =
        j.at("skipped_overlap_pixel_count").get<std::int64_t>();
    r.output_file_name = j.at("output_file_name").get<std::string>();
    m.per_image.push_back(std::move(r));
  }
  m.total_masked = root.value("total_masked_pixel_count", std::int64_t{0});
  m.total_skipped = root.value("total_skipped_overlap_pixel_count", std::int64_t{0});
  if (auto it = root.find("degenerate_annotation_ids"); it != root.end())
    m.degenerate_annotation_ids = it->get<std::vector<std::int64_t>>();
  return m;
}

/// Writes the masked variant of every image under out_root (original
/// relative file names kept, so the unchanged annotation file still
/// resolves) and the manifest alongside. Images without the category are
/// byte-copied. Per-image work runs on `jobs` threads; the manifest is
/// assembled in ascending image id order regardless of completion order.
inline MaskManifest generate_masked_dataset(const Dataset& ds,
                                            const std::filesystem::path& images_root,
                                            std::int64_t category_id,
                                            const MaskOptions& opts,
                                            const std::filesystem::path& out_root) {
  namespace fs = std::filesystem;
  if (ds.find_category(category_id) == nullptr)
    throw std::invalid_argument("unknown category id " + std::to_string(category_id));

  std::vector<const ImageInfo*> order;
  order.reserve(ds.images().size());
  for (const ImageInfo& im : ds.images()) order.push_back(&im);
  std::sort(order.begin(), order.end(),
            [](const ImageInfo* a, const ImageInfo* b) { return a->id < b->id; });

  fs::create_directories(out_root);

  MaskManifest manifest;
  manifest.masked_category_id = category_id;
  manifest.grey = opts.grey;
  manifest.per_image.resize(order.size());
  std::mutex degenerate_mutex;

  auto process = [&](std::size_t idx) {
    const ImageInfo& image = *order[idx];
    const fs::path src = images_root / image.file_name;
    const fs::path dst = out_root / image.file_name;
    if (dst.has_parent_path()) fs::create_directories(dst.parent_path());

    MaskManifest::ImageRecord rec;
    rec.image_id = image.id;
    rec.output_file_name = image.file_name;

    bool has_category = false;
    for (std::size_t ai : ds.annotations_of_image(image.id))
      if (ds.annotations()[ai].category_id == category_id) has_category = true;

    if (!has_category) {
      std::error_code ec;
      fs::copy_file(src, dst, fs::copy_options::overwrite_existing, ec);
      if (ec) throw IoError("cannot copy " + src.string() + ": " + ec.message());
      manifest.per_image[idx] = std::move(rec);
      return;
    }

    RasterImage pixels = read_image(src);
    if (pixels.width != image.width || pixels.height != image.height)
      throw ValidationError("image " + std::to_string(image.id) + ": file is " +
                            std::to_string(pixels.width) + "x" +
                            std::to_string(pixels.height) + " but annotations say " +
                            std::to_string(image.width) + "x" +
                            std::to_string(image.height));

    BinaryMask category_mask(image.width, image.height);
    for (std::size_t ai : ds.annotations_of_image(image.id)) {
      const Annotation& a = ds.annotations()[ai];
      if (a.category_id != category_id) continue;
      BinaryMask instance = ann_to_mask(a, image);
      if (mask_area(instance) == 0) {
        std::lock_guard<std::mutex> lock(degenerate_mutex);
        manifest.degenerate_annotation_ids.push_back(a.id);
        continue;
      }
      category_mask = mask_union(category_mask, instance);
    }
    const BinaryMask exclusion = build_exclusion_mask(ds, image.id, category_id);
    const BinaryMask region = mask_subtract(category_mask, exclusion);
    rec.masked_pixel_count = mask_area(region);
    rec.skipped_overlap_pixel_count = mask_area(category_mask) - rec.masked_pixel_count;

    const RasterImage masked = apply_grey(pixels, region, opts.grey);
    if (opts.jpeg_output)
      write_jpeg(dst, masked, opts.jpeg_quality);
    else
      write_png(dst, masked);
    manifest.per_image[idx] = std::move(rec);
  };

  const unsigned hw = std::thread::hardware_concurrency();
  const std::size_t jobs = opts.jobs > 0 ? static_cast<std::size_t>(opts.jobs)
                                         : std::max(1u, hw);
  if (jobs <= 1 || order.size() <= 1) {
    for (std::size_t i = 0; i < order.size(); ++i) process(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= order.size()) return;
        try {
          process(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(jobs, order.size()); ++t)
      pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  std::sort(manifest.degenerate_annotation_ids.begin(),
            manifest.degenerate_annotation_ids.end());
  for (const auto& r : manifest.per_image) {
    manifest.total_masked += r.masked_pixel_count;
    manifest.total_skipped += r.skipped_overlap_pixel_count;
  }
  write_manifest(manifest, out_root);
  return manifest;
}

}  // namespace ctxmask
