#pragma once

// Shared handcrafted fixtures and the seeded random-instance generator
// used by the evaluator oracle suite.

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ctxmask/coco.hpp"
#include "ctxmask/evaluator.hpp"

namespace fixtures {

inline ctxmask::PolygonSet rect_polygon(double x, double y, double w, double h) {
  return {{x, y, x + w, y, x + w, y + h, x, y + h}};
}

inline ctxmask::Annotation rect_ann(std::int64_t id, std::int64_t image_id,
                                    std::int64_t category_id, double x, double y,
                                    double w, double h) {
  ctxmask::Annotation a;
  a.id = id;
  a.image_id = image_id;
  a.category_id = category_id;
  a.bbox = {x, y, w, h};
  a.area = w * h;
  a.segmentation = rect_polygon(x, y, w, h);
  a.iscrowd = false;
  return a;
}

inline ctxmask::Annotation crowd_ann(std::int64_t id, std::int64_t image_id,
                                     std::int64_t category_id, int img_w, int img_h,
                                     double x, double y, double w, double h) {
  ctxmask::Annotation a;
  a.id = id;
  a.image_id = image_id;
  a.category_id = category_id;
  a.bbox = {x, y, w, h};
  a.area = w * h;
  ctxmask::BinaryMask m(img_w, img_h);
  for (int r = static_cast<int>(y); r < static_cast<int>(y + h) && r < img_h; ++r)
    for (int c = static_cast<int>(x); c < static_cast<int>(x + w) && c < img_w; ++c)
      m.set(r, c, true);
  a.segmentation = ctxmask::rle_from_mask(m);
  a.iscrowd = true;
  return a;
}

/// Handcrafted annotation file: 2 images, 1 category, 3 annotations (one
/// RLE crowd, two polygon), plus unknown fields that parsers must ignore.
/// Crowd RLE "088" decodes to counts [0, 8, 8]: the left two columns of a
/// 4x4 image in column-major order.
inline std::string tiny_dataset_json() {
  return R"({
  "info": {"description": "hand fixture", "version": "1"},
  "licenses": [{"id": 1, "name": "none"}],
  "images": [
    {"id": 1, "width": 8, "height": 6, "file_name": "img1.png", "flickr_url": "x"},
    {"id": 2, "width": 4, "height": 4, "file_name": "img2.png"}
  ],
  "categories": [
    {"id": 1, "name": "widget", "supercategory": "things"}
  ],
  "annotations": [
    {"id": 1, "image_id": 1, "category_id": 1, "bbox": [1, 1, 3, 2], "area": 6,
     "segmentation": [[1, 1, 4, 1, 4, 3, 1, 3]], "iscrowd": 0, "extra": true},
    {"id": 2, "image_id": 1, "category_id": 1, "bbox": [5, 2, 2, 3], "area": 6,
     "segmentation": [[5, 2, 7, 2, 7, 5, 5, 5]], "iscrowd": 0},
    {"id": 3, "image_id": 2, "category_id": 1, "bbox": [0, 0, 2, 4], "area": 8,
     "segmentation": {"size": [4, 4], "counts": "088"}, "iscrowd": 1}
  ]
})";
}

struct EvalInstance {
  ctxmask::Dataset dataset;
  std::vector<ctxmask::Detection> detections;
};

/// Small random evaluation instance: up to 3 images, 2 categories,
/// annotations with an occasional crowd, up to 6 detections. Integer-grid
/// boxes and a coarse score grid force plenty of ties; about half the
/// detections are jittered copies of ground-truth boxes.
inline EvalInstance random_eval_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&rng](int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  };

  const int n_images = pick(1, 3);
  const int n_cats = pick(1, 2);

  std::vector<ctxmask::ImageInfo> images;
  for (int i = 1; i <= n_images; ++i) {
    const int w = pick(20, 40);
    const int h = pick(20, 40);
    images.push_back({i, w, h, "img" + std::to_string(i) + ".png"});
  }
  std::vector<ctxmask::Category> categories;
  for (int c = 1; c <= n_cats; ++c)
    categories.push_back({c, "cat" + std::to_string(c), ""});

  std::vector<ctxmask::Annotation> annotations;
  std::vector<std::array<double, 4>> gt_boxes;
  std::int64_t next_id = 1;
  for (const ctxmask::ImageInfo& im : images) {
    for (const ctxmask::Category& cat : categories) {
      const int count = pick(0, 3);
      for (int k = 0; k < count; ++k) {
        const int w = pick(3, 12);
        const int h = pick(3, 12);
        const int x = pick(0, im.width - w);
        const int y = pick(0, im.height - h);
        if (pick(1, 5) == 1) {
          annotations.push_back(
              crowd_ann(next_id++, im.id, cat.id, im.width, im.height, x, y, w, h));
        } else {
          annotations.push_back(rect_ann(next_id++, im.id, cat.id, x, y, w, h));
          gt_boxes.push_back({double(x), double(y), double(w), double(h)});
        }
      }
    }
  }

  EvalInstance out;
  out.dataset = ctxmask::Dataset::build(images, annotations, categories);

  const int n_dets = pick(0, 6);
  for (int d = 0; d < n_dets; ++d) {
    ctxmask::Detection det;
    det.image_id = pick(1, n_images);
    det.category_id = pick(1, n_cats);
    det.score = 0.05 * pick(1, 19);  // coarse grid: ties are common
    const ctxmask::ImageInfo& im = *out.dataset.find_image(det.image_id);
    if (!gt_boxes.empty() && pick(0, 2) > 0) {
      const auto& g = gt_boxes[static_cast<std::size_t>(pick(0, int(gt_boxes.size()) - 1))];
      if (pick(0, 2) == 0) {
        det.bbox = g;  // exact echo
      } else {
        det.bbox = {g[0] + pick(-2, 2), g[1] + pick(-2, 2),
                    std::max(1.0, g[2] + pick(-1, 1)), std::max(1.0, g[3] + pick(-1, 1))};
      }
    } else {
      const int w = pick(2, 14);
      const int h = pick(2, 14);
      det.bbox = {double(pick(0, std::max(0, im.width - w))),
                  double(pick(0, std::max(0, im.height - h))), double(w), double(h)};
    }
    out.detections.push_back(det);
  }
  return out;
}

}  // namespace fixtures
