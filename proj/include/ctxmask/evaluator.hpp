#pragma once

// COCO-style per-category Average Precision for bbox detections:
// greedy IoU matching with crowd-ignore semantics, 101-point interpolated
// precision/recall, AP averaged over the IoU thresholds 0.50:0.05:0.95.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <vector>

#include "ctxmask/coco.hpp"

namespace ctxmask {

inline std::vector<double> default_iou_thresholds() {
  std::vector<double> t(10);
  for (int i = 0; i < 10; ++i) t[i] = 0.5 + 0.05 * i;
  return t;
}

inline std::vector<double> default_recall_thresholds() {
  std::vector<double> t(101);
  for (int i = 0; i <= 100; ++i) t[i] = i / 100.0;
  return t;
}

struct EvalParams {
  std::vector<double> iou_thresholds = default_iou_thresholds();
  std::vector<double> recall_thresholds = default_recall_thresholds();
  int max_dets = 100;
};

namespace detail {
inline void check_thresholds(const std::vector<double>& t, const char* what) {
  if (t.empty()) throw std::invalid_argument(std::string(what) + " must be non-empty");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < 0.0 || t[i] > 1.0)
      throw std::invalid_argument(std::string(what) + " must lie within [0, 1]");
    if (i > 0 && !(t[i] > t[i - 1]))
      throw std::invalid_argument(std::string(what) + " must be strictly increasing");
  }
}
}  // namespace detail

struct CategoryEval {
  std::int64_t category_id = 0;
  std::optional<double> ap;  // empty iff num_gt == 0
  std::int64_t num_gt = 0;   // non-crowd ground-truth instances
  std::int64_t num_dets = 0; // detections considered (after max_dets cut)
};

struct EvalResult {
  EvalParams params;
  std::vector<CategoryEval> per_category;  // ascending category id
  std::optional<double> map;               // mean of the defined aps
};

inline double bbox_iou(const std::array<double, 4>& a,
                       const std::array<double, 4>& b) {
  const double ix =
      std::max(0.0, std::min(a[0] + a[2], b[0] + b[2]) - std::max(a[0], b[0]));
  const double iy =
      std::max(0.0, std::min(a[1] + a[3], b[1] + b[3]) - std::max(a[1], b[1]));
  const double inter = ix * iy;
  const double uni = a[2] * a[3] + b[2] * b[3] - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// IoU variant for crowd regions: intersection over the *detection* area,
/// so a detection anywhere inside the crowd scores 1.
inline double crowd_iou(const std::array<double, 4>& det,
                        const std::array<double, 4>& crowd) {
  const double ix = std::max(
      0.0, std::min(det[0] + det[2], crowd[0] + crowd[2]) - std::max(det[0], crowd[0]));
  const double iy = std::max(
      0.0, std::min(det[1] + det[3], crowd[1] + crowd[3]) - std::max(det[1], crowd[1]));
  const double da = det[2] * det[3];
  return da > 0.0 ? (ix * iy) / da : 0.0;
}

enum class DetOutcome { kTruePositive, kFalsePositive, kIgnored };

struct DetectionLabel {
  std::size_t det_index = 0;        // index into the dets argument
  double score = 0.0;
  DetOutcome outcome = DetOutcome::kFalsePositive;
  std::int64_t matched_gt_id = -1;  // annotation id for true positives
};

/// Greedy matching for one (image, category) cell. Detections are
/// processed in descending score order (ties keep input order) and
/// truncated to max_dets. Each detection takes the unmatched non-crowd
/// ground truth of highest IoU >= iou_threshold, ties toward the earliest
/// annotation in the list; failing that, a crowd region with
/// crowd_iou >= iou_threshold absorbs it as ignored; otherwise it is a
/// false positive. Labels are returned in the processed (sorted) order.
inline std::vector<DetectionLabel> match_detections(
    const std::vector<const Annotation*>& gts,
    const std::vector<const Detection*>& dets, double iou_threshold,
    int max_dets) {
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a]->score > dets[b]->score;
  });
  if (max_dets >= 0 && order.size() > static_cast<std::size_t>(max_dets))
    order.resize(static_cast<std::size_t>(max_dets));

  std::vector<bool> gt_matched(gts.size(), false);
  std::vector<DetectionLabel> labels;
  labels.reserve(order.size());
  for (std::size_t oi : order) {
    const Detection& d = *dets[oi];
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g]->iscrowd || gt_matched[g]) continue;
      const double iou = bbox_iou(d.bbox, gts[g]->bbox);
      if (iou < iou_threshold) continue;
      if (best < 0 || iou > best_iou) {
        best = static_cast<int>(g);
        best_iou = iou;
      }
    }
    DetectionLabel label;
    label.det_index = oi;
    label.score = d.score;
    if (best >= 0) {
      gt_matched[best] = true;
      label.outcome = DetOutcome::kTruePositive;
      label.matched_gt_id = gts[best]->id;
    } else {
      bool ignored = false;
      for (const Annotation* g : gts)
        if (g->iscrowd && crowd_iou(d.bbox, g->bbox) >= iou_threshold) {
          ignored = true;
          break;
        }
      label.outcome = ignored ? DetOutcome::kIgnored : DetOutcome::kFalsePositive;
    }
    labels.push_back(label);
  }
  return labels;
}

/// 101-point interpolated AP from the score-ordered TP/FP sequence of one
/// category (ignored detections already removed). The precision envelope
/// is made non-increasing from high recall to low, then sampled at the
/// recall thresholds; thresholds beyond the reached recall contribute 0.
inline double average_precision(const std::vector<bool>& tp_sequence,
                                std::int64_t num_gt,
                                const std::vector<double>& recall_thresholds) {
  if (num_gt <= 0)
    throw std::invalid_argument("average_precision requires num_gt > 0");
  const std::size_t n = tp_sequence.size();
  std::vector<double> recall(n), precision(n);
  std::int64_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += tp_sequence[i] ? 1 : 0;
    recall[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;)
    if (precision[i] > precision[i - 1]) precision[i - 1] = precision[i];

  double sum = 0.0;
  for (double thr : recall_thresholds) {
    const auto it = std::lower_bound(recall.begin(), recall.end(), thr);
    if (it != recall.end())
      sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / static_cast<double>(recall_thresholds.size());
}

namespace detail {

struct ScoredOutcome {
  double score;
  std::size_t input_index;  // position in the full detection list
  DetOutcome outcome;
};

inline void sort_scored(std::vector<ScoredOutcome>& v) {
  std::sort(v.begin(), v.end(), [](const ScoredOutcome& a, const ScoredOutcome& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.input_index < b.input_index;
  });
}

}  // namespace detail

/// Evaluates detections against the dataset's ground truth: per category,
/// AP averaged over the IoU thresholds; map over categories that have
/// ground truth. Detections referencing images absent from the dataset
/// (lenient parsing) are skipped. Categories are independent and evaluated
/// on `jobs` threads (<= 0 means hardware concurrency); results are
/// assembled in category-id order, so the output does not depend on
/// scheduling. Score ties are broken by the detection's position in the
/// input list.
inline EvalResult evaluate(const Dataset& dataset,
                           const std::vector<Detection>& dets,
                           const EvalParams& params = {}, int jobs = 1) {
  detail::check_thresholds(params.iou_thresholds, "iou_thresholds");
  detail::check_thresholds(params.recall_thresholds, "recall_thresholds");
  if (params.max_dets < 1)
    throw std::invalid_argument("max_dets must be >= 1");

  // category -> image -> detection indices, in input order
  std::unordered_map<std::int64_t,
                     std::unordered_map<std::int64_t, std::vector<std::size_t>>>
      dets_by_cat;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dataset.find_image(dets[i].image_id) == nullptr) continue;
    dets_by_cat[dets[i].category_id][dets[i].image_id].push_back(i);
  }

  std::vector<const Category*> cats;
  cats.reserve(dataset.categories().size());
  for (const Category& c : dataset.categories()) cats.push_back(&c);
  std::sort(cats.begin(), cats.end(),
            [](const Category* a, const Category* b) { return a->id < b->id; });

  const std::size_t num_thr = params.iou_thresholds.size();
  EvalResult result;
  result.params = params;
  result.per_category.resize(cats.size());

  auto evaluate_category = [&](std::size_t ci) {
    const Category* cat = cats[ci];
    CategoryEval ce;
    ce.category_id = cat->id;
    std::vector<std::vector<detail::ScoredOutcome>> per_thr(num_thr);

    auto cat_dets_it = dets_by_cat.find(cat->id);
    for (const ImageInfo& image : dataset.images()) {
      std::vector<const Annotation*> gts;
      for (std::size_t ai : dataset.annotations_of_image(image.id)) {
        const Annotation& a = dataset.annotations()[ai];
        if (a.category_id == cat->id) gts.push_back(&a);
      }
      std::vector<const Detection*> cell_dets;
      std::vector<std::size_t> cell_indices;
      if (cat_dets_it != dets_by_cat.end()) {
        auto it = cat_dets_it->second.find(image.id);
        if (it != cat_dets_it->second.end()) {
          for (std::size_t di : it->second) {
            cell_dets.push_back(&dets[di]);
            cell_indices.push_back(di);
          }
        }
      }
      for (const Annotation* g : gts)
        if (!g->iscrowd) ++ce.num_gt;
      if (cell_dets.empty()) continue;
      ce.num_dets += std::min<std::int64_t>(
          static_cast<std::int64_t>(cell_dets.size()), params.max_dets);
      for (std::size_t t = 0; t < num_thr; ++t) {
        for (const DetectionLabel& label : match_detections(
                 gts, cell_dets, params.iou_thresholds[t], params.max_dets)) {
          per_thr[t].push_back({label.score, cell_indices[label.det_index],
                                label.outcome});
        }
      }
    }

    if (ce.num_gt > 0) {
      double ap_sum = 0.0;
      for (std::size_t t = 0; t < num_thr; ++t) {
        detail::sort_scored(per_thr[t]);
        std::vector<bool> tp_sequence;
        tp_sequence.reserve(per_thr[t].size());
        for (const auto& so : per_thr[t]) {
          if (so.outcome == DetOutcome::kIgnored) continue;
          tp_sequence.push_back(so.outcome == DetOutcome::kTruePositive);
        }
        ap_sum += average_precision(tp_sequence, ce.num_gt, params.recall_thresholds);
      }
      ce.ap = ap_sum / static_cast<double>(num_thr);
    }
    result.per_category[ci] = std::move(ce);
  };

  const unsigned hw = std::thread::hardware_concurrency();
  const std::size_t workers =
      std::min(cats.size(), jobs > 0 ? static_cast<std::size_t>(jobs)
                                     : static_cast<std::size_t>(std::max(1u, hw)));
  if (workers <= 1) {
    for (std::size_t ci = 0; ci < cats.size(); ++ci) evaluate_category(ci);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t ci = next.fetch_add(1);
          if (ci >= cats.size()) return;
          evaluate_category(ci);
        }
      });
    for (std::thread& t : pool) t.join();
  }

  double map_sum = 0.0;
  std::size_t defined = 0;
  for (const CategoryEval& ce : result.per_category)
    if (ce.ap) {
      map_sum += *ce.ap;
      ++defined;
    }
  if (defined > 0) result.map = map_sum / static_cast<double>(defined);
  return result;
}

}  // namespace ctxmask
