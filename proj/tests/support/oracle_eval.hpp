#pragma once

// Brute-force reference for the detection evaluator, written straight
// from the matching and AP definitions and kept independent of the
// library's implementation:
//   - its own box-overlap arithmetic,
//   - greedy matching with the stated rules (score order with input-order
//     ties, best-IoU ground truth with earliest-annotation ties, crowd
//     regions absorb otherwise-unmatched detections),
//   - AP as an explicit sweep: for every recall threshold, the best
//     precision among *all* score-cutoff prefixes reaching that recall.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "ctxmask/coco.hpp"
#include "ctxmask/evaluator.hpp"

namespace oracle {

using Box = std::array<double, 4>;

inline double seg_overlap(double a0, double alen, double b0, double blen) {
  const double lo = std::max(a0, b0);
  const double hi = std::min(a0 + alen, b0 + blen);
  return hi > lo ? hi - lo : 0.0;
}

inline double box_iou(const Box& a, const Box& b) {
  const double inter =
      seg_overlap(a[0], a[2], b[0], b[2]) * seg_overlap(a[1], a[3], b[1], b[3]);
  const double uni = a[2] * a[3] + b[2] * b[3] - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline double crowd_fraction(const Box& det, const Box& crowd) {
  const double inter = seg_overlap(det[0], det[2], crowd[0], crowd[2]) *
                       seg_overlap(det[1], det[3], crowd[1], crowd[3]);
  const double det_area = det[2] * det[3];
  return det_area > 0.0 ? inter / det_area : 0.0;
}

enum class Out { kTp, kFp, kIgnored };

struct CellGt {
  Box bbox;
  bool crowd = false;
};

struct CellDet {
  Box bbox;
  double score = 0.0;
  std::size_t input_index = 0;  // position in the full detection list
};

struct LabeledDet {
  double score = 0.0;
  std::size_t input_index = 0;
  Out out = Out::kFp;
};

inline std::vector<LabeledDet> match_cell(const std::vector<CellGt>& gts,
                                          std::vector<CellDet> dets, double thr,
                                          int max_dets) {
  std::sort(dets.begin(), dets.end(), [](const CellDet& a, const CellDet& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.input_index < b.input_index;
  });
  if (static_cast<int>(dets.size()) > max_dets) dets.resize(max_dets);

  std::vector<char> taken(gts.size(), 0);
  std::vector<LabeledDet> out;
  for (const CellDet& d : dets) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].crowd || taken[g]) continue;
      const double iou = box_iou(d.bbox, gts[g].bbox);
      if (iou >= thr && iou > best_iou) {  // ties keep the earliest gt
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    LabeledDet ld{d.score, d.input_index, Out::kFp};
    if (best >= 0) {
      taken[best] = 1;
      ld.out = Out::kTp;
    } else {
      for (const CellGt& g : gts)
        if (g.crowd && crowd_fraction(d.bbox, g.bbox) >= thr) {
          ld.out = Out::kIgnored;
          break;
        }
    }
    out.push_back(ld);
  }
  return out;
}

/// AP by explicit cutoff sweep: precision/recall at every prefix of the
/// sorted sequence (ignored detections removed); for each recall
/// threshold take the maximum precision over all prefixes whose recall
/// reaches it, 0 if none does.
inline double ap_sweep(const std::vector<std::pair<double, bool>>& scored_tp,
                       std::int64_t num_gt,
                       const std::vector<double>& recall_thresholds) {
  std::vector<double> precision, recall;
  std::int64_t tp = 0;
  for (std::size_t k = 0; k < scored_tp.size(); ++k) {
    tp += scored_tp[k].second ? 1 : 0;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
  }
  double total = 0.0;
  for (double thr : recall_thresholds) {
    double best = 0.0;
    for (std::size_t k = 0; k < precision.size(); ++k)
      if (recall[k] >= thr) best = std::max(best, precision[k]);
    total += best;
  }
  return total / static_cast<double>(recall_thresholds.size());
}

struct Result {
  std::map<std::int64_t, std::optional<double>> ap;
  std::map<std::int64_t, std::int64_t> num_gt;
  std::optional<double> map;
};

inline Result evaluate(const ctxmask::Dataset& ds,
                       const std::vector<ctxmask::Detection>& dets,
                       const ctxmask::EvalParams& params) {
  Result result;
  for (const ctxmask::Category& cat : ds.categories()) {
    std::int64_t num_gt = 0;
    for (std::size_t ai : ds.annotations_of_category(cat.id))
      if (!ds.annotations()[ai].iscrowd) ++num_gt;
    result.num_gt[cat.id] = num_gt;
    if (num_gt == 0) {
      result.ap[cat.id] = std::nullopt;
      continue;
    }

    double ap_total = 0.0;
    for (double thr : params.iou_thresholds) {
      std::vector<LabeledDet> merged;
      for (const ctxmask::ImageInfo& image : ds.images()) {
        std::vector<CellGt> gts;
        for (std::size_t ai : ds.annotations_of_image(image.id)) {
          const ctxmask::Annotation& a = ds.annotations()[ai];
          if (a.category_id == cat.id) gts.push_back({a.bbox, a.iscrowd});
        }
        std::vector<CellDet> cell;
        for (std::size_t i = 0; i < dets.size(); ++i)
          if (dets[i].image_id == image.id && dets[i].category_id == cat.id)
            cell.push_back({dets[i].bbox, dets[i].score, i});
        if (cell.empty()) continue;
        for (const LabeledDet& ld :
             match_cell(gts, std::move(cell), thr, params.max_dets))
          merged.push_back(ld);
      }
      std::sort(merged.begin(), merged.end(),
                [](const LabeledDet& a, const LabeledDet& b) {
                  if (a.score != b.score) return a.score > b.score;
                  return a.input_index < b.input_index;
                });
      std::vector<std::pair<double, bool>> scored_tp;
      for (const LabeledDet& ld : merged) {
        if (ld.out == Out::kIgnored) continue;
        scored_tp.emplace_back(ld.score, ld.out == Out::kTp);
      }
      ap_total += ap_sweep(scored_tp, num_gt, params.recall_thresholds);
    }
    result.ap[cat.id] = ap_total / static_cast<double>(params.iou_thresholds.size());
  }

  double sum = 0.0;
  std::size_t defined = 0;
  for (const auto& [id, ap] : result.ap)
    if (ap) {
      sum += *ap;
      ++defined;
    }
  if (defined > 0) result.map = sum / static_cast<double>(defined);
  return result;
}

}  // namespace oracle
