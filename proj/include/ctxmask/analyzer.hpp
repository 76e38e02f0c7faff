#pragma once

// AP-change analysis between a baseline evaluation and the per-category
// masked evaluations: change percentages (100 * masked / baseline),
// two-sided deviations, per-target top-k context rankings, context
// dominance flags and the annotation-count scatter data.
//
// "AP change in %" is the *ratio* of masked to baseline AP, not a
// percentage-point difference: an unaffected category reads ~100%, a
// collapsed one ~0%.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctxmask/coco.hpp"
#include "ctxmask/eval_io.hpp"
#include "ctxmask/evaluator.hpp"

namespace ctxmask {

struct ContextEntry {
  std::int64_t target_category_id = 0;
  std::int64_t masked_category_id = 0;
  double change_pct = 0.0;   // 100 * masked AP / baseline AP
  double deviation = 0.0;    // |change_pct - 100|
  bool is_self = false;

  friend bool operator==(const ContextEntry&, const ContextEntry&) = default;
};

/// Empty when the baseline AP is zero (the ratio is undefined).
inline std::optional<double> change_pct(double baseline_ap, double masked_ap) {
  if (baseline_ap < 0.0)
    throw std::invalid_argument("baseline AP must be non-negative");
  if (baseline_ap == 0.0) return std::nullopt;
  return 100.0 * masked_ap / baseline_ap;
}

namespace detail {

inline std::optional<double> ap_of(const EvalResult& result, std::int64_t category) {
  for (const CategoryEval& ce : result.per_category)
    if (ce.category_id == category) return ce.ap;
  return std::nullopt;
}

inline void sort_entries(std::vector<ContextEntry>& entries) {
  std::sort(entries.begin(), entries.end(),
            [](const ContextEntry& a, const ContextEntry& b) {
              if (a.deviation != b.deviation) return a.deviation > b.deviation;
              return a.masked_category_id < b.masked_category_id;
            });
}

}  // namespace detail

/// Entries for every masked dataset in which the target's AP is defined,
/// sorted by deviation descending (ties by masked category id ascending),
/// truncated to k. Requires a defined, positive baseline AP.
inline std::vector<ContextEntry> top_k_context(
    std::int64_t target, const EvalResult& baseline,
    const std::map<std::int64_t, EvalResult>& masked, int k) {
  const std::optional<double> base = detail::ap_of(baseline, target);
  if (!base || *base <= 0.0)
    throw std::invalid_argument("target category " + std::to_string(target) +
                                " has no positive baseline AP");
  std::vector<ContextEntry> entries;
  for (const auto& [masked_cat, result] : masked) {
    const std::optional<double> masked_ap = detail::ap_of(result, target);
    if (!masked_ap) continue;
    ContextEntry e;
    e.target_category_id = target;
    e.masked_category_id = masked_cat;
    e.change_pct = *change_pct(*base, *masked_ap);
    e.deviation = std::abs(e.change_pct - 100.0);
    e.is_self = masked_cat == target;
    entries.push_back(e);
  }
  detail::sort_entries(entries);
  if (k >= 0 && entries.size() > static_cast<std::size_t>(k))
    entries.resize(static_cast<std::size_t>(k));
  return entries;
}

/// True iff masking some other category degrades the target more than
/// masking the target itself (strict inequality). Empty when the self
/// entry or every non-self entry is missing.
inline std::optional<bool> context_dominant(std::int64_t target,
                                            const std::vector<ContextEntry>& entries) {
  std::optional<double> self_change;
  double min_other = std::numeric_limits<double>::infinity();
  bool has_other = false;
  for (const ContextEntry& e : entries) {
    if (e.target_category_id != target) continue;
    if (e.is_self) {
      self_change = e.change_pct;
    } else {
      has_other = true;
      min_other = std::min(min_other, e.change_pct);
    }
  }
  if (!self_change || !has_other) return std::nullopt;
  return min_other < *self_change;
}

struct TargetAnalysis {
  std::int64_t category_id = 0;
  double baseline_ap = 0.0;
  std::int64_t annotation_count = 0;
  std::vector<ContextEntry> entries;  // all masked datasets, sorted
  std::vector<ContextEntry> top;      // first k of the above
  std::optional<bool> dominant;
};

struct AnalysisReport {
  EvalResult baseline;
  int top_k = 3;
  std::vector<TargetAnalysis> targets;  // ascending category id
  std::vector<std::pair<std::int64_t, std::string>> excluded;  // (id, reason)
  std::map<std::int64_t, std::int64_t> annotation_counts;
  std::map<std::int64_t, std::string> category_names;
};

/// Builds the full report. Targets whose baseline AP is undefined or zero
/// are excluded from every ranking, with an explicit notice.
inline AnalysisReport analyze(const Dataset& dataset, const EvalResult& baseline,
                              const std::map<std::int64_t, EvalResult>& masked,
                              int top_k = 3) {
  if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
  AnalysisReport report;
  report.baseline = baseline;
  report.top_k = top_k;
  report.annotation_counts = annotation_counts(dataset);
  for (const Category& c : dataset.categories())
    report.category_names[c.id] = c.name;

  std::vector<std::int64_t> ids;
  for (const CategoryEval& ce : baseline.per_category) ids.push_back(ce.category_id);
  std::sort(ids.begin(), ids.end());

  for (std::int64_t id : ids) {
    const std::optional<double> base = detail::ap_of(baseline, id);
    if (!base) {
      report.excluded.emplace_back(id, "baseline AP undefined (no ground truth)");
      continue;
    }
    if (*base <= 0.0) {
      report.excluded.emplace_back(id, "baseline AP is zero (change ratio undefined)");
      continue;
    }
    TargetAnalysis ta;
    ta.category_id = id;
    ta.baseline_ap = *base;
    if (auto it = report.annotation_counts.find(id);
        it != report.annotation_counts.end())
      ta.annotation_count = it->second;
    ta.entries = top_k_context(id, baseline, masked, -1);  // untruncated
    ta.top.assign(ta.entries.begin(),
                  ta.entries.begin() +
                      std::min<std::size_t>(ta.entries.size(),
                                            static_cast<std::size_t>(top_k)));
    ta.dominant = context_dominant(id, ta.entries);
    report.targets.push_back(std::move(ta));
  }
  return report;
}

namespace detail {
inline double min_non_self_change(const TargetAnalysis& ta) {
  double m = std::numeric_limits<double>::infinity();
  for (const ContextEntry& e : ta.entries)
    if (!e.is_self) m = std::min(m, e.change_pct);
  return m;
}
}  // namespace detail

/// Target categories sorted ascending by the smallest non-self change
/// percentage (the strongest context effect first), ties by id, truncated
/// to n. Targets with no non-self entries sort last.
inline std::vector<std::int64_t> rank_context_dependent(const AnalysisReport& report,
                                                        int n = 15) {
  std::vector<const TargetAnalysis*> rows;
  for (const TargetAnalysis& ta : report.targets) rows.push_back(&ta);
  std::sort(rows.begin(), rows.end(),
            [](const TargetAnalysis* a, const TargetAnalysis* b) {
              const double ma = detail::min_non_self_change(*a);
              const double mb = detail::min_non_self_change(*b);
              if (ma != mb) return ma < mb;
              return a->category_id < b->category_id;
            });
  std::vector<std::int64_t> out;
  for (const TargetAnalysis* ta : rows) {
    if (n >= 0 && out.size() >= static_cast<std::size_t>(n)) break;
    out.push_back(ta->category_id);
  }
  return out;
}

struct TopAccuracyRow {
  std::int64_t category_id = 0;
  double baseline_ap = 0.0;
  std::vector<ContextEntry> top;  // first 3 entries
};

/// Categories sorted by baseline AP descending (ties by id ascending),
/// truncated to n, each paired with its top-3 context entries.
inline std::vector<TopAccuracyRow> top_accuracy_table(const AnalysisReport& report,
                                                      int n = 10) {
  std::vector<const TargetAnalysis*> rows;
  for (const TargetAnalysis& ta : report.targets) rows.push_back(&ta);
  std::sort(rows.begin(), rows.end(),
            [](const TargetAnalysis* a, const TargetAnalysis* b) {
              if (a->baseline_ap != b->baseline_ap)
                return a->baseline_ap > b->baseline_ap;
              return a->category_id < b->category_id;
            });
  std::vector<TopAccuracyRow> out;
  for (const TargetAnalysis* ta : rows) {
    if (n >= 0 && out.size() >= static_cast<std::size_t>(n)) break;
    TopAccuracyRow row;
    row.category_id = ta->category_id;
    row.baseline_ap = ta->baseline_ap;
    row.top.assign(ta->entries.begin(),
                   ta->entries.begin() + std::min<std::size_t>(ta->entries.size(), 3));
    out.push_back(std::move(row));
  }
  return out;
}

struct ScatterRow {
  std::int64_t category_id = 0;
  std::int64_t annotation_count = 0;
  double baseline_ap = 0.0;
};

/// One row per category with a defined baseline AP.
inline std::vector<ScatterRow> scatter_data(const AnalysisReport& report) {
  std::vector<ScatterRow> out;
  for (const CategoryEval& ce : report.baseline.per_category) {
    if (!ce.ap) continue;
    ScatterRow row;
    row.category_id = ce.category_id;
    row.baseline_ap = *ce.ap;
    if (auto it = report.annotation_counts.find(ce.category_id);
        it != report.annotation_counts.end())
      row.annotation_count = it->second;
    out.push_back(row);
  }
  std::sort(out.begin(), out.end(), [](const ScatterRow& a, const ScatterRow& b) {
    return a.category_id < b.category_id;
  });
  return out;
}

// --- file forms ---

inline std::string write_analysis_json(const AnalysisReport& report) {
  nlohmann::json root;
  auto names = [&report](std::int64_t id) {
    auto it = report.category_names.find(id);
    return it == report.category_names.end() ? std::string() : it->second;
  };
  root["baseline"] = nlohmann::json::parse(write_eval_json(report.baseline, names));
  root["top_k"] = report.top_k;
  root["targets"] = nlohmann::json::array();
  auto entry_json = [&names](const ContextEntry& e) {
    return nlohmann::json{{"masked_category_id", e.masked_category_id},
                          {"masked_category_name", names(e.masked_category_id)},
                          {"change_pct", e.change_pct},
                          {"deviation", e.deviation},
                          {"is_self", e.is_self}};
  };
  for (const TargetAnalysis& ta : report.targets) {
    nlohmann::json t{{"category_id", ta.category_id},
                     {"category_name", names(ta.category_id)},
                     {"baseline_ap", ta.baseline_ap},
                     {"annotation_count", ta.annotation_count}};
    t["entries"] = nlohmann::json::array();
    for (const ContextEntry& e : ta.entries) t["entries"].push_back(entry_json(e));
    t["top"] = nlohmann::json::array();
    for (const ContextEntry& e : ta.top) t["top"].push_back(entry_json(e));
    if (ta.dominant)
      t["context_dominant"] = *ta.dominant;
    else
      t["context_dominant"] = nullptr;
    root["targets"].push_back(std::move(t));
  }
  root["excluded"] = nlohmann::json::array();
  for (const auto& [id, reason] : report.excluded)
    root["excluded"].push_back({{"category_id", id},
                                {"category_name", names(id)},
                                {"reason", reason}});
  root["annotation_counts"] = nlohmann::json::array();
  for (const auto& [id, count] : report.annotation_counts)
    root["annotation_counts"].push_back({{"category_id", id}, {"count", count}});
  root["category_names"] = nlohmann::json::array();
  for (const auto& [id, name] : report.category_names)
    root["category_names"].push_back({{"category_id", id}, {"name", name}});
  return root.dump(2);
}

inline AnalysisReport read_analysis_json(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed analysis JSON: ") + e.what());
  }
  AnalysisReport report;
  report.baseline = read_eval_json(root.at("baseline").dump());
  report.top_k = root.value("top_k", 3);
  auto parse_entry = [](const nlohmann::json& j, std::int64_t target) {
    ContextEntry e;
    e.target_category_id = target;
    e.masked_category_id = j.at("masked_category_id").get<std::int64_t>();
    e.change_pct = j.at("change_pct").get<double>();
    e.deviation = j.at("deviation").get<double>();
    e.is_self = j.at("is_self").get<bool>();
    return e;
  };
  for (const auto& t : root.at("targets")) {
    TargetAnalysis ta;
    ta.category_id = t.at("category_id").get<std::int64_t>();
    ta.baseline_ap = t.at("baseline_ap").get<double>();
    ta.annotation_count = t.value("annotation_count", std::int64_t{0});
    for (const auto& e : t.at("entries"))
      ta.entries.push_back(parse_entry(e, ta.category_id));
    for (const auto& e : t.at("top")) ta.top.push_back(parse_entry(e, ta.category_id));
    if (auto it = t.find("context_dominant"); it != t.end() && !it->is_null())
      ta.dominant = it->get<bool>();
    report.targets.push_back(std::move(ta));
  }
  if (auto it = root.find("excluded"); it != root.end())
    for (const auto& e : *it)
      report.excluded.emplace_back(e.at("category_id").get<std::int64_t>(),
                                   e.value("reason", std::string()));
  if (auto it = root.find("annotation_counts"); it != root.end())
    for (const auto& e : *it)
      report.annotation_counts[e.at("category_id").get<std::int64_t>()] =
          e.at("count").get<std::int64_t>();
  if (auto it = root.find("category_names"); it != root.end())
    for (const auto& e : *it)
      report.category_names[e.at("category_id").get<std::int64_t>()] =
          e.at("name").get<std::string>();
  return report;
}

/// Flattened CSV: one row per (target, masked) pair.
inline std::string write_analysis_csv(const AnalysisReport& report) {
  std::ostringstream out;
  auto name = [&report](std::int64_t id) {
    auto it = report.category_names.find(id);
    return it == report.category_names.end() ? std::string() : it->second;
  };
  out << "target_id,target_name,baseline_ap,masked_id,masked_name,"
         "change_pct,deviation,is_self\n";
  for (const TargetAnalysis& ta : report.targets)
    for (const ContextEntry& e : ta.entries)
      out << ta.category_id << ',' << name(ta.category_id) << ','
          << detail::full_precision(ta.baseline_ap) << ',' << e.masked_category_id
          << ',' << name(e.masked_category_id) << ','
          << detail::full_precision(e.change_pct) << ','
          << detail::full_precision(e.deviation) << ',' << (e.is_self ? 1 : 0)
          << '\n';
  return out.str();
}

}  // namespace ctxmask
