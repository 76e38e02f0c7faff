#pragma once

// Human-readable renderings of an AnalysisReport: the top-accuracy table,
// the context-dependence table and the scatter data, as Markdown or CSV.
// Change percentages are printed with one decimal; full precision lives in
// the JSON/CSV exports. Where a target's context-dominance flag is set,
// the strongest non-self cell is marked with `*` (a plain-text highlight).

#include <cinttypes>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>

#include "ctxmask/analyzer.hpp"

namespace ctxmask {

namespace detail {

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline const ContextEntry* starred_entry(const TargetAnalysis& ta) {
  if (!ta.dominant || !*ta.dominant) return nullptr;
  const ContextEntry* best = nullptr;
  for (const ContextEntry& e : ta.entries) {
    if (e.is_self) continue;
    if (!best || e.change_pct < best->change_pct ||
        (e.change_pct == best->change_pct &&
         e.masked_category_id < best->masked_category_id))
      best = &e;
  }
  return best;
}

inline std::string entry_cell(const AnalysisReport& report, const TargetAnalysis& ta,
                              const ContextEntry& e) {
  const ContextEntry* star = starred_entry(ta);
  auto it = report.category_names.find(e.masked_category_id);
  const std::string name = it == report.category_names.end()
                               ? std::to_string(e.masked_category_id)
                               : it->second;
  std::string cell = name + " (" + fixed(e.change_pct, 1) + "%)";
  if (star && star->masked_category_id == e.masked_category_id) cell += "*";
  return cell;
}

inline const TargetAnalysis* find_target(const AnalysisReport& report,
                                         std::int64_t id) {
  for (const TargetAnalysis& ta : report.targets)
    if (ta.category_id == id) return &ta;
  return nullptr;
}

inline std::string target_name(const AnalysisReport& report, std::int64_t id) {
  auto it = report.category_names.find(id);
  return it == report.category_names.end() ? std::to_string(id) : it->second;
}

}  // namespace detail

inline std::string render_markdown_report(const AnalysisReport& report,
                                          int context_rows = 15,
                                          int accuracy_rows = 10) {
  std::ostringstream out;
  const int k = report.top_k;

  auto header = [&out, k](const char* first) {
    out << "| " << first << " | AP |";
    for (int i = 1; i <= k; ++i) out << ' ' << i << (i == 1 ? "st" : i == 2 ? "nd" : i == 3 ? "rd" : "th") << " |";
    out << "\n|---|---|";
    for (int i = 0; i < k; ++i) out << "---|";
    out << '\n';
  };
  auto row = [&](const TargetAnalysis& ta, const std::vector<ContextEntry>& entries) {
    out << "| " << detail::target_name(report, ta.category_id) << " | "
        << detail::fixed(ta.baseline_ap, 3) << " |";
    int printed = 0;
    for (const ContextEntry& e : entries) {
      if (printed == k) break;
      out << ' ' << detail::entry_cell(report, ta, e) << " |";
      ++printed;
    }
    for (; printed < k; ++printed) out << "  |";
    out << '\n';
  };

  out << "# Context dependence report\n\n";
  out << "Change percentages are 100 * (masked AP) / (baseline AP); ~100% means "
         "masking that category had no effect on the target.\n\n";

  out << "## Top categories by baseline AP\n\n";
  header("category");
  for (const TopAccuracyRow& r : top_accuracy_table(report, accuracy_rows)) {
    const TargetAnalysis* ta = detail::find_target(report, r.category_id);
    if (ta) row(*ta, r.top);
  }

  out << "\n## Categories depending on context\n\n";
  out << "Rows sorted by the strongest non-self masking effect; `*` marks a "
         "context category that affects the target more than masking the "
         "target itself.\n\n";
  header("category");
  for (std::int64_t id : rank_context_dependent(report, context_rows)) {
    const TargetAnalysis* ta = detail::find_target(report, id);
    if (ta) row(*ta, ta->top);
  }

  out << "\n## AP versus annotation count\n\n";
  out << "| category | annotations | AP |\n|---|---|---|\n";
  for (const ScatterRow& r : scatter_data(report))
    out << "| " << detail::target_name(report, r.category_id) << " | "
        << r.annotation_count << " | " << detail::fixed(r.baseline_ap, 3) << " |\n";

  if (!report.excluded.empty()) {
    out << "\n## Excluded categories\n\n";
    for (const auto& [id, reason] : report.excluded)
      out << "- " << detail::target_name(report, id) << ": " << reason << '\n';
  }
  return out.str();
}

inline std::string render_top_accuracy_csv(const AnalysisReport& report,
                                           int accuracy_rows = 10) {
  std::ostringstream out;
  out << "category_id,category,baseline_ap,rank,masked_category_id,"
         "masked_category,change_pct,dominant\n";
  for (const TopAccuracyRow& r : top_accuracy_table(report, accuracy_rows)) {
    const TargetAnalysis* ta = detail::find_target(report, r.category_id);
    if (!ta) continue;
    const ContextEntry* star = detail::starred_entry(*ta);
    int rank = 1;
    for (const ContextEntry& e : r.top) {
      out << r.category_id << ',' << detail::target_name(report, r.category_id)
          << ',' << detail::full_precision(r.baseline_ap) << ',' << rank++ << ','
          << e.masked_category_id << ','
          << detail::target_name(report, e.masked_category_id) << ','
          << detail::full_precision(e.change_pct) << ','
          << ((star && star->masked_category_id == e.masked_category_id) ? 1 : 0)
          << '\n';
    }
  }
  return out.str();
}

inline std::string render_context_dependence_csv(const AnalysisReport& report,
                                                 int context_rows = 15) {
  std::ostringstream out;
  out << "category_id,category,baseline_ap,rank,masked_category_id,"
         "masked_category,change_pct,dominant\n";
  for (std::int64_t id : rank_context_dependent(report, context_rows)) {
    const TargetAnalysis* ta = detail::find_target(report, id);
    if (!ta) continue;
    const ContextEntry* star = detail::starred_entry(*ta);
    int rank = 1;
    for (const ContextEntry& e : ta->top) {
      out << id << ',' << detail::target_name(report, id) << ','
          << detail::full_precision(ta->baseline_ap) << ',' << rank++ << ','
          << e.masked_category_id << ','
          << detail::target_name(report, e.masked_category_id) << ','
          << detail::full_precision(e.change_pct) << ','
          << ((star && star->masked_category_id == e.masked_category_id) ? 1 : 0)
          << '\n';
    }
  }
  return out.str();
}

inline std::string render_scatter_csv(const AnalysisReport& report) {
  std::ostringstream out;
  out << "category_id,category,annotation_count,baseline_ap\n";
  for (const ScatterRow& r : scatter_data(report))
    out << r.category_id << ',' << detail::target_name(report, r.category_id) << ','
        << r.annotation_count << ',' << detail::full_precision(r.baseline_ap)
        << '\n';
  return out.str();
}

}  // namespace ctxmask
