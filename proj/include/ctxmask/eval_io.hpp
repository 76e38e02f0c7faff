#pragma once

// File forms of EvalResult: JSON (full precision, read back by the
// analyze stage) and the CSV table with columns
// category_id, category_name, num_gt, num_dets, ap and a trailing map row.

#include <cinttypes>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include "json.hpp"

#include "ctxmask/evaluator.hpp"

namespace ctxmask {

using CategoryNameLookup = std::function<std::string(std::int64_t)>;

inline CategoryNameLookup name_lookup(const Dataset& ds) {
  return [&ds](std::int64_t id) {
    const Category* c = ds.find_category(id);
    return c ? c->name : std::string();
  };
}

inline std::string write_eval_json(const EvalResult& result,
                                   const CategoryNameLookup& names) {
  nlohmann::json root;
  root["params"] = {{"iou_thresholds", result.params.iou_thresholds},
                    {"recall_thresholds", result.params.recall_thresholds},
                    {"max_dets", result.params.max_dets}};
  root["per_category"] = nlohmann::json::array();
  for (const CategoryEval& ce : result.per_category) {
    nlohmann::json j{{"category_id", ce.category_id},
                     {"category_name", names(ce.category_id)},
                     {"num_gt", ce.num_gt},
                     {"num_dets", ce.num_dets}};
    if (ce.ap)
      j["ap"] = *ce.ap;
    else
      j["ap"] = nullptr;
    root["per_category"].push_back(std::move(j));
  }
  if (result.map)
    root["map"] = *result.map;
  else
    root["map"] = nullptr;
  return root.dump(2);
}

inline EvalResult read_eval_json(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed eval JSON: ") + e.what());
  }
  EvalResult result;
  if (auto it = root.find("params"); it != root.end()) {
    if (auto t = it->find("iou_thresholds"); t != it->end())
      result.params.iou_thresholds = t->get<std::vector<double>>();
    if (auto t = it->find("recall_thresholds"); t != it->end())
      result.params.recall_thresholds = t->get<std::vector<double>>();
    if (auto t = it->find("max_dets"); t != it->end())
      result.params.max_dets = t->get<int>();
  }
  auto pc = root.find("per_category");
  if (pc == root.end() || !pc->is_array())
    throw ParseError("eval JSON: missing \"per_category\" array");
  for (const auto& j : *pc) {
    CategoryEval ce;
    ce.category_id = j.at("category_id").get<std::int64_t>();
    ce.num_gt = j.value("num_gt", std::int64_t{0});
    ce.num_dets = j.value("num_dets", std::int64_t{0});
    if (auto it = j.find("ap"); it != j.end() && !it->is_null())
      ce.ap = it->get<double>();
    result.per_category.push_back(std::move(ce));
  }
  if (auto it = root.find("map"); it != root.end() && !it->is_null())
    result.map = it->get<double>();
  return result;
}

namespace detail {
inline std::string full_precision(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

inline std::string write_eval_csv(const EvalResult& result,
                                  const CategoryNameLookup& names) {
  std::ostringstream out;
  out << "category_id,category_name,num_gt,num_dets,ap\n";
  for (const CategoryEval& ce : result.per_category) {
    out << ce.category_id << ',' << names(ce.category_id) << ',' << ce.num_gt
        << ',' << ce.num_dets << ',';
    if (ce.ap) out << detail::full_precision(*ce.ap);
    out << '\n';
  }
  out << "map,,,,";
  if (result.map) out << detail::full_precision(*result.map);
  out << '\n';
  return out.str();
}

/// Reads back a CSV produced by write_eval_csv. Params are not stored in
/// the CSV form and come back as defaults.
inline EvalResult read_eval_csv(const std::string& text) {
  EvalResult result;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {  // header
      first = false;
      continue;
    }
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        cells.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (cells.size() != 5) throw ParseError("eval CSV: malformed row: " + line);
    if (cells[0] == "map") {
      if (!cells[4].empty()) result.map = std::stod(cells[4]);
      continue;
    }
    CategoryEval ce;
    ce.category_id = std::stoll(cells[0]);
    ce.num_gt = std::stoll(cells[2]);
    ce.num_dets = std::stoll(cells[3]);
    if (!cells[4].empty()) ce.ap = std::stod(cells[4]);
    result.per_category.push_back(std::move(ce));
  }
  return result;
}

}  // namespace ctxmask
