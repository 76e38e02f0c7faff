// ctxmask — command-line front end for the masking / evaluation /
// context-analysis pipeline. Every stage reads and writes plain files,
// so the pipeline is resumable at any stage boundary.
//
// Exit codes: 0 success, 1 usage error, 2 data validation failure,
// 3 I/O failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ctxmask/analyzer.hpp"
#include "ctxmask/cooccur.hpp"
#include "ctxmask/coco.hpp"
#include "ctxmask/eval_io.hpp"
#include "ctxmask/evaluator.hpp"
#include "ctxmask/masker.hpp"
#include "ctxmask/report.hpp"
#include "ctxmask/synth.hpp"

namespace fs = std::filesystem;
using namespace ctxmask;

namespace {

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void write_text_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("cannot write " + path.string());
}

Rgb parse_grey(const std::string& text) {
  Rgb grey{};
  int r = 0, g = 0, b = 0;
  char extra = 0;
  if (std::sscanf(text.c_str(), "%d,%d,%d%c", &r, &g, &b, &extra) != 3 ||
      r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255)
    throw CLI::ValidationError("--grey", "expected R,G,B with 0..255 components");
  grey = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
          static_cast<std::uint8_t>(b)};
  return grey;
}

std::vector<std::int64_t> select_categories(const Dataset& ds,
                                            const std::string& selector) {
  std::vector<std::int64_t> ids;
  if (selector == "all") {
    for (const Category& c : ds.categories()) ids.push_back(c.id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }
  bool numeric = !selector.empty() &&
                 selector.find_first_not_of("0123456789") == std::string::npos;
  if (numeric) {
    const std::int64_t id = std::stoll(selector);
    if (!ds.find_category(id))
      throw ParseError("unknown category id " + selector);
    return {id};
  }
  const Category* c = ds.find_category_by_name(selector);
  if (!c) throw ParseError("unknown category name \"" + selector + "\"");
  return {c->id};
}

int cmd_validate(const fs::path& ann_path) {
  const Dataset ds = parse_dataset(read_text_file(ann_path));
  const std::vector<std::string> violations = validate(ds);
  for (const std::string& v : violations) std::cout << v << '\n';
  std::cout << violations.size() << " violation(s) in " << ds.images().size()
            << " images / " << ds.annotations().size() << " annotations / "
            << ds.categories().size() << " categories\n";
  return violations.empty() ? 0 : 2;
}

int cmd_mask(const fs::path& ann_path, const fs::path& images_root,
             const fs::path& out_root, const std::string& selector,
             const std::string& grey_text, const std::string& format, int jobs) {
  const Dataset ds = parse_dataset(read_text_file(ann_path));
  MaskOptions opts;
  opts.grey = parse_grey(grey_text);
  opts.jobs = jobs;
  if (format == "jpeg") {
    opts.jpeg_output = true;
    std::cerr << "warning: JPEG re-encoding is lossy; pixel-identity "
                 "invariants hold only pre-encoding\n";
  } else if (format != "png") {
    throw CLI::ValidationError("--format", "expected png or jpeg");
  }
  for (std::int64_t id : select_categories(ds, selector)) {
    const fs::path cat_out = out_root / std::to_string(id);
    const MaskManifest manifest =
        generate_masked_dataset(ds, images_root, id, opts, cat_out);
    const Category* c = ds.find_category(id);
    std::cout << "masked category " << id << " (" << (c ? c->name : "?") << "): "
              << manifest.per_image.size() << " images, " << manifest.total_masked
              << " pixels greyed, " << manifest.total_skipped
              << " overlap pixels skipped";
    if (!manifest.degenerate_annotation_ids.empty()) {
      std::cout << "; degenerate annotations:";
      for (std::int64_t a : manifest.degenerate_annotation_ids) std::cout << ' ' << a;
    }
    std::cout << '\n';
  }
  return 0;
}

int cmd_cooccur(const fs::path& ann_path, const fs::path& out_csv) {
  const Dataset ds = parse_dataset(read_text_file(ann_path));
  const CooccurrenceMatrix m = cooccurrence_matrix(ds);
  std::ostringstream buf;
  write_cooccurrence_csv(m, ds, buf);
  write_text_file(out_csv, buf.str());
  std::cout << "wrote " << out_csv.string() << " (" << m.category_ids.size()
            << " categories)\n";
  return 0;
}

int cmd_eval(const fs::path& ann_path, const fs::path& dets_path,
             const fs::path& out, bool lenient, int jobs) {
  const Dataset ds = parse_dataset(read_text_file(ann_path));
  const std::vector<Detection> dets =
      parse_detections(read_text_file(dets_path), ds, lenient);
  const EvalResult result = evaluate(ds, dets, EvalParams{}, jobs);
  const auto names = name_lookup(ds);
  const std::string ext = out.extension().string();
  if (ext == ".json") {
    write_text_file(out, write_eval_json(result, names) + "\n");
  } else if (ext == ".csv") {
    write_text_file(out, write_eval_csv(result, names));
  } else {
    write_text_file(fs::path(out.string() + ".json"),
                    write_eval_json(result, names) + "\n");
    write_text_file(fs::path(out.string() + ".csv"),
                    write_eval_csv(result, names));
  }
  if (result.map)
    std::cout << "mAP " << *result.map << '\n';
  else
    std::cout << "mAP undefined (no category has ground truth)\n";
  return 0;
}

EvalResult read_eval_file(const fs::path& path) {
  if (path.extension() == ".csv") return read_eval_csv(read_text_file(path));
  return read_eval_json(read_text_file(path));
}

int cmd_analyze(const fs::path& ann_path, const fs::path& baseline_path,
                const fs::path& masked_dir, const std::string& masked_map_path,
                const fs::path& out_dir, int top_k) {
  const Dataset ds = parse_dataset(read_text_file(ann_path));
  const EvalResult baseline = read_eval_file(baseline_path);

  std::map<std::int64_t, EvalResult> masked;
  if (!masked_map_path.empty()) {
    nlohmann::json map_json;
    try {
      map_json = nlohmann::json::parse(read_text_file(masked_map_path));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed masked-map JSON: ") + e.what());
    }
    for (auto& [key, value] : map_json.items())
      masked[std::stoll(key)] = read_eval_file(value.get<std::string>());
  } else {
    for (const Category& c : ds.categories()) {
      const fs::path js = masked_dir / ("eval_" + std::to_string(c.id) + ".json");
      const fs::path cs = masked_dir / ("eval_" + std::to_string(c.id) + ".csv");
      if (fs::exists(js))
        masked[c.id] = read_eval_file(js);
      else if (fs::exists(cs))
        masked[c.id] = read_eval_file(cs);
      else
        std::cerr << "note: no eval_" << c.id << ".json/.csv in "
                  << masked_dir.string() << "; category " << c.id
                  << " missing from the masked set\n";
    }
  }
  if (masked.empty()) throw ParseError("no masked evaluation files found");

  const AnalysisReport report = analyze(ds, baseline, masked, top_k);
  write_text_file(out_dir / "analysis.json", write_analysis_json(report) + "\n");
  write_text_file(out_dir / "analysis.csv", write_analysis_csv(report));
  std::cout << "analyzed " << report.targets.size() << " target categories ("
            << report.excluded.size() << " excluded) against " << masked.size()
            << " masked evaluations\n";
  for (const auto& [id, reason] : report.excluded)
    std::cout << "excluded category " << id << ": " << reason << '\n';
  return 0;
}

int cmd_report(const fs::path& analysis_path, const std::string& format,
               const fs::path& out_dir, int rows, int accuracy_rows) {
  const AnalysisReport report = read_analysis_json(read_text_file(analysis_path));
  if (format == "md") {
    write_text_file(out_dir / "report.md",
                    render_markdown_report(report, rows, accuracy_rows));
    std::cout << "wrote " << (out_dir / "report.md").string() << '\n';
  } else if (format == "csv") {
    write_text_file(out_dir / "top_accuracy.csv",
                    render_top_accuracy_csv(report, accuracy_rows));
    write_text_file(out_dir / "context_dependence.csv",
                    render_context_dependence_csv(report, rows));
    write_text_file(out_dir / "scatter.csv", render_scatter_csv(report));
    std::cout << "wrote top_accuracy.csv, context_dependence.csv, scatter.csv in "
              << out_dir.string() << '\n';
  } else {
    throw CLI::ValidationError("--format", "expected md or csv");
  }
  return 0;
}

int cmd_synth(const fs::path& config_path, const fs::path& out_root,
              std::optional<std::uint64_t> seed, int jobs) {
  SynthConfig cfg = load_synth_config(config_path);
  if (seed) {
    cfg.seed = *seed;
    cfg.detector.seed = *seed;
  }
  const Dataset ds = generate_synthetic(cfg, out_root);
  std::cout << "generated " << ds.images().size() << " images, "
            << ds.annotations().size() << " annotations, "
            << ds.categories().size() << " categories\n";

  write_text_file(out_root / "dets" / "baseline.json",
                  write_detections(scripted_detect(ds, nullptr, cfg.detector)) + "\n");

  MaskOptions opts;
  opts.jobs = jobs;
  for (const Category& c : ds.categories()) {
    const fs::path cat_out = out_root / "masked" / std::to_string(c.id);
    const MaskManifest manifest =
        generate_masked_dataset(ds, out_root, c.id, opts, cat_out);
    const std::vector<Detection> dets = scripted_detect(ds, &manifest, cfg.detector);
    write_text_file(out_root / "dets" / ("masked_" + std::to_string(c.id) + ".json"),
                    write_detections(dets) + "\n");
    std::cout << "masked " << c.name << ": " << manifest.total_masked
              << " pixels greyed, " << dets.size() << " scripted detections\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dataset masking, COCO-style AP evaluation and category-context "
               "analysis for COCO-format annotation files"};
  app.require_subcommand(1);

  std::string ann, images, dets, out, category = "all", grey = "128,128,128";
  std::string format_mask = "png", format_report = "md";
  std::string baseline, masked_dir, masked_map, analysis, config;
  int top_k = 3, rows = 15, accuracy_rows = 10, jobs = 0;
  bool lenient = false;
  std::optional<std::uint64_t> seed;

  CLI::App* validate_cmd = app.add_subcommand("validate", "check dataset invariants");
  validate_cmd->add_option("--ann", ann, "annotation JSON file")->required();

  CLI::App* mask_cmd =
      app.add_subcommand("mask", "write per-category grey-masked image sets");
  mask_cmd->add_option("--ann", ann, "annotation JSON file")->required();
  mask_cmd->add_option("--images", images, "root directory of the image files")
      ->required();
  mask_cmd->add_option("--out", out, "output root (one subdirectory per category)")
      ->required();
  mask_cmd->add_option("--category", category, "category id, name, or \"all\"");
  mask_cmd->add_option("--grey", grey, "mask color as R,G,B (default 128,128,128)");
  mask_cmd->add_option("--format", format_mask, "output image format: png | jpeg");
  mask_cmd->add_option("--jobs", jobs, "worker threads (0 = all cores)")
      ->check(CLI::NonNegativeNumber);

  CLI::App* cooccur_cmd =
      app.add_subcommand("cooccur", "image-level category co-occurrence matrix");
  cooccur_cmd->add_option("--ann", ann, "annotation JSON file")->required();
  cooccur_cmd->add_option("--out", out, "output CSV file")->required();

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "COCO-style AP of a detection-results file");
  eval_cmd->add_option("--ann", ann, "annotation JSON file")->required();
  eval_cmd->add_option("--dets", dets, "detection results JSON file")->required();
  eval_cmd->add_option("--out", out,
                       "output path (.json / .csv by extension; no extension "
                       "writes both)")
      ->required();
  eval_cmd->add_flag("--lenient", lenient,
                     "accept detections for images absent from the dataset");
  eval_cmd->add_option("--jobs", jobs, "worker threads (0 = all cores)")
      ->check(CLI::NonNegativeNumber);

  CLI::App* analyze_cmd = app.add_subcommand(
      "analyze", "AP-change analysis of baseline vs per-category masked evals");
  analyze_cmd->add_option("--ann", ann, "annotation JSON file")->required();
  analyze_cmd->add_option("--baseline", baseline, "baseline eval file (json or csv)")
      ->required();
  analyze_cmd->add_option("--masked-dir", masked_dir,
                          "directory with eval_<category_id>.json/.csv files");
  analyze_cmd->add_option("--masked-map", masked_map,
                          "JSON file mapping category id to eval file path "
                          "(overrides --masked-dir discovery)");
  analyze_cmd->add_option("--out", out, "output directory")->required();
  analyze_cmd->add_option("--top-k", top_k, "context entries kept per target")
      ->check(CLI::PositiveNumber);

  CLI::App* report_cmd =
      app.add_subcommand("report", "render tables from an analysis file");
  report_cmd->add_option("--analysis", analysis, "analysis.json path")->required();
  report_cmd->add_option("--format", format_report, "md | csv");
  report_cmd->add_option("--out", out, "output directory")->required();
  report_cmd->add_option("--rows", rows, "context-dependence table rows")
      ->check(CLI::PositiveNumber);
  report_cmd->add_option("--accuracy-rows", accuracy_rows,
                         "top-accuracy table rows")
      ->check(CLI::PositiveNumber);

  CLI::App* synth_cmd = app.add_subcommand(
      "synth", "generate a synthetic dataset plus scripted detections for the "
               "baseline and every masked variant");
  synth_cmd->add_option("--config", config, "synth config JSON")->required();
  synth_cmd->add_option("--out", out, "output root")->required();
  synth_cmd->add_option("--seed", seed, "override the config seed");
  synth_cmd->add_option("--jobs", jobs, "worker threads (0 = all cores)")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(validate_cmd)) return cmd_validate(ann);
    if (app.got_subcommand(mask_cmd))
      return cmd_mask(ann, images, out, category, grey, format_mask, jobs);
    if (app.got_subcommand(cooccur_cmd)) return cmd_cooccur(ann, out);
    if (app.got_subcommand(eval_cmd)) return cmd_eval(ann, dets, out, lenient, jobs);
    if (app.got_subcommand(analyze_cmd))
      return cmd_analyze(ann, baseline, masked_dir, masked_map, out, top_k);
    if (app.got_subcommand(report_cmd))
      return cmd_report(analysis, format_report, out, rows, accuracy_rows);
    if (app.got_subcommand(synth_cmd)) return cmd_synth(config, out, seed, jobs);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
