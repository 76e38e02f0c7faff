#pragma once

// Synthetic-data harness: generates small datasets with planted
// co-occurrence structure (axis-aligned rectangle instances, exact
// polygon segmentations) and a scripted context-sensitive detector, so
// the masking pipeline has a desk-scale ground truth.
//
// All randomness flows from the single config seed through splitmix64
// substreams keyed by entity id (one stream per image, one per
// annotation), so outputs are byte-identical across runs and platforms.
//
// Score-factor rules alone cannot change AP (only the score *order*
// matters within a category), so the script can inject deterministic
// false positives at a fixed mid score; dropping true-positive scores
// below the injected ones is what makes a planted dependency measurable.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctxmask/coco.hpp"
#include "ctxmask/image_io.hpp"
#include "ctxmask/masker.hpp"

namespace ctxmask {

namespace rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Substream seed for (root seed, entity id, salt).
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t id,
                               std::uint64_t salt) {
  std::uint64_t s = seed ^ (id * 0x2545f4914f6cdd1dull) ^ (salt << 32);
  splitmix64(s);
  return s;
}

/// Uniform draw in [lo, hi] (inclusive), avoiding the platform-dependent
/// std::uniform_int_distribution.
inline int uniform_int(std::uint64_t& state, int lo, int hi) {
  if (hi <= lo) return lo;
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(splitmix64(state) % span);
}

}  // namespace rng

struct SynthCategory {
  std::string name;
  Rgb color{0, 0, 0};
  int instances_min = 1;
  int instances_max = 1;
  int base_width = 16;
  int base_height = 12;
};

struct SceneRecipe {
  std::vector<std::string> categories;
  int image_count = 0;
};

struct ContextRule {
  std::string subject;
  std::string context;
  double factor = 1.0;  // applied when the context category has zero
                        // visible pixels in the image
};

struct FpInjection {
  std::string category;
  int per_image = 0;
  double score = 0.5;
};

struct DetectorScript {
  std::map<std::string, double> base_scores;  // per category, in (0, 1]
  std::vector<ContextRule> context_rules;
  int jitter_px = 0;
  std::vector<FpInjection> fp_injections;
  std::uint64_t seed = 1;
};

enum class SceneLayout { kFree, kBanded };

struct SynthConfig {
  std::uint64_t seed = 1;
  int image_width = 96;
  int image_height = 96;
  SceneLayout layout = SceneLayout::kFree;
  std::vector<SynthCategory> categories;
  std::vector<SceneRecipe> recipes;
  DetectorScript detector;
};

// Rows [0, kFpStripHeight) carry no instances; injected false positives
// live there so they can never match ground truth.
inline constexpr int kFpStripHeight = 12;

namespace detail {

inline void check_synth_config(const SynthConfig& cfg) {
  if (cfg.image_width < 16 || cfg.image_height < kFpStripHeight + 8)
    throw std::invalid_argument("synth image size too small");
  if (cfg.categories.empty())
    throw std::invalid_argument("synth config needs at least one category");
  if (cfg.recipes.empty())
    throw std::invalid_argument("synth config needs at least one scene recipe");
  std::set<std::string> names;
  std::set<std::array<std::uint8_t, 3>> colors;
  for (const SynthCategory& c : cfg.categories) {
    if (c.name.empty()) throw std::invalid_argument("synth category needs a name");
    if (!names.insert(c.name).second)
      throw std::invalid_argument("duplicate synth category name " + c.name);
    if (!colors.insert(c.color).second)
      throw std::invalid_argument("synth category colors must be distinct");
    if (c.instances_min < 1 || c.instances_max < c.instances_min)
      throw std::invalid_argument("bad instance distribution for " + c.name);
    if (c.base_width < 4 || c.base_height < 4)
      throw std::invalid_argument("instance base size too small for " + c.name);
  }
  for (const SceneRecipe& r : cfg.recipes) {
    if (r.image_count < 1)
      throw std::invalid_argument("scene recipe needs image_count >= 1");
    if (r.categories.empty())
      throw std::invalid_argument("scene recipe needs at least one category");
    for (const std::string& n : r.categories)
      if (!names.contains(n))
        throw std::invalid_argument("recipe references unknown category " + n);
  }
  for (const SynthCategory& c : cfg.categories) {
    auto it = cfg.detector.base_scores.find(c.name);
    if (it == cfg.detector.base_scores.end())
      throw std::invalid_argument("detector base_scores missing category " + c.name);
    if (!(it->second > 0.0 && it->second <= 1.0))
      throw std::invalid_argument("base score for " + c.name + " must be in (0, 1]");
  }
  for (const ContextRule& r : cfg.detector.context_rules) {
    if (!names.contains(r.subject) || !names.contains(r.context))
      throw std::invalid_argument("context rule references unknown category");
    if (r.factor < 0.0 || r.factor > 1.0)
      throw std::invalid_argument("context rule factor must be in [0, 1]");
  }
  for (const FpInjection& f : cfg.detector.fp_injections) {
    if (!names.contains(f.category))
      throw std::invalid_argument("fp injection references unknown category " +
                                  f.category);
    if (f.per_image < 0 || f.score < 0.0 || f.score > 1.0)
      throw std::invalid_argument("bad fp injection for " + f.category);
  }
  if (cfg.detector.jitter_px < 0)
    throw std::invalid_argument("jitter_px must be >= 0");
}

}  // namespace detail

inline SynthConfig parse_synth_config(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed synth config: ") + e.what());
  }
  SynthConfig cfg;
  cfg.seed = root.value("seed", std::uint64_t{1});
  cfg.image_width = root.value("image_width", 96);
  cfg.image_height = root.value("image_height", 96);
  const std::string layout = root.value("layout", std::string("free"));
  if (layout == "free")
    cfg.layout = SceneLayout::kFree;
  else if (layout == "banded")
    cfg.layout = SceneLayout::kBanded;
  else
    throw ParseError("synth config: layout must be \"free\" or \"banded\"");
  for (const auto& j : root.value("categories", nlohmann::json::array())) {
    SynthCategory c;
    c.name = j.at("name").get<std::string>();
    const auto& color = j.at("color");
    for (int i = 0; i < 3; ++i) c.color[i] = color.at(i).get<std::uint8_t>();
    c.instances_min = j.value("instances_min", 1);
    c.instances_max = j.value("instances_max", c.instances_min);
    c.base_width = j.value("base_width", 16);
    c.base_height = j.value("base_height", 12);
    cfg.categories.push_back(std::move(c));
  }
  for (const auto& j : root.value("recipes", nlohmann::json::array())) {
    SceneRecipe r;
    r.categories = j.at("categories").get<std::vector<std::string>>();
    r.image_count = j.at("images").get<int>();
    cfg.recipes.push_back(std::move(r));
  }
  if (auto it = root.find("detector"); it != root.end()) {
    const auto& d = *it;
    if (auto b = d.find("base_scores"); b != d.end())
      for (auto& [name, score] : b->items())
        cfg.detector.base_scores[name] = score.get<double>();
    for (const auto& j : d.value("context_rules", nlohmann::json::array())) {
      ContextRule r;
      r.subject = j.at("subject").get<std::string>();
      r.context = j.at("context").get<std::string>();
      r.factor = j.at("factor").get<double>();
      cfg.detector.context_rules.push_back(std::move(r));
    }
    cfg.detector.jitter_px = d.value("jitter_px", 0);
    for (const auto& j : d.value("fp_injections", nlohmann::json::array())) {
      FpInjection f;
      f.category = j.at("category").get<std::string>();
      f.per_image = j.value("per_image", 1);
      f.score = j.value("score", 0.5);
      cfg.detector.fp_injections.push_back(std::move(f));
    }
  }
  cfg.detector.seed = cfg.seed;
  detail::check_synth_config(cfg);
  return cfg;
}

inline SynthConfig load_synth_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_synth_config(text);
}

/// Writes out_root/images/NNNNNN.png plus out_root/annotations.json and
/// returns the dataset. Deterministic: the same config produces
/// byte-identical files.
inline Dataset generate_synthetic(const SynthConfig& cfg,
                                  const std::filesystem::path& out_root) {
  namespace fs = std::filesystem;
  detail::check_synth_config(cfg);
  fs::create_directories(out_root / "images");

  std::map<std::string, std::size_t> cat_index;
  std::vector<Category> categories;
  for (std::size_t i = 0; i < cfg.categories.size(); ++i) {
    cat_index[cfg.categories[i].name] = i;
    categories.push_back({static_cast<std::int64_t>(i + 1),
                          cfg.categories[i].name, "synthetic"});
  }

  const int usable_top = kFpStripHeight;
  const int usable_height = cfg.image_height - usable_top;
  const int band_height =
      std::max(1, usable_height / static_cast<int>(cfg.categories.size()));

  std::vector<ImageInfo> images;
  std::vector<Annotation> annotations;
  std::int64_t next_image_id = 1;
  std::int64_t next_ann_id = 1;

  for (const SceneRecipe& recipe : cfg.recipes) {
    for (int n = 0; n < recipe.image_count; ++n) {
      const std::int64_t image_id = next_image_id++;
      char name[32];
      std::snprintf(name, sizeof name, "%06lld.png",
                    static_cast<long long>(image_id));
      ImageInfo info{image_id, cfg.image_width, cfg.image_height,
                     std::string("images/") + name};

      RasterImage img(cfg.image_width, cfg.image_height);
      std::fill(img.pixels.begin(), img.pixels.end(), std::uint8_t{230});

      std::uint64_t stream = rng::substream(cfg.seed, image_id, 0xA11CE);
      for (const std::string& cat_name : recipe.categories) {
        const std::size_t ci = cat_index.at(cat_name);
        const SynthCategory& sc = cfg.categories[ci];
        const int count = rng::uniform_int(stream, sc.instances_min, sc.instances_max);
        for (int k = 0; k < count; ++k) {
          int w = sc.base_width + rng::uniform_int(stream, -2, 2);
          int h = sc.base_height + rng::uniform_int(stream, -2, 2);
          w = std::min(std::max(w, 4), cfg.image_width);
          h = std::min(std::max(h, 4), usable_height);
          int y_lo = usable_top;
          int y_hi = cfg.image_height - h;
          if (cfg.layout == SceneLayout::kBanded) {
            h = std::min(h, band_height);
            y_lo = usable_top + static_cast<int>(ci) * band_height;
            y_hi = std::min(y_lo + band_height - h, cfg.image_height - h);
          }
          const int x = rng::uniform_int(stream, 0, cfg.image_width - w);
          const int y = rng::uniform_int(stream, y_lo, std::max(y_lo, y_hi));

          for (int r = y; r < y + h; ++r)
            for (int c = x; c < x + w; ++c) {
              std::uint8_t* p = img.px(r, c);
              p[0] = sc.color[0];
              p[1] = sc.color[1];
              p[2] = sc.color[2];
            }

          Annotation ann;
          ann.id = next_ann_id++;
          ann.image_id = image_id;
          ann.category_id = static_cast<std::int64_t>(ci + 1);
          const double xd = x, yd = y, wd = w, hd = h;
          ann.bbox = {xd, yd, wd, hd};
          ann.area = wd * hd;
          ann.segmentation = PolygonSet{
              {xd, yd, xd + wd, yd, xd + wd, yd + hd, xd, yd + hd}};
          ann.iscrowd = false;
          annotations.push_back(std::move(ann));
        }
      }
      write_png(out_root / info.file_name, img);
      images.push_back(std::move(info));
    }
  }

  Dataset ds = Dataset::build(std::move(images), std::move(annotations),
                              std::move(categories));
  std::ofstream out(out_root / "annotations.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (out_root / "annotations.json").string());
  out << write_dataset(ds) << '\n';
  return ds;
}

namespace detail {

/// Pixels of the category still visible on the image: with no manifest or
/// a manifest for another category, the category's full mask-union area;
/// for the masked category itself, exactly the overlap pixels the masker
/// skipped.
inline std::int64_t visible_pixels(const Dataset& ds, std::int64_t image_id,
                                   std::int64_t category_id,
                                   const MaskManifest* manifest) {
  if (manifest && manifest->masked_category_id == category_id) {
    const MaskManifest::ImageRecord* rec = manifest->find_image(image_id);
    return rec ? rec->skipped_overlap_pixel_count : 0;
  }
  return mask_area(build_category_mask(ds, image_id, category_id));
}

}  // namespace detail

/// Emits one detection per visible ground-truth instance: score =
/// base_score times the factors of every triggered rule (a rule triggers
/// when its context category has zero visible pixels in the image), bbox
/// jittered per instance from the seed. Instances of the masked category
/// whose pixels were all greyed emit nothing. Injected false positives
/// live in the reserved strip and never overlap ground truth.
inline std::vector<Detection> scripted_detect(const Dataset& ds,
                                              const MaskManifest* manifest,
                                              const DetectorScript& script) {
  std::map<std::string, std::int64_t> name_to_id;
  for (const Category& c : ds.categories()) name_to_id[c.name] = c.id;
  auto id_of = [&name_to_id](const std::string& name) {
    auto it = name_to_id.find(name);
    if (it == name_to_id.end())
      throw std::invalid_argument("detector script references unknown category " +
                                  name);
    return it->second;
  };

  std::map<std::int64_t, double> base_score;
  for (const auto& [name, score] : script.base_scores) {
    auto it = name_to_id.find(name);
    if (it != name_to_id.end()) base_score[it->second] = score;
  }
  struct ResolvedRule {
    std::int64_t subject, context;
    double factor;
  };
  std::vector<ResolvedRule> rules;
  for (const ContextRule& r : script.context_rules)
    rules.push_back({id_of(r.subject), id_of(r.context), r.factor});

  std::vector<const ImageInfo*> order;
  for (const ImageInfo& im : ds.images()) order.push_back(&im);
  std::sort(order.begin(), order.end(),
            [](const ImageInfo* a, const ImageInfo* b) { return a->id < b->id; });

  std::vector<Detection> out;
  for (const ImageInfo* image : order) {
    // factor per subject category for this image
    std::map<std::int64_t, double> factor;
    for (const ResolvedRule& r : rules) {
      if (detail::visible_pixels(ds, image->id, r.context, manifest) == 0) {
        auto [it, inserted] = factor.emplace(r.subject, r.factor);
        if (!inserted) it->second *= r.factor;
      }
    }

    BinaryMask exclusion;  // lazily built, only needed for the masked category
    bool exclusion_built = false;

    for (std::size_t ai : ds.annotations_of_image(image->id)) {
      const Annotation& ann = ds.annotations()[ai];
      if (manifest && manifest->masked_category_id == ann.category_id) {
        if (!exclusion_built) {
          exclusion =
              build_exclusion_mask(ds, image->id, manifest->masked_category_id);
          exclusion_built = true;
        }
        // fully masked instances (no pixels spared by the overlap rule)
        // are invisible and emit nothing
        const BinaryMask instance = ann_to_mask(ann, *image);
        if (mask_area(mask_intersect(instance, exclusion)) == 0) continue;
      }
      auto bs = base_score.find(ann.category_id);
      if (bs == base_score.end()) continue;
      double score = bs->second;
      if (auto it = factor.find(ann.category_id); it != factor.end())
        score *= it->second;

      Detection d;
      d.image_id = image->id;
      d.category_id = ann.category_id;
      d.bbox = ann.bbox;
      if (script.jitter_px > 0) {
        std::uint64_t stream =
            rng::substream(script.seed, static_cast<std::uint64_t>(ann.id), 0xB0B);
        const int dx = rng::uniform_int(stream, -script.jitter_px, script.jitter_px);
        const int dy = rng::uniform_int(stream, -script.jitter_px, script.jitter_px);
        d.bbox[0] = std::min(std::max(d.bbox[0] + dx, 0.0),
                             static_cast<double>(image->width) - d.bbox[2]);
        d.bbox[1] = std::min(std::max(d.bbox[1] + dy, 0.0),
                             static_cast<double>(image->height) - d.bbox[3]);
      }
      d.score = std::min(std::max(score, 0.0), 1.0);
      out.push_back(d);
    }

    for (const FpInjection& fp : script.fp_injections) {
      const std::int64_t cat = id_of(fp.category);
      for (int k = 0; k < fp.per_image; ++k) {
        const int x = 2 + k * 12;
        if (x + 8 > image->width) break;
        Detection d;
        d.image_id = image->id;
        d.category_id = cat;
        d.bbox = {static_cast<double>(x), 2.0, 8.0, 8.0};
        d.score = fp.score;
        out.push_back(d);
      }
    }
  }
  return out;
}

}  // namespace ctxmask
