#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "ctxmask/coco.hpp"

#include "support/fixtures.hpp"

using namespace ctxmask;

namespace {

// order-normalized, field-by-field dataset equality
bool datasets_equal(const Dataset& a, const Dataset& b) {
  auto by_id = [](const auto& x, const auto& y) { return x.id < y.id; };
  auto ims_a = a.images(), ims_b = b.images();
  auto cats_a = a.categories(), cats_b = b.categories();
  auto anns_a = a.annotations(), anns_b = b.annotations();
  std::sort(ims_a.begin(), ims_a.end(), by_id);
  std::sort(ims_b.begin(), ims_b.end(), by_id);
  std::sort(cats_a.begin(), cats_a.end(), by_id);
  std::sort(cats_b.begin(), cats_b.end(), by_id);
  std::sort(anns_a.begin(), anns_a.end(), by_id);
  std::sort(anns_b.begin(), anns_b.end(), by_id);
  return ims_a == ims_b && cats_a == cats_b && anns_a == anns_b;
}

}  // namespace

TEST_CASE("parse tiny fixture") {
  const Dataset ds = parse_dataset(fixtures::tiny_dataset_json());
  REQUIRE(ds.images().size() == 2);
  REQUIRE(ds.categories().size() == 1);
  REQUIRE(ds.annotations().size() == 3);

  const ImageInfo* img1 = ds.find_image(1);
  REQUIRE(img1 != nullptr);
  CHECK(img1->width == 8);
  CHECK(img1->height == 6);
  CHECK(img1->file_name == "img1.png");

  CHECK(ds.find_category(1)->name == "widget");
  CHECK(ds.find_category_by_name("widget")->id == 1);
  CHECK(ds.find_category(99) == nullptr);

  // crowd flag and normalized RLE counts
  const Annotation& crowd = ds.annotations()[2];
  CHECK(crowd.iscrowd);
  const Rle& rle = std::get<Rle>(crowd.segmentation);
  CHECK(rle.counts == std::vector<std::uint32_t>{0, 8, 8});
  CHECK(rle.height == 4);
  CHECK(rle.width == 4);

  // indexes agree with the lists
  CHECK(ds.annotations_of_image(1).size() == 2);
  CHECK(ds.annotations_of_image(2).size() == 1);
  CHECK(ds.annotations_of_category(1).size() == 3);
  CHECK(ds.annotations_of_image(42).empty());

  CHECK(validate(ds).empty());
}

TEST_CASE("parse empty dataset") {
  const Dataset ds = parse_dataset(R"({"images":[],"annotations":[],"categories":[]})");
  CHECK(ds.images().empty());
  CHECK(ds.annotations().empty());
  CHECK(ds.categories().empty());
}

TEST_CASE("parse errors name the offender") {
  CHECK_THROWS_AS(parse_dataset("{nope"), ParseError);
  CHECK_THROWS_AS(parse_dataset(R"({"images":[],"annotations":[]})"), ParseError);

  // missing field
  CHECK_THROWS_WITH(
      parse_dataset(R"({"images":[{"id":1,"width":4,"file_name":"a"}],
                        "annotations":[],"categories":[]})"),
      Catch::Matchers::ContainsSubstring("height"));

  // duplicate ids
  CHECK_THROWS_WITH(
      parse_dataset(R"({"images":[{"id":7,"width":4,"height":4,"file_name":"a"},
                                  {"id":7,"width":4,"height":4,"file_name":"b"}],
                        "annotations":[],"categories":[]})"),
      Catch::Matchers::ContainsSubstring("duplicate image id 7"));

  // dangling category reference
  CHECK_THROWS_WITH(
      parse_dataset(R"({"images":[{"id":1,"width":4,"height":4,"file_name":"a"}],
                        "annotations":[{"id":3,"image_id":1,"category_id":9,
                          "bbox":[0,0,1,1],"area":1,
                          "segmentation":[[0,0,1,0,1,1]],"iscrowd":0}],
                        "categories":[]})"),
      Catch::Matchers::ContainsSubstring("unknown category id 9"));

  // bad RLE payload inside an annotation
  CHECK_THROWS_WITH(
      parse_dataset(R"({"images":[{"id":1,"width":2,"height":2,"file_name":"a"}],
                        "annotations":[{"id":5,"image_id":1,"category_id":1,
                          "bbox":[0,0,1,1],"area":1,
                          "segmentation":{"size":[2,2],"counts":"9"},"iscrowd":1}],
                        "categories":[{"id":1,"name":"x"}]})"),
      Catch::Matchers::ContainsSubstring("annotation 5"));
}

TEST_CASE("uncompressed RLE counts are accepted and normalized on write") {
  const Dataset ds = parse_dataset(R"({
    "images":[{"id":1,"width":4,"height":4,"file_name":"a.png"}],
    "annotations":[{"id":1,"image_id":1,"category_id":1,"bbox":[0,0,2,4],"area":8,
      "segmentation":{"size":[4,4],"counts":[0,8,8]},"iscrowd":1}],
    "categories":[{"id":1,"name":"c"}]})");
  const Rle& rle = std::get<Rle>(ds.annotations()[0].segmentation);
  CHECK(rle.counts == std::vector<std::uint32_t>{0, 8, 8});

  // serialization always emits the compressed string form
  CHECK_THAT(write_dataset(ds), Catch::Matchers::ContainsSubstring("\"088\""));
  const Dataset again = parse_dataset(write_dataset(ds));
  CHECK(std::get<Rle>(again.annotations()[0].segmentation).counts ==
        rle.counts);

  // a sum mismatch in the array form is rejected with the annotation id
  CHECK_THROWS_WITH(parse_dataset(R"({
    "images":[{"id":1,"width":4,"height":4,"file_name":"a.png"}],
    "annotations":[{"id":9,"image_id":1,"category_id":1,"bbox":[0,0,2,4],"area":8,
      "segmentation":{"size":[4,4],"counts":[0,8]},"iscrowd":1}],
    "categories":[{"id":1,"name":"c"}]})"),
                    Catch::Matchers::ContainsSubstring("annotation 9"));
}

TEST_CASE("dataset round trip through serialization") {
  const Dataset ds = parse_dataset(fixtures::tiny_dataset_json());
  const Dataset again = parse_dataset(write_dataset(ds));
  CHECK(datasets_equal(ds, again));

  std::mt19937_64 rng(99);
  for (int i = 0; i < 20; ++i) {
    const auto instance = fixtures::random_eval_instance(rng());
    const Dataset back = parse_dataset(write_dataset(instance.dataset));
    CHECK(datasets_equal(instance.dataset, back));
  }
}

TEST_CASE("annotation_counts") {
  SECTION("fixture with an unused category") {
    Dataset ds = Dataset::build(
        {{1, 8, 8, "a.png"}},
        {fixtures::rect_ann(1, 1, 1, 0, 0, 2, 2), fixtures::rect_ann(2, 1, 1, 3, 3, 2, 2),
         fixtures::rect_ann(3, 1, 1, 5, 5, 2, 2)},
        {{1, "used", ""}, {2, "unused", ""}});
    const auto counts = annotation_counts(ds);
    CHECK(counts.at(1) == 3);
    CHECK(counts.at(2) == 0);
  }
  SECTION("empty dataset maps every category to zero") {
    Dataset ds = Dataset::build({}, {}, {{1, "a", ""}, {2, "b", ""}});
    for (const auto& [id, n] : annotation_counts(ds)) CHECK(n == 0);
  }
  SECTION("counts sum to the number of annotations") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 20; ++i) {
      const auto instance = fixtures::random_eval_instance(rng());
      std::int64_t total = 0;
      for (const auto& [id, n] : annotation_counts(instance.dataset)) total += n;
      CHECK(total ==
            static_cast<std::int64_t>(instance.dataset.annotations().size()));
    }
  }
}

TEST_CASE("validate flags invariant violations") {
  SECTION("zero-width bbox") {
    Annotation bad = fixtures::rect_ann(7, 1, 1, 0, 0, 2, 2);
    bad.bbox[2] = 0;
    Dataset ds = Dataset::build({{1, 8, 8, "a.png"}}, {bad}, {{1, "c", ""}});
    const auto violations = validate(ds);
    REQUIRE(violations.size() == 1);
    CHECK_THAT(violations[0], Catch::Matchers::ContainsSubstring("annotation 7"));
    CHECK_THAT(violations[0], Catch::Matchers::ContainsSubstring("width"));
  }
  SECTION("crowd annotation carrying polygon segmentation") {
    Annotation bad = fixtures::rect_ann(9, 1, 1, 0, 0, 2, 2);
    bad.iscrowd = true;
    Dataset ds = Dataset::build({{1, 8, 8, "a.png"}}, {bad}, {{1, "c", ""}});
    const auto violations = validate(ds);
    REQUIRE(violations.size() == 1);
    CHECK_THAT(violations[0], Catch::Matchers::ContainsSubstring("iscrowd"));
  }
  SECTION("duplicate category names") {
    Dataset ds = Dataset::build({}, {}, {{1, "dog", ""}, {2, "dog", ""}});
    REQUIRE(validate(ds).size() == 1);
    CHECK_THAT(validate(ds)[0], Catch::Matchers::ContainsSubstring("duplicate name"));
  }
  SECTION("bbox past image bounds is a flag, not a parse failure") {
    const Annotation a = fixtures::rect_ann(3, 1, 1, 6, 6, 4, 4);
    Dataset ds = Dataset::build({{1, 8, 8, "a.png"}}, {a}, {{1, "c", ""}});
    const auto violations = validate(ds);
    REQUIRE(violations.size() == 1);
    CHECK_THAT(violations[0], Catch::Matchers::ContainsSubstring("bounds"));
  }
  SECTION("non-positive image dimensions") {
    Dataset ds = Dataset::build({{1, 0, 8, "a.png"}}, {}, {});
    REQUIRE(validate(ds).size() == 1);
  }
}

TEST_CASE("parse_detections") {
  const Dataset ds = parse_dataset(fixtures::tiny_dataset_json());

  CHECK(parse_detections("[]", ds).empty());

  const auto one = parse_detections(
      R"([{"image_id":1,"category_id":1,"bbox":[10,10,20,30],"score":0.9}])", ds);
  REQUIRE(one.size() == 1);
  CHECK(one[0].bbox == std::array<double, 4>{10, 10, 20, 30});
  CHECK(one[0].score == 0.9);

  CHECK_THROWS_WITH(
      parse_detections(
          R"([{"image_id":1,"category_id":5,"bbox":[0,0,1,1],"score":0.5}])", ds),
      Catch::Matchers::ContainsSubstring("unknown category id 5"));

  CHECK_THROWS_WITH(
      parse_detections(
          R"([{"image_id":9,"category_id":1,"bbox":[0,0,1,1],"score":0.5}])", ds),
      Catch::Matchers::ContainsSubstring("unknown image id 9"));

  // lenient mode keeps records for unknown images
  const auto lenient = parse_detections(
      R"([{"image_id":9,"category_id":1,"bbox":[0,0,1,1],"score":0.5}])", ds, true);
  CHECK(lenient.size() == 1);

  CHECK_THROWS_WITH(
      parse_detections(
          R"([{"image_id":1,"category_id":1,"bbox":[0,0,1,1],"score":1.5}])", ds),
      Catch::Matchers::ContainsSubstring("outside [0, 1]"));
}

TEST_CASE("detections round trip exactly") {
  const Dataset ds = parse_dataset(fixtures::tiny_dataset_json());
  std::mt19937_64 rng(11);
  std::vector<Detection> dets;
  for (int i = 0; i < 40; ++i) {
    Detection d;
    d.image_id = 1 + static_cast<std::int64_t>(rng() % 2);
    d.category_id = 1;
    d.bbox = {static_cast<double>(rng() % 100) / 7.0,
              static_cast<double>(rng() % 100) / 3.0,
              1.0 + static_cast<double>(rng() % 50) / 11.0,
              1.0 + static_cast<double>(rng() % 50) / 13.0};
    d.score = static_cast<double>(rng() % 10000) / 10000.0;
    dets.push_back(d);
  }
  CHECK(parse_detections(write_detections(dets), ds) == dets);
}
