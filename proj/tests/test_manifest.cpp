#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <set>

#include "wsipipe/annotations.hpp"
#include "wsipipe/manifest.hpp"
#include "wsipipe/split.hpp"

using namespace wsipipe;

namespace {

DatasetManifest sample_manifest(int n) {
    DatasetManifest m;
    m.base_dir = "/data";
    for (int i = 0; i < n; ++i) {
        ManifestEntry e;
        e.slide_id = "s" + std::to_string(i);
        e.image_path = "slides/s" + std::to_string(i) + ".png";
        e.annotation_path = "annotations/s" + std::to_string(i) + ".json";
        m.slides.push_back(std::move(e));
    }
    return m;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("manifest save/load round-trip with split tags") {
    DatasetManifest m = sample_manifest(3);
    m.slides[0].split_tag = "train";
    m.slides[1].split_tag = "test";
    m.slides[2].split_tag = "train";
    const std::string path = temp_path("wsipipe_manifest_rt.json");
    save_manifest(m, path);
    const DatasetManifest r = load_manifest(path);
    REQUIRE(r.slides.size() == 3);
    REQUIRE(r.slides[1].slide_id == "s1");
    REQUIRE(r.slides[1].split_tag == "test");
    REQUIRE(r.slides[2].image_path == "slides/s2.png");
    REQUIRE(r.base_dir == std::filesystem::path(path).parent_path().string());
    REQUIRE(r.find("s0").annotation_path == "annotations/s0.json");
    REQUIRE_THROWS_AS(r.find("nope"), Error);
    std::remove(path.c_str());
}

TEST_CASE("manifest validation catches duplicates and bad tags") {
    DatasetManifest m = sample_manifest(2);
    m.slides[1].slide_id = m.slides[0].slide_id;
    REQUIRE_THROWS_AS(validate_manifest(m), ValidationError);
    m = sample_manifest(2);
    m.slides[0].split_tag = "validation";
    REQUIRE_THROWS_AS(validate_manifest(m), ValidationError);
    REQUIRE_THROWS_AS(validate_manifest(DatasetManifest{}), ValidationError);
}

TEST_CASE("annotations save/load round-trip") {
    AnnotationSet a;
    a.slide_id = "s9";
    Polygon p1;
    p1.vertices = {{0, 0}, {10, 0}, {10, 10}, {0, 10}};
    Polygon p2;
    p2.vertices = {{5.5, 1.25}, {9, 3}, {2, 8}};
    a.polygons = {p1, p2};
    const std::string path = temp_path("wsipipe_ann_rt.json");
    save_annotations(a, path);
    const AnnotationSet r = load_annotations(path);
    REQUIRE(r.slide_id == "s9");
    REQUIRE(r.polygons.size() == 2);
    REQUIRE(r.polygons[1].vertices[0].x == 5.5);
    REQUIRE(r.polygons[1].vertices[0].y == 1.25);
    std::remove(path.c_str());
}

TEST_CASE("split partitions slides exactly once") {
    const DatasetManifest m = sample_manifest(20);
    const SlideSplit s = split_by_slide(m, 0.25, 7);
    REQUIRE(s.test_ids.size() == 5);
    REQUIRE(s.train_ids.size() == 15);
    std::set<std::string> all(s.train_ids.begin(), s.train_ids.end());
    all.insert(s.test_ids.begin(), s.test_ids.end());
    REQUIRE(all.size() == 20);
    for (const auto& id : s.test_ids) REQUIRE(s.is_test(id));
    for (const auto& id : s.train_ids) REQUIRE(!s.is_test(id));
}

TEST_CASE("split is seed-deterministic and seed-sensitive") {
    const DatasetManifest m = sample_manifest(30);
    const SlideSplit a = split_by_slide(m, 0.3, 11);
    const SlideSplit b = split_by_slide(m, 0.3, 11);
    REQUIRE(a.test_ids == b.test_ids);
    const SlideSplit c = split_by_slide(m, 0.3, 12);
    REQUIRE(a.test_ids != c.test_ids); // 30C9 partitions; collision would be a miracle
}

TEST_CASE("split never empties a side") {
    const DatasetManifest m = sample_manifest(2);
    const SlideSplit s = split_by_slide(m, 0.01, 1);
    REQUIRE(s.test_ids.size() == 1);
    REQUIRE(s.train_ids.size() == 1);
    REQUIRE_THROWS_AS(split_by_slide(m, 0.0, 1), ValidationError);
    REQUIRE_THROWS_AS(split_by_slide(m, 1.0, 1), ValidationError);
    REQUIRE_THROWS_AS(split_by_slide(sample_manifest(1), 0.5, 1), ValidationError);
}
