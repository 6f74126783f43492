#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wsipipe/common.hpp"

namespace wsipipe {

struct ManifestEntry {
    std::string slide_id;
    std::string image_path;      // relative to the manifest's directory
    std::string annotation_path; // same
    std::string split_tag;       // "", "train" or "test"
};

struct DatasetManifest {
    std::vector<ManifestEntry> slides;
    std::string base_dir; // directory the manifest was loaded from

    std::string resolve(const std::string& rel) const {
        return (std::filesystem::path(base_dir) / rel).string();
    }
    const ManifestEntry& find(const std::string& slide_id) const {
        for (const ManifestEntry& e : slides)
            if (e.slide_id == slide_id) return e;
        throw Error("manifest: unknown slide_id '" + slide_id + "'");
    }
};

inline void validate_manifest(const DatasetManifest& m) {
    if (m.slides.empty()) throw ValidationError("empty manifest");
    std::set<std::string> seen;
    for (const ManifestEntry& e : m.slides) {
        if (e.slide_id.empty()) throw ValidationError("manifest: empty slide_id");
        if (!seen.insert(e.slide_id).second)
            throw ValidationError("manifest: duplicate slide_id '" + e.slide_id + "'");
        if (e.image_path.empty() || e.annotation_path.empty())
            throw ValidationError("manifest: empty path for slide '" + e.slide_id + "'");
        if (!e.split_tag.empty() && e.split_tag != "train" && e.split_tag != "test")
            throw ValidationError("manifest: split tag must be 'train' or 'test', got '" + e.split_tag + "'");
    }
}

inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("manifest: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("manifest: parse error in '" + path + "': " + e.what());
    }
    if (!j.is_array()) throw Error("manifest: top-level JSON array expected in '" + path + "'");
    DatasetManifest m;
    m.base_dir = std::filesystem::path(path).parent_path().string();
    for (const auto& rec : j) {
        if (!rec.is_object() || !rec.contains("slide_id") || !rec.contains("image") ||
            !rec.contains("annotations"))
            throw Error("manifest: malformed record in '" + path + "'");
        ManifestEntry e;
        e.slide_id = rec.at("slide_id").get<std::string>();
        e.image_path = rec.at("image").get<std::string>();
        e.annotation_path = rec.at("annotations").get<std::string>();
        if (rec.contains("split")) e.split_tag = rec.at("split").get<std::string>();
        m.slides.push_back(std::move(e));
    }
    validate_manifest(m);
    return m;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    validate_manifest(m);
    nlohmann::json j = nlohmann::json::array();
    for (const ManifestEntry& e : m.slides) {
        nlohmann::json rec{{"slide_id", e.slide_id}, {"image", e.image_path}, {"annotations", e.annotation_path}};
        if (!e.split_tag.empty()) rec["split"] = e.split_tag;
        j.push_back(rec);
    }
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("manifest: cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw Error("manifest: write failure on '" + path + "'");
}

} // namespace wsipipe
