#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wsipipe/common.hpp"
#include "wsipipe/geometry.hpp"

namespace wsipipe {

// Cancer-region polygons for one slide, in slide pixel coordinates.
// Zero polygons is a valid state (a fully normal slide).
struct AnnotationSet {
    std::string slide_id;
    std::vector<Polygon> polygons;
};

inline AnnotationSet load_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("annotations: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("annotations: parse error in '" + path + "': " + e.what());
    }
    if (!j.is_object() || !j.contains("slide_id") || !j.contains("polygons"))
        throw Error("annotations: malformed file '" + path + "'");
    AnnotationSet set;
    set.slide_id = j.at("slide_id").get<std::string>();
    for (const auto& rec : j.at("polygons")) {
        if (!rec.is_object() || !rec.contains("vertices"))
            throw Error("annotations: malformed polygon in '" + path + "'");
        Polygon poly;
        for (const auto& v : rec.at("vertices")) {
            if (!v.is_array() || v.size() != 2)
                throw Error("annotations: vertex must be [x, y] in '" + path + "'");
            poly.vertices.push_back({v[0].get<double>(), v[1].get<double>()});
        }
        validate_polygon(poly);
        set.polygons.push_back(std::move(poly));
    }
    return set;
}

inline void save_annotations(const AnnotationSet& set, const std::string& path) {
    nlohmann::json polys = nlohmann::json::array();
    for (const Polygon& poly : set.polygons) {
        nlohmann::json verts = nlohmann::json::array();
        for (const Vec2& v : poly.vertices) verts.push_back({v.x, v.y});
        polys.push_back({{"label", "cancer"}, {"vertices", verts}});
    }
    nlohmann::json j{{"slide_id", set.slide_id}, {"polygons", polys}};
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("annotations: cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw Error("annotations: write failure on '" + path + "'");
}

} // namespace wsipipe
