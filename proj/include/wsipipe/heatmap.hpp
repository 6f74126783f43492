#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wsipipe/annotations.hpp"
#include "wsipipe/common.hpp"
#include "wsipipe/image.hpp"
#include "wsipipe/tiling.hpp"

namespace wsipipe {

// Per-patch probabilities aligned to the tiling grid.
struct HeatGrid {
    std::string slide_id;
    int rows = 0;
    int cols = 0;
    int patch_size = 0;
    int stride = 0;
    std::vector<double> values; // row-major rows x cols

    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

// Per-pixel probability over the patch-covered footprint of the slide.
// Pixels outside every patch (right/bottom margins) are flagged uncovered.
struct PixelField {
    int width = 0;
    int height = 0;
    std::vector<float> values;
    std::vector<std::uint8_t> covered;

    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    bool is_covered(int x, int y) const {
        return covered[static_cast<std::size_t>(y) * width + x] != 0;
    }
};

enum class PixelRule { mean, max, nearest };

inline PixelRule parse_pixel_rule(const std::string& name) {
    if (name == "mean") return PixelRule::mean;
    if (name == "max") return PixelRule::max;
    if (name == "nearest") return PixelRule::nearest;
    throw ValidationError("unknown pixel rule '" + name + "' (mean, max or nearest)");
}

struct StitchResult {
    HeatGrid grid;
    PixelField field;
};

// scores[i] belongs to plan[i]; every planned patch needs exactly one score.
inline StitchResult stitch(const std::vector<PatchCoord>& plan, const std::vector<double>& scores,
                           int width, int height, PixelRule rule = PixelRule::mean) {
    if (plan.empty()) throw ValidationError("stitch: empty patch plan");
    if (scores.size() != plan.size())
        throw ValidationError("stitch: got " + std::to_string(scores.size()) + " scores for " +
                              std::to_string(plan.size()) + " patches");
    for (double s : scores)
        if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("stitch: scores must lie in [0, 1]");

    StitchResult out;
    HeatGrid& grid = out.grid;
    grid.slide_id = plan[0].slide_id;
    grid.patch_size = plan[0].size;
    for (const auto& p : plan) {
        grid.rows = std::max(grid.rows, p.row + 1);
        grid.cols = std::max(grid.cols, p.col + 1);
    }
    if (plan.size() != static_cast<std::size_t>(grid.rows) * grid.cols)
        throw ValidationError("stitch: patch plan does not form a full grid");
    grid.stride = grid.cols > 1 ? plan[1].x0 - plan[0].x0 : grid.patch_size;
    grid.values.assign(plan.size(), 0.0);
    for (std::size_t i = 0; i < plan.size(); ++i)
        grid.values[static_cast<std::size_t>(plan[i].row) * grid.cols + plan[i].col] = scores[i];

    PixelField& field = out.field;
    field.width = width;
    field.height = height;
    const std::size_t npix = static_cast<std::size_t>(width) * height;
    field.values.assign(npix, 0.0f);
    field.covered.assign(npix, 0);

    if (rule == PixelRule::mean) {
        std::vector<double> sum(npix, 0.0);
        std::vector<std::uint32_t> count(npix, 0);
        for (std::size_t i = 0; i < plan.size(); ++i) {
            const auto& p = plan[i];
            for (int y = p.y0; y < p.y0 + p.size; ++y)
                for (int x = p.x0; x < p.x0 + p.size; ++x) {
                    const std::size_t at = static_cast<std::size_t>(y) * width + x;
                    sum[at] += scores[i];
                    ++count[at];
                }
        }
        for (std::size_t i = 0; i < npix; ++i)
            if (count[i]) {
                field.values[i] = static_cast<float>(sum[i] / count[i]);
                field.covered[i] = 1;
            }
    } else if (rule == PixelRule::max) {
        for (std::size_t i = 0; i < plan.size(); ++i) {
            const auto& p = plan[i];
            for (int y = p.y0; y < p.y0 + p.size; ++y)
                for (int x = p.x0; x < p.x0 + p.size; ++x) {
                    const std::size_t at = static_cast<std::size_t>(y) * width + x;
                    if (!field.covered[at] || field.values[at] < scores[i])
                        field.values[at] = static_cast<float>(scores[i]);
                    field.covered[at] = 1;
                }
        }
    } else { // nearest patch center; ties keep the earlier (row-major) patch
        std::vector<double> best(npix, 0.0);
        std::vector<std::uint8_t> seen(npix, 0);
        std::vector<double> dist(npix, 0.0);
        for (std::size_t i = 0; i < plan.size(); ++i) {
            const auto& p = plan[i];
            const double cx = p.x0 + (p.size - 1) / 2.0;
            const double cy = p.y0 + (p.size - 1) / 2.0;
            for (int y = p.y0; y < p.y0 + p.size; ++y)
                for (int x = p.x0; x < p.x0 + p.size; ++x) {
                    const std::size_t at = static_cast<std::size_t>(y) * width + x;
                    const double d = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    if (!seen[at] || d < dist[at]) {
                        seen[at] = 1;
                        dist[at] = d;
                        best[at] = scores[i];
                    }
                }
        }
        for (std::size_t i = 0; i < npix; ++i)
            if (seen[i]) {
                field.values[i] = static_cast<float>(best[i]);
                field.covered[i] = 1;
            }
    }
    return out;
}

// Stitch from a patch_id-keyed score map (the scores CSV restricted to one
// slide). Every planned patch must have a score and vice versa.
inline StitchResult stitch_by_id(const std::vector<PatchCoord>& plan,
                                 const std::map<std::string, double>& scores_by_id, int width,
                                 int height, PixelRule rule = PixelRule::mean) {
    std::vector<double> scores;
    scores.reserve(plan.size());
    for (const auto& p : plan) {
        const auto it = scores_by_id.find(p.patch_id());
        if (it == scores_by_id.end())
            throw ValidationError("stitch: no score for patch '" + p.patch_id() + "'");
        scores.push_back(it->second);
    }
    if (scores_by_id.size() != plan.size())
        throw ValidationError("stitch: " + std::to_string(scores_by_id.size() - plan.size()) +
                              " scores do not match any planned patch");
    return stitch(plan, scores, width, height, rule);
}

// Linear blue -> red map: p to (round(255 p), 0, round(255 (1-p))),
// rounding half away from zero.
inline std::array<std::uint8_t, 3> colorize_value(double p) {
    const long r = std::lround(255.0 * p);
    const long b = std::lround(255.0 * (1.0 - p));
    return {static_cast<std::uint8_t>(std::clamp(r, 0l, 255l)), 0,
            static_cast<std::uint8_t>(std::clamp(b, 0l, 255l))};
}

inline std::uint8_t grayscale_value(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const long v = std::lround(0.299 * r + 0.587 * g + 0.114 * b);
    return static_cast<std::uint8_t>(std::clamp(v, 0l, 255l));
}

namespace detail {

inline void paint_thick(SlideRaster& img, int x, int y, std::uint8_t r, std::uint8_t g,
                        std::uint8_t b) {
    static constexpr int offs[5][2] = {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (const auto& o : offs) {
        const int px = x + o[0], py = y + o[1];
        if (px < 0 || py < 0 || px >= img.width || py >= img.height) continue;
        std::uint8_t* at = img.at(px, py);
        at[0] = r;
        at[1] = g;
        at[2] = b;
    }
}

inline void draw_segment(SlideRaster& img, int x0, int y0, int x1, int y1, std::uint8_t r,
                         std::uint8_t g, std::uint8_t b) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    int x = x0, y = y0;
    while (true) {
        paint_thick(img, x, y, r, g, b);
        if (x == x1 && y == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y += sy;
        }
    }
}

} // namespace detail

inline void draw_polygon_outline(SlideRaster& img, const Polygon& poly, std::uint8_t r = 0,
                                 std::uint8_t g = 0, std::uint8_t b = 255) {
    const auto& v = poly.vertices;
    if (v.size() < 2) return;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto& a = v[i];
        const auto& c = v[(i + 1) % v.size()];
        detail::draw_segment(img, static_cast<int>(std::lround(a.x)),
                             static_cast<int>(std::lround(a.y)),
                             static_cast<int>(std::lround(c.x)),
                             static_cast<int>(std::lround(c.y)), r, g, b);
    }
}

// Grayscale slide blended with the colorized field over covered pixels;
// annotation outlines in 2-pixel blue on top.
inline SlideRaster render_overlay(const SlideRaster& slide, const PixelField& field,
                                  const AnnotationSet& annotations, double alpha = 0.4) {
    if (slide.width != field.width || slide.height != field.height)
        throw ValidationError("overlay: slide is " + std::to_string(slide.width) + "x" +
                              std::to_string(slide.height) + " but field is " +
                              std::to_string(field.width) + "x" + std::to_string(field.height));
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("overlay: alpha must be in [0, 1]");

    SlideRaster out;
    out.id = slide.id;
    out.width = slide.width;
    out.height = slide.height;
    out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const std::uint8_t* src = slide.at(x, y);
            const std::uint8_t gray = grayscale_value(src[0], src[1], src[2]);
            std::uint8_t* dst = out.at(x, y);
            if (field.is_covered(x, y)) {
                const auto color = colorize_value(field.at(x, y));
                for (int c = 0; c < 3; ++c) {
                    const long v = std::lround((1.0 - alpha) * gray + alpha * color[c]);
                    dst[c] = static_cast<std::uint8_t>(std::clamp(v, 0l, 255l));
                }
            } else {
                dst[0] = dst[1] = dst[2] = gray;
            }
        }
    for (const auto& poly : annotations.polygons) draw_polygon_outline(out, poly);
    return out;
}

// Raw field dump: float32 little-endian grid, then one coverage byte per
// pixel; the sidecar records the layout.
inline void save_pixel_field(const PixelField& field, const std::string& bin_path,
                             const std::string& sidecar_path) {
    std::vector<std::uint8_t> bytes;
    const std::size_t npix = field.values.size();
    bytes.resize(npix * 4 + npix);
    static_assert(sizeof(float) == 4);
    std::memcpy(bytes.data(), field.values.data(), npix * 4);
    std::memcpy(bytes.data() + npix * 4, field.covered.data(), npix);
    write_file_bytes(bin_path, bytes);

    nlohmann::json sidecar{{"width", field.width},
                           {"height", field.height},
                           {"dtype", "float32"},
                           {"coverage_offset", npix * 4}};
    std::filesystem::path p(sidecar_path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(sidecar_path, std::ios::binary);
    if (!f) throw Error("heatmap: cannot open '" + sidecar_path + "' for writing");
    f << sidecar.dump(2) << "\n";
}

inline PixelField load_pixel_field(const std::string& bin_path, const std::string& sidecar_path) {
    std::ifstream f(sidecar_path);
    if (!f) throw Error("heatmap: cannot open '" + sidecar_path + "'");
    nlohmann::json sidecar;
    f >> sidecar;
    PixelField field;
    field.width = sidecar.at("width").get<int>();
    field.height = sidecar.at("height").get<int>();
    const std::size_t npix = static_cast<std::size_t>(field.width) * field.height;
    const auto bytes = read_file_bytes(bin_path);
    if (bytes.size() != npix * 5) throw Error("heatmap: field file size mismatch in '" + bin_path + "'");
    field.values.resize(npix);
    field.covered.resize(npix);
    std::memcpy(field.values.data(), bytes.data(), npix * 4);
    std::memcpy(field.covered.data(), bytes.data() + npix * 4, npix);
    return field;
}

} // namespace wsipipe
