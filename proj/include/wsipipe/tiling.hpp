#pragma once

#include <algorithm>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "wsipipe/annotations.hpp"
#include "wsipipe/common.hpp"
#include "wsipipe/csv.hpp"
#include "wsipipe/geometry.hpp"
#include "wsipipe/image.hpp"
#include "wsipipe/manifest.hpp"
#include "wsipipe/parallel.hpp"
#include "wsipipe/split.hpp"

namespace wsipipe {

struct TilingConfig {
    int patch_size = 256;
    int stride = 196;
    double label_threshold = 0.5;
};

inline void validate_tiling_config(const TilingConfig& cfg) {
    if (cfg.stride < 1) throw ValidationError("stride must be >= 1, got " + std::to_string(cfg.stride));
    if (cfg.patch_size < cfg.stride)
        throw ValidationError("patch size must be >= stride, got patch " + std::to_string(cfg.patch_size) +
                              " stride " + std::to_string(cfg.stride));
    if (!(cfg.label_threshold > 0.0 && cfg.label_threshold <= 1.0))
        throw ValidationError("label threshold must be in (0, 1], got " + std::to_string(cfg.label_threshold));
}

struct PatchCoord {
    std::string slide_id;
    int x0 = 0;
    int y0 = 0;
    int size = 256;
    int row = 0;
    int col = 0;

    std::string patch_id() const {
        return slide_id + "_r" + std::to_string(row) + "_c" + std::to_string(col);
    }
};

// Grid positions x0 = col*stride while the whole patch stays in bounds; the
// right/bottom margin narrower than one stride is discarded.
inline std::vector<PatchCoord> plan_patches(int width, int height, const TilingConfig& cfg,
                                            const std::string& slide_id = "") {
    validate_tiling_config(cfg);
    if (width < cfg.patch_size || height < cfg.patch_size)
        throw ValidationError("slide " + std::to_string(width) + "x" + std::to_string(height) +
                              " is smaller than patch size " + std::to_string(cfg.patch_size));
    const int cols = (width - cfg.patch_size) / cfg.stride + 1;
    const int rows = (height - cfg.patch_size) / cfg.stride + 1;
    std::vector<PatchCoord> out;
    out.reserve(static_cast<std::size_t>(cols) * rows);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out.push_back({slide_id, c * cfg.stride, r * cfg.stride, cfg.patch_size, r, c});
    return out;
}

// area(polygon ∩ patch rect) / area(rect), by exact clipping. A degenerate
// polygon contributes 0.
inline double polygon_rect_overlap(const Polygon& poly, const PatchCoord& rect) {
    const std::vector<Vec2> dedup = dedup_consecutive(poly.vertices);
    if (dedup.size() < 3) return 0.0;
    const double x0 = rect.x0, y0 = rect.y0;
    const double x1 = rect.x0 + rect.size, y1 = rect.y0 + rect.size;
    const std::vector<Vec2> clipped = clip_polygon_rect(dedup, x0, y0, x1, y1);
    if (clipped.size() < 3) return 0.0;
    const double area = shoelace_area(clipped);
    const double rect_area = static_cast<double>(rect.size) * rect.size;
    return std::clamp(area / rect_area, 0.0, 1.0);
}

enum class PatchLabel { normal = 0, cancer = 1 };

inline const char* to_string(PatchLabel label) { return label == PatchLabel::cancer ? "cancer" : "normal"; }

inline PatchLabel parse_patch_label(const std::string& s) {
    if (s == "cancer") return PatchLabel::cancer;
    if (s == "normal") return PatchLabel::normal;
    throw Error("unknown patch label '" + s + "'");
}

struct LabelResult {
    PatchLabel label = PatchLabel::normal;
    double overlap_fraction = 0.0;
};

// Overlap fractions of all polygons are summed then clamped to 1; annotation
// polygons are assumed mutually non-overlapping (overlaps would inflate the sum).
inline LabelResult label_patch(const PatchCoord& coord, const AnnotationSet& annotations,
                               double threshold) {
    double fraction = 0.0;
    for (const Polygon& poly : annotations.polygons) fraction += polygon_rect_overlap(poly, coord);
    fraction = std::min(fraction, 1.0);
    return {fraction >= threshold ? PatchLabel::cancer : PatchLabel::normal, fraction};
}

// Byte-exact row-major crop of the slide sub-rectangle.
inline std::vector<std::uint8_t> extract_patch(const SlideRaster& slide, const PatchCoord& coord) {
    if (coord.x0 < 0 || coord.y0 < 0 || coord.x0 + coord.size > slide.width ||
        coord.y0 + coord.size > slide.height)
        throw ValidationError("patch " + coord.patch_id() + " out of slide bounds");
    std::vector<std::uint8_t> out(static_cast<std::size_t>(coord.size) * coord.size * 3);
    const std::size_t row_bytes = static_cast<std::size_t>(coord.size) * 3;
    for (int j = 0; j < coord.size; ++j) {
        const std::uint8_t* src = slide.at(coord.x0, coord.y0 + j);
        std::copy(src, src + row_bytes, out.data() + static_cast<std::size_t>(j) * row_bytes);
    }
    return out;
}

struct InventoryRow {
    PatchCoord coord;
    PatchLabel label = PatchLabel::normal;
    double overlap_fraction = 0.0;
    std::string split; // "train" or "test"
};

struct TileResult {
    std::vector<InventoryRow> rows; // manifest slide order, then row-major grid order
    std::size_t cancer_count = 0;
    std::size_t normal_count = 0;
};

// Plans and labels every patch of every slide in the split. Only image
// headers are needed for planning, but dimensions come from the decoded
// rasters so a mismatched file fails here rather than at extraction.
inline TileResult tile_dataset(const DatasetManifest& manifest, const TilingConfig& cfg,
                               const SlideSplit& split, int threads = 1) {
    validate_tiling_config(cfg);
    std::vector<std::vector<InventoryRow>> per_slide(manifest.slides.size());
    std::exception_ptr first_error;
    std::mutex error_mutex;
    parallel_for(manifest.slides.size(), threads, [&](std::size_t i) {
        try {
            const ManifestEntry& entry = manifest.slides[i];
            const bool in_test = split.is_test(entry.slide_id);
            const SlideRaster slide = load_slide(manifest.resolve(entry.image_path), entry.slide_id);
            const AnnotationSet ann = load_annotations(manifest.resolve(entry.annotation_path));
            std::vector<InventoryRow> rows;
            for (const PatchCoord& coord : plan_patches(slide.width, slide.height, cfg, entry.slide_id)) {
                const LabelResult lr = label_patch(coord, ann, cfg.label_threshold);
                rows.push_back({coord, lr.label, lr.overlap_fraction, in_test ? "test" : "train"});
            }
            per_slide[i] = std::move(rows);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    });
    if (first_error) std::rethrow_exception(first_error);

    TileResult result;
    for (std::vector<InventoryRow>& rows : per_slide) {
        for (InventoryRow& row : rows) {
            if (row.label == PatchLabel::cancer) ++result.cancer_count;
            else ++result.normal_count;
            result.rows.push_back(std::move(row));
        }
    }
    return result;
}

inline void save_inventory(const std::vector<InventoryRow>& rows, const std::string& path) {
    CsvWriter csv(path);
    csv.row({"patch_id", "slide_id", "row", "col", "x0", "y0", "size", "label", "overlap_fraction", "split"});
    for (const InventoryRow& r : rows) {
        csv.row({r.coord.patch_id(), r.coord.slide_id, std::to_string(r.coord.row),
                 std::to_string(r.coord.col), std::to_string(r.coord.x0), std::to_string(r.coord.y0),
                 std::to_string(r.coord.size), to_string(r.label), format_double(r.overlap_fraction),
                 r.split});
    }
    csv.close();
}

inline std::vector<InventoryRow> load_inventory(const std::string& path) {
    const CsvTable table = read_csv(path);
    const int c_slide = table.column("slide_id");
    const int c_row = table.column("row");
    const int c_col = table.column("col");
    const int c_x0 = table.column("x0");
    const int c_y0 = table.column("y0");
    const int c_size = table.column("size");
    const int c_label = table.column("label");
    const int c_frac = table.column("overlap_fraction");
    const int c_split = table.column("split");
    std::vector<InventoryRow> rows;
    rows.reserve(table.rows.size());
    for (const auto& fields : table.rows) {
        InventoryRow r;
        r.coord.slide_id = fields[c_slide];
        r.coord.row = static_cast<int>(parse_long(fields[c_row]));
        r.coord.col = static_cast<int>(parse_long(fields[c_col]));
        r.coord.x0 = static_cast<int>(parse_long(fields[c_x0]));
        r.coord.y0 = static_cast<int>(parse_long(fields[c_y0]));
        r.coord.size = static_cast<int>(parse_long(fields[c_size]));
        r.label = parse_patch_label(fields[c_label]);
        r.overlap_fraction = parse_double(fields[c_frac]);
        r.split = fields[c_split];
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace wsipipe
