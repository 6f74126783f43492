#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "wsipipe/annotations.hpp"
#include "wsipipe/common.hpp"
#include "wsipipe/image.hpp"
#include "wsipipe/manifest.hpp"
#include "wsipipe/parallel.hpp"
#include "wsipipe/rng.hpp"

namespace wsipipe {

struct SynthConfig {
    int slide_count = 1;
    int width = 1024;
    int height = 1024;
    int cancer_regions_per_slide = 2;
    std::uint64_t seed = 1;
};

inline void validate_synth_config(const SynthConfig& cfg) {
    if (cfg.slide_count < 1) throw ValidationError("slide count must be >= 1");
    if (cfg.width < 16 || cfg.height < 16)
        throw ValidationError("slide dimensions must be >= 16, got " + std::to_string(cfg.width) + "x" +
                              std::to_string(cfg.height));
    if (cfg.cancer_regions_per_slide < 1) throw ValidationError("cancer regions per slide must be >= 1");
}

namespace detail {

struct Rect {
    int x0, y0, w, h;
    bool intersects(const Rect& o) const {
        return x0 < o.x0 + o.w && o.x0 < x0 + w && y0 < o.y0 + o.h && o.y0 < y0 + h;
    }
};

// Separable box blur, radius r, clamp-to-edge via window renormalization.
inline void box_blur(std::vector<double>& field, int w, int h, int r) {
    std::vector<double> tmp(field.size());
    for (int y = 0; y < h; ++y) {
        const double* src = field.data() + static_cast<std::size_t>(y) * w;
        double* dst = tmp.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            const int lo = std::max(0, x - r), hi = std::min(w - 1, x + r);
            double acc = 0.0;
            for (int i = lo; i <= hi; ++i) acc += src[i];
            dst[x] = acc / (hi - lo + 1);
        }
    }
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            const int lo = std::max(0, y - r), hi = std::min(h - 1, y + r);
            double acc = 0.0;
            for (int i = lo; i <= hi; ++i) acc += tmp[static_cast<std::size_t>(i) * w + x];
            field[static_cast<std::size_t>(y) * w + x] = acc / (hi - lo + 1);
        }
    }
}

} // namespace detail

// Produces one slide's raster and annotations from (seed, slide index) alone.
// Normal tissue: white noise blurred (radius 4) and rescaled to [96,160].
// Cancer regions: axis-aligned rectangles of {0,255} speckle at p=0.5.
// All three channels share the base value with offsets (+0,+8,-8), clamped.
inline std::pair<SlideRaster, AnnotationSet> synth_slide(const SynthConfig& cfg, int slide_index,
                                                         const std::string& slide_id) {
    const int w = cfg.width, h = cfg.height;
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(slide_index)));

    std::vector<double> field(static_cast<std::size_t>(w) * h);
    for (double& v : field) v = rng.uniform();
    detail::box_blur(field, w, h, 4);

    double lo = field[0], hi = field[0];
    for (double v : field) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<int> base(field.size());
    if (hi > lo) {
        for (std::size_t i = 0; i < field.size(); ++i)
            base[i] = static_cast<int>(std::lround(96.0 + 64.0 * (field[i] - lo) / (hi - lo)));
    } else {
        std::fill(base.begin(), base.end(), 128);
    }

    // Non-overlapping rectangles, sized ~[1/4, 2/5] of each slide dimension.
    std::vector<detail::Rect> rects;
    for (int k = 0; k < cfg.cancer_regions_per_slide; ++k) {
        const int min_w = std::max(1, w / 4), max_w = std::max(min_w, 2 * w / 5);
        const int min_h = std::max(1, h / 4), max_h = std::max(min_h, 2 * h / 5);
        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
            detail::Rect r;
            r.w = static_cast<int>(rng.uniform_int(min_w, max_w));
            r.h = static_cast<int>(rng.uniform_int(min_h, max_h));
            if (r.w > w || r.h > h) continue;
            r.x0 = static_cast<int>(rng.uniform_int(0, w - r.w));
            r.y0 = static_cast<int>(rng.uniform_int(0, h - r.h));
            placed = std::none_of(rects.begin(), rects.end(),
                                  [&](const detail::Rect& o) { return r.intersects(o); });
            if (placed) rects.push_back(r);
        }
        if (!placed)
            throw Error("synth: could not place " + std::to_string(cfg.cancer_regions_per_slide) +
                        " non-overlapping cancer regions in " + std::to_string(w) + "x" + std::to_string(h));
    }
    for (const detail::Rect& r : rects) {
        for (int y = r.y0; y < r.y0 + r.h; ++y)
            for (int x = r.x0; x < r.x0 + r.w; ++x)
                base[static_cast<std::size_t>(y) * w + x] = rng.bernoulli(0.5) ? 255 : 0;
    }

    SlideRaster slide;
    slide.id = slide_id;
    slide.width = w;
    slide.height = h;
    slide.pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < base.size(); ++i) {
        const int v = base[i];
        slide.pixels[i * 3 + 0] = static_cast<std::uint8_t>(v);
        slide.pixels[i * 3 + 1] = static_cast<std::uint8_t>(std::min(255, v + 8));
        slide.pixels[i * 3 + 2] = static_cast<std::uint8_t>(std::max(0, v - 8));
    }

    AnnotationSet ann;
    ann.slide_id = slide_id;
    for (const detail::Rect& r : rects) {
        Polygon poly;
        const double x0 = r.x0, y0 = r.y0, x1 = r.x0 + r.w, y1 = r.y0 + r.h;
        poly.vertices = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
        ann.polygons.push_back(std::move(poly));
    }
    return {std::move(slide), std::move(ann)};
}

inline std::string synth_slide_id(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "slide_%03d", index);
    return std::string(buf);
}

inline DatasetManifest generate_synthetic_dataset(const SynthConfig& cfg, const std::string& out_dir,
                                                  int threads = 1) {
    validate_synth_config(cfg);
    std::filesystem::create_directories(std::filesystem::path(out_dir) / "slides");
    std::filesystem::create_directories(std::filesystem::path(out_dir) / "annotations");

    DatasetManifest manifest;
    manifest.base_dir = out_dir;
    manifest.slides.resize(static_cast<std::size_t>(cfg.slide_count));

    std::exception_ptr first_error;
    std::mutex error_mutex;
    parallel_for(static_cast<std::size_t>(cfg.slide_count), threads, [&](std::size_t i) {
        try {
            const std::string id = synth_slide_id(static_cast<int>(i));
            auto [slide, ann] = synth_slide(cfg, static_cast<int>(i), id);
            ManifestEntry& e = manifest.slides[i];
            e.slide_id = id;
            e.image_path = "slides/" + id + ".png";
            e.annotation_path = "annotations/" + id + ".json";
            save_slide_png(slide, manifest.resolve(e.image_path));
            save_annotations(ann, manifest.resolve(e.annotation_path));
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    });
    if (first_error) std::rethrow_exception(first_error);

    save_manifest(manifest, (std::filesystem::path(out_dir) / "manifest.json").string());
    return manifest;
}

} // namespace wsipipe
