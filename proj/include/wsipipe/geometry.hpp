#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "wsipipe/common.hpp"

namespace wsipipe {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

// Closed polygon in slide pixel coordinates; the edge last->first is implicit.
struct Polygon {
    std::vector<Vec2> vertices;
};

inline double shoelace_area(const std::vector<Vec2>& v) {
    if (v.size() < 3) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Vec2& a = v[i];
        const Vec2& b = v[(i + 1) % v.size()];
        acc += a.x * b.y - b.x * a.y;
    }
    return 0.5 * std::abs(acc);
}

inline std::vector<Vec2> dedup_consecutive(const std::vector<Vec2>& v) {
    std::vector<Vec2> out;
    out.reserve(v.size());
    for (const Vec2& p : v) {
        if (!out.empty() && out.back().x == p.x && out.back().y == p.y) continue;
        out.push_back(p);
    }
    if (out.size() > 1 && out.front().x == out.back().x && out.front().y == out.back().y)
        out.pop_back();
    return out;
}

inline void validate_polygon(const Polygon& poly) {
    if (poly.vertices.size() < 3)
        throw ValidationError("polygon must have at least 3 vertices, got " +
                              std::to_string(poly.vertices.size()));
    for (const Vec2& p : poly.vertices)
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            throw ValidationError("polygon vertex is not finite");
    const std::vector<Vec2> d = dedup_consecutive(poly.vertices);
    if (d.size() < 3 || shoelace_area(d) == 0.0)
        throw ValidationError("polygon has zero area");
}

// Sutherland-Hodgman clip of a polygon against the axis-aligned rectangle
// [x0,x1] x [y0,y1]. The result may be empty.
inline std::vector<Vec2> clip_polygon_rect(const std::vector<Vec2>& poly,
                                           double x0, double y0, double x1, double y1) {
    // inside(p) and intersect(a,b) per clip edge; edge = 0:left 1:right 2:top 3:bottom.
    auto clip_edge = [](const std::vector<Vec2>& in, int edge, double bound) {
        std::vector<Vec2> out;
        out.reserve(in.size() + 4);
        auto inside = [&](const Vec2& p) {
            switch (edge) {
                case 0: return p.x >= bound;
                case 1: return p.x <= bound;
                case 2: return p.y >= bound;
                default: return p.y <= bound;
            }
        };
        auto intersect = [&](const Vec2& a, const Vec2& b) {
            Vec2 r;
            if (edge < 2) {
                const double t = (bound - a.x) / (b.x - a.x);
                r.x = bound;
                r.y = a.y + t * (b.y - a.y);
            } else {
                const double t = (bound - a.y) / (b.y - a.y);
                r.x = a.x + t * (b.x - a.x);
                r.y = bound;
            }
            return r;
        };
        for (std::size_t i = 0; i < in.size(); ++i) {
            const Vec2& cur = in[i];
            const Vec2& prev = in[(i + in.size() - 1) % in.size()];
            const bool cur_in = inside(cur);
            const bool prev_in = inside(prev);
            if (cur_in) {
                if (!prev_in) out.push_back(intersect(prev, cur));
                out.push_back(cur);
            } else if (prev_in) {
                out.push_back(intersect(prev, cur));
            }
        }
        return out;
    };

    std::vector<Vec2> result = poly;
    result = clip_edge(result, 0, x0);
    if (result.empty()) return result;
    result = clip_edge(result, 1, x1);
    if (result.empty()) return result;
    result = clip_edge(result, 2, y0);
    if (result.empty()) return result;
    result = clip_edge(result, 3, y1);
    return result;
}

} // namespace wsipipe
