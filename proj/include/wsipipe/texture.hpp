#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wsipipe/common.hpp"
#include "wsipipe/csv.hpp"

namespace wsipipe {

// Linear-interpolation quantile on order statistics ("type 7"):
// h = (n-1)q, result = v[floor(h)] + frac(h) * (v[floor(h)+1] - v[floor(h)]).
// `sorted` must be ascending and non-empty.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw ValidationError("quantile of empty sequence");
    if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile q must be in [0, 1]");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, q);
}

// Norm(I) = 2*(I - quantile(I,0.5)) / |quantile(I,0.75) - quantile(I,0.25)|,
// computed over all values of one channel. A near-zero IQR keeps the
// centering and replaces the denominator with 1.
struct ChannelNorm {
    double median = 0.0;
    double iqr = 1.0;
    bool degenerate = false;
};

inline ChannelNorm channel_norm_params(const std::vector<double>& values) {
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    ChannelNorm n;
    n.median = quantile_sorted(sorted, 0.5);
    n.iqr = std::abs(quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25));
    if (n.iqr < 1e-12) {
        n.iqr = 1.0;
        n.degenerate = true;
    }
    return n;
}

// Quantile-normalized patch, one real plane per RGB channel.
struct NormalizedPatch {
    int width = 0;
    int height = 0;
    std::array<std::vector<double>, 3> channels;
    int degenerate_channels = 0; // count of channels that hit the IQR fallback
};

inline std::vector<double> normalize_channel(const std::vector<double>& values, bool* degenerate = nullptr) {
    const ChannelNorm n = channel_norm_params(values);
    if (degenerate) *degenerate = n.degenerate;
    std::vector<double> out(values.size());
    const double scale = 2.0 / n.iqr;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = scale * (values[i] - n.median);
    return out;
}

inline NormalizedPatch normalize_patch(const std::uint8_t* rgb, int width, int height) {
    NormalizedPatch out;
    out.width = width;
    out.height = height;
    const std::size_t n = static_cast<std::size_t>(width) * height;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> values(n);
        for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<double>(rgb[i * 3 + c]);
        bool degenerate = false;
        out.channels[c] = normalize_channel(values, &degenerate);
        if (degenerate) ++out.degenerate_channels;
    }
    return out;
}

struct GrayGrid {
    int width = 0;
    int height = 0;
    int levels = 8;
    std::vector<int> cells; // row-major, each in [0, levels)

    int at(int x, int y) const { return cells[static_cast<std::size_t>(y) * width + x]; }
};

inline int quantize_luminance(double lum, int levels) {
    const double clamped = std::clamp(lum, -3.0, 3.0);
    const int level = static_cast<int>(std::floor((clamped + 3.0) / 6.0 * levels));
    return std::min(levels - 1, level);
}

// Luminance on the normalized planes, clamped to [-3,3], quantized to G levels.
inline GrayGrid to_gray_quantized(const NormalizedPatch& norm, int levels) {
    if (levels < 2) throw ValidationError("gray levels must be >= 2, got " + std::to_string(levels));
    GrayGrid grid;
    grid.width = norm.width;
    grid.height = norm.height;
    grid.levels = levels;
    const std::size_t n = static_cast<std::size_t>(norm.width) * norm.height;
    grid.cells.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double lum =
            0.299 * norm.channels[0][i] + 0.587 * norm.channels[1][i] + 0.114 * norm.channels[2][i];
        grid.cells[i] = quantize_luminance(lum, levels);
    }
    return grid;
}

struct GlcmMatrix {
    int levels = 8;
    int dx = 1;
    int dy = 0;
    bool symmetric = true;
    std::vector<double> p; // levels x levels, row-major, sums to 1

    double at(int i, int j) const { return p[static_cast<std::size_t>(i) * levels + j]; }
};

// Co-occurrence counts of (level at q, level at q+offset) over all pixel
// pairs inside the window; symmetric mode adds the transpose before
// normalizing to sum 1.
inline GlcmMatrix compute_glcm(const GrayGrid& grid, int win_x, int win_y, int win_w, int win_h,
                               int dx, int dy, bool symmetric) {
    if (win_x < 0 || win_y < 0 || win_x + win_w > grid.width || win_y + win_h > grid.height)
        throw ValidationError("glcm window out of grid bounds");
    GlcmMatrix glcm;
    glcm.levels = grid.levels;
    glcm.dx = dx;
    glcm.dy = dy;
    glcm.symmetric = symmetric;
    glcm.p.assign(static_cast<std::size_t>(grid.levels) * grid.levels, 0.0);

    double total = 0.0;
    for (int y = win_y; y < win_y + win_h; ++y) {
        for (int x = win_x; x < win_x + win_w; ++x) {
            const int nx = x + dx, ny = y + dy;
            if (nx < win_x || nx >= win_x + win_w || ny < win_y || ny >= win_y + win_h) continue;
            const int a = grid.at(x, y);
            const int b = grid.at(nx, ny);
            glcm.p[static_cast<std::size_t>(a) * grid.levels + b] += 1.0;
            if (symmetric) glcm.p[static_cast<std::size_t>(b) * grid.levels + a] += 1.0;
            total += symmetric ? 2.0 : 1.0;
        }
    }
    if (total == 0.0)
        throw ValidationError("glcm offset (" + std::to_string(dx) + "," + std::to_string(dy) +
                              ") yields no pixel pairs in a " + std::to_string(win_w) + "x" +
                              std::to_string(win_h) + " window");
    for (double& v : glcm.p) v /= total;
    return glcm;
}

struct TextureFeatures {
    double mean = 0.0;
    double variance = 0.0;
    double homogeneity = 0.0;
    double contrast = 0.0;
    double dissimilarity = 0.0;
    double entropy = 0.0;
    double second_moment = 0.0;
    double correlation = 0.0;

    std::array<double, 8> as_array() const {
        return {mean, variance, homogeneity, contrast, dissimilarity, entropy, second_moment, correlation};
    }
};

inline TextureFeatures glcm_features(const GlcmMatrix& glcm) {
    const int g = glcm.levels;
    double mu_i = 0.0, mu_j = 0.0;
    for (int i = 0; i < g; ++i) {
        for (int j = 0; j < g; ++j) {
            const double p = glcm.at(i, j);
            mu_i += i * p;
            mu_j += j * p;
        }
    }
    double var_i = 0.0, var_j = 0.0;
    TextureFeatures f;
    for (int i = 0; i < g; ++i) {
        for (int j = 0; j < g; ++j) {
            const double p = glcm.at(i, j);
            const double d = static_cast<double>(i - j);
            var_i += (i - mu_i) * (i - mu_i) * p;
            var_j += (j - mu_j) * (j - mu_j) * p;
            f.homogeneity += p / (1.0 + d * d);
            f.contrast += d * d * p;
            f.dissimilarity += std::abs(d) * p;
            if (p > 0.0) f.entropy -= p * std::log(p);
            f.second_moment += p * p;
        }
    }
    f.mean = mu_i;
    f.variance = var_i;
    const double sigma = std::sqrt(var_i) * std::sqrt(var_j);
    if (sigma >= 1e-12) {
        double corr = 0.0;
        for (int i = 0; i < g; ++i)
            for (int j = 0; j < g; ++j) corr += (i - mu_i) * (j - mu_j) * glcm.at(i, j);
        f.correlation = corr / sigma;
    }
    return f;
}

struct TextureConfig {
    int gray_levels = 8;
    int offset_dx = 1;
    int offset_dy = 0;
    bool symmetric = true;
    int segment_size = 7; // segments tile with stride = size, edges discarded
};

inline void validate_texture_config(const TextureConfig& cfg) {
    if (cfg.gray_levels < 2) throw ValidationError("gray levels must be >= 2");
    if (cfg.segment_size < 1) throw ValidationError("segment size must be >= 1");
    if (std::abs(cfg.offset_dx) >= cfg.segment_size || std::abs(cfg.offset_dy) >= cfg.segment_size)
        throw ValidationError("glcm offset larger than segment leaves no pixel pairs");
    if (cfg.offset_dx == 0 && cfg.offset_dy == 0)
        throw ValidationError("glcm offset must be non-zero");
}

using FeatureVector = std::array<double, 16>;

inline constexpr std::array<const char*, 8> kFeatureNames = {
    "mean", "variance", "homogeneity", "contrast", "dissimilarity", "entropy", "second_moment",
    "correlation"};

// Normalize -> quantize -> tile non-overlapping segments (partial edges
// discarded) -> 8 features per segment -> per-feature mean then per-feature
// variance across segments. Two-pass aggregation in fixed segment order.
inline FeatureVector patch_feature_vector(const std::uint8_t* rgb, int width, int height,
                                          const TextureConfig& cfg) {
    validate_texture_config(cfg);
    if (width < cfg.segment_size || height < cfg.segment_size)
        throw ValidationError("patch smaller than one texture segment");
    const NormalizedPatch norm = normalize_patch(rgb, width, height);
    const GrayGrid grid = to_gray_quantized(norm, cfg.gray_levels);

    const int seg_cols = width / cfg.segment_size;
    const int seg_rows = height / cfg.segment_size;
    std::vector<std::array<double, 8>> per_segment;
    per_segment.reserve(static_cast<std::size_t>(seg_cols) * seg_rows);
    for (int sy = 0; sy < seg_rows; ++sy) {
        for (int sx = 0; sx < seg_cols; ++sx) {
            const GlcmMatrix glcm =
                compute_glcm(grid, sx * cfg.segment_size, sy * cfg.segment_size, cfg.segment_size,
                             cfg.segment_size, cfg.offset_dx, cfg.offset_dy, cfg.symmetric);
            per_segment.push_back(glcm_features(glcm).as_array());
        }
    }

    const double n = static_cast<double>(per_segment.size());
    FeatureVector out{};
    for (int k = 0; k < 8; ++k) {
        double mean = 0.0;
        for (const auto& seg : per_segment) mean += seg[k];
        mean /= n;
        double var = 0.0;
        for (const auto& seg : per_segment) var += (seg[k] - mean) * (seg[k] - mean);
        var /= n;
        out[static_cast<std::size_t>(k)] = mean;
        out[static_cast<std::size_t>(k) + 8] = var;
    }
    return out;
}

struct FeatureRow {
    std::string patch_id;
    int label = 0; // 1 = cancer
    FeatureVector features{};
};

inline void save_features(const std::vector<FeatureRow>& rows, const std::string& path) {
    CsvWriter csv(path);
    std::vector<std::string> header{"patch_id", "label"};
    for (int i = 1; i <= 16; ++i) header.push_back("f" + std::to_string(i));
    csv.row(header);
    for (const FeatureRow& r : rows) {
        std::vector<std::string> fields{r.patch_id, std::to_string(r.label)};
        for (double v : r.features) fields.push_back(format_double(v));
        csv.row(fields);
    }
    csv.close();
}

inline std::vector<FeatureRow> load_features(const std::string& path) {
    const CsvTable table = read_csv(path);
    const int c_id = table.column("patch_id");
    const int c_label = table.column("label");
    std::array<int, 16> c_f{};
    for (int i = 0; i < 16; ++i) c_f[static_cast<std::size_t>(i)] = table.column("f" + std::to_string(i + 1));
    std::vector<FeatureRow> rows;
    rows.reserve(table.rows.size());
    for (const auto& fields : table.rows) {
        FeatureRow r;
        r.patch_id = fields[c_id];
        r.label = static_cast<int>(parse_long(fields[c_label]));
        if (r.label != 0 && r.label != 1) throw Error("feature label must be 0 or 1");
        for (int i = 0; i < 16; ++i)
            r.features[static_cast<std::size_t>(i)] = parse_double(fields[c_f[static_cast<std::size_t>(i)]]);
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace wsipipe
