#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "wsipipe/rng.hpp"
#include "wsipipe/texture.hpp"

using namespace wsipipe;

namespace {

// Brute-force reference: count pairs with nested loops, then evaluate every
// feature straight from its definition. Kept deliberately independent of the
// production code paths.
struct NaiveFeatures {
    std::array<double, 8> f{}; // mean, var, homog, contrast, dissim, entropy, 2nd moment, corr
};

NaiveFeatures naive_glcm_features(const GrayGrid& grid, int wx, int wy, int ww, int wh, int dx,
                                  int dy, bool symmetric, int levels) {
    std::vector<double> counts(static_cast<std::size_t>(levels) * levels, 0.0);
    for (int y = wy; y < wy + wh; ++y)
        for (int x = wx; x < wx + ww; ++x) {
            const int nx = x + dx, ny = y + dy;
            if (nx < wx || nx >= wx + ww || ny < wy || ny >= wy + wh) continue;
            counts[static_cast<std::size_t>(grid.at(x, y)) * levels + grid.at(nx, ny)] += 1.0;
            if (symmetric)
                counts[static_cast<std::size_t>(grid.at(nx, ny)) * levels + grid.at(x, y)] += 1.0;
        }
    double total = 0.0;
    for (double c : counts) total += c;
    std::vector<double> p(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) p[i] = counts[i] / total;

    auto P = [&](int i, int j) { return p[static_cast<std::size_t>(i) * levels + j]; };
    double mu_i = 0, mu_j = 0;
    for (int i = 0; i < levels; ++i)
        for (int j = 0; j < levels; ++j) {
            mu_i += i * P(i, j);
            mu_j += j * P(i, j);
        }
    double var_i = 0, var_j = 0;
    for (int i = 0; i < levels; ++i)
        for (int j = 0; j < levels; ++j) {
            var_i += (i - mu_i) * (i - mu_i) * P(i, j);
            var_j += (j - mu_j) * (j - mu_j) * P(i, j);
        }
    NaiveFeatures out;
    out.f[0] = mu_i;
    out.f[1] = var_i;
    for (int i = 0; i < levels; ++i)
        for (int j = 0; j < levels; ++j) {
            const double pij = P(i, j);
            out.f[2] += pij / (1.0 + (i - j) * (i - j));
            out.f[3] += (i - j) * (i - j) * pij;
            out.f[4] += std::abs(i - j) * pij;
            if (pij > 0) out.f[5] -= pij * std::log(pij);
            out.f[6] += pij * pij;
        }
    const double denom = std::sqrt(var_i) * std::sqrt(var_j);
    if (denom >= 1e-12) {
        double corr = 0;
        for (int i = 0; i < levels; ++i)
            for (int j = 0; j < levels; ++j) corr += (i - mu_i) * (j - mu_j) * P(i, j);
        out.f[7] = corr / denom;
    }
    return out;
}

GrayGrid random_grid(int w, int h, int levels, Rng& rng) {
    GrayGrid g;
    g.width = w;
    g.height = h;
    g.levels = levels;
    g.cells.resize(static_cast<std::size_t>(w) * h);
    for (auto& c : g.cells) c = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(levels)));
    return g;
}

} // namespace

TEST_CASE("type-7 quantile on known order statistics") {
    const std::vector<double> v{1, 2, 3, 4};
    REQUIRE(quantile(v, 0.0) == 1.0);
    REQUIRE(quantile(v, 1.0) == 4.0);
    REQUIRE(quantile(v, 0.5) == 2.5);
    REQUIRE(quantile(v, 0.25) == 1.75);
    REQUIRE(quantile(v, 0.75) == 3.25);
    REQUIRE(quantile({5.0}, 0.5) == 5.0);
    REQUIRE_THROWS_AS(quantile({}, 0.5), ValidationError);
    REQUIRE_THROWS_AS(quantile({1.0}, 1.5), ValidationError);
}

TEST_CASE("normalized channel has median 0 and iqr 2") {
    Rng rng(13);
    for (int it = 0; it < 200; ++it) {
        std::vector<double> values(400);
        for (auto& v : values) v = rng.uniform(0.0, 255.0);
        const auto out = normalize_channel(values);
        REQUIRE(std::abs(quantile(out, 0.5)) < 1e-9);
        REQUIRE(std::abs(std::abs(quantile(out, 0.75) - quantile(out, 0.25)) - 2.0) < 1e-9);
    }
}

TEST_CASE("normalization is invariant to positive affine maps") {
    Rng rng(14);
    for (int it = 0; it < 100; ++it) {
        std::vector<double> values(256);
        for (auto& v : values) v = rng.uniform(0.0, 255.0);
        const double a = rng.uniform(0.1, 10.0);
        const double b = rng.uniform(-100.0, 100.0);
        std::vector<double> mapped(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) mapped[i] = a * values[i] + b;
        const auto n1 = normalize_channel(values);
        const auto n2 = normalize_channel(mapped);
        for (std::size_t i = 0; i < n1.size(); ++i)
            REQUIRE(n2[i] == Catch::Approx(n1[i]).margin(1e-9));
    }
}

TEST_CASE("constant channel hits the degenerate fallback") {
    std::vector<double> values(100, 42.0);
    bool degenerate = false;
    const auto out = normalize_channel(values, &degenerate);
    REQUIRE(degenerate);
    for (double v : out) REQUIRE(v == 0.0);
}

TEST_CASE("luminance quantization maps the clamp range onto all levels") {
    REQUIRE(quantize_luminance(-3.0, 8) == 0);
    REQUIRE(quantize_luminance(-10.0, 8) == 0);
    REQUIRE(quantize_luminance(3.0, 8) == 7);
    REQUIRE(quantize_luminance(10.0, 8) == 7);
    REQUIRE(quantize_luminance(0.0, 8) == 4);
    REQUIRE(quantize_luminance(-0.76, 8) == 2);
}

TEST_CASE("hand glcm case: two-row step pattern") {
    GrayGrid g;
    g.width = 2;
    g.height = 2;
    g.levels = 8;
    g.cells = {0, 0, 1, 1};
    const GlcmMatrix m = compute_glcm(g, 0, 0, 2, 2, 1, 0, true);
    const TextureFeatures f = glcm_features(m);
    REQUIRE(f.contrast == 0.0);
    REQUIRE(f.homogeneity == 1.0);
    REQUIRE(f.entropy == Catch::Approx(std::log(2.0)).margin(1e-15));
    REQUIRE(f.mean == 0.5);
    REQUIRE(f.second_moment == 0.5);
    // perfectly correlated diagonal
    REQUIRE(f.correlation == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("glcm matches the naive reference on random segments") {
    Rng rng(15);
    for (int it = 0; it < 1000; ++it) {
        const int levels = static_cast<int>(rng.uniform_int(2, 8));
        GrayGrid g = random_grid(7, 7, levels, rng);
        const int dx = static_cast<int>(rng.uniform_int(-2, 2));
        int dy = static_cast<int>(rng.uniform_int(-2, 2));
        if (dx == 0 && dy == 0) dy = 1;
        const bool symmetric = rng.bernoulli(0.5);
        const GlcmMatrix m = compute_glcm(g, 0, 0, 7, 7, dx, dy, symmetric);
        const auto ours = glcm_features(m).as_array();
        const auto ref = naive_glcm_features(g, 0, 0, 7, 7, dx, dy, symmetric, levels).f;
        for (int k = 0; k < 8; ++k) REQUIRE(ours[k] == Catch::Approx(ref[k]).margin(1e-12));
    }
}

TEST_CASE("glcm matrix sums to one and symmetric mode is symmetric") {
    Rng rng(16);
    GrayGrid g = random_grid(9, 9, 8, rng);
    const GlcmMatrix m = compute_glcm(g, 1, 1, 7, 7, 1, 0, true);
    double sum = 0;
    for (double v : m.p) sum += v;
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) REQUIRE(m.at(i, j) == m.at(j, i));
}

TEST_CASE("glcm rejects empty-pair configurations") {
    Rng rng(17);
    GrayGrid g = random_grid(7, 7, 4, rng);
    REQUIRE_THROWS_AS(compute_glcm(g, 0, 0, 7, 7, 7, 0, true), ValidationError);
    REQUIRE_THROWS_AS(compute_glcm(g, 0, 0, 8, 7, 1, 0, true), ValidationError);
}

TEST_CASE("feature vector is mean then variance across segments") {
    // 14x7 patch = exactly two 7x7 segments; variance across two equal
    // segments must be 0, and the mean must equal either segment's features.
    std::vector<std::uint8_t> rgb(14 * 7 * 3);
    Rng rng(18);
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 7; ++x) {
            const auto v = static_cast<std::uint8_t>(rng.uniform_index(256));
            for (int c = 0; c < 3; ++c) {
                rgb[(static_cast<std::size_t>(y) * 14 + x) * 3 + c] = v;
                rgb[(static_cast<std::size_t>(y) * 14 + x + 7) * 3 + c] = v;
            }
        }
    TextureConfig cfg;
    cfg.segment_size = 7;
    const FeatureVector fv = patch_feature_vector(rgb.data(), 14, 7, cfg);
    for (int k = 8; k < 16; ++k) REQUIRE(fv[static_cast<std::size_t>(k)] == Catch::Approx(0.0).margin(1e-18));
}

TEST_CASE("feature csv round-trip") {
    std::vector<FeatureRow> rows(2);
    rows[0].patch_id = "a_r0_c0";
    rows[0].label = 1;
    for (int i = 0; i < 16; ++i) rows[0].features[static_cast<std::size_t>(i)] = 0.125 * i;
    rows[1].patch_id = "a_r0_c1";
    rows[1].label = 0;
    for (int i = 0; i < 16; ++i) rows[1].features[static_cast<std::size_t>(i)] = -1.0 / (i + 1);
    const std::string path =
        (std::filesystem::temp_directory_path() / "wsipipe_features_rt.csv").string();
    save_features(rows, path);
    const auto loaded = load_features(path);
    REQUIRE(loaded.size() == 2);
    REQUIRE(loaded[0].patch_id == "a_r0_c0");
    REQUIRE(loaded[0].label == 1);
    for (int i = 0; i < 16; ++i) {
        REQUIRE(loaded[0].features[static_cast<std::size_t>(i)] == rows[0].features[static_cast<std::size_t>(i)]);
        REQUIRE(loaded[1].features[static_cast<std::size_t>(i)] == rows[1].features[static_cast<std::size_t>(i)]);
    }
    std::remove(path.c_str());
}
