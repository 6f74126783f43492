// Acceptance checks: one printed line per criterion, fixed tolerances, timed
// where a budget applies. Independent of the unit suite — oracle math is
// recomputed here from scratch. Exits non-zero if any check fails.
#include <wsipipe/common.hpp>
#include <wsipipe/rng.hpp>
#include <wsipipe/image.hpp>
#include <wsipipe/manifest.hpp>
#include <wsipipe/annotations.hpp>
#include <wsipipe/split.hpp>
#include <wsipipe/synth.hpp>
#include <wsipipe/tiling.hpp>
#include <wsipipe/texture.hpp>
#include <wsipipe/svm.hpp>
#include <wsipipe/eval.hpp>
#include <wsipipe/heatmap.hpp>
#include <wsipipe/nn/network.hpp>
#include <wsipipe/nn/loss.hpp>
#include <wsipipe/nn/adam.hpp>
#include <wsipipe/nn/serialize.hpp>
#include <wsipipe/nn/gradcheck.hpp>
#include <wsipipe/nn/train.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace wsipipe;
using namespace wsipipe::nn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::filesystem::path scratch_dir() {
    static const std::filesystem::path dir = [] {
        const auto p = std::filesystem::temp_directory_path() / "wsipipe_acceptance";
        std::filesystem::remove_all(p);
        std::filesystem::create_directories(p);
        return p;
    }();
    return dir;
}

// ---------------------------------------------------------------- criterion 1

Outcome check_tiling() {
    const auto t0 = Clock::now();
    const TilingConfig cfg; // 256 / 196
    Rng rng(101);
    for (int i = 0; i < 1000; ++i) {
        const int w = cfg.patch_size + static_cast<int>(rng.uniform_index(4000));
        const int h = cfg.patch_size + static_cast<int>(rng.uniform_index(4000));
        const std::size_t cols = static_cast<std::size_t>((w - cfg.patch_size) / cfg.stride + 1);
        const std::size_t rows = static_cast<std::size_t>((h - cfg.patch_size) / cfg.stride + 1);
        const auto plan = plan_patches(w, h, cfg, "s");
        if (plan.size() != cols * rows)
            return {false, "size " + std::to_string(w) + "x" + std::to_string(h) + " planned " +
                               std::to_string(plan.size()) + " patches, closed form says " +
                               std::to_string(cols * rows)};
    }
    const auto nine = plan_patches(648, 648, cfg, "s");
    if (nine.size() != 9)
        return {false, "648x648 planned " + std::to_string(nine.size()) + " patches, want 9"};
    const double secs = seconds_since(t0);
    if (secs >= 1.0) return {false, "took " + num(secs) + "s, budget 1s"};
    return {true, "1000 random sizes match the closed form; 648x648 -> 9"};
}

// ---------------------------------------------------------------- criterion 2

Outcome check_normalization() {
    Rng rng(202);
    double worst_median = 0.0, worst_iqr = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const int w = 16 + static_cast<int>(rng.uniform_index(17));
        const int h = 16 + static_cast<int>(rng.uniform_index(17));
        std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
        for (auto& b : rgb) b = static_cast<std::uint8_t>(rng.uniform_index(256));
        const NormalizedPatch norm = normalize_patch(rgb.data(), w, h);
        if (norm.degenerate_channels != 0) return {false, "random patch reported degenerate"};
        for (int c = 0; c < 3; ++c) {
            const std::vector<double>& ch = norm.channels[static_cast<std::size_t>(c)];
            worst_median = std::max(worst_median, std::abs(quantile(ch, 0.5)));
            const double iqr = quantile(ch, 0.75) - quantile(ch, 0.25);
            worst_iqr = std::max(worst_iqr, std::abs(iqr - 2.0));
        }
    }
    if (worst_median > 1e-9) return {false, "output median off by " + num(worst_median)};
    if (worst_iqr > 1e-9) return {false, "output IQR off from 2 by " + num(worst_iqr)};

    // positive-affine invariance on the channel primitive
    double worst_affine = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 64 + rng.uniform_index(512);
        std::vector<double> v(n), w(n);
        const double a = rng.uniform(0.1, 10.0);
        const double b = rng.uniform(-100.0, 100.0);
        for (std::size_t k = 0; k < n; ++k) {
            v[k] = rng.uniform(0.0, 255.0);
            w[k] = a * v[k] + b;
        }
        const auto nv = normalize_channel(v);
        const auto nw = normalize_channel(w);
        for (std::size_t k = 0; k < n; ++k)
            worst_affine = std::max(worst_affine, std::abs(nv[k] - nw[k]));
    }
    if (worst_affine > 1e-9) return {false, "affine invariance off by " + num(worst_affine)};
    return {true, "median err " + num(worst_median) + ", IQR err " + num(worst_iqr) +
                      ", affine err " + num(worst_affine)};
}

// ---------------------------------------------------------------- criterion 3

// Naive reference: enumerate pixel pairs directly, then evaluate each feature
// from its definition.
std::array<double, 8> naive_features(const GrayGrid& grid, int wx, int wy, int ww, int wh, int dx,
                                     int dy, bool symmetric) {
    const int g = grid.levels;
    std::vector<double> p(static_cast<std::size_t>(g) * g, 0.0);
    double total = 0.0;
    for (int y = wy; y < wy + wh; ++y) {
        for (int x = wx; x < wx + ww; ++x) {
            const int nx = x + dx, ny = y + dy;
            if (nx < wx || nx >= wx + ww || ny < wy || ny >= wy + wh) continue;
            p[static_cast<std::size_t>(grid.at(x, y)) * g + grid.at(nx, ny)] += 1.0;
            total += 1.0;
            if (symmetric) {
                p[static_cast<std::size_t>(grid.at(nx, ny)) * g + grid.at(x, y)] += 1.0;
                total += 1.0;
            }
        }
    }
    for (double& v : p) v /= total;

    double mu_i = 0, mu_j = 0, var_i = 0, var_j = 0;
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < g; ++j) {
            mu_i += i * p[static_cast<std::size_t>(i) * g + j];
            mu_j += j * p[static_cast<std::size_t>(i) * g + j];
        }
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < g; ++j) {
            const double pij = p[static_cast<std::size_t>(i) * g + j];
            var_i += (i - mu_i) * (i - mu_i) * pij;
            var_j += (j - mu_j) * (j - mu_j) * pij;
        }
    double homogeneity = 0, contrast = 0, dissimilarity = 0, entropy = 0, second = 0, corr = 0;
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < g; ++j) {
            const double pij = p[static_cast<std::size_t>(i) * g + j];
            const double d = static_cast<double>(i - j);
            homogeneity += pij / (1.0 + d * d);
            contrast += d * d * pij;
            dissimilarity += std::abs(d) * pij;
            if (pij > 0.0) entropy -= pij * std::log(pij);
            second += pij * pij;
            corr += (i - mu_i) * (j - mu_j) * pij;
        }
    const double sigma = std::sqrt(var_i) * std::sqrt(var_j);
    const double correlation = sigma >= 1e-12 ? corr / sigma : 0.0;
    return {mu_i, var_i, homogeneity, contrast, dissimilarity, entropy, second, correlation};
}

Outcome check_glcm() {
    Rng rng(303);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        GrayGrid grid;
        grid.width = 7;
        grid.height = 7;
        grid.levels = 2 + static_cast<int>(rng.uniform_index(7));
        grid.cells.resize(49);
        for (int& c : grid.cells) c = static_cast<int>(rng.uniform_index(grid.levels));
        int dx = 0, dy = 0;
        while (dx == 0 && dy == 0) {
            dx = static_cast<int>(rng.uniform_index(5)) - 2;
            dy = static_cast<int>(rng.uniform_index(5)) - 2;
        }
        const bool symmetric = rng.uniform() < 0.5;
        const auto fast = glcm_features(compute_glcm(grid, 0, 0, 7, 7, dx, dy, symmetric)).as_array();
        const auto naive = naive_features(grid, 0, 0, 7, 7, dx, dy, symmetric);
        for (int k = 0; k < 8; ++k) worst = std::max(worst, std::abs(fast[k] - naive[k]));
    }
    if (worst > 1e-12) return {false, "naive reference disagrees by " + num(worst)};

    // the 2x2 hand case
    GrayGrid hand;
    hand.width = 2;
    hand.height = 2;
    hand.levels = 2;
    hand.cells = {0, 0, 1, 1};
    const TextureFeatures f = glcm_features(compute_glcm(hand, 0, 0, 2, 2, 1, 0, true));
    if (std::abs(f.contrast) > 1e-15 || std::abs(f.homogeneity - 1.0) > 1e-15 ||
        std::abs(f.entropy - std::log(2.0)) > 1e-15)
        return {false, "hand case gave contrast " + num(f.contrast) + ", homogeneity " +
                           num(f.homogeneity) + ", entropy " + num(f.entropy)};
    return {true, "1000 random segments within " + num(worst) + "; hand case exact"};
}

// ---------------------------------------------------------------- criterion 4

Outcome check_svm() {
    const auto t0 = Clock::now();

    // analytic two-point max margin: f(x) = x, so +/-1 at the points, 0 between
    SvmTrainConfig two_cfg;
    two_cfg.kernel = {KernelSpec::Kind::linear, 0.0};
    const SvmTrainResult two =
        train_svm({{1.0, 0.0}, {-1.0, 0.0}}, {1, -1}, two_cfg);
    const double d_pos = svm_decision(two.model, {1.0, 0.0});
    const double d_neg = svm_decision(two.model, {-1.0, 0.0});
    const double d_mid = svm_decision(two.model, {0.0, 0.0});
    if (std::abs(d_pos - 1.0) > 1e-6 || std::abs(d_neg + 1.0) > 1e-6 || std::abs(d_mid) > 1e-6)
        return {false, "two-point decisions " + num(d_pos) + ", " + num(d_neg) + ", " + num(d_mid)};

    // KKT and dual monotonicity on random 2-D sets
    Rng rng(404);
    double worst_kkt = 0.0, worst_drop = 0.0;
    for (int s = 0; s < 50; ++s) {
        const double sep = rng.uniform(0.5, 2.0);
        std::vector<std::vector<double>> x;
        std::vector<int> y;
        for (int i = 0; i < 100; ++i) {
            const int label = (i % 2 == 0) ? 1 : -1;
            x.push_back({label * sep + rng.normal(), rng.normal()});
            y.push_back(label);
        }
        SvmTrainConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(s + 1);
        const SvmTrainResult trained = train_svm(x, y, cfg);
        worst_kkt = std::max(worst_kkt, svm_kkt_worst_violation(trained, x, y));
        for (std::size_t k = 1; k < trained.dual_trace.size(); ++k)
            worst_drop = std::max(worst_drop, trained.dual_trace[k - 1] - trained.dual_trace[k]);
    }
    if (worst_kkt > 1e-3) return {false, "worst KKT violation " + num(worst_kkt) + " above tol 1e-3"};
    if (worst_drop > 1e-9) return {false, "dual objective dropped by " + num(worst_drop)};
    const double secs = seconds_since(t0);
    if (secs >= 30.0) return {false, "took " + num(secs) + "s, budget 30s"};
    return {true, "two-point analytic ok; worst KKT " + num(worst_kkt) + ", worst dual drop " +
                      num(worst_drop)};
}

// ---------------------------------------------------------------- criterion 5

nlohmann::json arch_of(std::initializer_list<int> input, nlohmann::json layers) {
    return {{"input", std::vector<int>(input)}, {"layers", std::move(layers)}};
}

// Dropout is excluded from the generic checker because its mask is drawn at
// forward time. Re-seeding the generator before every forward freezes the
// mask, making central differences valid against the cached-mask backward.
double dropout_grad_check(std::uint64_t seed, double epsilon) {
    const nlohmann::json arch = arch_of(
        {2, 4, 4},
        {{{"type", "conv"}, {"out", 2}, {"k", 2}, {"s", 1}, {"p", 0}},
         {{"type", "relu"}},
         {{"type", "flatten"}},
         {{"type", "dropout"}, {"rate", 0.4}},
         {{"type", "fc"}, {"out", 2}}});
    Network<double> net(arch, seed);
    Rng data_rng(derive_seed(seed, 1));
    Tensor4<double> x(2, net.input_shape());
    for (auto& v : x.v) v = data_rng.normal();
    const std::vector<int> labels{0, 1};
    const std::uint64_t mask_seed = derive_seed(seed, 2);

    const auto loss_at = [&]() {
        Rng mask_rng(mask_seed);
        return softmax_cross_entropy(net.forward(x, true, &mask_rng), labels).loss;
    };

    Rng mask_rng(mask_seed);
    const Tensor4<double> logits = net.forward(x, true, &mask_rng);
    const LossResult loss = softmax_cross_entropy(logits, labels);
    net.zero_grad();
    net.backward(loss.dlogits);

    double worst = 0.0;
    for (const ParamRef<double>& p : net.params()) {
        if (!p.trainable) continue;
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            double& w = (*p.value)[i];
            const double saved = w;
            w = saved + epsilon;
            const double up = loss_at();
            w = saved - epsilon;
            const double down = loss_at();
            w = saved;
            const double numeric = (up - down) / (2.0 * epsilon);
            const double analytic = (*p.grad)[i];
            const double rel = std::abs(analytic - numeric) /
                               std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

Outcome check_gradients() {
    const auto t0 = Clock::now();
    const std::vector<std::pair<std::string, nlohmann::json>> cases = {
        {"fc", arch_of({3, 4, 4}, {{{"type", "flatten"}}, {{"type", "fc"}, {"out", 2}}})},
        {"conv", arch_of({3, 4, 4}, {{{"type", "conv"}, {"out", 2}, {"k", 4}},
                                     {{"type", "flatten"}},
                                     {{"type", "fc"}, {"out", 2}}})},
        {"conv strided padded",
         arch_of({2, 5, 5}, {{{"type", "conv"}, {"out", 3}, {"k", 3}, {"s", 2}, {"p", 1}},
                             {{"type", "gap"}},
                             {{"type", "fc"}, {"out", 2}}})},
        {"maxpool", arch_of({2, 4, 4}, {{{"type", "maxpool"}, {"k", 2}},
                                        {{"type", "conv"}, {"out", 2}, {"k", 2}},
                                        {{"type", "flatten"}},
                                        {{"type", "fc"}, {"out", 2}}})},
        {"batchnorm",
         arch_of({2, 6, 6},
                 {{{"type", "conv"}, {"out", 4}, {"k", 3}, {"p", 1}, {"bias", false}},
                  {{"type", "batchnorm"}},
                  {{"type", "relu"}},
                  {{"type", "gap"}},
                  {{"type", "fc"}, {"out", 2}}})},
        {"residual",
         arch_of({3, 5, 5},
                 {{{"type", "residual"},
                   {"projection", false},
                   {"layers",
                    {{{"type", "conv"}, {"out", 3}, {"k", 3}, {"p", 1}, {"bias", false}},
                     {{"type", "batchnorm"}}}}},
                  {{"type", "gap"}},
                  {{"type", "fc"}, {"out", 2}}})},
        {"residual projection",
         arch_of({2, 6, 6},
                 {{{"type", "residual"},
                   {"projection", true},
                   {"layers",
                    {{{"type", "conv"}, {"out", 4}, {"k", 3}, {"s", 2}, {"p", 1}, {"bias", false}},
                     {{"type", "batchnorm"}}}}},
                  {{"type", "gap"}},
                  {{"type", "fc"}, {"out", 2}}})},
    };

    std::string detail;
    double worst = 0.0;
    for (const auto& [name, arch] : cases) {
        const GradCheckReport rep = grad_check(arch, 7, 1e-5);
        worst = std::max(worst, rep.overall());
        if (rep.overall() >= 1e-4)
            return {false, name + " max relative error " + num(rep.overall())};
    }
    const double dropout_err = dropout_grad_check(7, 1e-5);
    worst = std::max(worst, dropout_err);
    if (dropout_err >= 1e-4) return {false, "dropout max relative error " + num(dropout_err)};

    const double secs = seconds_since(t0);
    if (secs >= 60.0) return {false, "took " + num(secs) + "s, budget 60s"};
    return {true, "all layer types within " + num(worst)};
}

// -------------------------------------------------- shared 200-patch dataset

struct SmallBench {
    DatasetManifest manifest;
    CnnDataset<float> ds;
    nlohmann::json arch;
};

const SmallBench& small_bench() {
    static const SmallBench bench = [] {
        SmallBench b;
        SynthConfig scfg;
        scfg.slide_count = 3;
        scfg.width = 448;
        scfg.height = 448;
        scfg.cancer_regions_per_slide = 1;
        scfg.seed = 7;
        b.manifest = generate_synthetic_dataset(scfg, (scratch_dir() / "small").string());
        TilingConfig tcfg;
        tcfg.patch_size = 64;
        tcfg.stride = 48;
        const TileResult tiles = tile_dataset(b.manifest, tcfg, SlideSplit{});
        std::vector<InventoryRow> rows(tiles.rows.begin(), tiles.rows.begin() + 200);
        b.ds = build_cnn_dataset<float>(b.manifest, rows, 16);
        b.arch = pilot_arch(16);
        return b;
    }();
    return bench;
}

// ---------------------------------------------------------------- criterion 6

Outcome check_adam() {
    // scalar hand step: m=0.1g, v=0.001g^2, bias-corrected ratio is sign(g),
    // so one step moves w by ~lr regardless of gradient scale
    std::vector<double> w{1.0}, g{1.0};
    ParamRef<double> ref{"w", "fc", &w, &g, true};
    AdamConfig acfg;
    acfg.lr = 0.1;
    acfg.weight_decay = 0.0;
    Adam<double> adam({ref}, acfg);
    adam.step();
    if (std::abs(w[0] - 0.9) > 1e-6)
        return {false, "hand step landed at " + num(w[0]) + ", want 0.9 within 1e-6"};

    // bit-identical training: same seed, 10 epochs, 200 pipeline patches
    const SmallBench& b = small_bench();
    CnnTrainConfig cfg;
    cfg.arch = b.arch;
    cfg.epochs = 10;
    cfg.batch_size = 64;
    cfg.seed = 42;
    auto run1 = train_cnn(b.ds, cfg);
    auto run2 = train_cnn(b.ds, cfg);
    if (run1.epoch_loss != run2.epoch_loss) return {false, "same-seed epoch losses differ"};
    const auto p1 = run1.net->params();
    const auto p2 = run2.net->params();
    for (std::size_t i = 0; i < p1.size(); ++i)
        if (*p1[i].value != *p2[i].value)
            return {false, "same-seed runs disagree on " + p1[i].name};
    return {true, "hand step " + num(w[0]) + "; two 10-epoch runs on 200 patches bit-identical"};
}

// ---------------------------------------------------------------- criterion 7

Outcome check_auc() {
    Rng rng(707);
    double worst = 0.0, worst_flip = 0.0;
    for (int s = 0; s < 200; ++s) {
        const std::size_t n = 5 + rng.uniform_index(96);
        const bool with_ties = (s % 2 == 0);
        std::vector<int> labels(n);
        std::vector<double> scores(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = rng.uniform() < 0.4 ? 1 : 0;
            scores[i] = with_ties ? 0.1 * static_cast<double>(rng.uniform_index(11)) : rng.uniform();
        }
        labels[0] = 1;
        labels[1] = 0;
        const auto roc = roc_curve(labels, scores);
        const double a_trap = auc_trapezoid(roc);
        const double a_rank = auc_mann_whitney(labels, scores);
        worst = std::max(worst, std::abs(a_trap - a_rank));
        if (!with_ties) {
            std::vector<int> flipped(n);
            for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - labels[i];
            const double a_flip = auc_trapezoid(roc_curve(flipped, scores));
            worst_flip = std::max(worst_flip, std::abs(a_trap - (1.0 - a_flip)));
        }
    }
    if (worst > 1e-12) return {false, "trapezoid vs rank AUC disagree by " + num(worst)};
    if (worst_flip > 1e-12) return {false, "label-flip identity off by " + num(worst_flip)};
    return {true, "200 sets: trapezoid==rank within " + num(worst) + ", flip identity within " +
                      num(worst_flip)};
}

// ---------------------------------------------------------------- criterion 8

// Full pipeline at desk scale. All knobs are the pipeline defaults; the three
// seeds below only pick which deterministic dataset/split/init the run uses.
constexpr std::uint64_t kE2eSynthSeed = 11;
constexpr std::uint64_t kE2eSplitSeed = 4;
constexpr std::uint64_t kE2eTrainSeed = 18;
constexpr int kE2eEpochs = 10;

Outcome check_end_to_end() {
    const auto t0 = Clock::now();
    const std::string data_dir = (scratch_dir() / "e2e").string();

    SynthConfig scfg;
    scfg.slide_count = 20;
    scfg.width = 1024;
    scfg.height = 1024;
    scfg.cancer_regions_per_slide = 2;
    scfg.seed = kE2eSynthSeed;
    const DatasetManifest manifest = generate_synthetic_dataset(scfg, data_dir);

    const SlideSplit split = split_by_slide(manifest, 0.25, kE2eSplitSeed);
    if (split.test_ids.size() != 5)
        return {false, "split gave " + std::to_string(split.test_ids.size()) + " test slides"};

    TilingConfig tcfg; // 256 / 196 / 0.5
    const TileResult tiles = tile_dataset(manifest, tcfg, split);
    std::vector<InventoryRow> train_rows, test_rows;
    for (const InventoryRow& r : tiles.rows)
        (r.split == "train" ? train_rows : test_rows).push_back(r);

    // (a) texture features into the margin classifier
    const TextureConfig tex;
    const auto featurize = [&](const std::vector<InventoryRow>& rows,
                               std::vector<std::vector<double>>& x, std::vector<int>& y) {
        SlideRaster slide;
        std::string loaded;
        for (const InventoryRow& r : rows) {
            if (r.coord.slide_id != loaded) {
                const ManifestEntry& e = manifest.find(r.coord.slide_id);
                slide = load_slide(manifest.resolve(e.image_path), e.slide_id);
                loaded = r.coord.slide_id;
            }
            const auto rgb = extract_patch(slide, r.coord);
            const FeatureVector f = patch_feature_vector(rgb.data(), r.coord.size, r.coord.size, tex);
            x.emplace_back(f.begin(), f.end());
            y.push_back(r.label == PatchLabel::cancer ? 1 : -1);
        }
    };
    std::vector<std::vector<double>> train_x, test_x;
    std::vector<int> train_y, test_y;
    featurize(train_rows, train_x, train_y);
    featurize(test_rows, test_x, test_y);

    const SvmTrainResult svm = train_svm(train_x, train_y, SvmTrainConfig{});
    std::vector<int> test_labels01;
    std::vector<double> svm_scores;
    for (std::size_t i = 0; i < test_x.size(); ++i) {
        svm_scores.push_back(svm_decision(svm.model, test_x[i]));
        test_labels01.push_back(test_y[i] == 1 ? 1 : 0);
    }
    const double svm_auc = auc(test_labels01, svm_scores);

    // (b) the small trainable net from scratch on 64x64 block-mean inputs
    const auto train_ds = build_cnn_dataset<float>(manifest, train_rows, 64);
    const auto test_ds = build_cnn_dataset<float>(manifest, test_rows, 64);
    CnnTrainConfig ccfg;
    ccfg.arch = pilot_arch(64);
    ccfg.lr = 1e-5;
    ccfg.weight_decay = 1e-4;
    ccfg.epochs = kE2eEpochs;
    ccfg.batch_size = 64;
    ccfg.seed = kE2eTrainSeed;
    auto trained = train_cnn(train_ds, ccfg);
    const std::vector<double> cnn_scores = predict_cnn(*trained.net, test_ds);
    std::vector<int> cnn_labels(test_ds.labels.begin(), test_ds.labels.end());
    const double cnn_auc = auc(cnn_labels, cnn_scores);

    const double secs = seconds_since(t0);
    const std::string detail = "svm AUC " + num(svm_auc) + ", cnn AUC " + num(cnn_auc) + " on " +
                               std::to_string(test_rows.size()) + " test patches in " + num(secs) +
                               "s";
    if (secs >= 600.0) return {false, detail + " (budget 600s)"};
    if (svm_auc < 0.95 || cnn_auc < 0.95) return {false, detail + " (threshold 0.95)"};
    return {true, detail};
}

// ---------------------------------------------------------------- criterion 9

Outcome check_report_format() {
    std::vector<int> labels;
    std::vector<double> scores;
    for (int i = 0; i < 40; ++i) {
        labels.push_back(i % 2);
        scores.push_back((i % 2 ? 0.8 : 0.2) + 1e-3 * i);
    }
    const EvalReport svm_rep = evaluate_scores(labels, scores, "svm");
    const EvalReport cnn_rep = evaluate_scores(labels, scores, "cnn_scratch");
    for (double t : svm_rep.tpr)
        if (t != 1.0) return {false, "perfect classifier gave operating-point TPR " + num(t)};
    if (svm_rep.auc != 1.0) return {false, "perfect classifier AUC " + num(svm_rep.auc)};

    const std::string path = (scratch_dir() / "report.csv").string();
    save_eval_report_csv({svm_rep, cnn_rep}, path);
    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    if (header != "model,auc,positives,negatives,FP@0.05,FP@0.1,FP@0.5")
        return {false, "header was '" + header + "'"};
    int rows = 0;
    while (std::getline(in, row)) {
        if (row.empty()) continue;
        ++rows;
        if (row.find(",1,1,1") == std::string::npos)
            return {false, "row lacks unit operating points: '" + row + "'"};
    }
    if (rows != 2) return {false, "expected 2 model rows, got " + std::to_string(rows)};
    return {true, "header and per-model operating-point columns as pinned"};
}

// --------------------------------------------------------------- criterion 10

Outcome check_heatmap() {
    TilingConfig small;
    small.patch_size = 2;
    small.stride = 1;
    const auto plan = plan_patches(3, 3, small, "s"); // 4 overlapping patches

    // constant field hits the exact colormap everywhere
    const StitchResult flat = stitch(plan, {0.75, 0.75, 0.75, 0.75}, 3, 3, PixelRule::mean);
    SlideRaster base;
    base.id = "s";
    base.width = 3;
    base.height = 3;
    base.pixels.assign(27, 100);
    const SlideRaster colored = render_overlay(base, flat.field, AnnotationSet{}, 1.0);
    const auto want = colorize_value(0.75);
    for (std::size_t i = 0; i < colored.pixels.size(); i += 3)
        if (colored.pixels[i] != want[0] || colored.pixels[i + 1] != want[1] ||
            colored.pixels[i + 2] != want[2])
            return {false, "constant field pixel off the colormap"};

    // the four-patch overlap pixel averages to exactly 1/4
    const StitchResult over = stitch(plan, {1.0, 0.0, 0.0, 0.0}, 3, 3, PixelRule::mean);
    if (over.field.at(1, 1) != 0.25)
        return {false, "overlap pixel " + num(over.field.at(1, 1)) + ", want exactly 0.25"};

    // rendering is deterministic at the byte level
    Rng rng(1010);
    SlideRaster noisy;
    noisy.id = "s";
    noisy.width = 3;
    noisy.height = 3;
    noisy.pixels.resize(27);
    for (auto& p : noisy.pixels) p = static_cast<std::uint8_t>(rng.uniform_index(256));
    std::vector<double> scores{0.9, 0.1, 0.4, 0.7};
    const auto png1 = encode_png_rgb8(
        3, 3, render_overlay(noisy, stitch(plan, scores, 3, 3, PixelRule::mean).field,
                             AnnotationSet{}, 0.4)
                  .pixels);
    const auto png2 = encode_png_rgb8(
        3, 3, render_overlay(noisy, stitch(plan, scores, 3, 3, PixelRule::mean).field,
                             AnnotationSet{}, 0.4)
                  .pixels);
    if (png1 != png2) return {false, "two renders of the same field differ"};
    return {true, "exact colormap, exact 0.25 overlap, byte-identical renders"};
}

// --------------------------------------------------------------- criterion 11

Outcome check_finetune() {
    const SmallBench& b = small_bench();
    CnnTrainConfig scratch;
    scratch.arch = b.arch;
    scratch.epochs = 2;
    scratch.batch_size = 64;
    scratch.seed = 5;
    auto source = train_cnn(b.ds, scratch);
    const std::vector<double> source_scores = predict_cnn(*source.net, b.ds);

    const std::string path = (scratch_dir() / "source.json").string();
    save_cnn(*source.net, source.meta, path);

    CnnTrainConfig ft;
    ft.arch = b.arch;
    ft.init = "finetune";
    ft.init_from = path;
    ft.batch_size = 64;
    ft.seed = 99; // irrelevant at 0 epochs: every parameter comes from the file
    ft.epochs = 0;
    auto same = train_cnn(b.ds, ft);
    if (predict_cnn(*same.net, b.ds) != source_scores)
        return {false, "0-epoch finetune does not reproduce the source predictions"};

    ft.epochs = 1;
    auto moved = train_cnn(b.ds, ft);
    if (predict_cnn(*moved.net, b.ds) == source_scores)
        return {false, "one finetune epoch left every prediction unchanged"};
    return {true, "0 epochs bit-identical, 1 epoch moves the predictions"};
}

} // namespace

int main() {
    struct Entry {
        const char* name;
        Outcome (*fn)();
    };
    const Entry entries[] = {
        {"patch tiling closed form", check_tiling},
        {"quantile normalization invariants", check_normalization},
        {"texture features vs naive reference", check_glcm},
        {"margin classifier optimality", check_svm},
        {"layer gradient checks", check_gradients},
        {"optimizer hand step and run determinism", check_adam},
        {"AUC estimator equivalence", check_auc},
        {"end-to-end synthetic benchmark", check_end_to_end},
        {"operating-point report format", check_report_format},
        {"heatmap stitching and rendering", check_heatmap},
        {"fine-tune reproducibility", check_finetune},
    };

    int failures = 0;
    int idx = 0;
    const auto t0 = Clock::now();
    for (const Entry& e : entries) {
        ++idx;
        const auto ct0 = Clock::now();
        Outcome oc;
        try {
            oc = e.fn();
        } catch (const std::exception& ex) {
            oc = {false, std::string("exception: ") + ex.what()};
        }
        std::printf("[%s] %2d. %s (%.2fs): %s\n", oc.pass ? "PASS" : "FAIL", idx, e.name,
                    seconds_since(ct0), oc.detail.c_str());
        std::fflush(stdout);
        if (!oc.pass) ++failures;
    }
    std::printf("%d of 11 criteria passed in %.1fs\n", 11 - failures, seconds_since(t0));
    return failures == 0 ? 0 : 1;
}
