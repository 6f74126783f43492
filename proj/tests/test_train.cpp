#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "wsipipe/nn/adam.hpp"
#include "wsipipe/nn/train.hpp"
#include "wsipipe/split.hpp"
#include "wsipipe/synth.hpp"

using namespace wsipipe;
using namespace wsipipe::nn;
using nlohmann::json;

namespace {

json tiny_arch(int hw) {
    return json{{"input", {3, hw, hw}},
                {"layers",
                 {{{"type", "conv"}, {"out", 4}, {"k", 3}, {"p", 1}, {"bias", false}},
                  {{"type", "batchnorm"}},
                  {{"type", "relu"}},
                  {{"type", "gap"}},
                  {{"type", "fc"}, {"out", 2}}}}};
}

// Two noisy constant-plane classes, linearly separable with room to spare.
CnnDataset<float> toy_dataset(int hw, std::size_t count, std::uint64_t seed) {
    CnnDataset<float> ds;
    ds.input_hw = hw;
    ds.count = count;
    ds.data.resize(count * ds.sample_values());
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        const int label = i % 2 == 0 ? 1 : 0;
        const double base = label == 1 ? 1.0 : -1.0;
        for (std::size_t k = 0; k < ds.sample_values(); ++k)
            ds.data[i * ds.sample_values() + k] = static_cast<float>(base + 0.3 * rng.normal());
        ds.labels.push_back(label);
        ds.patch_ids.push_back("toy_r0_c" + std::to_string(i));
    }
    return ds;
}

} // namespace

TEST_CASE("adam first step moves a unit-gradient weight by the learning rate") {
    std::vector<double> w{1.0}, g{1.0};
    std::vector<ParamRef<double>> params{{"w", "fc", &w, &g, true}};
    AdamConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    Adam<double> adam(params, cfg);
    adam.step();
    REQUIRE(adam.step_count() == 1);
    REQUIRE(w[0] == Catch::Approx(0.9).margin(1e-6));
}

TEST_CASE("coupled and decoupled weight decay differ as expected") {
    // First-step Adam moves by exactly lr*sign(grad) modulo epsilon, so the
    // coupled form lands at 0.9 too; the decoupled form subtracts lr*wd*w.
    std::vector<double> w1{1.0}, g1{1.0};
    AdamConfig coupled;
    coupled.lr = 0.1;
    coupled.weight_decay = 0.5;
    Adam<double> a({{"w", "fc", &w1, &g1, true}}, coupled);
    a.step();
    REQUIRE(w1[0] == Catch::Approx(0.9).margin(1e-6));

    std::vector<double> w2{1.0}, g2{1.0};
    AdamConfig decoupled = coupled;
    decoupled.decoupled_weight_decay = true;
    Adam<double> b({{"w", "fc", &w2, &g2, true}}, decoupled);
    b.step();
    REQUIRE(w2[0] == Catch::Approx(0.85).margin(1e-6));
}

TEST_CASE("adam skips non-trainable state and handles multiple slots") {
    std::vector<double> w1{0.0, 0.0}, g1{-2.0, 3.0};
    std::vector<double> w2{5.0}, g2{1.0};
    std::vector<double> state{42.0};
    AdamConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    Adam<double> adam({{"a", "conv", &w1, &g1, true},
                       {"stats", "batchnorm", &state, nullptr, false},
                       {"b", "fc", &w2, &g2, true}},
                      cfg);
    adam.step();
    REQUIRE(w1[0] == Catch::Approx(0.1).margin(1e-6));  // moves against gradient sign
    REQUIRE(w1[1] == Catch::Approx(-0.1).margin(1e-6));
    REQUIRE(w2[0] == Catch::Approx(4.9).margin(1e-6));
    REQUIRE(state[0] == 42.0);
}

TEST_CASE("block mean downscale averages factor-sized blocks") {
    std::vector<double> plane(16);
    for (int i = 0; i < 16; ++i) plane[static_cast<std::size_t>(i)] = i;
    const auto out = block_mean_downscale(plane, 4, 2);
    REQUIRE(out == std::vector<double>{2.5, 4.5, 10.5, 12.5});
    REQUIRE(block_mean_downscale(plane, 4, 1) == plane);
    const auto all = block_mean_downscale(plane, 4, 4);
    REQUIRE(all.size() == 1);
    REQUIRE(all[0] == 7.5);
    REQUIRE_THROWS_AS(block_mean_downscale(plane, 4, 3), ValidationError);
}

TEST_CASE("patch to input downscales then normalizes per channel") {
    // 4x4 patch; channel c holds (pixel index) + 10c so the planes differ.
    std::vector<std::uint8_t> rgb(4 * 4 * 3);
    for (int i = 0; i < 16; ++i)
        for (int c = 0; c < 3; ++c)
            rgb[static_cast<std::size_t>(i) * 3 + c] = static_cast<std::uint8_t>(i + 10 * c);
    std::vector<double> dst(3 * 2 * 2);
    patch_to_input(rgb.data(), 4, 2, dst.data());
    // Block means per channel: {2.5, 4.5, 10.5, 12.5} + 10c; median 7.5+10c,
    // IQR 7. The +10c offset cancels, so every channel normalizes identically.
    const std::vector<double> expect{-10.0 / 7.0, -6.0 / 7.0, 6.0 / 7.0, 10.0 / 7.0};
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 4; ++i)
            REQUIRE(dst[static_cast<std::size_t>(c) * 4 + i] ==
                    Catch::Approx(expect[static_cast<std::size_t>(i)]).margin(1e-12));
    REQUIRE_THROWS_AS(patch_to_input(rgb.data(), 4, 3, dst.data()), ValidationError);
}

TEST_CASE("cnn dataset mirrors the inventory") {
    const auto dir = std::filesystem::temp_directory_path() / "wsipipe_train_ds";
    std::filesystem::remove_all(dir);
    SynthConfig cfg;
    cfg.slide_count = 2;
    cfg.width = 64;
    cfg.height = 64;
    cfg.cancer_regions_per_slide = 1;
    cfg.seed = 5;
    const DatasetManifest manifest = generate_synthetic_dataset(cfg, dir.string());

    TilingConfig tcfg;
    tcfg.patch_size = 32;
    tcfg.stride = 32;
    const SlideSplit split = split_by_slide(manifest, 0.5, 1);
    const TileResult tiles = tile_dataset(manifest, tcfg, split);
    REQUIRE(tiles.rows.size() == 8);

    const auto ds = build_cnn_dataset<double>(manifest, tiles.rows, 16);
    REQUIRE(ds.count == 8);
    REQUIRE(ds.data.size() == 8 * 3 * 16 * 16);
    for (std::size_t i = 0; i < ds.count; ++i) {
        REQUIRE(ds.patch_ids[i] == tiles.rows[i].coord.patch_id());
        REQUIRE(ds.labels[i] == (tiles.rows[i].label == PatchLabel::cancer ? 1 : 0));
    }

    // Spot-check one sample against a by-hand preparation.
    const ManifestEntry& entry = manifest.find(tiles.rows[3].coord.slide_id);
    const SlideRaster slide = load_slide(manifest.resolve(entry.image_path), entry.slide_id);
    const auto rgb = extract_patch(slide, tiles.rows[3].coord);
    std::vector<double> expect(3 * 16 * 16);
    patch_to_input(rgb.data(), 32, 16, expect.data());
    for (std::size_t k = 0; k < expect.size(); ++k)
        REQUIRE(ds.data[3 * expect.size() + k] == expect[k]);
    std::filesystem::remove_all(dir);
}

TEST_CASE("training is bit-deterministic in the seed") {
    const auto ds = toy_dataset(8, 24, 3);
    CnnTrainConfig cfg;
    cfg.arch = tiny_arch(8);
    cfg.lr = 1e-3;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.seed = 9;
    auto a = train_cnn(ds, cfg);
    auto b = train_cnn(ds, cfg);
    REQUIRE(a.epoch_loss == b.epoch_loss);
    auto pa = a.net->params(), pb = b.net->params();
    for (std::size_t i = 0; i < pa.size(); ++i) REQUIRE(*pa[i].value == *pb[i].value);

    cfg.seed = 10;
    auto c = train_cnn(ds, cfg);
    REQUIRE(a.epoch_loss != c.epoch_loss);
}

TEST_CASE("training reduces the loss on a separable toy set") {
    const auto ds = toy_dataset(8, 32, 4);
    CnnTrainConfig cfg;
    cfg.arch = tiny_arch(8);
    cfg.lr = 1e-2;
    cfg.epochs = 12;
    cfg.batch_size = 16;
    cfg.seed = 2;
    const auto out = train_cnn(ds, cfg);
    REQUIRE(out.epoch_loss.size() == 12);
    REQUIRE(out.epoch_loss.back() < 0.5 * out.epoch_loss.front());

    const auto scores = predict_cnn(*out.net, ds);
    double auc_hits = 0, pairs = 0;
    for (std::size_t i = 0; i < ds.count; ++i)
        for (std::size_t j = 0; j < ds.count; ++j)
            if (ds.labels[i] == 1 && ds.labels[j] == 0) {
                pairs += 1;
                auc_hits += scores[i] > scores[j] ? 1 : 0;
            }
    REQUIRE(auc_hits / pairs > 0.9);
}

TEST_CASE("prediction is independent of batch size") {
    const auto ds = toy_dataset(8, 10, 6);
    CnnTrainConfig cfg;
    cfg.arch = tiny_arch(8);
    cfg.epochs = 1;
    cfg.batch_size = 5;
    const auto out = train_cnn(ds, cfg);
    REQUIRE(predict_cnn(*out.net, ds, 3) == predict_cnn(*out.net, ds, 64));
}

TEST_CASE("finetuning with zero epochs reproduces the source model exactly") {
    const auto ds = toy_dataset(8, 16, 7);
    CnnTrainConfig cfg;
    cfg.arch = tiny_arch(8);
    cfg.lr = 1e-3;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.seed = 13;
    auto source = train_cnn(ds, cfg);
    const std::string path =
        (std::filesystem::temp_directory_path() / "wsipipe_finetune_src.json").string();
    save_cnn(*source.net, source.meta, path);
    const auto source_scores = predict_cnn(*source.net, ds);

    CnnTrainConfig ft = cfg;
    ft.init = "finetune";
    ft.init_from = path;
    ft.epochs = 0;
    ft.seed = 99; // init seed is irrelevant once every parameter is overwritten
    auto zero = train_cnn(ds, ft);
    REQUIRE(predict_cnn(*zero.net, ds) == source_scores);

    ft.epochs = 1;
    auto one = train_cnn(ds, ft);
    REQUIRE(predict_cnn(*one.net, ds) != source_scores);
    REQUIRE_THROWS_AS([&] {
        CnnTrainConfig bad = ft;
        bad.init_from.clear();
        return train_cnn(ds, bad);
    }(), ValidationError);
    std::remove(path.c_str());
}

TEST_CASE("training configuration validation") {
    const auto ds = toy_dataset(8, 4, 8);
    CnnTrainConfig cfg;
    cfg.arch = tiny_arch(8);
    CnnTrainConfig bad = cfg;
    bad.batch_size = 5; // exceeds dataset
    REQUIRE_THROWS_AS(train_cnn(ds, bad), ValidationError);
    bad = cfg;
    bad.batch_size = 0;
    REQUIRE_THROWS_AS(train_cnn(ds, bad), ValidationError);
    bad = cfg;
    bad.epochs = -1;
    REQUIRE_THROWS_AS(train_cnn(ds, bad), ValidationError);
    bad = cfg;
    bad.lr = 0.0;
    REQUIRE_THROWS_AS(train_cnn(ds, bad), ValidationError);
    bad = cfg;
    bad.init = "warm";
    REQUIRE_THROWS_AS(train_cnn(ds, bad), ValidationError);

    CnnTrainConfig mismatched = cfg;
    mismatched.arch = tiny_arch(16);
    mismatched.batch_size = 4;
    REQUIRE_THROWS_AS(train_cnn(ds, mismatched), ValidationError);
}
