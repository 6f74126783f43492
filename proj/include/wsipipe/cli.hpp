#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <zlib.h>

#include "wsipipe/annotations.hpp"
#include "wsipipe/common.hpp"
#include "wsipipe/eval.hpp"
#include "wsipipe/heatmap.hpp"
#include "wsipipe/image.hpp"
#include "wsipipe/manifest.hpp"
#include "wsipipe/nn/gradcheck.hpp"
#include "wsipipe/nn/network.hpp"
#include "wsipipe/nn/serialize.hpp"
#include "wsipipe/nn/train.hpp"
#include "wsipipe/parallel.hpp"
#include "wsipipe/split.hpp"
#include "wsipipe/svm.hpp"
#include "wsipipe/synth.hpp"
#include "wsipipe/texture.hpp"
#include "wsipipe/tiling.hpp"

namespace wsipipe::cli {

namespace detail {

inline std::string resolve(const std::string& workdir, const std::string& path) {
    if (path.empty()) return path;
    std::filesystem::path p(path);
    if (p.is_absolute()) return path;
    return (std::filesystem::path(workdir) / p).string();
}

inline std::uint32_t file_crc32(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return static_cast<std::uint32_t>(
        ::crc32(0L, bytes.empty() ? Z_NULL : bytes.data(), static_cast<uInt>(bytes.size())));
}

inline void print_error(const std::string& message, int code) {
    std::string flat = message;
    for (auto& c : flat)
        if (c == '\n' || c == '\r') c = ' ';
    nlohmann::json j{{"error", flat}, {"code", code}};
    std::cerr << j.dump() << "\n";
}

inline std::pair<int, int> parse_size(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos || x == 0 || x + 1 >= s.size())
        throw ValidationError("--size must look like 1024x1024, got '" + s + "'");
    return {static_cast<int>(parse_long(s.substr(0, x))),
            static_cast<int>(parse_long(s.substr(x + 1)))};
}

inline std::vector<double> parse_double_list(const std::string& s, const std::string& flag) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const std::string tok =
            s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (tok.empty()) throw ValidationError(flag + ": empty entry in '" + s + "'");
        out.push_back(parse_double(tok));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw ValidationError(flag + ": no values in '" + s + "'");
    return out;
}

// Split source: per-entry tags when the manifest carries them (all or
// none), otherwise a seeded slide-level shuffle.
inline SlideSplit make_split(const DatasetManifest& manifest, double test_fraction,
                             std::uint64_t seed) {
    std::size_t tagged = 0;
    for (const auto& e : manifest.slides)
        if (!e.split_tag.empty()) ++tagged;
    if (tagged == 0) return split_by_slide(manifest, test_fraction, seed);
    if (tagged != manifest.slides.size())
        throw ValidationError("manifest tags a split on " + std::to_string(tagged) + " of " +
                              std::to_string(manifest.slides.size()) +
                              " slides; tag all or none");
    SlideSplit split;
    for (const auto& e : manifest.slides)
        (e.split_tag == "test" ? split.test_ids : split.train_ids).push_back(e.slide_id);
    if (split.train_ids.empty() || split.test_ids.empty())
        throw ValidationError("manifest split tags leave one side empty");
    return split;
}

inline std::vector<InventoryRow> filter_split(const std::vector<InventoryRow>& rows,
                                              const std::string& which) {
    if (which == "all") return rows;
    if (which != "train" && which != "test")
        throw ValidationError("--split must be train, test or all, got '" + which + "'");
    std::vector<InventoryRow> out;
    for (const auto& r : rows)
        if (r.split == which) out.push_back(r);
    if (out.empty()) throw ValidationError("no patches in split '" + which + "'");
    return out;
}

inline std::string model_name_from_path(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

inline nlohmann::json load_json_file(const std::string& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw Error(what + ": cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(what + ": parse error in '" + path + "': " + e.what());
    }
    return j;
}

inline nlohmann::json default_gradcheck_arch() {
    return nlohmann::json{
        {"input", {3, 8, 8}},
        {"layers",
         {{{"type", "conv"}, {"out", 4}, {"k", 3}, {"s", 1}, {"p", 1}, {"bias", false}},
          {{"type", "batchnorm"}},
          {{"type", "relu"}},
          {{"type", "maxpool"}, {"k", 2}, {"s", 2}},
          {{"type", "residual"},
           {"projection", false},
           {"layers",
            {{{"type", "conv"}, {"out", 4}, {"k", 3}, {"s", 1}, {"p", 1}, {"bias", false}},
             {{"type", "batchnorm"}}}}},
          {{"type", "relu"}},
          {{"type", "conv"}, {"out", 8}, {"k", 3}, {"s", 1}, {"p", 1}, {"bias", false}},
          {{"type", "batchnorm"}},
          {{"type", "relu"}},
          {{"type", "gap"}},
          {{"type", "fc"}, {"out", 2}}}}};
}

} // namespace detail

// Parses and executes one subcommand. Exit codes: 0 success, 1 runtime
// failure, 2 unknown subcommand, 3 validation failure. Every successful run
// writes a JSON run-log with flags, versions, wall time and output digests.
inline int run(const std::vector<std::string>& args) {
    CLI::App app{"Whole-slide patch pipeline: synthetic data, tiling, texture+SVM and CNN "
                 "classification, evaluation and heatmaps"};
    app.name("wsipipe");
    app.require_subcommand(0, 1);

    std::string workdir = ".";
    int threads = 1;
    std::string log_path;
    app.add_option("--workdir", workdir, "Base directory for relative paths")
        ->capture_default_str();
    app.add_option("--threads", threads, "Worker threads (results are thread-count independent)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--log", log_path, "Run-log path (default <workdir>/run_log.json)");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a deterministic synthetic slide dataset");
    synth->fallthrough();
    int synth_slides = 1, synth_regions = 2;
    std::string synth_size = "1024x1024", synth_out;
    std::uint64_t synth_seed = 1;
    synth->add_option("--slides", synth_slides, "Number of slides")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--size", synth_size, "Slide dimensions WxH")->capture_default_str();
    synth->add_option("--regions", synth_regions, "Cancer rectangles per slide")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
    synth->add_option("--out", synth_out, "Output dataset directory")->required();

    // tile
    auto* tile = app.add_subcommand("tile", "Plan and label patches for every slide");
    tile->fallthrough();
    std::string tile_manifest, tile_out;
    int tile_patch = 256, tile_stride = 196;
    double tile_threshold = 0.5, tile_test_fraction = 0.25;
    std::uint64_t tile_seed = 1;
    bool tile_materialize = false;
    tile->add_option("--manifest", tile_manifest, "Dataset manifest JSON")->required();
    tile->add_option("--out", tile_out, "Output directory for the inventory")->required();
    tile->add_option("--patch-size", tile_patch, "Patch edge in pixels")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    tile->add_option("--stride", tile_stride, "Patch origin stride in pixels")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    tile->add_option("--label-threshold", tile_threshold,
                     "Cancer-area fraction at or above which a patch is cancer")
        ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0))
        ->capture_default_str();
    tile->add_option("--test-fraction", tile_test_fraction,
                     "Slide fraction for the test split (ignored when the manifest tags splits)")
        ->capture_default_str();
    tile->add_option("--seed", tile_seed, "Split shuffle seed")->capture_default_str();
    tile->add_flag("--materialize", tile_materialize, "Also write each patch as a PNG");

    // extract-features
    auto* extract = app.add_subcommand("extract-features", "GLCM texture features per patch");
    extract->fallthrough();
    std::string ex_inventory, ex_manifest, ex_out, ex_offset = "1,0", ex_split = "all";
    int ex_gray = 8, ex_segment = 7;
    bool ex_symmetric = true;
    extract->add_option("--inventory", ex_inventory, "Patch inventory CSV")->required();
    extract->add_option("--manifest", ex_manifest, "Dataset manifest JSON")->required();
    extract->add_option("--out", ex_out, "Output features CSV")->required();
    extract->add_option("--gray-levels", ex_gray, "Quantization levels")
        ->check(CLI::Range(2, 4096))
        ->capture_default_str();
    extract->add_option("--offset", ex_offset, "Co-occurrence offset dx,dy")->capture_default_str();
    extract->add_flag("--symmetric,!--no-symmetric", ex_symmetric,
                      "Count pixel pairs in both directions")
        ->capture_default_str();
    extract->add_option("--segment-size", ex_segment, "Square segment edge for the GLCM windows")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    extract->add_option("--split", ex_split, "Restrict to one split: train, test or all")
        ->capture_default_str();

    // train-svm
    auto* tsvm = app.add_subcommand("train-svm", "Train the kernel SVM on a features CSV");
    tsvm->fallthrough();
    std::string ts_features, ts_out, ts_kernel = "rbf", ts_gamma = "auto";
    double ts_C = 1.0, ts_tol = 1e-3;
    int ts_max_passes = 10;
    std::uint64_t ts_seed = 1;
    tsvm->add_option("--features", ts_features, "Training features CSV")->required();
    tsvm->add_option("--out", ts_out, "Output model JSON")->required();
    tsvm->add_option("--C", ts_C, "Soft-margin penalty")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    tsvm->add_option("--kernel", ts_kernel, "Kernel: rbf or linear")->capture_default_str();
    tsvm->add_option("--gamma", ts_gamma, "RBF gamma, or 'auto' for 1/feature-dim")
        ->capture_default_str();
    tsvm->add_option("--tol", ts_tol, "KKT violation tolerance")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    tsvm->add_option("--max-passes", ts_max_passes, "Consecutive update-free sweeps before stopping")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    tsvm->add_option("--seed", ts_seed, "Sweep shuffle seed")->capture_default_str();

    // train-cnn
    auto* tcnn = app.add_subcommand("train-cnn", "Train the CNN on inventory patches");
    tcnn->fallthrough();
    std::string tc_inventory, tc_manifest, tc_arch, tc_init_from, tc_out, tc_split = "train";
    double tc_lr = 1e-5, tc_wd = 1e-4;
    int tc_epochs = 10, tc_batch = 64, tc_input = 64;
    std::uint64_t tc_seed = 1;
    bool tc_decoupled = false;
    tcnn->add_option("--inventory", tc_inventory, "Patch inventory CSV")->required();
    tcnn->add_option("--manifest", tc_manifest, "Dataset manifest JSON")->required();
    tcnn->add_option("--arch", tc_arch, "Architecture JSON file (default: built-in residual net)");
    tcnn->add_option("--input-size", tc_input,
                     "Input edge for the built-in arch; patches are block-mean downscaled")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    tcnn->add_option("--init-from", tc_init_from, "Fine-tune from this model instead of scratch");
    tcnn->add_option("--lr", tc_lr, "Learning rate")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    tcnn->add_option("--wd", tc_wd, "Weight decay")
        ->check(CLI::Range(0.0, 1e9))
        ->capture_default_str();
    tcnn->add_option("--epochs", tc_epochs, "Training epochs")
        ->check(CLI::Range(0, 1000000))
        ->capture_default_str();
    tcnn->add_option("--batch", tc_batch, "Batch size")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    tcnn->add_option("--seed", tc_seed, "Initialization and shuffle seed")->capture_default_str();
    tcnn->add_flag("--decoupled-wd", tc_decoupled,
                   "Apply weight decay directly to parameters instead of through the gradient");
    tcnn->add_option("--split", tc_split, "Inventory split to train on")->capture_default_str();
    tcnn->add_option("--out", tc_out, "Output model file")->required();

    // predict
    auto* predict = app.add_subcommand("predict", "Score patches with a trained model");
    predict->fallthrough();
    std::string pr_model, pr_features, pr_inventory, pr_manifest, pr_out, pr_name, pr_split = "all";
    int pr_batch = 64;
    predict->add_option("--model", pr_model, "Model file (svm or cnn)")->required();
    predict->add_option("--features", pr_features, "Features CSV (svm models)");
    predict->add_option("--inventory", pr_inventory, "Patch inventory CSV (cnn models)");
    predict->add_option("--manifest", pr_manifest, "Dataset manifest JSON (cnn models)");
    predict->add_option("--out", pr_out, "Output scores CSV")->required();
    predict->add_option("--model-name", pr_name, "Model column value (default: model file stem)");
    predict->add_option("--split", pr_split, "Inventory split to score (cnn models)")
        ->capture_default_str();
    predict->add_option("--batch", pr_batch, "Inference batch size (cnn models)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "ROC/AUC/TPR@FPR report over scores CSVs");
    eval_cmd->fallthrough();
    std::vector<std::string> ev_scores;
    std::string ev_out, ev_targets = "0.05,0.1,0.5";
    eval_cmd->add_option("--scores", ev_scores, "Scores CSV (repeatable; rows grouped by model)")
        ->required();
    eval_cmd->add_option("--out", ev_out, "Output directory")->required();
    eval_cmd->add_option("--fpr-targets", ev_targets, "Comma-separated FPR operating points")
        ->capture_default_str();

    // heatmap
    auto* heat = app.add_subcommand("heatmap", "Per-slide probability heatmap overlay");
    heat->fallthrough();
    std::string hm_scores, hm_manifest, hm_slide, hm_out, hm_rule = "mean", hm_field_out;
    int hm_patch = 256, hm_stride = 196;
    double hm_alpha = 0.4;
    heat->add_option("--scores", hm_scores, "Scores CSV with probabilities in [0,1]")->required();
    heat->add_option("--manifest", hm_manifest, "Dataset manifest JSON")->required();
    heat->add_option("--slide-id", hm_slide, "Slide to render")->required();
    heat->add_option("--patch-size", hm_patch, "Patch edge used at tiling")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    heat->add_option("--stride", hm_stride, "Stride used at tiling")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    heat->add_option("--alpha", hm_alpha, "Overlay blend weight")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    heat->add_option("--rule", hm_rule, "Pixel rule over covering patches: mean, max or nearest")
        ->capture_default_str();
    heat->add_option("--field-out", hm_field_out,
                     "Also dump the raw float32 pixel field (sidecar JSON alongside)");
    heat->add_option("--out", hm_out, "Output PNG")->required();

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "Finite-difference check of layer gradients");
    gc->fallthrough();
    std::string gc_arch, gc_out;
    std::uint64_t gc_seed = 1;
    double gc_eps = 1e-5, gc_threshold = 1e-4;
    int gc_batch = 2;
    gc->add_option("--arch", gc_arch, "Architecture JSON file (default: built-in small net)");
    gc->add_option("--seed", gc_seed, "Input and init seed")->capture_default_str();
    gc->add_option("--epsilon", gc_eps, "Central-difference step")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gc->add_option("--threshold", gc_threshold, "Max relative error to call a layer pass")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gc->add_option("--batch", gc_batch, "Check batch size")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gc->add_option("--out", gc_out, "Optional JSON report path");

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("wsipipe");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ExtrasError& e) {
        // No positionals are declared, so a stray token at the top level is a
        // subcommand we do not know.
        if (app.get_subcommands().empty()) {
            detail::print_error(std::string("unknown subcommand: ") + e.what(), 2);
            return 2;
        }
        detail::print_error(std::string("invalid arguments: ") + e.what(), 3);
        return 3;
    } catch (const CLI::ParseError& e) {
        detail::print_error(std::string("invalid arguments: ") + e.what(), 3);
        return 3;
    }

    const auto started = std::chrono::steady_clock::now();
    std::vector<std::string> outputs; // files written, already workdir-resolved
    CLI::App* selected = nullptr;
    std::uint64_t run_seed = 0;

    const auto res = [&](const std::string& p) { return detail::resolve(workdir, p); };

    try {
        if (synth->parsed()) {
            selected = synth;
            run_seed = synth_seed;
            SynthConfig cfg;
            cfg.slide_count = synth_slides;
            std::tie(cfg.width, cfg.height) = detail::parse_size(synth_size);
            cfg.cancer_regions_per_slide = synth_regions;
            cfg.seed = synth_seed;
            const std::string out_dir = res(synth_out);
            const DatasetManifest manifest = generate_synthetic_dataset(cfg, out_dir, threads);
            for (const auto& e : manifest.slides) {
                outputs.push_back(manifest.resolve(e.image_path));
                outputs.push_back(manifest.resolve(e.annotation_path));
            }
            outputs.push_back((std::filesystem::path(out_dir) / "manifest.json").string());
        } else if (tile->parsed()) {
            selected = tile;
            run_seed = tile_seed;
            TilingConfig cfg;
            cfg.patch_size = tile_patch;
            cfg.stride = tile_stride;
            cfg.label_threshold = tile_threshold;
            validate_tiling_config(cfg);
            const DatasetManifest manifest = load_manifest(res(tile_manifest));
            const SlideSplit split = detail::make_split(manifest, tile_test_fraction, tile_seed);
            const TileResult result = tile_dataset(manifest, cfg, split, threads);
            const std::string out_dir = res(tile_out);
            std::filesystem::create_directories(out_dir);
            const std::string inv_path =
                (std::filesystem::path(out_dir) / "inventory.csv").string();
            save_inventory(result.rows, inv_path);
            outputs.push_back(inv_path);
            if (tile_materialize) {
                const std::string patch_dir = (std::filesystem::path(out_dir) / "patches").string();
                std::filesystem::create_directories(patch_dir);
                SlideRaster slide;
                std::string loaded;
                for (const auto& row : result.rows) {
                    if (row.coord.slide_id != loaded) {
                        const ManifestEntry& entry = manifest.find(row.coord.slide_id);
                        slide = load_slide(manifest.resolve(entry.image_path), entry.slide_id);
                        loaded = row.coord.slide_id;
                    }
                    SlideRaster patch;
                    patch.id = row.coord.patch_id();
                    patch.width = patch.height = row.coord.size;
                    patch.pixels = extract_patch(slide, row.coord);
                    const std::string p =
                        (std::filesystem::path(patch_dir) / (row.coord.patch_id() + ".png")).string();
                    save_slide_png(patch, p);
                    outputs.push_back(p);
                }
            }
            std::cout << "patches: " << result.rows.size() << " (cancer " << result.cancer_count
                      << ", normal " << result.normal_count << ")\n";
        } else if (extract->parsed()) {
            selected = extract;
            TextureConfig cfg;
            cfg.gray_levels = ex_gray;
            const auto offset = detail::parse_double_list(ex_offset, "--offset");
            if (offset.size() != 2) throw ValidationError("--offset needs exactly dx,dy");
            cfg.offset_dx = static_cast<int>(offset[0]);
            cfg.offset_dy = static_cast<int>(offset[1]);
            cfg.symmetric = ex_symmetric;
            cfg.segment_size = ex_segment;
            validate_texture_config(cfg);
            const DatasetManifest manifest = load_manifest(res(ex_manifest));
            const auto rows = detail::filter_split(load_inventory(res(ex_inventory)), ex_split);
            std::vector<FeatureRow> features(rows.size());
            SlideRaster slide;
            std::string loaded;
            std::size_t i = 0;
            while (i < rows.size()) {
                const std::string& sid = rows[i].coord.slide_id;
                const ManifestEntry& entry = manifest.find(sid);
                slide = load_slide(manifest.resolve(entry.image_path), entry.slide_id);
                std::size_t j = i;
                while (j < rows.size() && rows[j].coord.slide_id == sid) ++j;
                parallel_for(j - i, threads, [&](std::size_t k) {
                    const InventoryRow& row = rows[i + k];
                    const auto rgb = extract_patch(slide, row.coord);
                    FeatureRow fr;
                    fr.patch_id = row.coord.patch_id();
                    fr.label = row.label == PatchLabel::cancer ? 1 : 0;
                    fr.features = patch_feature_vector(rgb.data(), row.coord.size, row.coord.size, cfg);
                    features[i + k] = std::move(fr);
                });
                i = j;
            }
            save_features(features, res(ex_out));
            outputs.push_back(res(ex_out));
        } else if (tsvm->parsed()) {
            selected = tsvm;
            run_seed = ts_seed;
            SvmTrainConfig cfg;
            cfg.C = ts_C;
            double gamma = 0.0;
            if (ts_gamma != "auto") {
                gamma = parse_double(ts_gamma);
                if (!(gamma > 0.0)) throw ValidationError("--gamma must be positive or 'auto'");
            }
            cfg.kernel = KernelSpec::parse(ts_kernel, gamma);
            cfg.tol = ts_tol;
            cfg.max_passes = ts_max_passes;
            cfg.seed = ts_seed;
            const auto rows = load_features(res(ts_features));
            if (rows.empty()) throw ValidationError("features CSV is empty");
            std::vector<std::vector<double>> x;
            std::vector<int> y;
            for (const auto& r : rows) {
                x.emplace_back(r.features.begin(), r.features.end());
                y.push_back(r.label == 1 ? 1 : -1);
            }
            const SvmTrainResult trained = train_svm(x, y, cfg);
            save_svm(trained.model, res(ts_out));
            outputs.push_back(res(ts_out));
            std::cout << "support vectors: " << trained.model.support_x.size() << " of " << x.size()
                      << ", sweeps: " << trained.sweeps << ", dual objective: "
                      << (trained.dual_trace.empty() ? 0.0 : trained.dual_trace.back()) << "\n";
        } else if (tcnn->parsed()) {
            selected = tcnn;
            run_seed = tc_seed;
            nn::CnnTrainConfig cfg;
            cfg.arch = tc_arch.empty() ? nn::pilot_arch(tc_input)
                                       : detail::load_json_file(res(tc_arch), "arch");
            cfg.lr = tc_lr;
            cfg.weight_decay = tc_wd;
            cfg.epochs = tc_epochs;
            cfg.batch_size = tc_batch;
            cfg.seed = tc_seed;
            cfg.decoupled_weight_decay = tc_decoupled;
            if (!tc_init_from.empty()) {
                cfg.init = "finetune";
                cfg.init_from = res(tc_init_from);
            }
            const DatasetManifest manifest = load_manifest(res(tc_manifest));
            const auto rows = detail::filter_split(load_inventory(res(tc_inventory)), tc_split);
            nn::Network<float> probe(cfg.arch, 0); // shape check before the heavy data prep
            const auto ds = nn::build_cnn_dataset<float>(manifest, rows, probe.input_shape().h);
            auto trained = nn::train_cnn(ds, cfg);
            nn::save_cnn(*trained.net, trained.meta, res(tc_out));
            outputs.push_back(res(tc_out));
            std::cout << "epochs: " << trained.epoch_loss.size();
            if (!trained.epoch_loss.empty())
                std::cout << ", first loss: " << trained.epoch_loss.front()
                          << ", final loss: " << trained.epoch_loss.back();
            std::cout << "\n";
        } else if (predict->parsed()) {
            selected = predict;
            const std::string model_path = res(pr_model);
            const nlohmann::json header = detail::load_json_file(model_path, "model");
            const std::string kind = header.value("kind", "");
            const std::string name =
                pr_name.empty() ? detail::model_name_from_path(pr_model) : pr_name;
            std::vector<ScoreRow> scores;
            if (kind == "svm") {
                if (pr_features.empty())
                    throw ValidationError("svm models need --features");
                const SvmModel model = load_svm(model_path);
                const auto rows = load_features(res(pr_features));
                scores.resize(rows.size());
                parallel_for(rows.size(), threads, [&](std::size_t i) {
                    const auto& r = rows[i];
                    ScoreRow s;
                    s.patch_id = r.patch_id;
                    s.slide_id = slide_id_from_patch_id(r.patch_id);
                    s.label = r.label;
                    s.score = svm_decision(model, {r.features.begin(), r.features.end()});
                    s.model = name;
                    scores[i] = std::move(s);
                });
            } else if (kind == "cnn") {
                if (pr_inventory.empty() || pr_manifest.empty())
                    throw ValidationError("cnn models need --inventory and --manifest");
                auto loaded = nn::load_cnn<float>(model_path);
                const DatasetManifest manifest = load_manifest(res(pr_manifest));
                const auto rows =
                    detail::filter_split(load_inventory(res(pr_inventory)), pr_split);
                const auto ds =
                    nn::build_cnn_dataset<float>(manifest, rows, loaded.net->input_shape().h);
                const auto probs = nn::predict_cnn(*loaded.net, ds, pr_batch);
                scores.resize(rows.size());
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    ScoreRow s;
                    s.patch_id = ds.patch_ids[i];
                    s.slide_id = rows[i].coord.slide_id;
                    s.label = ds.labels[i];
                    s.score = probs[i];
                    s.model = name;
                    scores[i] = std::move(s);
                }
            } else {
                throw ValidationError("model file '" + pr_model + "' has unknown kind '" + kind + "'");
            }
            save_scores(scores, res(pr_out));
            outputs.push_back(res(pr_out));
        } else if (eval_cmd->parsed()) {
            selected = eval_cmd;
            const auto targets = detail::parse_double_list(ev_targets, "--fpr-targets");
            std::vector<ScoreRow> rows;
            for (const auto& p : ev_scores) {
                auto part = load_scores(res(p));
                rows.insert(rows.end(), part.begin(), part.end());
            }
            if (rows.empty()) throw ValidationError("no score rows");
            std::vector<std::string> model_order;
            std::map<std::string, std::pair<std::vector<int>, std::vector<double>>> by_model;
            for (const auto& r : rows) {
                if (!by_model.count(r.model)) model_order.push_back(r.model);
                by_model[r.model].first.push_back(r.label);
                by_model[r.model].second.push_back(r.score);
            }
            const std::string out_dir = res(ev_out);
            std::filesystem::create_directories(out_dir);
            std::vector<EvalReport> reports;
            for (const auto& m : model_order) {
                const auto& [labels, scores] = by_model[m];
                reports.push_back(evaluate_scores(labels, scores, m, targets));
                const std::string roc_path =
                    (std::filesystem::path(out_dir) / ("roc_" + m + ".csv")).string();
                save_roc_csv(roc_curve(labels, scores), roc_path);
                outputs.push_back(roc_path);
            }
            const std::string csv_path = (std::filesystem::path(out_dir) / "report.csv").string();
            const std::string json_path = (std::filesystem::path(out_dir) / "report.json").string();
            save_eval_report_csv(reports, csv_path);
            save_eval_report_json(reports, json_path);
            outputs.push_back(csv_path);
            outputs.push_back(json_path);
            for (const auto& r : reports)
                std::cout << r.model << ": auc " << format_double(r.auc) << "\n";
        } else if (heat->parsed()) {
            selected = heat;
            const DatasetManifest manifest = load_manifest(res(hm_manifest));
            const ManifestEntry* entry = nullptr;
            for (const auto& e : manifest.slides)
                if (e.slide_id == hm_slide) entry = &e;
            if (!entry) throw ValidationError("slide '" + hm_slide + "' not in manifest");
            const SlideRaster slide = load_slide(manifest.resolve(entry->image_path), entry->slide_id);
            AnnotationSet annotations;
            annotations.slide_id = entry->slide_id;
            if (!entry->annotation_path.empty())
                annotations = load_annotations(manifest.resolve(entry->annotation_path));
            TilingConfig cfg;
            cfg.patch_size = hm_patch;
            cfg.stride = hm_stride;
            validate_tiling_config(cfg);
            const auto plan = plan_patches(slide.width, slide.height, cfg, entry->slide_id);
            std::map<std::string, double> by_id;
            for (const auto& s : load_scores(res(hm_scores))) {
                if (s.slide_id != hm_slide) continue;
                if (by_id.count(s.patch_id))
                    throw ValidationError("duplicate score for patch '" + s.patch_id + "'");
                by_id[s.patch_id] = s.score;
            }
            if (by_id.empty())
                throw ValidationError("no scores for slide '" + hm_slide + "' in the CSV");
            const auto stitched = stitch_by_id(plan, by_id, slide.width, slide.height,
                                               parse_pixel_rule(hm_rule));
            const SlideRaster overlay = render_overlay(slide, stitched.field, annotations, hm_alpha);
            save_slide_png(overlay, res(hm_out));
            outputs.push_back(res(hm_out));
            if (!hm_field_out.empty()) {
                const std::string sidecar = res(hm_field_out) + ".json";
                save_pixel_field(stitched.field, res(hm_field_out), sidecar);
                outputs.push_back(res(hm_field_out));
                outputs.push_back(sidecar);
            }
        } else if (gc->parsed()) {
            selected = gc;
            run_seed = gc_seed;
            const nlohmann::json arch = gc_arch.empty()
                                            ? detail::default_gradcheck_arch()
                                            : detail::load_json_file(res(gc_arch), "arch");
            const auto report = nn::grad_check(arch, gc_seed, gc_eps, gc_batch);
            nlohmann::json out_json{{"epsilon", gc_eps},
                                    {"threshold", gc_threshold},
                                    {"input_max_rel_err", report.input_max_rel_err},
                                    {"overall_max_rel_err", report.overall()},
                                    {"pass", report.overall() < gc_threshold}};
            for (const auto& [layer, err] : report.max_rel_err_by_layer)
                out_json["layers"][layer] = err;
            std::cout << out_json.dump(2) << "\n";
            if (!gc_out.empty()) {
                std::ofstream f(res(gc_out));
                if (!f) throw Error("cannot open '" + res(gc_out) + "' for writing");
                f << out_json.dump(2) << "\n";
                outputs.push_back(res(gc_out));
            }
        } else {
            detail::print_error("missing subcommand (synth, tile, extract-features, train-svm, "
                                "train-cnn, predict, eval, heatmap, grad-check)",
                                2);
            return 2;
        }
    } catch (const ValidationError& e) {
        detail::print_error(e.what(), 3);
        return 3;
    } catch (const std::exception& e) {
        detail::print_error(e.what(), 1);
        return 1;
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    try {
        nlohmann::json flags = nlohmann::json::object();
        for (const auto* opt : selected->get_options()) {
            const auto& lnames = opt->get_lnames();
            const std::string name = lnames.empty() ? opt->get_name() : lnames[0];
            if (name == "help") continue;
            if (opt->count()) {
                const auto& results = opt->results();
                flags[name] = results.size() == 1 ? nlohmann::json(results[0])
                                                  : nlohmann::json(results);
            } else {
                flags[name] = opt->get_default_str();
            }
        }
        nlohmann::json digests = nlohmann::json::array();
        for (const auto& p : outputs)
            digests.push_back({{"path", p}, {"crc32", detail::file_crc32(p)}});
        nlohmann::json log{{"run_log_version", kRunLogVersion},
                           {"command", selected->get_name()},
                           {"flags", flags},
                           {"seed", run_seed},
                           {"versions",
                            {{"app", kVersion},
                             {"svm_model", kSvmModelVersion},
                             {"cnn_model", kCnnModelVersion}}},
                           {"threads", threads},
                           {"wall_time_seconds", wall},
                           {"outputs", digests}};
        const std::string lp = log_path.empty()
                                   ? (std::filesystem::path(workdir) / "run_log.json").string()
                                   : detail::resolve(workdir, log_path);
        std::filesystem::path lpp(lp);
        if (lpp.has_parent_path()) std::filesystem::create_directories(lpp.parent_path());
        std::ofstream f(lp, std::ios::binary);
        if (!f) throw Error("cannot write run log '" + lp + "'");
        f << log.dump(2) << "\n";
    } catch (const std::exception& e) {
        detail::print_error(std::string("run log: ") + e.what(), 1);
        return 1;
    }
    return 0;
}

} // namespace wsipipe::cli
