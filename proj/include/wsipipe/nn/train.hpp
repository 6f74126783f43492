#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wsipipe/common.hpp"
#include "wsipipe/image.hpp"
#include "wsipipe/manifest.hpp"
#include "wsipipe/nn/adam.hpp"
#include "wsipipe/nn/loss.hpp"
#include "wsipipe/nn/network.hpp"
#include "wsipipe/nn/serialize.hpp"
#include "wsipipe/rng.hpp"
#include "wsipipe/texture.hpp"
#include "wsipipe/tiling.hpp"

namespace wsipipe::nn {

// Block-mean downscale of one planar channel by an integer factor.
inline std::vector<double> block_mean_downscale(const std::vector<double>& plane, int size,
                                                int factor) {
    if (factor < 1 || size % factor != 0)
        throw ValidationError("downscale factor " + std::to_string(factor) + " must divide patch size " +
                              std::to_string(size));
    const int out = size / factor;
    std::vector<double> result(static_cast<std::size_t>(out) * out, 0.0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            result[static_cast<std::size_t>(y / factor) * out + x / factor] +=
                plane[static_cast<std::size_t>(y) * size + x];
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (auto& v : result) v *= inv;
    return result;
}

// Patch bytes -> network input planes: per-channel block-mean downscale to
// the arch's spatial size, then the per-channel quantile normalization.
template <typename S>
void patch_to_input(const std::uint8_t* rgb, int patch_size, int input_hw, S* dst) {
    if (input_hw < 1 || patch_size % input_hw != 0)
        throw ValidationError("arch input " + std::to_string(input_hw) +
                              " must evenly divide patch size " + std::to_string(patch_size));
    const int factor = patch_size / input_hw;
    const std::size_t n = static_cast<std::size_t>(patch_size) * patch_size;
    const std::size_t out_n = static_cast<std::size_t>(input_hw) * input_hw;
    std::vector<double> plane(n);
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < n; ++i) plane[i] = static_cast<double>(rgb[i * 3 + c]);
        const std::vector<double> small =
            factor == 1 ? plane : block_mean_downscale(plane, patch_size, factor);
        const std::vector<double> normed = normalize_channel(small);
        for (std::size_t i = 0; i < out_n; ++i)
            dst[static_cast<std::size_t>(c) * out_n + i] = static_cast<S>(normed[i]);
    }
}

// All patches of one inventory subset as ready network inputs, kept in one
// flat buffer (desk-scale datasets fit comfortably in memory).
template <typename S>
struct CnnDataset {
    int input_hw = 0;
    std::size_t count = 0;
    std::vector<S> data; // count * 3 * input_hw * input_hw
    std::vector<int> labels;
    std::vector<std::string> patch_ids;

    std::size_t sample_values() const {
        return 3 * static_cast<std::size_t>(input_hw) * input_hw;
    }

    Tensor4<S> batch(const std::vector<std::size_t>& idx) const {
        Tensor4<S> t(static_cast<int>(idx.size()), 3, input_hw, input_hw);
        const std::size_t sv = sample_values();
        for (std::size_t b = 0; b < idx.size(); ++b)
            std::copy(data.begin() + idx[b] * sv, data.begin() + (idx[b] + 1) * sv,
                      t.v.begin() + b * sv);
        return t;
    }
};

// Inventory rows are expected grouped by slide (the tiling order); slides
// are loaded once per contiguous group.
template <typename S>
CnnDataset<S> build_cnn_dataset(const DatasetManifest& manifest,
                                const std::vector<InventoryRow>& rows, int input_hw) {
    if (rows.empty()) throw ValidationError("cnn dataset: no patches");
    CnnDataset<S> ds;
    ds.input_hw = input_hw;
    ds.count = rows.size();
    ds.data.resize(rows.size() * ds.sample_values());
    ds.labels.reserve(rows.size());
    ds.patch_ids.reserve(rows.size());

    SlideRaster slide;
    std::string loaded_id;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const InventoryRow& row = rows[i];
        if (row.coord.slide_id != loaded_id) {
            const ManifestEntry& entry = manifest.find(row.coord.slide_id);
            slide = load_slide(manifest.resolve(entry.image_path), entry.slide_id);
            loaded_id = row.coord.slide_id;
        }
        const auto rgb = extract_patch(slide, row.coord);
        patch_to_input(rgb.data(), row.coord.size, input_hw, ds.data.data() + i * ds.sample_values());
        ds.labels.push_back(row.label == PatchLabel::cancer ? 1 : 0);
        ds.patch_ids.push_back(row.coord.patch_id());
    }
    return ds;
}

struct CnnTrainConfig {
    nlohmann::json arch;
    double lr = 1e-5;
    double weight_decay = 1e-4;
    int epochs = 10;
    int batch_size = 64;
    std::uint64_t seed = 1;
    bool decoupled_weight_decay = false;
    std::string init = "scratch"; // or "finetune"
    std::string init_from;        // model path when init == "finetune"
};

template <typename S>
struct CnnTrainOutput {
    std::unique_ptr<Network<S>> net;
    std::vector<double> epoch_loss;
    CnnMeta meta;
};

template <typename S>
CnnTrainOutput<S> train_cnn(const CnnDataset<S>& ds, const CnnTrainConfig& cfg) {
    if (ds.count == 0) throw ValidationError("train: empty dataset");
    if (cfg.epochs < 0) throw ValidationError("train: epochs must be >= 0");
    if (cfg.batch_size < 1) throw ValidationError("train: batch size must be >= 1");
    if (static_cast<std::size_t>(cfg.batch_size) > ds.count)
        throw ValidationError("train: batch size " + std::to_string(cfg.batch_size) +
                              " exceeds dataset size " + std::to_string(ds.count));
    if (!(cfg.lr > 0.0)) throw ValidationError("train: lr must be > 0");
    if (cfg.weight_decay < 0.0) throw ValidationError("train: weight decay must be >= 0");
    if (cfg.init != "scratch" && cfg.init != "finetune")
        throw ValidationError("train: init must be scratch or finetune");
    if (cfg.init == "finetune" && cfg.init_from.empty())
        throw ValidationError("train: finetune needs a source model path");
    for (int l : ds.labels)
        if (l != 0 && l != 1) throw ValidationError("train: labels must be 0 or 1");

    CnnTrainOutput<S> out;
    out.net = std::make_unique<Network<S>>(cfg.arch, derive_seed(cfg.seed, 0));
    if (out.net->input_shape().h != ds.input_hw)
        throw ValidationError("train: dataset prepared for " + std::to_string(ds.input_hw) +
                              ", arch wants " + out.net->input_shape().str());
    if (cfg.init == "finetune")
        load_cnn_params_into(*out.net, read_cnn_file(cfg.init_from), cfg.init_from);

    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    adam_cfg.weight_decay = cfg.weight_decay;
    adam_cfg.decoupled_weight_decay = cfg.decoupled_weight_decay;
    Adam<S> adam(out.net->params(), adam_cfg);

    Rng rng(derive_seed(cfg.seed, 1));
    std::vector<std::size_t> order(ds.count);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < ds.count; start += cfg.batch_size) {
            const std::size_t stop = std::min(ds.count, start + cfg.batch_size);
            const std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
            Tensor4<S> batch = ds.batch(idx);
            std::vector<int> labels(idx.size());
            for (std::size_t b = 0; b < idx.size(); ++b) labels[b] = ds.labels[idx[b]];

            out.net->zero_grad();
            Tensor4<S> logits = out.net->forward(batch, true, &rng);
            const auto loss = softmax_cross_entropy(logits, labels);
            out.net->backward(loss.dlogits);
            adam.step();
            loss_sum += loss.loss * static_cast<double>(idx.size());
        }
        out.epoch_loss.push_back(loss_sum / static_cast<double>(ds.count));
    }

    out.meta.init = cfg.init;
    out.meta.source = cfg.init_from;
    out.meta.seed = cfg.seed;
    out.meta.epochs = cfg.epochs;
    out.meta.lr = cfg.lr;
    out.meta.weight_decay = cfg.weight_decay;
    out.meta.batch_size = cfg.batch_size;
    return out;
}

// Infer-mode cancer probability (softmax component of class 1) per patch.
template <typename S>
std::vector<double> predict_cnn(Network<S>& net, const CnnDataset<S>& ds, int batch_size = 64) {
    if (net.input_shape().h != ds.input_hw)
        throw ValidationError("predict: dataset prepared for " + std::to_string(ds.input_hw) +
                              ", arch wants " + net.input_shape().str());
    std::vector<double> scores;
    scores.reserve(ds.count);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < ds.count; start += batch_size) {
        const std::size_t stop = std::min(ds.count, start + batch_size);
        idx.clear();
        for (std::size_t i = start; i < stop; ++i) idx.push_back(i);
        Tensor4<S> batch = ds.batch(idx);
        const Tensor4<S> logits = net.forward(batch, false, nullptr);
        for (double p : softmax_class1(logits)) scores.push_back(p);
    }
    return scores;
}

} // namespace wsipipe::nn
