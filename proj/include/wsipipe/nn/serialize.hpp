#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "wsipipe/base64.hpp"
#include "wsipipe/common.hpp"
#include "wsipipe/nn/network.hpp"

namespace wsipipe::nn {

static_assert(sizeof(float) == 4, "serialized blobs are 32-bit floats");

struct CnnMeta {
    std::string init = "scratch"; // or "finetune"
    std::string source;           // source model path for finetune
    std::uint64_t seed = 1;
    int epochs = 0;
    double lr = 0.0;
    double weight_decay = 0.0;
    int batch_size = 0;

    nlohmann::json to_json() const {
        nlohmann::json j{{"init", init},    {"seed", seed},
                         {"epochs", epochs}, {"lr", lr},
                         {"weight_decay", weight_decay}, {"batch_size", batch_size}};
        if (!source.empty()) j["source"] = source;
        return j;
    }
};

namespace detail {

inline std::uint32_t blob_crc32(const std::vector<std::uint8_t>& bytes) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, bytes.empty() ? Z_NULL : bytes.data(), static_cast<uInt>(bytes.size())));
}

template <typename S>
std::vector<std::uint8_t> to_float_bytes(const std::vector<S>& values) {
    std::vector<std::uint8_t> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const float f = static_cast<float>(values[i]);
        std::memcpy(bytes.data() + i * 4, &f, 4);
    }
    return bytes;
}

template <typename S>
void from_float_bytes(const std::vector<std::uint8_t>& bytes, std::vector<S>& out) {
    for (std::size_t i = 0; i < out.size(); ++i) {
        float f;
        std::memcpy(&f, bytes.data() + i * 4, 4);
        out[i] = static_cast<S>(f);
    }
}

} // namespace detail

template <typename S>
void save_cnn(Network<S>& net, const CnnMeta& meta, const std::string& path) {
    nlohmann::json j;
    j["format_version"] = kCnnModelVersion;
    j["kind"] = "cnn";
    j["arch"] = net.arch();
    j["metadata"] = meta.to_json();
    j["seed"] = meta.seed;
    j["params"] = nlohmann::json::array();
    for (const auto& p : net.params()) {
        const auto bytes = detail::to_float_bytes(*p.value);
        j["params"].push_back({{"name", p.name},
                               {"size", p.value->size()},
                               {"dtype", "float32"},
                               {"crc32", detail::blob_crc32(bytes)},
                               {"data", base64_encode(bytes)}});
    }
    std::filesystem::path fp(path);
    if (fp.has_parent_path()) std::filesystem::create_directories(fp.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cnn: cannot open '" + path + "' for writing");
    f << j.dump(2) << "\n";
    if (!f) throw Error("cnn: write failure on '" + path + "'");
}

inline nlohmann::json read_cnn_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cnn: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("cnn: parse error in '" + path + "': " + e.what());
    }
    if (!j.contains("kind") || j.at("kind").get<std::string>() != "cnn")
        throw Error("cnn: '" + path + "' is not a cnn model file");
    if (j.at("format_version").get<int>() != kCnnModelVersion)
        throw Error("cnn: unsupported model format version " +
                    j.at("format_version").dump() + " in '" + path + "'");
    return j;
}

// Copies every parameter blob whose name exists in the target network.
// A matching name with a different size is an arch incompatibility and
// errors out naming the parameter.
template <typename S>
void load_cnn_params_into(Network<S>& net, const nlohmann::json& file_json,
                          const std::string& origin) {
    auto params = net.params();
    for (const auto& pj : file_json.at("params")) {
        const std::string name = pj.at("name").get<std::string>();
        ParamRef<S>* target = nullptr;
        for (auto& p : params)
            if (p.name == name) {
                target = &p;
                break;
            }
        if (!target) continue;
        const std::size_t size = pj.at("size").get<std::size_t>();
        if (size != target->value->size())
            throw Error("cnn: parameter '" + name + "' in '" + origin + "' has " +
                        std::to_string(size) + " values, network expects " +
                        std::to_string(target->value->size()));
        const auto bytes = base64_decode(pj.at("data").get<std::string>());
        if (bytes.size() != size * 4)
            throw Error("cnn: parameter '" + name + "' in '" + origin + "' blob length mismatch");
        if (detail::blob_crc32(bytes) != pj.at("crc32").get<std::uint32_t>())
            throw Error("cnn: checksum failure on parameter '" + name + "' in '" + origin + "'");
        detail::from_float_bytes(bytes, *target->value);
    }
}

template <typename S>
struct LoadedCnn {
    std::unique_ptr<Network<S>> net;
    nlohmann::json metadata;
    std::uint64_t seed = 0;
};

template <typename S>
LoadedCnn<S> load_cnn(const std::string& path) {
    const nlohmann::json j = read_cnn_file(path);
    LoadedCnn<S> out;
    out.seed = j.value("seed", std::uint64_t{0});
    out.metadata = j.value("metadata", nlohmann::json::object());
    out.net = std::make_unique<Network<S>>(j.at("arch"), out.seed);
    // Every parameter the network owns must come from the file.
    auto params = out.net->params();
    for (const auto& p : params) {
        bool found = false;
        for (const auto& pj : j.at("params"))
            if (pj.at("name").get<std::string>() == p.name) {
                found = true;
                break;
            }
        if (!found) throw Error("cnn: '" + path + "' is missing parameter '" + p.name + "'");
    }
    load_cnn_params_into(*out.net, j, path);
    return out;
}

} // namespace wsipipe::nn
