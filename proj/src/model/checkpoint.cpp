#include "devstab/codec.hpp"
#include "devstab/error.hpp"
#include "devstab/model.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace devstab {

using nlohmann::json;

namespace {

std::string strip_extension(const std::string& path) {
    for (const char* ext : {".json", ".bin"}) {
        const std::size_t n = std::strlen(ext);
        if (path.size() > n && path.compare(path.size() - n, n, ext) == 0) return path.substr(0, path.size() - n);
    }
    return path;
}

std::vector<std::uint8_t> pack_float32(const ModelParams& params) {
    std::vector<std::uint8_t> out(params.size() * 4);
    auto v = params.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v[i]));
        for (int b = 0; b < 4; ++b) out[4 * i + b] = static_cast<std::uint8_t>(bits >> (8 * b));
    }
    return out;
}

json layout(const Architecture& arch) {
    json layers = json::array();
    for (int l = 0; l < arch.conv_layers(); ++l) {
        layers.push_back({{"name", "conv" + std::to_string(l) + ".weight"},
                          {"shape", {arch.conv_channels[l], arch.layer_in_channels(l), 3, 3}}});
        layers.push_back({{"name", "conv" + std::to_string(l) + ".bias"}, {"shape", {arch.conv_channels[l]}}});
    }
    layers.push_back({{"name", "embed.weight"}, {"shape", {arch.embed_dim, arch.flat_size()}}});
    layers.push_back({{"name", "embed.bias"}, {"shape", {arch.embed_dim}}});
    layers.push_back({{"name", "out.weight"}, {"shape", {arch.classes, arch.embed_dim}}});
    layers.push_back({{"name", "out.bias"}, {"shape", {arch.classes}}});
    return layers;
}

} // namespace

void save_checkpoint(const ModelParams& params, const std::string& stem_or_path) {
    if (!params.all_finite()) throw InvalidArgument("refusing to save non-finite parameters");
    const std::string stem = strip_extension(stem_or_path);
    const Architecture& arch = params.arch();
    const auto bytes = pack_float32(params);
    write_file(stem + ".bin", bytes);
    json meta = {{"format", "devstab.checkpoint"},
                 {"version", kCheckpointVersion},
                 {"dtype", "float32-le"},
                 {"input_size", arch.input_size},
                 {"conv_channels", arch.conv_channels},
                 {"embed_dim", arch.embed_dim},
                 {"classes", arch.classes},
                 {"parameter_count", params.size()},
                 {"layers", layout(arch)},
                 {"md5", to_hex(md5(bytes))}};
    std::ofstream out(stem + ".json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + stem + ".json");
    out << meta.dump(2) << '\n';
}

ModelParams load_checkpoint(const std::string& path) {
    const std::string stem = strip_extension(path);
    std::ifstream in(stem + ".json");
    if (!in) throw IoError("checkpoint sidecar not found: " + stem + ".json");
    json meta;
    try {
        in >> meta;
    } catch (const json::exception& e) {
        throw ParseError(stem + ".json: " + e.what());
    }
    if (meta.value("format", std::string()) != "devstab.checkpoint") throw ParseError(stem + ".json: not a checkpoint");
    const int version = meta.value("version", -1);
    if (version != kCheckpointVersion) {
        throw ParseError("checkpoint version mismatch: found " + std::to_string(version) + ", expected " +
                         std::to_string(kCheckpointVersion));
    }
    Architecture arch;
    try {
        arch.input_size = meta.at("input_size").get<int>();
        arch.conv_channels = meta.at("conv_channels").get<std::vector<int>>();
        arch.embed_dim = meta.at("embed_dim").get<int>();
        arch.classes = meta.at("classes").get<int>();
    } catch (const json::exception& e) {
        throw ParseError(stem + ".json: " + e.what());
    }
    ModelParams params(arch);
    const auto bytes = read_file(stem + ".bin");
    if (bytes.size() != params.size() * 4 || meta.value("parameter_count", std::size_t{0}) != params.size()) {
        throw ParseError("checkpoint/architecture mismatch: " + stem + ".bin holds " + std::to_string(bytes.size() / 4) +
                         " values, layout needs " + std::to_string(params.size()));
    }
    if (meta.contains("md5") && meta["md5"] != to_hex(md5(bytes))) {
        throw ParseError("checkpoint " + stem + ".bin does not match the digest in its sidecar");
    }
    auto v = params.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[4 * i + b]} << (8 * b);
        v[i] = std::bit_cast<float>(bits);
    }
    return params;
}

ModelParams round_to_checkpoint_precision(const ModelParams& params) {
    ModelParams out = params;
    for (double& v : out.values()) v = static_cast<float>(v);
    return out;
}

std::string checkpoint_digest(const ModelParams& params) {
    return to_hex(md5(pack_float32(params)));
}

} // namespace devstab
