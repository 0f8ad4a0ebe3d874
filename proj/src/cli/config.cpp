#include "devstab/config.hpp"

#include "devstab/error.hpp"
#include "devstab/manifest.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace devstab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ParseError(where + ": unknown key \"" + key + "\"");
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("field \"") + key + "\": " + e.what());
    }
}

const json& require_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw ParseError(where + " must be an object");
    return j;
}

std::string resolve_path(const std::string& p, const std::string& base_dir) {
    if (p.empty()) return p;
    const fs::path path(p);
    if (path.is_absolute()) return path.lexically_normal().string();
    return (fs::path(base_dir) / path).lexically_normal().string();
}

Transform transform_from_json(const json& j) {
    require_object(j, "transform");
    const std::string type = get_or<std::string>(j, "type", "");
    if (type == "gaussian") {
        reject_unknown(j, {"type", "sigma2"}, "gaussian transform");
        return GaussianNoise{get_or(j, "sigma2", 0.0)};
    }
    if (type == "distort") {
        reject_unknown(j, {"type", "hue_delta", "contrast", "brightness", "saturation", "jpeg_quality"},
                       "distort transform");
        Distort d;
        d.hue_delta = get_or(j, "hue_delta", 0.0);
        d.contrast = get_or(j, "contrast", 1.0);
        d.brightness = get_or(j, "brightness", 0.0);
        d.saturation = get_or(j, "saturation", 1.0);
        if (j.contains("jpeg_quality") && !j.at("jpeg_quality").is_null()) d.jpeg_quality = get_or(j, "jpeg_quality", 0);
        return d;
    }
    if (type == "jpeg") {
        reject_unknown(j, {"type", "quality"}, "jpeg transform");
        return JpegRoundtrip{get_or(j, "quality", 85)};
    }
    if (type == "png") {
        reject_unknown(j, {"type"}, "png transform");
        return PngRoundtrip{};
    }
    if (type == "isp") {
        reject_unknown(j, {"type", "preset", "wb_gains", "ccm", "gamma", "denoise_sigma", "sharpen_amount", "raw_gamma"},
                       "isp transform");
        IspPipeline isp;
        const std::string preset = get_or<std::string>(j, "preset", "identity");
        if (preset == "isp_a") isp.config = isp_preset_a();
        else if (preset == "isp_b") isp.config = isp_preset_b();
        else if (preset != "identity") throw ParseError("unknown isp preset \"" + preset + "\"");
        if (j.contains("wb_gains")) {
            const auto g = get_or<std::vector<double>>(j, "wb_gains", {});
            if (g.size() != 3) throw ParseError("wb_gains needs 3 values");
            std::copy(g.begin(), g.end(), isp.config.wb_gains.begin());
        }
        if (j.contains("ccm")) {
            const auto m = get_or<std::vector<double>>(j, "ccm", {});
            if (m.size() != 9) throw ParseError("ccm needs 9 values");
            std::copy(m.begin(), m.end(), isp.config.ccm.begin());
        }
        isp.config.gamma = get_or(j, "gamma", isp.config.gamma);
        isp.config.denoise_sigma = get_or(j, "denoise_sigma", isp.config.denoise_sigma);
        isp.config.sharpen_amount = get_or(j, "sharpen_amount", isp.config.sharpen_amount);
        isp.raw_gamma = get_or(j, "raw_gamma", 1.0);
        return isp;
    }
    if (type == "resize") {
        reject_unknown(j, {"type", "height", "width"}, "resize transform");
        return Resize{get_or(j, "height", 32), get_or(j, "width", 32)};
    }
    throw ParseError("unknown transform type \"" + type + "\"");
}

json transform_to_json(const Transform& t) {
    return std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, GaussianNoise>) {
                return {{"type", "gaussian"}, {"sigma2", v.sigma2}};
            } else if constexpr (std::is_same_v<T, Distort>) {
                json j{{"type", "distort"}, {"hue_delta", v.hue_delta}, {"contrast", v.contrast},
                       {"brightness", v.brightness}, {"saturation", v.saturation}};
                j["jpeg_quality"] = v.jpeg_quality ? json(*v.jpeg_quality) : json(nullptr);
                return j;
            } else if constexpr (std::is_same_v<T, JpegRoundtrip>) {
                return {{"type", "jpeg"}, {"quality", v.quality}};
            } else if constexpr (std::is_same_v<T, PngRoundtrip>) {
                return {{"type", "png"}};
            } else if constexpr (std::is_same_v<T, IspPipeline>) {
                return {{"type", "isp"},
                        {"wb_gains", v.config.wb_gains},
                        {"ccm", v.config.ccm},
                        {"gamma", v.config.gamma},
                        {"denoise_sigma", v.config.denoise_sigma},
                        {"sharpen_amount", v.config.sharpen_amount},
                        {"raw_gamma", v.raw_gamma}};
            } else {
                return {{"type", "resize"}, {"height", v.height}, {"width", v.width}};
            }
        },
        t);
}

DistortRanges ranges_from_json(const json& j) {
    require_object(j, "ranges");
    reject_unknown(j, {"hue_max", "contrast", "brightness_max", "saturation", "jpeg", "use_jpeg"}, "distortion ranges");
    DistortRanges r;
    r.hue_max = get_or(j, "hue_max", r.hue_max);
    r.brightness_max = get_or(j, "brightness_max", r.brightness_max);
    auto pair = [&](const char* key, double& lo, double& hi) {
        if (!j.contains(key)) return;
        const auto v = get_or<std::vector<double>>(j, key, {});
        if (v.size() != 2) throw ParseError(std::string(key) + " needs [lo, hi]");
        lo = v[0];
        hi = v[1];
    };
    pair("contrast", r.contrast_lo, r.contrast_hi);
    pair("saturation", r.saturation_lo, r.saturation_hi);
    if (j.contains("jpeg")) {
        const auto v = get_or<std::vector<int>>(j, "jpeg", {});
        if (v.size() != 2) throw ParseError("jpeg needs [lo, hi]");
        r.jpeg_lo = v[0];
        r.jpeg_hi = v[1];
    }
    r.use_jpeg = get_or(j, "use_jpeg", r.use_jpeg);
    return r;
}

json ranges_to_json(const DistortRanges& r) {
    return {{"hue_max", r.hue_max},
            {"contrast", {r.contrast_lo, r.contrast_hi}},
            {"brightness_max", r.brightness_max},
            {"saturation", {r.saturation_lo, r.saturation_hi}},
            {"jpeg", {r.jpeg_lo, r.jpeg_hi}},
            {"use_jpeg", r.use_jpeg}};
}

NoiseConfig noise_from_json(const json& j) {
    NoiseConfig n;
    if (j.is_string()) {
        n.kind = parse_noise_kind(j.get<std::string>());
        return n;
    }
    require_object(j, "noise");
    reject_unknown(j, {"kind", "sigma2", "ranges", "k", "env"}, "noise");
    try {
        n.kind = parse_noise_kind(get_or<std::string>(j, "kind", "none"));
    } catch (const InvalidArgument& e) {
        throw ParseError(e.what());
    }
    n.sigma2 = get_or(j, "sigma2", n.sigma2);
    if (j.contains("ranges")) n.ranges = ranges_from_json(j.at("ranges"));
    n.subsample_k = get_or(j, "k", n.subsample_k);
    n.counterpart_env = get_or<std::string>(j, "env", "");
    return n;
}

json noise_to_json(const NoiseConfig& n) {
    json j{{"kind", to_string(n.kind)}};
    switch (n.kind) {
        case NoiseKind::gaussian: j["sigma2"] = n.sigma2; break;
        case NoiseKind::distortion: j["ranges"] = ranges_to_json(n.ranges); break;
        case NoiseKind::paired: j["env"] = n.counterpart_env; break;
        case NoiseKind::subsample:
            j["env"] = n.counterpart_env;
            j["k"] = n.subsample_k;
            break;
        case NoiseKind::none: break;
    }
    return j;
}

StabilityLoss loss_from_json(const json& j) {
    try {
        return parse_stability_loss(j.get<std::string>());
    } catch (const json::exception&) {
        throw ParseError("loss must be a string");
    } catch (const InvalidArgument& e) {
        throw ParseError(e.what());
    }
}

std::string format_alpha(double a) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", a);
    return buf;
}

/// Fields shared by a single cell and a grid block.
void common_from_json(const json& j, StabilityConfig& c, bool& pinned) {
    c.epochs = get_or(j, "epochs", c.epochs);
    c.batch_size = get_or(j, "batch_size", c.batch_size);
    c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
    c.momentum = get_or(j, "momentum", c.momentum);
    if (j.contains("seed")) {
        c.seed = get_or<std::uint64_t>(j, "seed", 0);
        pinned = true;
    }
}

std::string default_name(const StabilityConfig& c) {
    return to_string(c.noise.kind) + "_" + to_string(c.loss.kind) + "_a" + format_alpha(c.loss.alpha);
}

void stability_from_json(const json& j, ExperimentConfig& config) {
    auto add_cell = [&](const json& cell) {
        require_object(cell, "stability cell");
        reject_unknown(cell, {"name", "loss", "alpha", "noise", "epochs", "batch_size", "learning_rate", "momentum", "seed"},
                       "stability cell");
        StabilityConfig c;
        bool pinned = false;
        if (cell.contains("loss")) c.loss.kind = loss_from_json(cell.at("loss"));
        c.loss.alpha = get_or(cell, "alpha", 0.0);
        if (cell.contains("noise")) c.noise = noise_from_json(cell.at("noise"));
        common_from_json(cell, c, pinned);
        c.name = get_or<std::string>(cell, "name", default_name(c));
        config.stability.push_back(c);
        config.stability_seed_pinned.push_back(pinned);
    };

    if (j.is_null()) return;
    if (j.is_array()) {
        for (const auto& cell : j) add_cell(cell);
        return;
    }
    require_object(j, "stability");
    if (!j.contains("grid")) {
        add_cell(j);
        return;
    }
    reject_unknown(j, {"grid", "epochs", "batch_size", "learning_rate", "momentum", "seed"}, "stability");
    const json& grid = require_object(j.at("grid"), "stability.grid");
    reject_unknown(grid, {"noise", "loss", "alpha"}, "stability.grid");
    StabilityConfig base;
    bool pinned = false;
    common_from_json(j, base, pinned);
    auto list = [&](const char* key) {
        if (!grid.contains(key)) throw ParseError(std::string("stability.grid needs \"") + key + "\"");
        const json& v = grid.at(key);
        if (!v.is_array() || v.empty()) throw ParseError(std::string("stability.grid.") + key + " must be a non-empty array");
        return v;
    };
    const json noises = list("noise"), losses = list("loss"), alphas = list("alpha");
    for (const auto& nj : noises) {
        for (const auto& lj : losses) {
            for (const auto& aj : alphas) {
                StabilityConfig c = base;
                c.noise = noise_from_json(nj);
                c.loss.kind = loss_from_json(lj);
                if (!aj.is_number()) throw ParseError("stability.grid.alpha entries must be numbers");
                c.loss.alpha = aj.get<double>();
                c.name = default_name(c);
                config.stability.push_back(c);
                config.stability_seed_pinned.push_back(pinned);
            }
        }
    }
}

json stability_to_json(const StabilityConfig& c) {
    return {{"name", c.name},
            {"loss", to_string(c.loss.kind)},
            {"alpha", c.loss.alpha},
            {"noise", noise_to_json(c.noise)},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"momentum", c.momentum},
            {"seed", c.seed}};
}

} // namespace

Transform parse_transform_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("transform: ") + e.what());
    }
    return transform_from_json(j);
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config " + path);
    std::ostringstream text;
    text << in.rdbuf();
    auto dir = fs::path(path).parent_path();
    ExperimentConfig config = parse_config(text.str(), dir.empty() ? "." : dir.string());
    config.config_path = path;
    return config;
}

ExperimentConfig parse_config(const std::string& text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    require_object(j, "config");
    reject_unknown(j, {"seed", "train_manifest", "eval_manifest", "environments", "model", "architecture", "pretrain",
                       "stability", "metrics", "output_dir", "jobs"},
                   "config");

    ExperimentConfig config;
    config.seed = get_or<std::uint64_t>(j, "seed", 0);
    config.train_manifest = resolve_path(get_or<std::string>(j, "train_manifest", ""), base_dir);
    config.eval_manifest = resolve_path(get_or<std::string>(j, "eval_manifest", ""), base_dir);
    config.output_dir = resolve_path(get_or<std::string>(j, "output_dir", "out"), base_dir);
    config.jobs = get_or(j, "jobs", 0);
    const std::string model = get_or<std::string>(j, "model", "init");
    config.model = model == "init" ? model : resolve_path(model, base_dir);

    if (j.contains("environments")) {
        const json& envs = j.at("environments");
        if (!envs.is_array()) throw ParseError("environments must be an array");
        for (const auto& e : envs) {
            require_object(e, "environment");
            reject_unknown(e, {"id", "transforms", "seed"}, "environment");
            EnvironmentSpec spec;
            spec.env_id = get_or<std::string>(e, "id", "");
            if (e.contains("transforms")) {
                if (!e.at("transforms").is_array()) throw ParseError("environment transforms must be an array");
                for (const auto& t : e.at("transforms")) {
                    try {
                        spec.transforms.push_back(transform_from_json(t));
                    } catch (const ParseError& err) {
                        throw ParseError("environment \"" + spec.env_id + "\": " + err.what());
                    }
                }
            }
            config.env_seed_pinned.push_back(e.contains("seed"));
            spec.seed = get_or<std::uint64_t>(e, "seed", 0);
            config.environments.push_back(std::move(spec));
        }
    }

    if (j.contains("architecture")) {
        const json& a = require_object(j.at("architecture"), "architecture");
        reject_unknown(a, {"input_size", "conv_channels", "embed_dim", "classes"}, "architecture");
        config.arch.input_size = get_or(a, "input_size", config.arch.input_size);
        config.arch.conv_channels = get_or(a, "conv_channels", config.arch.conv_channels);
        config.arch.embed_dim = get_or(a, "embed_dim", config.arch.embed_dim);
        config.arch.classes = get_or(a, "classes", config.arch.classes);
    }
    // The class count follows the training vocabulary whenever it can be read.
    if (!config.train_manifest.empty() && fs::exists(config.train_manifest)) {
        try {
            const auto manifest = load_manifest(config.train_manifest);
            if (manifest.class_count() > 0) config.arch.classes = manifest.class_count();
        } catch (const Error&) {
            // reported by validate_config
        }
    }

    if (j.contains("pretrain")) {
        const json& p = require_object(j.at("pretrain"), "pretrain");
        reject_unknown(p, {"epochs", "batch_size", "learning_rate", "momentum"}, "pretrain");
        config.pretrain.epochs = get_or(p, "epochs", config.pretrain.epochs);
        config.pretrain.batch_size = get_or(p, "batch_size", config.pretrain.batch_size);
        config.pretrain.learning_rate = get_or(p, "learning_rate", config.pretrain.learning_rate);
        config.pretrain.momentum = get_or(p, "momentum", config.pretrain.momentum);
    }

    if (j.contains("stability")) stability_from_json(j.at("stability"), config);

    if (j.contains("metrics")) {
        const json& m = require_object(j.at("metrics"), "metrics");
        reject_unknown(m, {"k"}, "metrics");
        config.k_values = get_or(m, "k", config.k_values);
    }

    apply_seed(config, config.seed);
    return config;
}

std::uint64_t init_seed(const ExperimentConfig& config) { return derive_key(config.seed, "init"); }

void apply_seed(ExperimentConfig& config, std::uint64_t seed) {
    config.seed = seed;
    config.env_seed_pinned.resize(config.environments.size(), false);
    config.stability_seed_pinned.resize(config.stability.size(), false);
    for (std::size_t i = 0; i < config.environments.size(); ++i) {
        if (!config.env_seed_pinned[i]) config.environments[i].seed = derive_key(seed, "env/" + config.environments[i].env_id);
    }
    // Every cell shares one training seed so the baseline and each cell see the same batch order.
    for (std::size_t i = 0; i < config.stability.size(); ++i) {
        if (!config.stability_seed_pinned[i]) config.stability[i].seed = derive_key(seed, "train");
    }
}

const EnvironmentSpec* ExperimentConfig::find_environment(const std::string& id) const {
    for (const auto& e : environments)
        if (e.env_id == id) return &e;
    return nullptr;
}

std::string ExperimentConfig::resolved_json() const {
    json j;
    j["seed"] = seed;
    j["train_manifest"] = train_manifest;
    j["eval_manifest"] = eval_manifest;
    j["model"] = model;
    j["architecture"] = {{"input_size", arch.input_size},
                         {"conv_channels", arch.conv_channels},
                         {"embed_dim", arch.embed_dim},
                         {"classes", arch.classes}};
    j["pretrain"] = {{"epochs", pretrain.epochs},
                     {"batch_size", pretrain.batch_size},
                     {"learning_rate", pretrain.learning_rate},
                     {"momentum", pretrain.momentum}};
    json envs = json::array();
    for (const auto& e : environments) {
        json t = json::array();
        for (const auto& tr : e.transforms) t.push_back(transform_to_json(tr));
        envs.push_back({{"id", e.env_id}, {"seed", e.seed}, {"transforms", t}});
    }
    j["environments"] = envs;
    json cells = json::array();
    for (const auto& c : stability) cells.push_back(stability_to_json(c));
    j["stability"] = cells;
    j["metrics"] = {{"k", k_values}};
    return j.dump(2) + "\n";
}

std::vector<Violation> validate_config(const ExperimentConfig& config) {
    std::vector<Violation> out;
    auto add = [&](const char* code, std::string msg) { out.push_back({code, std::move(msg)}); };

    auto check_manifest = [&](const std::string& path, const char* role, std::optional<DatasetManifest>& loaded) {
        if (path.empty()) {
            add("E_PATH", std::string(role) + " manifest not set");
            return;
        }
        if (!fs::exists(path)) {
            add("E_PATH", std::string(role) + " manifest not found: " + path);
            return;
        }
        try {
            loaded = load_manifest(path);
        } catch (const Error& e) {
            add("E_MANIFEST", std::string(role) + " manifest " + path + ": " + e.what());
            return;
        }
        for (const auto& entry : loaded->entries) {
            if (!fs::exists(entry.resolved_path)) add("E_PATH", std::string(role) + " image not found: " + entry.resolved_path);
        }
    };
    std::optional<DatasetManifest> train, eval;
    check_manifest(config.train_manifest, "train", train);
    check_manifest(config.eval_manifest, "eval", eval);
    if (train && eval && train->class_vocabulary != eval->class_vocabulary)
        add("E_MANIFEST", "train and eval manifests have different class vocabularies");
    if (train && train->split != Split::train) add("E_MANIFEST", "train manifest declares split \"" + to_string(train->split) + "\"");
    if (eval && eval->split != Split::eval) add("E_MANIFEST", "eval manifest declares split \"" + to_string(eval->split) + "\"");

    std::set<std::string> seen;
    for (const auto& env : config.environments) {
        if (!seen.insert(env.env_id).second) add("E_ENV_DUP", "duplicate environment id \"" + env.env_id + "\"");
        try {
            validate(env);
        } catch (const Error& e) {
            add("E_ENV_PARAM", "environment \"" + env.env_id + "\": " + e.what());
        }
    }
    if (config.environments.size() < 2)
        add("E_ENV_PARAM", "at least 2 environments are needed to measure instability, found " +
                               std::to_string(config.environments.size()));

    if (config.k_values.empty()) add("E_K", "no k values configured");
    for (int k : config.k_values)
        if (k < 1) add("E_K", "k must be >= 1, found " + std::to_string(k));

    for (const auto& c : config.stability) {
        try {
            validate(c);
        } catch (const Error& e) {
            add("E_STABILITY", "stability cell \"" + c.name + "\": " + e.what());
        }
        if ((c.noise.kind == NoiseKind::paired || c.noise.kind == NoiseKind::subsample) &&
            !config.find_environment(c.noise.counterpart_env))
            add("E_REF", "stability cell \"" + c.name + "\" references unknown environment \"" + c.noise.counterpart_env + "\"");
    }
    std::set<std::string> names;
    for (const auto& c : config.stability)
        if (!names.insert(c.name).second || c.name == "no_noise")
            add("E_STABILITY", "stability cell name \"" + c.name + "\" is not unique");

    try {
        config.arch.validate();
    } catch (const Error& e) {
        add("E_MODEL", e.what());
    }
    if (train && train->class_count() != config.arch.classes)
        add("E_MODEL", "architecture has " + std::to_string(config.arch.classes) + " classes, manifest has " +
                           std::to_string(train->class_count()));
    if (config.model != "init") {
        fs::path meta(config.model);
        if (meta.extension() == ".bin" || meta.extension() == ".json") meta.replace_extension();
        meta += ".json";
        if (!fs::exists(meta)) {
            add("E_PATH", "checkpoint not found: " + meta.string());
        } else {
            try {
                const auto params = load_checkpoint(config.model);
                if (!(params.arch() == config.arch)) add("E_MODEL", "checkpoint architecture does not match the config");
            } catch (const Error& e) {
                add("E_MODEL", std::string("checkpoint ") + config.model + ": " + e.what());
            }
        }
    }
    if (config.pretrain.epochs < 0 || config.pretrain.batch_size < 1 || !(config.pretrain.learning_rate > 0))
        add("E_STABILITY", "pretrain settings out of range");
    return out;
}

} // namespace devstab
