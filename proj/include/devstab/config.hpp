#pragma once

#include "devstab/envsim.hpp"
#include "devstab/model.hpp"
#include "devstab/stability.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace devstab {

/// Plain cross-entropy training applied to an "init" model before anything else.
struct PretrainConfig {
    int epochs = 0;
    int batch_size = 32;
    double learning_rate = 0.02;
    double momentum = 0.9;
};

struct ExperimentConfig {
    std::string config_path;
    std::string train_manifest;
    std::string eval_manifest;
    std::vector<EnvironmentSpec> environments;
    std::string model = "init"; ///< "init" or a checkpoint path
    Architecture arch;          ///< classes filled from the manifest at load time when possible
    PretrainConfig pretrain;
    std::vector<StabilityConfig> stability; ///< grid cells; empty means no training configured
    std::vector<int> k_values{1};
    std::string output_dir = "out";
    std::uint64_t seed = 0;
    int jobs = 0;

    /// Seeds written explicitly in the file survive apply_seed.
    std::vector<bool> env_seed_pinned;
    std::vector<bool> stability_seed_pinned;

    /// Canonical JSON of the config after defaults and seed overrides.
    std::string resolved_json() const;

    const EnvironmentSpec* find_environment(const std::string& id) const;
};

/// Parses the JSON config. Relative paths are resolved against the config file's
/// directory. Throws ParseError on malformed content.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = ".");

/// Model initialisation / pretraining key derived from the global seed.
std::uint64_t init_seed(const ExperimentConfig& config);

/// Re-derives every seed that the file did not pin explicitly.
void apply_seed(ExperimentConfig& config, std::uint64_t seed);

struct Violation {
    std::string code;    ///< E_PATH, E_ENV_DUP, E_ENV_PARAM, E_K, E_MANIFEST, E_STABILITY, E_REF, E_MODEL
    std::string message;
};

std::vector<Violation> validate_config(const ExperimentConfig& config);

Transform parse_transform_json(const std::string& json_text);

} // namespace devstab
