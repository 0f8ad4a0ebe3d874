#pragma once

#include "devstab/envsim.hpp"
#include "devstab/losses.hpp"
#include "devstab/manifest.hpp"
#include "devstab/model.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace devstab {

enum class NoiseKind { none, gaussian, distortion, paired, subsample };

struct NoiseConfig {
    NoiseKind kind = NoiseKind::none;
    double sigma2 = 0.04;           ///< gaussian
    DistortRanges ranges;           ///< distortion
    int subsample_k = 10;           ///< subsample: counterparts kept per class
    std::string counterpart_env;    ///< paired / subsample: environment that renders the counterparts
};

struct StabilityConfig {
    std::string name;
    LossConfig loss;
    NoiseConfig noise;
    int epochs = 5;
    int batch_size = 32;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 0;
};

/// Throws InvalidArgument on negative alpha / sigma2, k < 1, non-positive batch size, etc.
void validate(const StabilityConfig& config);
std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& s);

// ---------------------------------------------------------------------------
// Counterpart sources: where x' comes from.

/// Fresh gaussian noise or a fresh random distortion per presentation.
struct GeneratedNoise {
    NoiseKind kind = NoiseKind::gaussian; ///< gaussian or distortion
    double sigma2 = 0.0;
    DistortRanges ranges;
};

/// One registered counterpart per training image (the "same object, other device" photo).
struct PairedCounterparts {
    std::map<std::string, LabeledImage> by_image;
};

/// At most k counterparts per class; each presentation draws uniformly with replacement.
struct SubsamplePool {
    std::map<int, std::vector<ImageTensor>> by_class;
    int k = 1;
};

using CounterpartSource = std::variant<GeneratedNoise, PairedCounterparts, SubsamplePool>;

/// Paired: every image has exactly one same-class counterpart.
/// SubsamplePool: every training class has a non-empty pool of size <= k.
void validate_source(const CounterpartSource& source, const std::vector<LabeledImage>& train_set);

ImageTensor make_counterpart(const LabeledImage& x, const CounterpartSource& source, CounterRng& rng);

PairedCounterparts build_paired(const std::vector<LabeledImage>& train_set, const EnvironmentSpec& device);
/// Renders the first k images of each class (dataset order) through `device`.
SubsamplePool build_subsample_pool(const std::vector<LabeledImage>& train_set, const EnvironmentSpec& device, int k);

/// Source for a generated-noise config; nullopt for none/paired/subsample.
std::optional<CounterpartSource> generated_source(const NoiseConfig& noise);

// ---------------------------------------------------------------------------
// Losses

/// L0(x) + alpha * Ls(x, x'), L0 on the clean image only.
double combined_loss(const ImageTensor& x, const ImageTensor& x_prime, int target, const ModelParams& params,
                     const LossConfig& config);

// ---------------------------------------------------------------------------
// Training

struct EpochStats {
    int epoch = 0;
    double mean_l0 = 0.0;
    double mean_ls = 0.0;
    double mean_l = 0.0;
    std::optional<double> eval_l0; ///< mean clean cross-entropy on the eval set, when one is given
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochStats> trace;
};

/// Mini-batch SGD with momentum on L0 + alpha * Ls. Shuffling and counterpart
/// sampling draw from separate streams derived from config.seed, so an alpha = 0
/// run follows the same trajectory as a run without any counterpart source.
/// Throws Error naming the batch index when the loss becomes non-finite.
TrainResult stability_train(const std::vector<LabeledImage>& train_set, const std::vector<LabeledImage>& eval_set,
                            const std::optional<CounterpartSource>& source, const StabilityConfig& config,
                            const ModelParams& base_params);

/// CSV: epoch,mean_L0,mean_Ls,mean_L
std::string trace_csv(const std::vector<EpochStats>& trace);

// ---------------------------------------------------------------------------
// Grid search

struct EvalOutcome {
    double instability = 0.0;
    double accuracy = 0.0;
};

struct GridResult {
    StabilityConfig config;
    EvalOutcome outcome;
    std::size_t index = 0; ///< position in the input list
};

/// Evaluates every config (in parallel when `parallel`), ranked ascending by
/// instability, then descending accuracy, then input order.
std::vector<GridResult> grid_search(const std::vector<StabilityConfig>& configs,
                                    const std::function<EvalOutcome(const StabilityConfig&)>& eval,
                                    bool parallel = false);

} // namespace devstab
