#pragma once

#include "devstab/config.hpp"
#include "devstab/metrics.hpp"
#include "devstab/records.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace devstab {

struct RunOptions {
    std::string out_dir;                ///< overrides config.output_dir when set
    int jobs = 0;                       ///< OpenMP threads; 0 keeps the runtime default
    std::vector<int> k_values;          ///< overrides config k list when non-empty
    std::vector<std::string> env_ids;   ///< restricts to these environments when non-empty
    std::string checkpoint;             ///< infer: overrides config.model
    std::string records;                ///< report: input records file
    std::string model_name = "model";   ///< infer/report: output naming
};

std::string output_dir(const ExperimentConfig& config, const RunOptions& options);

struct PerturbIndexEntry {
    std::string image_id;
    std::string env_id;
    std::uint64_t seed = 0;
    std::string path; ///< relative to the variants directory
    std::string fingerprint;
};

/// Writes <out>/variants/<env>/<image>.png plus <out>/variants/index.jsonl.
std::vector<PerturbIndexEntry> cmd_perturb(const ExperimentConfig& config, const RunOptions& options);
std::vector<PerturbIndexEntry> load_perturb_index(const std::string& path);

/// One record per (eval image, environment) from one fixed parameter set, read
/// from materialised variants when the index exists and rendered in memory
/// otherwise; both paths quantise to 8 bits and agree exactly.
/// Writes <out>/records/<model_name>.jsonl and returns its path.
std::string cmd_infer(const ExperimentConfig& config, const RunOptions& options);
std::vector<PredictionRecord> infer_records(const ExperimentConfig& config, const ModelParams& params,
                                            const std::vector<std::string>& env_ids);

struct TrainedModel {
    std::string name;
    std::string checkpoint; ///< stem
    std::string digest;
};

/// Baseline ("no_noise") fine-tune plus one run per stability cell.
std::vector<TrainedModel> cmd_train(const ExperimentConfig& config, const RunOptions& options);

/// Computes a report per k under <out>/report/<model_name>/top<k>/ and prints
/// "top<k> instability: XX.XX%" per k to `out`.
std::vector<InstabilityReport> cmd_report(const ExperimentConfig& config, const RunOptions& options,
                                          std::ostream& out);

/// Exit code semantics: 0 valid, 1 violations found.
int cmd_validate(const ExperimentConfig& config, std::ostream& out);

/// validate -> perturb -> [train] -> infer -> report.
int cmd_run(const ExperimentConfig& config, const RunOptions& options, std::ostream& out);

/// Resolves the base model: loads the checkpoint, or initialises and pretrains.
ModelParams resolve_model(const ExperimentConfig& config, const std::string& checkpoint_override = "");

std::string format_percent(double fraction);

} // namespace devstab
