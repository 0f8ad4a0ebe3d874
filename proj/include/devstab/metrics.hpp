#pragma once

#include "devstab/records.hpp"

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace devstab {

/// True iff one of the first k ranked classes is accepted.
bool is_correct(const PredictionRecord& record, int k);

struct Histogram {
    static constexpr int kBins = 10;
    std::array<std::size_t, kBins> counts{};

    void add(double value);
    std::size_t total() const;
};

struct ClassInstability {
    std::size_t images = 0;
    std::size_t unstable = 0;
    double fraction() const { return images == 0 ? 0.0 : static_cast<double>(unstable) / images; }
};

struct ConfidenceSplit {
    std::vector<double> stable_correct;
    std::vector<double> stable_incorrect;
    std::vector<double> unstable_correct;
    std::vector<double> unstable_incorrect;
};

struct InstabilityReport {
    int k = 1;
    std::size_t image_count = 0;
    std::size_t environment_count = 0;
    std::size_t unstable_count = 0;
    std::size_t all_correct_count = 0;
    std::size_t all_incorrect_count = 0;
    double overall_instability = 0.0;

    std::map<int, ClassInstability> per_class;
    std::map<std::string, double> per_env_accuracy;
    /// Unordered pairs stored once with first < second.
    std::map<std::pair<std::string, std::string>, double> pairwise;

    Histogram stable_correct, stable_incorrect, unstable_correct, unstable_incorrect;

    /// Symmetric lookup; 0 for a == b.
    double pairwise_at(const std::string& a, const std::string& b) const;
};

/// An image is unstable when at least one environment is correct at top-k and
/// at least one is not. The denominator is every image (each must have records
/// from >= 2 environments). Throws InvalidArgument for under-covered images and
/// duplicate (image, environment) pairs.
InstabilityReport compute_instability(const std::vector<PredictionRecord>& records, int k);

double pairwise_instability(const std::vector<PredictionRecord>& records, const std::string& env_a,
                            const std::string& env_b, int k);

double compute_accuracy(const std::vector<PredictionRecord>& records, const std::string& environment_id, int k);

/// Each record's top-1 confidence, bucketed by its own top-k correctness and its image's stability.
ConfidenceSplit confidence_split(const std::vector<PredictionRecord>& records, int k);

struct PrPoint {
    double recall = 0.0;
    double precision = 1.0;
};

/// One-vs-rest curve for `class_index` in one environment. A record's score is
/// the confidence it assigns to the class (0 when absent from its ranking); the
/// threshold sweeps every distinct positive score. With no positive-scored
/// record the curve is the single point (0, 1). Points ascend by recall.
std::vector<PrPoint> precision_recall(const std::vector<PredictionRecord>& records,
                                      const std::string& environment_id, int class_index, int class_count);

/// Micro-average over all classes: every (record, class) score pooled into one sweep.
std::vector<PrPoint> precision_recall_micro(const std::vector<PredictionRecord>& records,
                                            const std::string& environment_id, int class_count);

/// Step-wise area: sum (r_i - r_{i-1}) * p_i over recall-sorted points.
double average_precision(const std::vector<PrPoint>& curve);

/// Writes overall.csv, per_class.csv, per_env_accuracy.csv, pairwise.csv,
/// confidence.csv and three SVG plots. Byte-deterministic; an empty report yields
/// header-only CSVs. Returns the paths written.
std::vector<std::string> render_report(const InstabilityReport& report, const std::string& out_dir,
                                       const std::vector<std::string>& class_names = {});

} // namespace devstab
