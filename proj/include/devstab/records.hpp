#pragma once

#include <string>
#include <utility>
#include <vector>

namespace devstab {

struct RankedClass {
    int class_index = 0;
    float confidence = 0.0f;

    friend bool operator==(const RankedClass&, const RankedClass&) = default;
};

/// One model prediction for one image under one environment.
struct PredictionRecord {
    std::string image_id;
    std::string environment_id;
    std::vector<RankedClass> ranked;   ///< descending confidence
    std::vector<int> accepted_labels;  ///< first entry drives per-class attribution

    friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

inline constexpr int kRecordsSchemaVersion = 1;

/// JSON lines with a schema header; confidences are written with 9 significant
/// digits, which round-trips a float exactly.
std::size_t save_records(const std::vector<PredictionRecord>& records, const std::string& path);
std::vector<PredictionRecord> load_records(const std::string& path);

std::string serialize_records(const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> parse_records(const std::string& text);

/// Orders by (image_id, environment_id), the canonical on-disk order.
void sort_records(std::vector<PredictionRecord>& records);

} // namespace devstab
