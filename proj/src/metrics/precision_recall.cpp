#include "devstab/error.hpp"
#include "devstab/metrics.hpp"

#include <algorithm>

namespace devstab {

namespace {

struct Scored {
    double score;
    bool positive;
};

float score_for(const PredictionRecord& r, int c) {
    for (const auto& rc : r.ranked) {
        if (rc.class_index == c) return rc.confidence;
    }
    return 0.0f;
}

bool accepts(const PredictionRecord& r, int c) {
    return std::find(r.accepted_labels.begin(), r.accepted_labels.end(), c) != r.accepted_labels.end();
}

std::vector<PrPoint> sweep(std::vector<Scored> items, std::size_t positives) {
    std::vector<Scored> scored;
    for (const auto& s : items) {
        if (s.score > 0.0) scored.push_back(s);
    }
    if (scored.empty()) return {PrPoint{0.0, 1.0}};
    std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
    std::vector<PrPoint> curve;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < scored.size(); ++i) {
        (scored[i].positive ? tp : fp) += 1;
        const bool threshold_ends = i + 1 == scored.size() || scored[i + 1].score != scored[i].score;
        if (!threshold_ends) continue;
        const double recall = positives == 0 ? 0.0 : static_cast<double>(tp) / positives;
        curve.push_back(PrPoint{recall, static_cast<double>(tp) / (tp + fp)});
    }
    return curve;
}

} // namespace

std::vector<PrPoint> precision_recall(const std::vector<PredictionRecord>& records, const std::string& environment_id,
                                      int class_index, int class_count) {
    if (class_index < 0 || class_index >= class_count) {
        throw InvalidArgument("unknown class " + std::to_string(class_index));
    }
    std::vector<Scored> items;
    std::size_t positives = 0;
    for (const auto& r : records) {
        if (r.environment_id != environment_id) continue;
        const bool pos = accepts(r, class_index);
        positives += pos ? 1 : 0;
        items.push_back({score_for(r, class_index), pos});
    }
    return sweep(std::move(items), positives);
}

std::vector<PrPoint> precision_recall_micro(const std::vector<PredictionRecord>& records,
                                            const std::string& environment_id, int class_count) {
    std::vector<Scored> items;
    std::size_t positives = 0;
    for (const auto& r : records) {
        if (r.environment_id != environment_id) continue;
        for (int c = 0; c < class_count; ++c) {
            const bool pos = accepts(r, c);
            positives += pos ? 1 : 0;
            items.push_back({score_for(r, c), pos});
        }
    }
    return sweep(std::move(items), positives);
}

double average_precision(const std::vector<PrPoint>& curve) {
    double ap = 0.0;
    double prev = 0.0;
    for (const auto& p : curve) {
        ap += (p.recall - prev) * p.precision;
        prev = p.recall;
    }
    return ap;
}

} // namespace devstab
