#include "devstab/error.hpp"
#include "devstab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace devstab {

bool is_correct(const PredictionRecord& record, int k) {
    if (k < 1 || static_cast<std::size_t>(k) > record.ranked.size()) {
        throw InvalidArgument("is_correct: k=" + std::to_string(k) + " outside 1.." +
                              std::to_string(record.ranked.size()) + " for " + record.image_id + "@" +
                              record.environment_id);
    }
    for (int i = 0; i < k; ++i) {
        const int c = record.ranked[i].class_index;
        if (std::find(record.accepted_labels.begin(), record.accepted_labels.end(), c) != record.accepted_labels.end()) {
            return true;
        }
    }
    return false;
}

void Histogram::add(double value) {
    const int bin = std::clamp(static_cast<int>(std::floor(value * kBins)), 0, kBins - 1);
    ++counts[bin];
}

std::size_t Histogram::total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
}

double InstabilityReport::pairwise_at(const std::string& a, const std::string& b) const {
    if (a == b) return 0.0;
    const auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    const auto it = pairwise.find(key);
    if (it == pairwise.end()) throw InvalidArgument("no pairwise entry for " + a + " / " + b);
    return it->second;
}

namespace {

/// image_id -> env_id -> record, validated for duplicates.
using Grouped = std::map<std::string, std::map<std::string, const PredictionRecord*>>;

Grouped group_records(const std::vector<PredictionRecord>& records) {
    Grouped g;
    for (const auto& r : records) {
        if (r.accepted_labels.empty()) throw InvalidArgument("record " + r.image_id + " has no accepted labels");
        if (!g[r.image_id].emplace(r.environment_id, &r).second) {
            throw InvalidArgument("duplicate record for image " + r.image_id + " in environment " + r.environment_id);
        }
    }
    return g;
}

struct ImageVerdict {
    bool any_correct = false;
    bool any_incorrect = false;
    bool unstable() const { return any_correct && any_incorrect; }
};

ImageVerdict judge(const std::map<std::string, const PredictionRecord*>& envs, int k) {
    ImageVerdict v;
    for (const auto& [env, rec] : envs) {
        (is_correct(*rec, k) ? v.any_correct : v.any_incorrect) = true;
    }
    return v;
}

void require_coverage(const Grouped& g) {
    for (const auto& [image, envs] : g) {
        if (envs.size() < 2) {
            throw InvalidArgument("image " + image + " has records from " + std::to_string(envs.size()) +
                                  " environment(s); instability needs at least 2");
        }
    }
}

std::set<std::string> environments(const std::vector<PredictionRecord>& records) {
    std::set<std::string> envs;
    for (const auto& r : records) envs.insert(r.environment_id);
    return envs;
}

double pairwise_from_groups(const Grouped& g, const std::string& a, const std::string& b, int k) {
    if (a == b) return 0.0;
    std::size_t images = 0, unstable = 0;
    for (const auto& [image, envs] : g) {
        const auto ia = envs.find(a);
        const auto ib = envs.find(b);
        if (ia == envs.end() || ib == envs.end()) continue;
        ++images;
        if (is_correct(*ia->second, k) != is_correct(*ib->second, k)) ++unstable;
    }
    return images == 0 ? 0.0 : static_cast<double>(unstable) / images;
}

} // namespace

InstabilityReport compute_instability(const std::vector<PredictionRecord>& records, int k) {
    if (k < 1) throw InvalidArgument("compute_instability: k must be >= 1");
    const Grouped g = group_records(records);
    require_coverage(g);
    const auto envs = environments(records);

    InstabilityReport rep;
    rep.k = k;
    rep.image_count = g.size();
    rep.environment_count = envs.size();

    std::map<std::string, std::pair<std::size_t, std::size_t>> env_counts; // correct, total
    for (const auto& [image, per_env] : g) {
        const ImageVerdict v = judge(per_env, k);
        const bool unstable = v.unstable();
        if (unstable) ++rep.unstable_count;
        else if (v.any_correct) ++rep.all_correct_count;
        else ++rep.all_incorrect_count;

        const int cls = per_env.begin()->second->accepted_labels.front();
        auto& c = rep.per_class[cls];
        ++c.images;
        if (unstable) ++c.unstable;

        for (const auto& [env, rec] : per_env) {
            const bool ok = is_correct(*rec, k);
            auto& ec = env_counts[env];
            ec.first += ok ? 1 : 0;
            ++ec.second;
            Histogram& h = unstable ? (ok ? rep.unstable_correct : rep.unstable_incorrect)
                                    : (ok ? rep.stable_correct : rep.stable_incorrect);
            h.add(rec->ranked.front().confidence);
        }
    }
    rep.overall_instability = rep.image_count == 0 ? 0.0 : static_cast<double>(rep.unstable_count) / rep.image_count;
    for (const auto& [env, c] : env_counts) rep.per_env_accuracy[env] = static_cast<double>(c.first) / c.second;
    for (auto a = envs.begin(); a != envs.end(); ++a) {
        for (auto b = std::next(a); b != envs.end(); ++b) rep.pairwise[{*a, *b}] = pairwise_from_groups(g, *a, *b, k);
    }
    return rep;
}

double pairwise_instability(const std::vector<PredictionRecord>& records, const std::string& env_a,
                            const std::string& env_b, int k) {
    const auto envs = environments(records);
    for (const auto* e : {&env_a, &env_b}) {
        if (!envs.contains(*e)) throw InvalidArgument("unknown environment '" + *e + "'");
    }
    return pairwise_from_groups(group_records(records), env_a, env_b, k);
}

double compute_accuracy(const std::vector<PredictionRecord>& records, const std::string& environment_id, int k) {
    std::size_t total = 0, correct = 0;
    for (const auto& r : records) {
        if (r.environment_id != environment_id) continue;
        ++total;
        if (is_correct(r, k)) ++correct;
    }
    if (total == 0) throw InvalidArgument("unknown environment '" + environment_id + "'");
    return static_cast<double>(correct) / total;
}

ConfidenceSplit confidence_split(const std::vector<PredictionRecord>& records, int k) {
    const Grouped g = group_records(records);
    require_coverage(g);
    ConfidenceSplit out;
    for (const auto& [image, per_env] : g) {
        const bool unstable = judge(per_env, k).unstable();
        for (const auto& [env, rec] : per_env) {
            const bool ok = is_correct(*rec, k);
            auto& bucket = unstable ? (ok ? out.unstable_correct : out.unstable_incorrect)
                                    : (ok ? out.stable_correct : out.stable_incorrect);
            bucket.push_back(rec->ranked.front().confidence);
        }
    }
    return out;
}

} // namespace devstab
