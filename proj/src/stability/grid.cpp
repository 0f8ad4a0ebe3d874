#include "devstab/error.hpp"
#include "devstab/stability.hpp"

#include <algorithm>

namespace devstab {

std::vector<GridResult> grid_search(const std::vector<StabilityConfig>& configs,
                                    const std::function<EvalOutcome(const StabilityConfig&)>& eval, bool parallel) {
    if (configs.empty()) throw InvalidArgument("grid_search: empty config list");
    std::vector<GridResult> results(configs.size());
    std::vector<std::string> errors(configs.size());
    const auto n = static_cast<std::int64_t>(configs.size());
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            results[i] = GridResult{configs[i], eval(configs[i]), static_cast<std::size_t>(i)};
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i].empty()) throw Error("grid_search: config " + std::to_string(i) + ": " + errors[i]);
    }
    std::stable_sort(results.begin(), results.end(), [](const GridResult& a, const GridResult& b) {
        if (a.outcome.instability != b.outcome.instability) return a.outcome.instability < b.outcome.instability;
        if (a.outcome.accuracy != b.outcome.accuracy) return a.outcome.accuracy > b.outcome.accuracy;
        return a.index < b.index;
    });
    return results;
}

} // namespace devstab
