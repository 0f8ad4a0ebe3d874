#include "devstab/losses.hpp"

#include "devstab/error.hpp"

#include <algorithm>
#include <cmath>

namespace devstab {

namespace {
void require_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw InvalidArgument(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                              std::to_string(b) + ")");
    }
}
} // namespace

double kl_stability_loss(std::span<const double> p, std::span<const double> p_prime) {
    require_same_length(p.size(), p_prime.size(), "kl_stability_loss");
    double sum = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        sum += p[j] * (std::log(std::max(p[j], kLogFloor)) - std::log(std::max(p_prime[j], kLogFloor)));
    }
    // Rounding can leave a -1e-17 residue for identical inputs.
    return std::max(sum, 0.0);
}

void kl_stability_grad(std::span<const double> p, std::span<const double> p_prime, std::span<double> d_p,
                       std::span<double> d_p_prime) {
    require_same_length(p.size(), p_prime.size(), "kl_stability_grad");
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double lp = std::log(std::max(p[j], kLogFloor));
        const double lq = std::log(std::max(p_prime[j], kLogFloor));
        d_p[j] = lp - lq + (p[j] >= kLogFloor ? 1.0 : 0.0);
        d_p_prime[j] = p_prime[j] >= kLogFloor ? -p[j] / p_prime[j] : 0.0;
    }
}

double embedding_stability_loss(std::span<const double> f, std::span<const double> f_prime) {
    require_same_length(f.size(), f_prime.size(), "embedding_stability_loss");
    double sq = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double d = f[i] - f_prime[i];
        sq += d * d;
    }
    return std::sqrt(sq);
}

void embedding_stability_grad(std::span<const double> f, std::span<const double> f_prime, std::span<double> d_f) {
    const double norm = embedding_stability_loss(f, f_prime);
    for (std::size_t i = 0; i < f.size(); ++i) d_f[i] = norm > 0.0 ? (f[i] - f_prime[i]) / norm : 0.0;
}

std::string to_string(StabilityLoss kind) {
    return kind == StabilityLoss::relative_entropy ? "relative_entropy" : "embedding_distance";
}

StabilityLoss parse_stability_loss(const std::string& s) {
    if (s == "relative_entropy" || s == "kl") return StabilityLoss::relative_entropy;
    if (s == "embedding_distance" || s == "embedding") return StabilityLoss::embedding_distance;
    throw ParseError("unknown stability loss '" + s + "' (expected relative_entropy or embedding_distance)");
}

} // namespace devstab
