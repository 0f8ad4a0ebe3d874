#pragma once

#include <span>
#include <string>
#include <vector>

namespace devstab {

/// Floor applied inside every logarithm.
inline constexpr double kLogFloor = 1e-12;

enum class StabilityLoss { relative_entropy, embedding_distance };

/// Weighting of the stability term in L = L0 + alpha * Ls.
struct LossConfig {
    StabilityLoss kind = StabilityLoss::relative_entropy;
    double alpha = 0.0;
};

/// KL(p || p') = sum_j p_j (log p_j - log p'_j), both arguments floored at kLogFloor inside the logs.
double kl_stability_loss(std::span<const double> p, std::span<const double> p_prime);

/// Partial derivatives of kl_stability_loss with respect to p and p'.
void kl_stability_grad(std::span<const double> p, std::span<const double> p_prime, std::span<double> d_p,
                       std::span<double> d_p_prime);

/// ||f - f'||_2.
double embedding_stability_loss(std::span<const double> f, std::span<const double> f_prime);

/// d/df of ||f - f'||; the derivative with respect to f' is the negation. Zero at f == f'.
void embedding_stability_grad(std::span<const double> f, std::span<const double> f_prime, std::span<double> d_f);

std::string to_string(StabilityLoss kind);
StabilityLoss parse_stability_loss(const std::string& s);

} // namespace devstab
