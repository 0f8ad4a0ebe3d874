#include "devstab/kernels.hpp"

#include "devstab/rng.hpp"

#include <algorithm>
#include <vector>

namespace devstab::kernels {

namespace serial {
double dense_dot(const double* a, const double* b, int n);
}

namespace omp {

void conv3x3_forward(const ConvShape& s, std::span<const double> padded_in, std::span<const double> weights,
                     std::span<const double> bias, std::span<double> out) {
    const int pw = s.width + 2;
#pragma omp parallel for schedule(static)
    for (int o = 0; o < s.out_channels; ++o) {
        double* plane = out.data() + static_cast<std::size_t>(o) * s.plane();
        std::fill(plane, plane + s.plane(), bias[o]);
        for (int i = 0; i < s.in_channels; ++i) {
            const double* in = padded_in.data() + static_cast<std::size_t>(i) * s.padded_plane();
            const double* w = weights.data() + (static_cast<std::size_t>(o) * s.in_channels + i) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const double wk = w[ky * 3 + kx];
                    for (int y = 0; y < s.height; ++y) {
                        const double* src = in + (y + ky) * pw + kx;
                        double* dst = plane + y * s.width;
                        for (int x = 0; x < s.width; ++x) dst[x] += wk * src[x];
                    }
                }
            }
        }
    }
}

void conv3x3_backward(const ConvShape& s, std::span<const double> padded_in, std::span<const double> weights,
                      std::span<const double> d_out, std::span<double> d_weights, std::span<double> d_bias,
                      std::span<double> d_padded_in) {
    const int pw = s.width + 2;
#pragma omp parallel
    {
        std::vector<double> row(s.width);
#pragma omp for schedule(static)
        for (int o = 0; o < s.out_channels; ++o) {
            const double* g = d_out.data() + static_cast<std::size_t>(o) * s.plane();
            double db = 0.0;
            for (int p = 0; p < s.plane(); ++p) db += g[p];
            d_bias[o] += db;
            for (int i = 0; i < s.in_channels; ++i) {
                const double* in = padded_in.data() + static_cast<std::size_t>(i) * s.padded_plane();
                double* dw = d_weights.data() + (static_cast<std::size_t>(o) * s.in_channels + i) * 9;
                for (int ky = 0; ky < 3; ++ky) {
                    for (int kx = 0; kx < 3; ++kx) {
                        std::fill(row.begin(), row.end(), 0.0);
                        for (int y = 0; y < s.height; ++y) {
                            const double* src = in + (y + ky) * pw + kx;
                            const double* gy = g + y * s.width;
                            for (int x = 0; x < s.width; ++x) row[x] += gy[x] * src[x];
                        }
                        double acc = 0.0;
                        for (int x = 0; x < s.width; ++x) acc += row[x];
                        dw[ky * 3 + kx] += acc;
                    }
                }
            }
        }
        if (!d_padded_in.empty()) {
#pragma omp for schedule(static)
            for (int i = 0; i < s.in_channels; ++i) {
                double* din = d_padded_in.data() + static_cast<std::size_t>(i) * s.padded_plane();
                for (int o = 0; o < s.out_channels; ++o) {
                    const double* g = d_out.data() + static_cast<std::size_t>(o) * s.plane();
                    const double* w = weights.data() + (static_cast<std::size_t>(o) * s.in_channels + i) * 9;
                    for (int ky = 0; ky < 3; ++ky) {
                        for (int kx = 0; kx < 3; ++kx) {
                            const double wk = w[ky * 3 + kx];
                            for (int y = 0; y < s.height; ++y) {
                                double* dst = din + (y + ky) * pw + kx;
                                const double* src = g + y * s.width;
                                for (int x = 0; x < s.width; ++x) dst[x] += wk * src[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

void dense_forward(int rows, int cols, std::span<const double> weights, std::span<const double> bias,
                   std::span<const double> in, std::span<double> out) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        out[r] = bias[r] + serial::dense_dot(weights.data() + static_cast<std::size_t>(r) * cols, in.data(), cols);
    }
}

void dense_backward(int rows, int cols, std::span<const double> weights, std::span<const double> in,
                    std::span<const double> d_out, std::span<double> d_weights, std::span<double> d_bias,
                    std::span<double> d_in) {
    constexpr int kBlock = 64;
    const int blocks = (cols + kBlock - 1) / kBlock;
#pragma omp parallel
    {
#pragma omp for schedule(static)
        for (int r = 0; r < rows; ++r) {
            const double g = d_out[r];
            d_bias[r] += g;
            double* dw = d_weights.data() + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) dw[c] += g * in[c];
        }
        if (!d_in.empty()) {
#pragma omp for schedule(static)
            for (int b = 0; b < blocks; ++b) {
                const int c0 = b * kBlock;
                const int c1 = std::min(cols, c0 + kBlock);
                for (int r = 0; r < rows; ++r) {
                    const double g = d_out[r];
                    const double* w = weights.data() + static_cast<std::size_t>(r) * cols;
                    for (int c = c0; c < c1; ++c) d_in[c] += w[c] * g;
                }
            }
        }
    }
}

void gaussian_noise(std::span<const float> in, double sigma, std::uint64_t key, std::uint64_t base,
                    std::span<float> out) {
    const CounterRng rng(key);
    const auto n = static_cast<std::int64_t>(in.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = in[i] + sigma * rng.gaussian_at(base, static_cast<std::uint64_t>(i));
        out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
}

} // namespace omp
} // namespace devstab::kernels
