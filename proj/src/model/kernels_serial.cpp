#include "devstab/kernels.hpp"

#include "devstab/rng.hpp"

#include <algorithm>
#include <vector>

namespace devstab::kernels::serial {

// Per-element operation order shared with kernels_omp.cpp:
//   conv forward   out[o,y,x] = b[o] + sum_{i, ky, kx} w * in   (i, ky, kx ascending)
//   conv dW        row partials over y, then x ascending
//   conv d_in      for i: for o: for ky, kx: axpy
//   dense forward  8 interleaved partial sums, combined pairwise

void conv3x3_forward(const ConvShape& s, std::span<const double> padded_in, std::span<const double> weights,
                     std::span<const double> bias, std::span<double> out) {
    const int pw = s.width + 2;
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

namespace {

double conv_weight_grad(const ConvShape& s, const double* in, const double* d_out, int ky, int kx,
                        std::vector<double>& row) {
    const int pw = s.width + 2;
    std::fill(row.begin(), row.end(), 0.0);
    for (int y = 0; y < s.height; ++y) {
        const double* src = in + (y + ky) * pw + kx;
        const double* g = d_out + y * s.width;
        for (int x = 0; x < s.width; ++x) row[x] += g[x] * src[x];
    }
    double acc = 0.0;
    for (int x = 0; x < s.width; ++x) acc += row[x];
    return acc;
}

} // namespace

void conv3x3_backward(const ConvShape& s, std::span<const double> padded_in, std::span<const double> weights,
                      std::span<const double> d_out, std::span<double> d_weights, std::span<double> d_bias,
                      std::span<double> d_padded_in) {
    std::vector<double> row(s.width);
    for (int o = 0; o < s.out_channels; ++o) {
        const double* g = d_out.data() + static_cast<std::size_t>(o) * s.plane();
        double db = 0.0;
        for (int p = 0; p < s.plane(); ++p) db += g[p];
        d_bias[o] += db;
        for (int i = 0; i < s.in_channels; ++i) {
            const double* in = padded_in.data() + static_cast<std::size_t>(i) * s.padded_plane();
            double* dw = d_weights.data() + (static_cast<std::size_t>(o) * s.in_channels + i) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) dw[ky * 3 + kx] += conv_weight_grad(s, in, g, ky, kx, row);
            }
        }
    }
    if (d_padded_in.empty()) return;
    const int pw = s.width + 2;
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

namespace {

double dot8(const double* a, const double* b, int n) {
    double lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    int c = 0;
    for (; c + 8 <= n; c += 8) {
        for (int j = 0; j < 8; ++j) lane[j] += a[c + j] * b[c + j];
    }
    for (; c < n; ++c) lane[c % 8] += a[c] * b[c];
    return ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
}

} // namespace

void dense_forward(int rows, int cols, std::span<const double> weights, std::span<const double> bias,
                   std::span<const double> in, std::span<double> out) {
    for (int r = 0; r < rows; ++r) {
        out[r] = bias[r] + dot8(weights.data() + static_cast<std::size_t>(r) * cols, in.data(), cols);
    }
}

void dense_backward(int rows, int cols, std::span<const double> weights, std::span<const double> in,
                    std::span<const double> d_out, std::span<double> d_weights, std::span<double> d_bias,
                    std::span<double> d_in) {
    for (int r = 0; r < rows; ++r) {
        const double g = d_out[r];
        d_bias[r] += g;
        double* dw = d_weights.data() + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) dw[c] += g * in[c];
    }
    if (d_in.empty()) return;
    for (int r = 0; r < rows; ++r) {
        const double g = d_out[r];
        const double* w = weights.data() + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) d_in[c] += w[c] * g;
    }
}

void gaussian_noise(std::span<const float> in, double sigma, std::uint64_t key, std::uint64_t base,
                    std::span<float> out) {
    const CounterRng rng(key);
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double v = in[i] + sigma * rng.gaussian_at(base, i);
        out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
}

// Exposed for the OpenMP translation unit so both share one definition.
double dense_dot(const double* a, const double* b, int n) { return dot8(a, b, n); }

} // namespace devstab::kernels::serial
