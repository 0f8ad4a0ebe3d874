#pragma once

// Numeric kernels behind the reference classifier and the noise generator.
//
// Every kernel exists twice: `serial` is the straight-line reference used by
// tests, `omp` splits the outermost independent loop across OpenMP threads.
// Each output element is produced by the same sequence of floating-point
// operations in both versions, so results are bit-identical for any thread
// count.

#include <cstdint>
#include <span>

namespace devstab::kernels {

/// 3x3 stride-1 convolution with one pixel of zero padding.
/// Inputs are CHW with the padding materialised: each channel is (H+2) x (W+2).
struct ConvShape {
    int in_channels = 0;
    int out_channels = 0;
    int height = 0;
    int width = 0;

    int padded_plane() const { return (height + 2) * (width + 2); }
    int plane() const { return height * width; }
};

namespace serial {

void conv3x3_forward(const ConvShape& s, std::span<const double> padded_in, std::span<const double> weights,
                     std::span<const double> bias, std::span<double> out);

/// Accumulates into d_weights / d_bias; d_padded_in is accumulated when non-empty.
void conv3x3_backward(const ConvShape& s, std::span<const double> padded_in, std::span<const double> weights,
                      std::span<const double> d_out, std::span<double> d_weights, std::span<double> d_bias,
                      std::span<double> d_padded_in);

/// out = W in + b, W is rows x cols row-major.
void dense_forward(int rows, int cols, std::span<const double> weights, std::span<const double> bias,
                   std::span<const double> in, std::span<double> out);

/// Accumulates dW += d_out in^T, db += d_out; d_in (when non-empty) += W^T d_out.
void dense_backward(int rows, int cols, std::span<const double> weights, std::span<const double> in,
                    std::span<const double> d_out, std::span<double> d_weights, std::span<double> d_bias,
                    std::span<double> d_in);

/// out[i] = clamp(in[i] + sigma * N_i), N_i drawn at counter positions base + 2i, base + 2i + 1.
void gaussian_noise(std::span<const float> in, double sigma, std::uint64_t key, std::uint64_t base,
                    std::span<float> out);

} // namespace serial

namespace omp {

void conv3x3_forward(const ConvShape& s, std::span<const double> padded_in, std::span<const double> weights,
                     std::span<const double> bias, std::span<double> out);
void conv3x3_backward(const ConvShape& s, std::span<const double> padded_in, std::span<const double> weights,
                      std::span<const double> d_out, std::span<double> d_weights, std::span<double> d_bias,
                      std::span<double> d_padded_in);
void dense_forward(int rows, int cols, std::span<const double> weights, std::span<const double> bias,
                   std::span<const double> in, std::span<double> out);
void dense_backward(int rows, int cols, std::span<const double> weights, std::span<const double> in,
                    std::span<const double> d_out, std::span<double> d_weights, std::span<double> d_bias,
                    std::span<double> d_in);
void gaussian_noise(std::span<const float> in, double sigma, std::uint64_t key, std::uint64_t base,
                    std::span<float> out);

} // namespace omp

} // namespace devstab::kernels
