#pragma once

// Forward activations kept for the backward pass.

#include "devstab/model.hpp"

#include <vector>

namespace devstab::detail {

struct Activations {
    std::vector<std::vector<double>> padded_in; ///< per conv layer, CHW with a 1-pixel zero border
    std::vector<std::vector<double>> conv_out;  ///< per conv layer, post-relu CHW
    std::vector<std::vector<int>> pool_arg;     ///< per conv layer, argmax offset in conv_out for each pooled cell
    std::vector<double> flat;                   ///< pooled output of the last conv layer
    std::vector<double> embedding;              ///< post-relu
    std::vector<double> logits;
    std::vector<double> probs;
};

void forward_pass(const ModelParams& params, const ImageTensor& img, Exec exec, Activations& act);

/// Accumulates parameter gradients into `grad` given dL/dlogits and an extra dL/dembedding term.
void backward_pass(const ModelParams& params, const Activations& act, std::span<const double> d_logits,
                   std::span<const double> d_embedding_extra, Exec exec, ModelParams& grad);

/// dL/dz for z -> softmax(z) = p, given g = dL/dp.
std::vector<double> softmax_backward(std::span<const double> p, std::span<const double> g);

} // namespace devstab::detail
