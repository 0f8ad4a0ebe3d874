#include "devstab/error.hpp"
#include "devstab/kernels.hpp"
#include "devstab/model.hpp"
#include "model_internal.hpp"

#include <algorithm>
#include <cmath>

namespace devstab {

namespace detail {

std::vector<double> softmax_backward(std::span<const double> p, std::span<const double> g) {
    double dot = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) dot += p[j] * g[j];
    std::vector<double> dz(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) dz[i] = p[i] * (g[i] - dot);
    return dz;
}

void backward_pass(const ModelParams& params, const Activations& act, std::span<const double> d_logits,
                   std::span<const double> d_embedding_extra, Exec exec, ModelParams& grad) {
    const Architecture& arch = params.arch();
    const bool par = exec == Exec::parallel;

    std::vector<double> d_embed(arch.embed_dim, 0.0);
    kernels::serial::dense_backward(arch.classes, arch.embed_dim, params.out_weights(), act.embedding, d_logits,
                                    grad.out_weights(), grad.out_bias(), d_embed);
    if (!d_embedding_extra.empty()) {
        for (int i = 0; i < arch.embed_dim; ++i) d_embed[i] += d_embedding_extra[i];
    }
    for (int i = 0; i < arch.embed_dim; ++i) {
        if (act.embedding[i] <= 0.0) d_embed[i] = 0.0;
    }

    std::vector<double> d_flat(arch.flat_size(), 0.0);
    if (par) {
        kernels::omp::dense_backward(arch.embed_dim, arch.flat_size(), params.embed_weights(), act.flat, d_embed,
                                     grad.embed_weights(), grad.embed_bias(), d_flat);
    } else {
        kernels::serial::dense_backward(arch.embed_dim, arch.flat_size(), params.embed_weights(), act.flat, d_embed,
                                        grad.embed_weights(), grad.embed_bias(), d_flat);
    }

    // d_pooled holds the gradient w.r.t. the pooled output of layer l, laid out like
    // act.flat (last layer) or the padded input of layer l+1.
    std::vector<double> d_pooled = std::move(d_flat);
    bool pooled_is_padded = false;
    for (int l = arch.conv_layers() - 1; l >= 0; --l) {
        const int s = arch.layer_size(l);
        const int h = s / 2;
        const int pw = h + 2;
        const kernels::ConvShape shape{arch.layer_in_channels(l), arch.conv_channels[l], s, s};

        std::vector<double> d_conv(static_cast<std::size_t>(shape.out_channels) * shape.plane(), 0.0);
        const auto& arg = act.pool_arg[l];
        const auto& out = act.conv_out[l];
        for (int c = 0; c < shape.out_channels; ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < h; ++x) {
                    const std::size_t cell = (static_cast<std::size_t>(c) * h + y) * h + x;
                    const double g = pooled_is_padded
                                         ? d_pooled[(static_cast<std::size_t>(c) * pw + y + 1) * pw + x + 1]
                                         : d_pooled[cell];
                    const std::size_t at = static_cast<std::size_t>(c) * shape.plane() + arg[cell];
                    if (out[at] > 0.0) d_conv[at] += g;
                }
            }
        }

        std::vector<double> d_in;
        if (l > 0) d_in.assign(static_cast<std::size_t>(shape.in_channels) * shape.padded_plane(), 0.0);
        if (par) {
            kernels::omp::conv3x3_backward(shape, act.padded_in[l], params.conv_weights(l), d_conv,
                                           grad.conv_weights(l), grad.conv_bias(l), d_in);
        } else {
            kernels::serial::conv3x3_backward(shape, act.padded_in[l], params.conv_weights(l), d_conv,
                                              grad.conv_weights(l), grad.conv_bias(l), d_in);
        }
        d_pooled = std::move(d_in);
        pooled_is_padded = true;
    }
}

} // namespace detail

namespace {

struct ExampleLoss {
    double l0 = 0.0;
    double ls = 0.0;
};

void check_example(const TrainExample& ex, const LossConfig& loss, std::size_t index) {
    if (ex.image == nullptr) throw InvalidArgument("batch element " + std::to_string(index) + " has no image");
    if (loss.alpha > 0.0 && ex.counterpart == nullptr) {
        throw InvalidArgument("batch element " + std::to_string(index) + ": " + to_string(loss.kind) +
                              " loss with alpha > 0 requires a paired image");
    }
}

/// Accumulates the gradient of L0 + alpha * Ls for one example into `grad` and returns its terms.
ExampleLoss example_gradient(const ModelParams& params, const TrainExample& ex, const LossConfig& loss, Exec exec,
                             ModelParams& grad) {
    detail::Activations clean;
    detail::forward_pass(params, *ex.image, exec, clean);
    const int C = params.arch().classes;
    if (ex.target < 0 || ex.target >= C) throw InvalidArgument("target class out of range");

    ExampleLoss terms;
    terms.l0 = cross_entropy(clean.probs, ex.target);
    std::vector<double> d_logits(C, 0.0);
    if (clean.probs[ex.target] >= kLogFloor) {
        for (int j = 0; j < C; ++j) d_logits[j] = clean.probs[j];
        d_logits[ex.target] -= 1.0;
    }

    if (loss.alpha == 0.0) {
        detail::backward_pass(params, clean, d_logits, {}, exec, grad);
        return terms;
    }

    detail::Activations noisy;
    detail::forward_pass(params, *ex.counterpart, exec, noisy);
    std::vector<double> d_logits_noisy(C, 0.0);
    std::vector<double> d_embed_clean, d_embed_noisy;

    if (loss.kind == StabilityLoss::relative_entropy) {
        terms.ls = kl_stability_loss(clean.probs, noisy.probs);
        std::vector<double> g_p(C), g_q(C);
        kl_stability_grad(clean.probs, noisy.probs, g_p, g_q);
        const auto dz_p = detail::softmax_backward(clean.probs, g_p);
        const auto dz_q = detail::softmax_backward(noisy.probs, g_q);
        for (int j = 0; j < C; ++j) {
            d_logits[j] += loss.alpha * dz_p[j];
            d_logits_noisy[j] = loss.alpha * dz_q[j];
        }
    } else {
        terms.ls = embedding_stability_loss(clean.embedding, noisy.embedding);
        const std::size_t E = clean.embedding.size();
        d_embed_clean.assign(E, 0.0);
        embedding_stability_grad(clean.embedding, noisy.embedding, d_embed_clean);
        d_embed_noisy.resize(E);
        for (std::size_t i = 0; i < E; ++i) {
            d_embed_clean[i] *= loss.alpha;
            d_embed_noisy[i] = -d_embed_clean[i];
        }
    }
    detail::backward_pass(params, clean, d_logits, d_embed_clean, exec, grad);
    detail::backward_pass(params, noisy, d_logits_noisy, d_embed_noisy, exec, grad);
    return terms;
}

// Examples are grouped in fixed chunks; each chunk accumulates serially and
// chunks are summed in order, so the result does not depend on thread count.
constexpr std::size_t kChunk = 4;

} // namespace

GradientResult gradient(const ModelParams& params, std::span<const TrainExample> batch, const LossConfig& loss,
                        Exec exec) {
    if (batch.empty()) throw InvalidArgument("gradient: empty batch");
    if (!(loss.alpha >= 0.0)) throw InvalidArgument("gradient: alpha must be >= 0");
    for (std::size_t i = 0; i < batch.size(); ++i) check_example(batch[i], loss, i);

    const std::size_t chunks = (batch.size() + kChunk - 1) / kChunk;
    std::vector<ModelParams> partial(chunks, ModelParams(params.arch()));
    std::vector<ExampleLoss> terms(batch.size());
    std::vector<std::string> errors(chunks);

    auto run_chunk = [&](std::size_t c) {
        try {
            const std::size_t end = std::min(batch.size(), (c + 1) * kChunk);
            for (std::size_t i = c * kChunk; i < end; ++i) {
                terms[i] = example_gradient(params, batch[i], loss, Exec::serial, partial[c]);
            }
        } catch (const std::exception& e) {
            errors[c] = e.what();
        }
    };
    if (exec == Exec::parallel) {
        const auto n = static_cast<std::int64_t>(chunks);
#pragma omp parallel for schedule(dynamic, 1)
        for (std::int64_t c = 0; c < n; ++c) run_chunk(static_cast<std::size_t>(c));
    } else {
        for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    }
    for (const auto& e : errors) {
        if (!e.empty()) throw Error(e);
    }

    GradientResult result{ModelParams(params.arch()), 0.0, 0.0, 0.0};
    auto total = result.grad.values();
    for (const auto& p : partial) {
        auto v = p.values();
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += v[i];
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (double& v : total) v *= inv;
    for (const auto& t : terms) {
        result.l0 += t.l0;
        result.ls += t.ls;
    }
    result.l0 *= inv;
    result.ls *= inv;
    result.loss = result.l0 + loss.alpha * result.ls;
    return result;
}

double batch_loss(const ModelParams& params, std::span<const TrainExample> batch, const LossConfig& loss) {
    if (batch.empty()) throw InvalidArgument("batch_loss: empty batch");
    double l0 = 0.0;
    double ls = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& ex = batch[i];
        check_example(ex, loss, i);
        const ForwardResult clean = forward(params, *ex.image);
        l0 += cross_entropy(clean.probabilities, ex.target);
        if (loss.alpha == 0.0) continue;
        const ForwardResult noisy = forward(params, *ex.counterpart);
        ls += loss.kind == StabilityLoss::relative_entropy
                  ? kl_stability_loss(clean.probabilities, noisy.probabilities)
                  : embedding_stability_loss(clean.embedding, noisy.embedding);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    return l0 * inv + loss.alpha * (ls * inv);
}

} // namespace devstab
