#include "devstab/model.hpp"

#include "devstab/error.hpp"
#include "devstab/kernels.hpp"
#include "devstab/rng.hpp"
#include "model_internal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace devstab {

Architecture Architecture::reference(int classes) {
    Architecture a;
    a.classes = classes;
    return a;
}

int Architecture::flat_size() const {
    const int s = input_size >> conv_layers();
    return conv_channels.back() * s * s;
}

std::size_t Architecture::parameter_count() const {
    std::size_t n = 0;
    for (int l = 0; l < conv_layers(); ++l) {
        n += static_cast<std::size_t>(conv_channels[l]) * layer_in_channels(l) * 9 + conv_channels[l];
    }
    n += static_cast<std::size_t>(embed_dim) * flat_size() + embed_dim;
    n += static_cast<std::size_t>(classes) * embed_dim + classes;
    return n;
}

void Architecture::validate() const {
    if (conv_channels.empty()) throw InvalidArgument("architecture needs at least one conv layer");
    for (int c : conv_channels) {
        if (c <= 0) throw InvalidArgument("conv channel counts must be positive");
    }
    if (embed_dim <= 0 || classes < 2) throw InvalidArgument("architecture needs embed_dim > 0 and >= 2 classes");
    if (input_size <= 0 || input_size % (1 << conv_layers()) != 0) {
        throw InvalidArgument("input_size must be divisible by 2^conv_layers");
    }
}

ModelParams::ModelParams(Architecture arch) : arch_(std::move(arch)) {
    arch_.validate();
    std::size_t offset = 0;
    auto take = [&](std::size_t n) {
        Block b{offset, n};
        offset += n;
        return b;
    };
    for (int l = 0; l < arch_.conv_layers(); ++l) {
        conv_w_.push_back(take(static_cast<std::size_t>(arch_.conv_channels[l]) * arch_.layer_in_channels(l) * 9));
        conv_b_.push_back(take(arch_.conv_channels[l]));
    }
    embed_w_ = take(static_cast<std::size_t>(arch_.embed_dim) * arch_.flat_size());
    embed_b_ = take(arch_.embed_dim);
    out_w_ = take(static_cast<std::size_t>(arch_.classes) * arch_.embed_dim);
    out_b_ = take(arch_.classes);
    values_.assign(offset, 0.0);
}

std::span<double> ModelParams::conv_weights(int l) { return block(conv_w_.at(l)); }
std::span<const double> ModelParams::conv_weights(int l) const { return block(conv_w_.at(l)); }
std::span<double> ModelParams::conv_bias(int l) { return block(conv_b_.at(l)); }
std::span<const double> ModelParams::conv_bias(int l) const { return block(conv_b_.at(l)); }
std::span<double> ModelParams::embed_weights() { return block(embed_w_); }
std::span<const double> ModelParams::embed_weights() const { return block(embed_w_); }
std::span<double> ModelParams::embed_bias() { return block(embed_b_); }
std::span<const double> ModelParams::embed_bias() const { return block(embed_b_); }
std::span<double> ModelParams::out_weights() { return block(out_w_); }
std::span<const double> ModelParams::out_weights() const { return block(out_w_); }
std::span<double> ModelParams::out_bias() { return block(out_b_); }
std::span<const double> ModelParams::out_bias() const { return block(out_b_); }

bool ModelParams::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
    ModelParams p(arch);
    CounterRng rng(derive_key(seed, "he-uniform"));
    auto fill = [&](std::span<double> w, int fan_in) {
        const double limit = std::sqrt(6.0 / fan_in);
        for (double& v : w) v = rng.next_uniform(-limit, limit);
    };
    for (int l = 0; l < arch.conv_layers(); ++l) fill(p.conv_weights(l), arch.layer_in_channels(l) * 9);
    fill(p.embed_weights(), arch.flat_size());
    fill(p.out_weights(), arch.embed_dim);
    return p;
}

ImageTensor preprocess(const ImageTensor& img, const Architecture& arch) {
    return resize_bilinear(img, arch.input_size, arch.input_size);
}

namespace detail {

void forward_pass(const ModelParams& params, const ImageTensor& img, Exec exec, Activations& act) {
    const Architecture& arch = params.arch();
    if (img.height() != arch.input_size || img.width() != arch.input_size) {
        throw InvalidArgument("model expects " + std::to_string(arch.input_size) + "x" +
                              std::to_string(arch.input_size) + " input, got " + std::to_string(img.height()) +
                              "x" + std::to_string(img.width()));
    }
    const int L = arch.conv_layers();
    act.padded_in.resize(L);
    act.conv_out.resize(L);
    act.pool_arg.resize(L);

    // Layer 0 input: HWC floats -> padded CHW doubles.
    {
        const int s = arch.input_size;
        const int pw = s + 2;
        auto& in = act.padded_in[0];
        in.assign(static_cast<std::size_t>(3) * pw * pw, 0.0);
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                for (int c = 0; c < 3; ++c) in[(static_cast<std::size_t>(c) * pw + y + 1) * pw + x + 1] = img.at(y, x, c);
            }
        }
    }

    for (int l = 0; l < L; ++l) {
        const int s = arch.layer_size(l);
        const kernels::ConvShape shape{arch.layer_in_channels(l), arch.conv_channels[l], s, s};
        auto& out = act.conv_out[l];
        out.assign(static_cast<std::size_t>(shape.out_channels) * shape.plane(), 0.0);
        if (exec == Exec::parallel) {
            kernels::omp::conv3x3_forward(shape, act.padded_in[l], params.conv_weights(l), params.conv_bias(l), out);
        } else {
            kernels::serial::conv3x3_forward(shape, act.padded_in[l], params.conv_weights(l), params.conv_bias(l), out);
        }
        for (double& v : out) v = v > 0.0 ? v : 0.0;

        // 2x2 max pool; the first maximum in scan order wins.
        const int h = s / 2;
        const bool last = (l + 1 == L);
        const int pw = h + 2;
        std::vector<double>* next = nullptr;
        if (last) {
            act.flat.assign(static_cast<std::size_t>(shape.out_channels) * h * h, 0.0);
        } else {
            next = &act.padded_in[l + 1];
            next->assign(static_cast<std::size_t>(shape.out_channels) * pw * pw, 0.0);
        }
        auto& arg = act.pool_arg[l];
        arg.assign(static_cast<std::size_t>(shape.out_channels) * h * h, 0);
        for (int c = 0; c < shape.out_channels; ++c) {
            const double* plane = out.data() + static_cast<std::size_t>(c) * shape.plane();
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < h; ++x) {
                    int best = (2 * y) * s + 2 * x;
                    const int cand[3] = {best + 1, best + s, best + s + 1};
                    for (int k : cand) {
                        if (plane[k] > plane[best]) best = k;
                    }
                    const std::size_t cell = (static_cast<std::size_t>(c) * h + y) * h + x;
                    arg[cell] = best;
                    if (last) {
                        act.flat[cell] = plane[best];
                    } else {
                        (*next)[(static_cast<std::size_t>(c) * pw + y + 1) * pw + x + 1] = plane[best];
                    }
                }
            }
        }
    }

    act.embedding.assign(arch.embed_dim, 0.0);
    act.logits.assign(arch.classes, 0.0);
    if (exec == Exec::parallel) {
        kernels::omp::dense_forward(arch.embed_dim, arch.flat_size(), params.embed_weights(), params.embed_bias(),
                                    act.flat, act.embedding);
    } else {
        kernels::serial::dense_forward(arch.embed_dim, arch.flat_size(), params.embed_weights(),
                                       params.embed_bias(), act.flat, act.embedding);
    }
    for (double& v : act.embedding) v = v > 0.0 ? v : 0.0;
    kernels::serial::dense_forward(arch.classes, arch.embed_dim, params.out_weights(), params.out_bias(),
                                   act.embedding, act.logits);
    act.probs = softmax(act.logits);
}

} // namespace detail

ForwardResult forward(const ModelParams& params, const ImageTensor& img, Exec exec) {
    detail::Activations act;
    detail::forward_pass(params, img, exec, act);
    return ForwardResult{std::move(act.logits), std::move(act.probs), std::move(act.embedding)};
}

std::vector<ForwardResult> forward_batch(const ModelParams& params, std::span<const ImageTensor> images, Exec exec) {
    std::vector<ForwardResult> results(images.size());
    const auto n = static_cast<std::int64_t>(images.size());
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 4)
        for (std::int64_t i = 0; i < n; ++i) results[i] = forward(params, images[i], Exec::serial);
    } else {
        for (std::int64_t i = 0; i < n; ++i) results[i] = forward(params, images[i], Exec::serial);
    }
    return results;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> p(logits.size());
    if (logits.empty()) return p;
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) sum += p[i] = std::exp(logits[i] - mx);
    for (double& v : p) v /= sum;
    return p;
}

double cross_entropy(std::span<const double> probs, int target) {
    if (target < 0 || static_cast<std::size_t>(target) >= probs.size()) {
        throw InvalidArgument("cross_entropy: target " + std::to_string(target) + " out of range");
    }
    return -std::log(std::max(probs[target], kLogFloor));
}

SgdResult sgd_step(const ModelParams& params, const ModelParams& grads, std::span<const double> velocity,
                   double learning_rate, double momentum) {
    if (!params.same_shape(grads)) throw InvalidArgument("sgd_step: gradient shape does not match parameters");
    if (!velocity.empty() && velocity.size() != params.size()) {
        throw InvalidArgument("sgd_step: velocity shape does not match parameters");
    }
    SgdResult r{params, std::vector<double>(params.size(), 0.0)};
    auto p = r.params.values();
    auto g = grads.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double v = (velocity.empty() ? 0.0 : momentum * velocity[i]) + g[i];
        r.velocity[i] = v;
        p[i] -= learning_rate * v;
    }
    return r;
}

std::vector<std::pair<int, double>> predict_topk(std::span<const double> probs, int k) {
    if (k < 1 || static_cast<std::size_t>(k) > probs.size()) {
        throw InvalidArgument("predict_topk: k=" + std::to_string(k) + " outside 1.." + std::to_string(probs.size()));
    }
    std::vector<int> idx(probs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return probs[a] > probs[b]; });
    std::vector<std::pair<int, double>> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) out.emplace_back(idx[i], probs[idx[i]]);
    return out;
}

} // namespace devstab
