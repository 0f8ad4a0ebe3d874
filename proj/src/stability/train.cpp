#include "devstab/error.hpp"
#include "devstab/stability.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace devstab {

double combined_loss(const ImageTensor& x, const ImageTensor& x_prime, int target, const ModelParams& params,
                     const LossConfig& config) {
    const ForwardResult clean = forward(params, x);
    const double l0 = cross_entropy(clean.probabilities, target);
    if (config.alpha == 0.0) return l0;
    const ForwardResult noisy = forward(params, x_prime);
    const double ls = config.kind == StabilityLoss::relative_entropy
                          ? kl_stability_loss(clean.probabilities, noisy.probabilities)
                          : embedding_stability_loss(clean.embedding, noisy.embedding);
    return l0 + config.alpha * ls;
}

namespace {

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng rng(derive_key(derive_key(seed, "shuffle"), static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.next_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

double eval_cross_entropy(const ModelParams& params, const std::vector<LabeledImage>& eval_set) {
    std::vector<double> losses(eval_set.size());
    const auto n = static_cast<std::int64_t>(eval_set.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto r = forward(params, preprocess(eval_set[i].tensor, params.arch()));
        losses[i] = cross_entropy(r.probabilities, eval_set[i].target());
    }
    double sum = 0.0;
    for (double l : losses) sum += l;
    return sum / static_cast<double>(eval_set.size());
}

} // namespace

TrainResult stability_train(const std::vector<LabeledImage>& train_set, const std::vector<LabeledImage>& eval_set,
                            const std::optional<CounterpartSource>& source, const StabilityConfig& config,
                            const ModelParams& base_params) {
    validate(config);
    if (train_set.empty()) throw InvalidArgument("stability_train: empty training set");
    if (!base_params.all_finite()) throw InvalidArgument("stability_train: base parameters are not finite");
    const bool needs_pairs = config.loss.alpha > 0.0;
    if (needs_pairs && !source) throw InvalidArgument("stability_train: alpha > 0 requires a counterpart source");
    if (needs_pairs) validate_source(*source, train_set);

    const Architecture& arch = base_params.arch();
    std::vector<ImageTensor> inputs(train_set.size());
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        if (train_set[i].target() >= arch.classes) throw InvalidArgument("label outside the model's class range");
        inputs[i] = preprocess(train_set[i].tensor, arch);
    }

    TrainResult result{base_params, {}};
    std::vector<double> velocity;
    const std::uint64_t counterpart_key = derive_key(config.seed, "counterpart");
    std::size_t batch_index = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = shuffled_order(train_set.size(), config.seed, epoch);
        const std::uint64_t epoch_key = derive_key(counterpart_key, static_cast<std::uint64_t>(epoch));
        double sum_l0 = 0.0, sum_ls = 0.0;

        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const std::size_t bs = end - start;
            std::vector<ImageTensor> counterparts(needs_pairs ? bs : 0);
            if (needs_pairs) {
                const auto n = static_cast<std::int64_t>(bs);
#pragma omp parallel for schedule(dynamic, 2)
                for (std::int64_t b = 0; b < n; ++b) {
                    const auto& img = train_set[order[start + b]];
                    CounterRng rng(derive_key(epoch_key, img.image_id));
                    counterparts[b] = preprocess(make_counterpart(img, *source, rng), arch);
                }
            }
            std::vector<TrainExample> batch(bs);
            for (std::size_t b = 0; b < bs; ++b) {
                const std::size_t i = order[start + b];
                batch[b] = TrainExample{&inputs[i], needs_pairs ? &counterparts[b] : nullptr, train_set[i].target()};
            }
            const GradientResult g = gradient(result.params, batch, config.loss, Exec::parallel);
            if (!std::isfinite(g.loss)) {
                throw Error("stability_train: non-finite loss at batch " + std::to_string(batch_index) + " (epoch " +
                            std::to_string(epoch) + ")");
            }
            sum_l0 += g.l0 * static_cast<double>(bs);
            sum_ls += g.ls * static_cast<double>(bs);
            auto step = sgd_step(result.params, g.grad, velocity, config.learning_rate, config.momentum);
            result.params = std::move(step.params);
            velocity = std::move(step.velocity);
        }
        EpochStats stats;
        stats.epoch = epoch + 1;
        stats.mean_l0 = sum_l0 / static_cast<double>(order.size());
        stats.mean_ls = sum_ls / static_cast<double>(order.size());
        stats.mean_l = stats.mean_l0 + config.loss.alpha * stats.mean_ls;
        if (!eval_set.empty()) stats.eval_l0 = eval_cross_entropy(result.params, eval_set);
        result.trace.push_back(stats);
    }
    return result;
}

std::string trace_csv(const std::vector<EpochStats>& trace) {
    std::ostringstream out;
    out << "epoch,mean_L0,mean_Ls,mean_L\n";
    char buf[128];
    for (const auto& s : trace) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", s.epoch, s.mean_l0, s.mean_ls, s.mean_l);
        out << buf;
    }
    return out.str();
}

} // namespace devstab
