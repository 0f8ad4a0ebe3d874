#include "devstab/error.hpp"
#include "devstab/stability.hpp"

#include <cmath>
#include <set>

namespace devstab {

std::string to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::none: return "none";
        case NoiseKind::gaussian: return "gaussian";
        case NoiseKind::distortion: return "distortion";
        case NoiseKind::paired: return "paired";
        case NoiseKind::subsample: return "subsample";
    }
    return "none";
}

NoiseKind parse_noise_kind(const std::string& s) {
    for (NoiseKind k : {NoiseKind::none, NoiseKind::gaussian, NoiseKind::distortion, NoiseKind::paired,
                        NoiseKind::subsample}) {
        if (to_string(k) == s) return k;
    }
    throw ParseError("unknown noise kind '" + s + "'");
}

void validate(const StabilityConfig& c) {
    auto fail = [&](const std::string& what) {
        throw InvalidArgument("stability config '" + c.name + "': " + what);
    };
    if (!(c.loss.alpha >= 0.0) || !std::isfinite(c.loss.alpha)) fail("alpha must be >= 0");
    if (!(c.noise.sigma2 >= 0.0)) fail("sigma2 must be >= 0");
    if (c.noise.subsample_k < 1) fail("subsample k must be >= 1");
    if (c.epochs < 0) fail("epochs must be >= 0");
    if (c.batch_size < 1) fail("batch_size must be >= 1");
    if (!(c.learning_rate >= 0.0)) fail("learning_rate must be >= 0");
    if (!(c.momentum >= 0.0 && c.momentum < 1.0)) fail("momentum must be in [0, 1)");
    if ((c.noise.kind == NoiseKind::paired || c.noise.kind == NoiseKind::subsample) && c.noise.counterpart_env.empty()) {
        fail("paired and subsample noise need a counterpart environment");
    }
    if (c.loss.alpha > 0.0 && c.noise.kind == NoiseKind::none) fail("alpha > 0 needs a noise source");
}

void validate_source(const CounterpartSource& source, const std::vector<LabeledImage>& train_set) {
    if (const auto* paired = std::get_if<PairedCounterparts>(&source)) {
        for (const auto& img : train_set) {
            const auto it = paired->by_image.find(img.image_id);
            if (it == paired->by_image.end()) throw InvalidArgument("missing pair for image " + img.image_id);
            if (it->second.target() != img.target()) {
                throw InvalidArgument("pair for image " + img.image_id + " has a different class");
            }
        }
    } else if (const auto* pool = std::get_if<SubsamplePool>(&source)) {
        std::set<int> classes;
        for (const auto& img : train_set) classes.insert(img.target());
        for (int c : classes) {
            const auto it = pool->by_class.find(c);
            if (it == pool->by_class.end() || it->second.empty()) {
                throw InvalidArgument("empty subsample pool for class " + std::to_string(c));
            }
            if (static_cast<int>(it->second.size()) > pool->k) {
                throw InvalidArgument("subsample pool for class " + std::to_string(c) + " exceeds k");
            }
        }
    }
}

ImageTensor make_counterpart(const LabeledImage& x, const CounterpartSource& source, CounterRng& rng) {
    if (const auto* gen = std::get_if<GeneratedNoise>(&source)) {
        if (gen->kind == NoiseKind::distortion) return apply_distortion(x.tensor, sample_distortion(gen->ranges, rng));
        return apply_gaussian_noise(x.tensor, gen->sigma2, rng);
    }
    if (const auto* paired = std::get_if<PairedCounterparts>(&source)) {
        const auto it = paired->by_image.find(x.image_id);
        if (it == paired->by_image.end()) throw InvalidArgument("missing pair for image " + x.image_id);
        return it->second.tensor;
    }
    const auto& pool = std::get<SubsamplePool>(source);
    const auto it = pool.by_class.find(x.target());
    if (it == pool.by_class.end() || it->second.empty()) {
        throw InvalidArgument("empty subsample pool for class " + std::to_string(x.target()));
    }
    const auto pick = rng.next_int(0, static_cast<std::int64_t>(it->second.size()) - 1);
    return it->second[static_cast<std::size_t>(pick)];
}

PairedCounterparts build_paired(const std::vector<LabeledImage>& train_set, const EnvironmentSpec& device) {
    std::vector<ImageTensor> rendered(train_set.size());
    const auto n = static_cast<std::int64_t>(train_set.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t i = 0; i < n; ++i) {
        rendered[i] = apply_environment(train_set[i].tensor, device, train_set[i].image_id);
    }
    PairedCounterparts out;
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        const auto& img = train_set[i];
        out.by_image.emplace(img.image_id, LabeledImage{img.image_id, std::move(rendered[i]), img.accepted_labels});
    }
    return out;
}

SubsamplePool build_subsample_pool(const std::vector<LabeledImage>& train_set, const EnvironmentSpec& device, int k) {
    if (k < 1) throw InvalidArgument("subsample k must be >= 1");
    SubsamplePool pool;
    pool.k = k;
    for (const auto& img : train_set) {
        auto& bucket = pool.by_class[img.target()];
        if (static_cast<int>(bucket.size()) < k) bucket.push_back(apply_environment(img.tensor, device, img.image_id));
    }
    return pool;
}

std::optional<CounterpartSource> generated_source(const NoiseConfig& noise) {
    if (noise.kind == NoiseKind::gaussian) return GeneratedNoise{NoiseKind::gaussian, noise.sigma2, {}};
    if (noise.kind == NoiseKind::distortion) return GeneratedNoise{NoiseKind::distortion, 0.0, noise.ranges};
    return std::nullopt;
}

} // namespace devstab
