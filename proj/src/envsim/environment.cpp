#include "devstab/envsim.hpp"

#include "devstab/codec.hpp"
#include "devstab/error.hpp"

#include <cmath>
#include <set>

namespace devstab {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument(what);
}

struct TransformValidator {
    void operator()(const GaussianNoise& t) const {
        require(std::isfinite(t.sigma2) && t.sigma2 >= 0.0, "gaussian sigma2 must be a finite value >= 0");
    }
    void operator()(const Distort& t) const {
        require(t.hue_delta >= -180.0 && t.hue_delta <= 180.0, "distort hue_delta must be in [-180, 180]");
        require(t.contrast > 0.0 && std::isfinite(t.contrast), "distort contrast must be > 0");
        require(t.brightness >= -1.0 && t.brightness <= 1.0, "distort brightness must be in [-1, 1]");
        require(t.saturation >= 0.0 && std::isfinite(t.saturation), "distort saturation must be >= 0");
        require(!t.jpeg_quality || (*t.jpeg_quality >= 1 && *t.jpeg_quality <= 100),
                "distort jpeg_quality must be in 1..100");
    }
    void operator()(const JpegRoundtrip& t) const {
        require(t.quality >= 1 && t.quality <= 100, "jpeg quality must be in 1..100");
    }
    void operator()(const PngRoundtrip&) const {}
    void operator()(const IspPipeline& t) const {
        for (double g : t.config.wb_gains) require(g > 0.0 && std::isfinite(g), "isp wb_gains must be > 0");
        for (double m : t.config.ccm) require(std::isfinite(m), "isp ccm entries must be finite");
        require(t.config.gamma > 0.0 && std::isfinite(t.config.gamma), "isp gamma must be > 0");
        require(t.config.denoise_sigma >= 0.0, "isp denoise_sigma must be >= 0");
        require(t.config.sharpen_amount >= 0.0, "isp sharpen_amount must be >= 0");
        require(t.raw_gamma > 0.0 && std::isfinite(t.raw_gamma), "isp raw_gamma must be > 0");
    }
    void operator()(const Resize& t) const {
        require(t.height > 0 && t.width > 0, "resize dimensions must be positive");
    }
};

struct TransformApplier {
    const ImageTensor& img;
    CounterRng& rng;

    ImageTensor operator()(const GaussianNoise& t) const { return apply_gaussian_noise(img, t.sigma2, rng); }
    ImageTensor operator()(const Distort& t) const { return apply_distortion(img, t); }
    ImageTensor operator()(const JpegRoundtrip& t) const { return jpeg_roundtrip(img, t.quality); }
    ImageTensor operator()(const PngRoundtrip&) const { return png_roundtrip(img); }
    ImageTensor operator()(const IspPipeline& t) const {
        return simulate_isp(synthesize_raw(img, t.raw_gamma), t.config);
    }
    ImageTensor operator()(const Resize& t) const { return resize_bilinear(img, t.height, t.width); }
};

} // namespace

void validate(const Transform& t) {
    std::visit(TransformValidator{}, t);
}

void validate(const EnvironmentSpec& spec) {
    require(!spec.env_id.empty(), "environment id must not be empty");
    for (const auto& t : spec.transforms) {
        try {
            validate(t);
        } catch (const InvalidArgument& e) {
            throw InvalidArgument("environment '" + spec.env_id + "': " + e.what());
        }
    }
}

std::string transform_name(const Transform& t) {
    static const char* kNames[] = {"gaussian", "distort", "jpeg", "png", "isp", "resize"};
    return kNames[t.index()];
}

CounterRng environment_rng(std::uint64_t seed, const std::string& image_id) {
    return CounterRng(derive_key(seed, image_id));
}

ImageTensor apply_transform(const ImageTensor& img, const Transform& t, CounterRng& rng) {
    return std::visit(TransformApplier{img, rng}, t);
}

ImageTensor apply_environment(const ImageTensor& img, const EnvironmentSpec& spec, const std::string& image_id) {
    validate(spec);
    CounterRng rng = environment_rng(spec.seed, image_id);
    ImageTensor current = img;
    for (const auto& t : spec.transforms) current = apply_transform(current, t, rng);
    return current;
}

} // namespace devstab
