#pragma once

#include "devstab/image.hpp"
#include "devstab/rng.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace devstab {

// ---------------------------------------------------------------------------
// Transforms

struct GaussianNoise {
    double sigma2 = 0.0; ///< variance in [0,1] intensity units
};

struct Distort {
    double hue_delta = 0.0;  ///< degrees, [-180, 180]
    double contrast = 1.0;   ///< > 0, scales about the channel mean
    double brightness = 0.0; ///< additive, [-1, 1]
    double saturation = 1.0; ///< >= 0
    std::optional<int> jpeg_quality;

    bool is_identity() const {
        return hue_delta == 0.0 && contrast == 1.0 && brightness == 0.0 && saturation == 1.0 &&
               !jpeg_quality;
    }
};

/// Ranges from which training-time distortions are sampled.
struct DistortRanges {
    double hue_max = 18.0;
    double contrast_lo = 0.8, contrast_hi = 1.25;
    double brightness_max = 0.125;
    double saturation_lo = 0.8, saturation_hi = 1.25;
    int jpeg_lo = 50, jpeg_hi = 100;
    bool use_jpeg = true;
};

struct JpegRoundtrip {
    int quality = 85;
};

struct PngRoundtrip {};

struct IspConfig {
    std::array<double, 3> wb_gains{1.0, 1.0, 1.0};
    std::array<double, 9> ccm{1, 0, 0, 0, 1, 0, 0, 0, 1}; ///< row-major, out = ccm * in
    double gamma = 1.0;
    double denoise_sigma = 0.0;
    double sharpen_amount = 0.0;

    static IspConfig identity() { return {}; }
    friend bool operator==(const IspConfig&, const IspConfig&) = default;
};

/// Mosaics the image (after raising it to raw_gamma to emulate linear sensor
/// data) and develops it with the given ISP.
struct IspPipeline {
    IspConfig config;
    double raw_gamma = 1.0;
};

struct Resize {
    int height = 32;
    int width = 32;
};

using Transform = std::variant<GaussianNoise, Distort, JpegRoundtrip, PngRoundtrip, IspPipeline, Resize>;

/// One "virtual device": an ordered, seeded perturbation pipeline.
struct EnvironmentSpec {
    std::string env_id;
    std::vector<Transform> transforms;
    std::uint64_t seed = 0;
};

/// Throws InvalidArgument when a parameter is outside its documented range.
void validate(const Transform& t);
void validate(const EnvironmentSpec& spec);
std::string transform_name(const Transform& t);

// ---------------------------------------------------------------------------
// Photometric operations

/// x' = clamp(x + e), e ~ N(0, sigma2) per pixel-channel. Draws are indexed by
/// element position, so the result is independent of evaluation order;
/// `rng` advances by two positions per element.
ImageTensor apply_gaussian_noise(const ImageTensor& img, double sigma2, CounterRng& rng);

/// hue -> saturation -> contrast -> brightness -> optional JPEG, then clamp.
/// Identity-valued stages are skipped, so identity params reproduce the input bit for bit.
ImageTensor apply_distortion(const ImageTensor& img, const Distort& params);
Distort sample_distortion(const DistortRanges& ranges, CounterRng& rng);

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v);
void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b);

// ---------------------------------------------------------------------------
// Sensor / ISP simulation

/// Single-channel RGGB mosaic.
struct BayerImage {
    int height = 0;
    int width = 0;
    std::vector<float> values;

    float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
    float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    /// 0 = R, 1 = G, 2 = B for the RGGB pattern.
    static int channel_at(int y, int x) { return (y % 2 == 0) ? (x % 2 == 0 ? 0 : 1) : (x % 2 == 0 ? 1 : 2); }
};

BayerImage mosaic(const ImageTensor& img);
ImageTensor demosaic_bilinear(const BayerImage& raw);
/// Raise to `gamma` (linearise) then mosaic: a stand-in for raw sensor capture.
BayerImage synthesize_raw(const ImageTensor& img, double gamma = 2.2);

/// demosaic -> white balance -> color matrix -> gamma -> denoise -> sharpen, clamped to [0,1].
ImageTensor simulate_isp(const BayerImage& raw, const IspConfig& config);

/// Neutral conversion: gamma 2.2, identity matrix.
IspConfig isp_preset_a();
/// Warmer conversion: gamma 1.8, mild cross-channel matrix.
IspConfig isp_preset_b();

ImageTensor gaussian_blur(const ImageTensor& img, double sigma);

// ---------------------------------------------------------------------------
// Environments

/// Per-image stream: depends only on (seed, image_id), never on processing order.
CounterRng environment_rng(std::uint64_t seed, const std::string& image_id);

ImageTensor apply_transform(const ImageTensor& img, const Transform& t, CounterRng& rng);
ImageTensor apply_environment(const ImageTensor& img, const EnvironmentSpec& spec, const std::string& image_id);

} // namespace devstab
