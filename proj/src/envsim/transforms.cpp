#include "devstab/envsim.hpp"

#include "devstab/codec.hpp"
#include "devstab/error.hpp"
#include "devstab/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace devstab {

ImageTensor apply_gaussian_noise(const ImageTensor& img, double sigma2, CounterRng& rng) {
    if (!(sigma2 >= 0.0)) throw InvalidArgument("gaussian noise variance must be >= 0");
    const std::uint64_t base = rng.counter();
    rng.advance(2 * static_cast<std::uint64_t>(img.size()));
    ImageTensor out = img;
    if (sigma2 == 0.0) return out;
    kernels::omp::gaussian_noise(img.pixels(), std::sqrt(sigma2), rng.key(), base, out.pixels());
    return out;
}

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
    const double rd = r, gd = g, bd = b;
    const double mx = std::max({rd, gd, bd});
    const double mn = std::min({rd, gd, bd});
    const double delta = mx - mn;
    double hue = 0.0;
    if (delta > 0.0) {
        if (mx == rd) {
            hue = 60.0 * std::fmod((gd - bd) / delta, 6.0);
        } else if (mx == gd) {
            hue = 60.0 * ((bd - rd) / delta + 2.0);
        } else {
            hue = 60.0 * ((rd - gd) / delta + 4.0);
        }
        if (hue < 0.0) hue += 360.0;
    }
    h = static_cast<float>(hue);
    s = static_cast<float>(mx > 0.0 ? delta / mx : 0.0);
    v = static_cast<float>(mx);
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
    const double hh = std::fmod(std::fmod(static_cast<double>(h), 360.0) + 360.0, 360.0) / 60.0;
    const double c = static_cast<double>(v) * s;
    const double x = c * (1.0 - std::fabs(std::fmod(hh, 2.0) - 1.0));
    const double m = static_cast<double>(v) - c;
    double rr = 0, gg = 0, bb = 0;
    switch (static_cast<int>(hh)) {
        case 0: rr = c; gg = x; break;
        case 1: rr = x; gg = c; break;
        case 2: gg = c; bb = x; break;
        case 3: gg = x; bb = c; break;
        case 4: rr = x; bb = c; break;
        default: rr = c; bb = x; break;
    }
    r = static_cast<float>(rr + m);
    g = static_cast<float>(gg + m);
    b = static_cast<float>(bb + m);
}

ImageTensor apply_distortion(const ImageTensor& img, const Distort& params) {
    validate(Transform{params});
    ImageTensor out = img;
    auto px = out.pixels();
    const std::size_t n = px.size() / 3;

    if (params.hue_delta != 0.0 || params.saturation != 1.0) {
        const auto hue = static_cast<float>(params.hue_delta);
        for (std::size_t i = 0; i < n; ++i) {
            float h, s, v;
            rgb_to_hsv(px[3 * i], px[3 * i + 1], px[3 * i + 2], h, s, v);
            h += hue;
            s = static_cast<float>(std::min(1.0, s * params.saturation));
            hsv_to_rgb(h, s, v, px[3 * i], px[3 * i + 1], px[3 * i + 2]);
        }
    }
    if (params.contrast != 1.0) {
        for (int c = 0; c < 3; ++c) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += px[3 * i + c];
            mean /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                px[3 * i + c] = static_cast<float>(mean + params.contrast * (px[3 * i + c] - mean));
            }
        }
    }
    if (params.brightness != 0.0) {
        for (float& v : px) v = static_cast<float>(v + params.brightness);
    }
    clamp_unit(out);
    if (params.jpeg_quality) out = jpeg_roundtrip(out, *params.jpeg_quality);
    return out;
}

Distort sample_distortion(const DistortRanges& r, CounterRng& rng) {
    Distort d;
    d.hue_delta = rng.next_uniform(-r.hue_max, r.hue_max);
    d.saturation = rng.next_uniform(r.saturation_lo, r.saturation_hi);
    d.contrast = rng.next_uniform(r.contrast_lo, r.contrast_hi);
    d.brightness = rng.next_uniform(-r.brightness_max, r.brightness_max);
    if (r.use_jpeg) d.jpeg_quality = static_cast<int>(rng.next_int(r.jpeg_lo, r.jpeg_hi));
    return d;
}

} // namespace devstab
