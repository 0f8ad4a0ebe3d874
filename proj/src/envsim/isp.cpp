#include "devstab/envsim.hpp"

#include "devstab/error.hpp"

#include <algorithm>
#include <cmath>

namespace devstab {

namespace {

/// Reflect-101 (no edge repeat); preserves index parity, which keeps Bayer sites aligned.
int reflect(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
}

} // namespace

BayerImage mosaic(const ImageTensor& img) {
    if (img.height() % 2 != 0 || img.width() % 2 != 0) {
        throw InvalidArgument("mosaic needs even dimensions, got " + std::to_string(img.height()) + "x" +
                              std::to_string(img.width()));
    }
    BayerImage raw{img.height(), img.width(), std::vector<float>(static_cast<std::size_t>(img.height()) * img.width())};
    for (int y = 0; y < raw.height; ++y) {
        for (int x = 0; x < raw.width; ++x) raw.at(y, x) = img.at(y, x, BayerImage::channel_at(y, x));
    }
    return raw;
}

BayerImage synthesize_raw(const ImageTensor& img, double gamma) {
    BayerImage raw = mosaic(img);
    if (gamma != 1.0) {
        for (float& v : raw.values) v = static_cast<float>(std::pow(static_cast<double>(v), gamma));
    }
    return raw;
}

ImageTensor demosaic_bilinear(const BayerImage& raw) {
    if (raw.height <= 0 || raw.width <= 0 || raw.height % 2 || raw.width % 2) {
        throw InvalidArgument("bayer image needs positive even dimensions");
    }
    ImageTensor out(raw.height, raw.width);
    const int H = raw.height, W = raw.width;
    auto v = [&](int y, int x) { return static_cast<double>(raw.at(reflect(y, H), reflect(x, W))); };
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const int site = BayerImage::channel_at(y, x);
            // Pairwise sums keep constant fields exact.
            const double cross = (v(y - 1, x) + v(y + 1, x)) + (v(y, x - 1) + v(y, x + 1));
            const double diag = (v(y - 1, x - 1) + v(y - 1, x + 1)) + (v(y + 1, x - 1) + v(y + 1, x + 1));
            const double horiz = v(y, x - 1) + v(y, x + 1);
            const double vert = v(y - 1, x) + v(y + 1, x);
            double rgb[3];
            rgb[site] = v(y, x);
            if (site == 1) {
                // Green site: red and blue lie on the row or column axis depending on the row.
                const bool red_row = (y % 2 == 0);
                rgb[0] = 0.5 * (red_row ? horiz : vert);
                rgb[2] = 0.5 * (red_row ? vert : horiz);
            } else {
                rgb[1] = 0.25 * cross;
                rgb[2 - site] = 0.25 * diag;
            }
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = static_cast<float>(rgb[c]);
        }
    }
    return out;
}

ImageTensor gaussian_blur(const ImageTensor& img, double sigma) {
    if (sigma <= 0.0) return img;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& w : k) w /= sum;

    const int H = img.height(), W = img.width();
    ImageTensor tmp(H, W), out(H, W);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img.at(y, reflect(x + i, W), c);
                tmp.at(y, x, c) = static_cast<float>(acc);
            }
        }
    }
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp.at(reflect(y + i, H), x, c);
                out.at(y, x, c) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

ImageTensor simulate_isp(const BayerImage& raw, const IspConfig& cfg) {
    validate(Transform{IspPipeline{cfg}});
    ImageTensor img = demosaic_bilinear(raw);
    auto px = img.pixels();
    const std::size_t n = px.size() / 3;

    const bool neutral_wb = cfg.wb_gains == std::array<double, 3>{1.0, 1.0, 1.0};
    const bool neutral_ccm = cfg.ccm == IspConfig::identity().ccm;
    if (!neutral_wb || !neutral_ccm) {
        const auto& m = cfg.ccm;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = px[3 * i] * cfg.wb_gains[0];
            const double g = px[3 * i + 1] * cfg.wb_gains[1];
            const double b = px[3 * i + 2] * cfg.wb_gains[2];
            px[3 * i] = static_cast<float>(std::clamp(m[0] * r + m[1] * g + m[2] * b, 0.0, 1.0));
            px[3 * i + 1] = static_cast<float>(std::clamp(m[3] * r + m[4] * g + m[5] * b, 0.0, 1.0));
            px[3 * i + 2] = static_cast<float>(std::clamp(m[6] * r + m[7] * g + m[8] * b, 0.0, 1.0));
        }
    }
    if (cfg.gamma != 1.0) {
        const double inv = 1.0 / cfg.gamma;
        for (float& v : px) v = static_cast<float>(std::pow(std::max(0.0, static_cast<double>(v)), inv));
    }
    if (cfg.denoise_sigma > 0.0) img = gaussian_blur(img, cfg.denoise_sigma);
    if (cfg.sharpen_amount > 0.0) {
        const ImageTensor soft = gaussian_blur(img, 1.0);
        auto out = img.pixels();
        auto blur = soft.pixels();
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = static_cast<float>(out[i] + cfg.sharpen_amount * (static_cast<double>(out[i]) - blur[i]));
        }
    }
    clamp_unit(img);
    return img;
}

IspConfig isp_preset_a() {
    IspConfig c;
    c.wb_gains = {1.0, 1.0, 1.0};
    c.gamma = 2.2;
    c.denoise_sigma = 0.5;
    c.sharpen_amount = 0.3;
    return c;
}

IspConfig isp_preset_b() {
    IspConfig c;
    c.wb_gains = {1.12, 1.0, 0.88};
    c.ccm = {1.15, -0.10, -0.05,
             -0.05, 1.10, -0.05,
             -0.05, -0.15, 1.20};
    c.gamma = 1.8;
    c.denoise_sigma = 0.5;
    c.sharpen_amount = 0.3;
    return c;
}

} // namespace devstab
