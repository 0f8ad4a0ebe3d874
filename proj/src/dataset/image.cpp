#include "devstab/image.hpp"

#include "devstab/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace devstab {

ImageTensor::ImageTensor(int height, int width, float fill)
    : height_(height), width_(width),
      pixels_(static_cast<std::size_t>(height) * width * kChannels, fill) {
    if (height <= 0 || width <= 0) {
        throw InvalidArgument("image dimensions must be positive, got " + std::to_string(height) + "x" +
                              std::to_string(width));
    }
}

ImageTensor::ImageTensor(int height, int width, std::vector<float> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
    if (height <= 0 || width <= 0) {
        throw InvalidArgument("image dimensions must be positive");
    }
    if (pixels_.size() != static_cast<std::size_t>(height) * width * kChannels) {
        throw InvalidArgument("pixel buffer does not match " + std::to_string(height) + "x" +
                              std::to_string(width) + "x3");
    }
}

std::uint8_t quantize8(float v) {
    // Values are non-negative after the clamp, so floor(x + 0.5) rounds half away from zero.
    const double scaled = std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0;
    return static_cast<std::uint8_t>(std::floor(scaled + 0.5));
}

ImageTensor quantize(const ImageTensor& img) {
    ImageTensor out = img;
    for (float& v : out.pixels()) v = dequantize8(quantize8(v));
    return out;
}

std::vector<std::uint8_t> to_bytes(const ImageTensor& img) {
    std::vector<std::uint8_t> out(img.size());
    auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) out[i] = quantize8(px[i]);
    return out;
}

ImageTensor from_bytes(int height, int width, std::span<const std::uint8_t> rgb) {
    std::vector<float> px(rgb.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) px[i] = dequantize8(rgb[i]);
    return ImageTensor(height, width, std::move(px));
}

void clamp_unit(ImageTensor& img) {
    for (float& v : img.pixels()) v = std::clamp(v, 0.0f, 1.0f);
}

ImageTensor resize_bilinear(const ImageTensor& img, int height, int width) {
    if (img.height() == height && img.width() == width) return img;
    ImageTensor out(height, width);
    const double sy = static_cast<double>(img.height()) / height;
    const double sx = static_cast<double>(img.width()) / width;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height() - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width() - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = img.at(y0, x0, c) * (1.0 - wx) + img.at(y0, x1, c) * wx;
                const double bot = img.at(y1, x0, c) * (1.0 - wx) + img.at(y1, x1, c) * wx;
                out.at(y, x, c) = static_cast<float>(top * (1.0 - wy) + bot * wy);
            }
        }
    }
    clamp_unit(out);
    return out;
}

float max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
    if (!a.same_shape(b)) throw InvalidArgument("max_abs_diff: shape mismatch");
    float m = 0.0f;
    auto pa = a.pixels();
    auto pb = b.pixels();
    for (std::size_t i = 0; i < pa.size(); ++i) m = std::max(m, std::fabs(pa[i] - pb[i]));
    return m;
}

double mean_abs_diff(const ImageTensor& a, const ImageTensor& b) {
    if (!a.same_shape(b)) throw InvalidArgument("mean_abs_diff: shape mismatch");
    double s = 0.0;
    auto pa = a.pixels();
    auto pb = b.pixels();
    for (std::size_t i = 0; i < pa.size(); ++i) s += std::fabs(static_cast<double>(pa[i]) - pb[i]);
    return pa.empty() ? 0.0 : s / static_cast<double>(pa.size());
}

} // namespace devstab
