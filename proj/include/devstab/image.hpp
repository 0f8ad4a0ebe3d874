#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace devstab {

/// Canonical RGB image: interleaved HWC floats in [0,1].
class ImageTensor {
public:
    static constexpr int kChannels = 3;

    ImageTensor() = default;
    ImageTensor(int height, int width, float fill = 0.0f);
    ImageTensor(int height, int width, std::vector<float> pixels);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return kChannels; }
    std::size_t size() const { return pixels_.size(); }
    bool empty() const { return pixels_.empty(); }

    float& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }
    float at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }

    std::span<float> pixels() { return pixels_; }
    std::span<const float> pixels() const { return pixels_; }

    bool same_shape(const ImageTensor& other) const {
        return height_ == other.height_ && width_ == other.width_;
    }

    friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

private:
    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<float> pixels_;
};

/// 8-bit quantization, round half away from zero, saturating.
std::uint8_t quantize8(float v);
inline float dequantize8(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

/// Snap every pixel onto the 8-bit grid (what a lossless PNG save would keep).
ImageTensor quantize(const ImageTensor& img);
std::vector<std::uint8_t> to_bytes(const ImageTensor& img);
ImageTensor from_bytes(int height, int width, std::span<const std::uint8_t> rgb);

void clamp_unit(ImageTensor& img);

/// Bilinear resample with half-pixel centers; returns a copy when the size already matches.
ImageTensor resize_bilinear(const ImageTensor& img, int height, int width);

float max_abs_diff(const ImageTensor& a, const ImageTensor& b);
double mean_abs_diff(const ImageTensor& a, const ImageTensor& b);

} // namespace devstab
