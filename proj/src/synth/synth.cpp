#include "devstab/synth.hpp"

#include "devstab/codec.hpp"
#include "devstab/error.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

namespace devstab::synth {

namespace fs = std::filesystem;

namespace {

// Objects stay legible under heavy pixel noise; grain spans clean to low-light captures.
constexpr float kMinLumaGap = 0.4f;
constexpr double kMaxGrain = 0.2;

struct Rgb {
    float r, g, b;
};

Rgb random_color(CounterRng& rng) {
    return {static_cast<float>(rng.next_double()), static_cast<float>(rng.next_double()),
            static_cast<float>(rng.next_double())};
}

float luma(const Rgb& c) { return 0.299f * c.r + 0.587f * c.g + 0.114f * c.b; }

/// Foreground far enough in luma from the background that the shape stays visible.
Rgb contrasting_color(const Rgb& bg, CounterRng& rng) {
    for (int attempt = 0; attempt < 64; ++attempt) {
        Rgb c = random_color(rng);
        if (std::fabs(luma(c) - luma(bg)) > kMinLumaGap) return c;
    }
    return luma(bg) > 0.5f ? Rgb{0.05f, 0.05f, 0.05f} : Rgb{0.95f, 0.95f, 0.95f};
}

void blend(ImageTensor& img, int y, int x, const Rgb& c, float a) {
    if (y < 0 || x < 0 || y >= img.height() || x >= img.width() || a <= 0.0f) return;
    a = std::min(a, 1.0f);
    img.at(y, x, 0) += a * (c.r - img.at(y, x, 0));
    img.at(y, x, 1) += a * (c.g - img.at(y, x, 1));
    img.at(y, x, 2) += a * (c.b - img.at(y, x, 2));
}

/// Shape membership in normalised object coordinates (u, v in [-1, 1], already rotated).
bool inside(int cls, double u, double v) {
    const double r = std::hypot(u, v);
    switch (cls) {
        case 0: return r <= 0.9;                                              // disc
        case 1: return std::fabs(u) <= 0.75 && std::fabs(v) <= 0.75;          // square
        case 2: return v <= 0.8 && v >= -0.8 && std::fabs(u) <= (0.8 - v) * 0.55; // triangle
        case 3: return (std::fabs(u) <= 0.22 && std::fabs(v) <= 0.9) || (std::fabs(v) <= 0.22 && std::fabs(u) <= 0.9); // plus
        case 4: return r <= 0.9 && r >= 0.55;                                  // ring
        case 5: return std::fabs(u) <= 0.9 && std::fabs(v) <= 0.9 && static_cast<int>(std::floor((v + 0.9) / 0.36)) % 2 == 0; // bars
        case 6: return std::fabs(u) + std::fabs(v) <= 0.95;                    // diamond
        case 7: return std::fabs(u) <= 0.9 && std::fabs(v) <= 0.9 &&
                       (static_cast<int>(std::floor((u + 0.9) / 0.45)) + static_cast<int>(std::floor((v + 0.9) / 0.45))) % 2 == 0; // checker
        case 8: return std::fabs(u) <= 0.95 && std::fabs(v) <= 0.35;           // bar
        case 9: {                                                             // four dots
            const double du = std::fabs(u) - 0.5, dv = std::fabs(v) - 0.5;
            return std::hypot(du, dv) <= 0.3;
        }
        default: return false;
    }
}

} // namespace

const std::vector<std::string>& class_names() {
    static const std::vector<std::string> names{"disc", "square", "triangle", "plus", "ring",
                                                "bars", "diamond", "checker", "bar", "dots"};
    return names;
}

ImageTensor draw_object(int cls, int size, CounterRng& rng) {
    if (cls < 0 || cls >= static_cast<int>(class_names().size())) throw InvalidArgument("unknown synthetic class");
    if (size < 8) throw InvalidArgument("synthetic images must be at least 8x8");
    ImageTensor img(size, size);

    // Background: a linear gradient between two random colors.
    const Rgb bg0 = random_color(rng);
    const Rgb bg1 = random_color(rng);
    const double angle = rng.next_uniform(0.0, 2.0 * std::numbers::pi);
    const double gx = std::cos(angle), gy = std::sin(angle);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double t = 0.5 + 0.5 * (gx * (2.0 * x / (size - 1) - 1.0) + gy * (2.0 * y / (size - 1) - 1.0)) / std::sqrt(2.0);
            const float w = static_cast<float>(std::clamp(t, 0.0, 1.0)) * 0.6f;
            img.at(y, x, 0) = bg0.r + w * (bg1.r - bg0.r);
            img.at(y, x, 1) = bg0.g + w * (bg1.g - bg0.g);
            img.at(y, x, 2) = bg0.b + w * (bg1.b - bg0.b);
        }
    }
    const Rgb bg_mean{0.7f * bg0.r + 0.3f * bg1.r, 0.7f * bg0.g + 0.3f * bg1.g, 0.7f * bg0.b + 0.3f * bg1.b};

    // Clutter: a few small faint blobs.
    const int blobs = static_cast<int>(rng.next_int(1, 4));
    for (int i = 0; i < blobs; ++i) {
        const Rgb c = random_color(rng);
        const double cx = rng.next_uniform(0, size), cy = rng.next_uniform(0, size);
        const double rad = rng.next_uniform(0.06, 0.14) * size;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                if (std::hypot(x + 0.5 - cx, y + 0.5 - cy) <= rad) blend(img, y, x, c, 0.35f);
    }

    // Object: random scale, position and rotation, 2x2 supersampled for soft edges.
    const Rgb fg = contrasting_color(bg_mean, rng);
    const double scale = rng.next_uniform(0.28, 0.42) * size;
    const double cx = size * 0.5 + rng.next_uniform(-0.12, 0.12) * size;
    const double cy = size * 0.5 + rng.next_uniform(-0.12, 0.12) * size;
    const double rot = rng.next_uniform(-0.35, 0.35);
    const double cr = std::cos(rot), sr = std::sin(rot);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            int hits = 0;
            for (int sy = 0; sy < 2; ++sy) {
                for (int sx = 0; sx < 2; ++sx) {
                    const double px = (x + 0.25 + 0.5 * sx - cx) / scale;
                    const double py = (y + 0.25 + 0.5 * sy - cy) / scale;
                    hits += inside(cls, cr * px + sr * py, -sr * px + cr * py) ? 1 : 0;
                }
            }
            blend(img, y, x, fg, hits / 4.0f);
        }
    }

    // Sensor-like grain.
    const double grain = rng.next_uniform(0.0, kMaxGrain);
    const std::uint64_t base = rng.counter();
    rng.advance(2 * img.size());
    auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) px[i] += static_cast<float>(grain * rng.gaussian_at(base, i));
    clamp_unit(img);
    return quantize(img);
}

std::vector<LabeledImage> make_dataset(int count, std::uint64_t seed, int size, const std::string& prefix) {
    if (count < 0) throw InvalidArgument("negative dataset size");
    const int classes = static_cast<int>(class_names().size());
    std::vector<LabeledImage> out(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic, 16)
    for (int i = 0; i < count; ++i) {
        const int cls = i % classes;
        CounterRng rng(derive_key(seed, static_cast<std::uint64_t>(i)));
        out[i] = LabeledImage{prefix + "_" + std::to_string(i), draw_object(cls, size, rng), {cls}};
    }
    return out;
}

ImageTensor natural_test_image(int height, int width) {
    ImageTensor img(height, width);
    CounterRng rng(0x5eedULL);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double u = static_cast<double>(x) / (width - 1), v = static_cast<double>(y) / (height - 1);
            // Sky-to-ground gradient, a bright disc, a hard-edged block and fine texture.
            double r = 0.25 + 0.5 * v, g = 0.35 + 0.3 * u, b = 0.8 - 0.5 * v;
            if (std::hypot(u - 0.3, v - 0.3) < 0.18) { r = 0.95; g = 0.85; b = 0.3; }
            if (u > 0.55 && u < 0.85 && v > 0.5 && v < 0.9) { r = 0.2; g = 0.5; b = 0.25; }
            const double tex = 0.06 * std::sin(0.9 * x + 0.4 * y) * std::cos(0.7 * y);
            const double n = 0.02 * rng.gaussian_at(0, static_cast<std::uint64_t>(y) * width + x);
            img.at(y, x, 0) = static_cast<float>(r + tex + n);
            img.at(y, x, 1) = static_cast<float>(g + tex - n);
            img.at(y, x, 2) = static_cast<float>(b - tex + n);
        }
    }
    clamp_unit(img);
    return quantize(img);
}

ImageTensor random_image(int height, int width, CounterRng& rng) {
    ImageTensor img(height, width);
    for (float& v : img.pixels()) v = static_cast<float>(rng.next_double());
    return quantize(img);
}

WrittenDataset write_dataset(const std::string& out_dir, int train_count, int eval_count, std::uint64_t seed,
                             int size) {
    const fs::path root(out_dir);
    WrittenDataset written;
    const std::pair<Split, int> splits[] = {{Split::train, train_count}, {Split::eval, eval_count}};
    for (const auto& [split, count] : splits) {
        const std::string name = to_string(split);
        fs::create_directories(root / name);
        const auto images = make_dataset(count, derive_key(seed, name), size, name);
        DatasetManifest manifest;
        manifest.class_vocabulary = class_names();
        manifest.split = split;
        for (const auto& item : images) {
            const std::string rel = name + "/" + item.image_id + ".png";
            write_file((root / rel).string(), encode_image(item.tensor, PngFormat{}));
            manifest.entries.push_back(ManifestEntry{rel, (root / rel).string(), item.accepted_labels});
        }
        const std::string manifest_path = (root / (name + ".jsonl")).string();
        save_manifest(manifest, manifest_path);
        (split == Split::train ? written.train_manifest : written.eval_manifest) = manifest_path;
    }
    return written;
}

} // namespace devstab::synth
