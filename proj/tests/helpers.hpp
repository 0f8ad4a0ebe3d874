#pragma once

#include "devstab/image.hpp"
#include "devstab/records.hpp"
#include "devstab/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace testing {

/// Fresh empty directory under the build tree.
inline std::string temp_dir(const std::string& name) {
    const auto dir = std::filesystem::path(DEVSTAB_TEST_TMP) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

/// Uniform random pixels, quantized to 8 bits.
inline devstab::ImageTensor random_image(int h, int w, std::uint64_t seed) {
    devstab::CounterRng rng(seed);
    devstab::ImageTensor img(h, w);
    for (float& v : img.pixels()) v = static_cast<float>(static_cast<int>(rng.next_double() * 256.0) % 256) / 255.0f;
    return img;
}

inline devstab::ImageTensor constant_image(int h, int w, float r, float g, float b) {
    devstab::ImageTensor img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            img.at(y, x, 0) = r;
            img.at(y, x, 1) = g;
            img.at(y, x, 2) = b;
        }
    return img;
}

/// Record whose top-1 is `predicted` (confidence 0.9) followed by the remaining classes.
inline devstab::PredictionRecord record(const std::string& image, const std::string& env, int predicted,
                                        std::vector<int> accepted, int classes = 3) {
    devstab::PredictionRecord r{image, env, {}, std::move(accepted)};
    r.ranked.push_back({predicted, 0.9f});
    for (int c = 0; c < classes; ++c)
        if (c != predicted) r.ranked.push_back({c, 0.1f / static_cast<float>(classes - 1)});
    return r;
}

/// Random record set: every image seen by every environment, random full
/// rankings with descending confidences and 1-2 accepted labels.
inline std::vector<devstab::PredictionRecord> random_records(devstab::CounterRng& rng, int images, int envs,
                                                             int classes) {
    std::vector<devstab::PredictionRecord> out;
    for (int i = 0; i < images; ++i) {
        std::vector<int> accepted{static_cast<int>(rng.next_int(0, classes - 1))};
        if (classes > 1 && rng.next_double() < 0.2) {
            const int extra = static_cast<int>(rng.next_int(0, classes - 1));
            if (extra != accepted[0]) accepted.push_back(extra);
        }
        for (int e = 0; e < envs; ++e) {
            devstab::PredictionRecord r{"img" + std::to_string(i), "env" + std::to_string(e), {}, accepted};
            std::vector<int> order(classes);
            for (int c = 0; c < classes; ++c) order[c] = c;
            for (int c = classes - 1; c > 0; --c) std::swap(order[c], order[rng.next_int(0, c)]);
            float conf = 0.5f + 0.5f * static_cast<float>(rng.next_double());
            for (int c : order) {
                r.ranked.push_back({c, conf});
                conf *= 0.5f;
            }
            out.push_back(std::move(r));
        }
    }
    return out;
}

} // namespace testing
