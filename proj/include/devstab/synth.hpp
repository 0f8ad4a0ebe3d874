#pragma once

#include "devstab/image.hpp"
#include "devstab/manifest.hpp"
#include "devstab/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace devstab::synth {

/// The ten procedural object classes of the desk dataset.
const std::vector<std::string>& class_names();

/// One procedurally drawn object of class `cls` on a cluttered background.
ImageTensor draw_object(int cls, int size, CounterRng& rng);

/// Balanced dataset; image i has class i % classes and id "<prefix>_<i>".
std::vector<LabeledImage> make_dataset(int count, std::uint64_t seed, int size = 32,
                                       const std::string& prefix = "img");

/// Smooth gradients, edges and fine texture: a deterministic stand-in for a photograph.
ImageTensor natural_test_image(int height = 64, int width = 64);

ImageTensor random_image(int height, int width, CounterRng& rng);

struct WrittenDataset {
    std::string train_manifest;
    std::string eval_manifest;
};

/// Writes PNGs plus train/eval manifests under out_dir.
WrittenDataset write_dataset(const std::string& out_dir, int train_count, int eval_count, std::uint64_t seed,
                             int size = 32);

} // namespace devstab::synth
