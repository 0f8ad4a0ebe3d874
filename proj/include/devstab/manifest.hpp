#pragma once

#include "devstab/image.hpp"

#include <string>
#include <vector>

namespace devstab {

enum class Split { train, eval };

struct ManifestEntry {
    std::string path;             ///< as written in the manifest
    std::string resolved_path;    ///< relative paths resolved against the manifest directory
    std::vector<int> labels;      ///< class indices, manifest order preserved
};

struct DatasetManifest {
    std::vector<std::string> class_vocabulary;
    std::vector<ManifestEntry> entries;
    Split split = Split::train;
    std::vector<std::string> warnings;

    int class_count() const { return static_cast<int>(class_vocabulary.size()); }
};

struct LabeledImage {
    std::string image_id;
    ImageTensor tensor;
    std::vector<int> accepted_labels; ///< non-empty; first entry is the training target

    int target() const { return accepted_labels.front(); }
};

/// JSON-lines manifest: a header {"classes": [...], "split": "...", "version": 1}
/// followed by one {"path": "...", "labels": [...]} per line.
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

/// image_id derived from an entry path (the path as written, with separators normalised).
std::string image_id_for(const std::string& entry_path);

std::vector<LabeledImage> load_dataset(const DatasetManifest& manifest);

std::string to_string(Split split);
Split parse_split(const std::string& s);

} // namespace devstab
