#include "devstab/manifest.hpp"

#include "devstab/codec.hpp"
#include "devstab/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

namespace devstab {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split split) {
    return split == Split::train ? "train" : "eval";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "eval") return Split::eval;
    throw ParseError("unknown split '" + s + "' (expected train or eval)");
}

std::string image_id_for(const std::string& entry_path) {
    std::string id = entry_path;
    std::replace(id.begin(), id.end(), '\\', '/');
    return id;
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("manifest not found: " + path);
    const fs::path base = fs::path(path).parent_path();

    DatasetManifest manifest;
    std::map<std::string, int> class_index;
    std::set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(where + ": malformed line: " + e.what());
        }
        if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
        if (!have_header) {
            if (!j.contains("classes") || !j["classes"].is_array()) {
                throw ParseError(where + ": header must carry a \"classes\" array");
            }
            const int version = j.value("version", 0);
            if (version != 1) throw ParseError(where + ": unsupported manifest version " + std::to_string(version));
            for (const auto& c : j["classes"]) {
                if (!c.is_string()) throw ParseError(where + ": class names must be strings");
                const std::string name = c.get<std::string>();
                if (class_index.contains(name)) throw ParseError(where + ": duplicate class '" + name + "'");
                class_index[name] = static_cast<int>(manifest.class_vocabulary.size());
                manifest.class_vocabulary.push_back(name);
            }
            try {
                manifest.split = parse_split(j.value("split", std::string("train")));
            } catch (const ParseError& e) {
                throw ParseError(where + ": " + e.what());
            }
            have_header = true;
            continue;
        }
        if (!j.contains("path") || !j["path"].is_string()) throw ParseError(where + ": entry needs a \"path\" string");
        if (!j.contains("labels") || !j["labels"].is_array() || j["labels"].empty()) {
            throw ParseError(where + ": entry needs a non-empty \"labels\" array");
        }
        ManifestEntry entry;
        entry.path = j["path"].get<std::string>();
        const fs::path p(entry.path);
        entry.resolved_path = (p.is_absolute() ? p : base / p).lexically_normal().string();
        for (const auto& l : j["labels"]) {
            if (!l.is_string()) throw ParseError(where + ": label names must be strings");
            const auto it = class_index.find(l.get<std::string>());
            if (it == class_index.end()) {
                throw ParseError(where + ": unknown label '" + l.get<std::string>() + "' in entry " + entry.path);
            }
            if (std::find(entry.labels.begin(), entry.labels.end(), it->second) == entry.labels.end()) {
                entry.labels.push_back(it->second);
            }
        }
        if (!seen_ids.insert(image_id_for(entry.path)).second) {
            throw ParseError(where + ": duplicate image id " + image_id_for(entry.path));
        }
        manifest.entries.push_back(std::move(entry));
    }
    if (!have_header) throw ParseError(path + ": manifest has no header line");
    if (manifest.entries.empty()) manifest.warnings.push_back(path + ": manifest has no entries");
    return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + path);
    json header = {{"classes", manifest.class_vocabulary}, {"split", to_string(manifest.split)}, {"version", 1}};
    out << header.dump() << '\n';
    for (const auto& e : manifest.entries) {
        json labels = json::array();
        for (int l : e.labels) labels.push_back(manifest.class_vocabulary.at(l));
        out << json{{"path", e.path}, {"labels", labels}}.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

std::vector<LabeledImage> load_dataset(const DatasetManifest& manifest) {
    std::vector<LabeledImage> images(manifest.entries.size());
    std::vector<std::string> errors(manifest.entries.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& e = manifest.entries[i];
        try {
            images[i] = LabeledImage{image_id_for(e.path), load_image(e.resolved_path), e.labels};
        } catch (const std::exception& ex) {
            errors[i] = ex.what();
        }
    }
    for (const auto& err : errors) {
        if (!err.empty()) throw IoError(err);
    }
    return images;
}

} // namespace devstab
