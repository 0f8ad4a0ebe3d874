#include "devstab/records.hpp"

#include "devstab/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

namespace devstab {

using nlohmann::json;

namespace {

constexpr const char* kSchemaName = "devstab.records";

std::string format_confidence(float v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
    return buf;
}

} // namespace

void sort_records(std::vector<PredictionRecord>& records) {
    std::sort(records.begin(), records.end(), [](const PredictionRecord& a, const PredictionRecord& b) {
        return std::tie(a.image_id, a.environment_id) < std::tie(b.image_id, b.environment_id);
    });
}

std::string serialize_records(const std::vector<PredictionRecord>& records) {
    if (records.empty()) return {};
    std::ostringstream out;
    out << json{{"schema", kSchemaName}, {"version", kRecordsSchemaVersion}}.dump() << '\n';
    for (const auto& r : records) {
        out << "{\"image_id\":" << json(r.image_id).dump() << ",\"env_id\":" << json(r.environment_id).dump()
            << ",\"ranked\":[";
        for (std::size_t i = 0; i < r.ranked.size(); ++i) {
            if (i) out << ',';
            out << '[' << r.ranked[i].class_index << ',' << format_confidence(r.ranked[i].confidence) << ']';
        }
        out << "],\"accepted\":[";
        for (std::size_t i = 0; i < r.accepted_labels.size(); ++i) {
            if (i) out << ',';
            out << r.accepted_labels[i];
        }
        out << "]}\n";
    }
    return out.str();
}

std::vector<PredictionRecord> parse_records(const std::string& text) {
    std::vector<PredictionRecord> records;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "records line " + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(where + ": " + e.what());
        }
        if (!have_header) {
            if (!j.is_object() || j.value("schema", std::string()) != kSchemaName) {
                throw ParseError(where + ": missing records schema header");
            }
            const int version = j.value("version", -1);
            if (version != kRecordsSchemaVersion) {
                throw ParseError("records schema version mismatch: found " + std::to_string(version) +
                                 ", expected " + std::to_string(kRecordsSchemaVersion));
            }
            have_header = true;
            continue;
        }
        try {
            PredictionRecord r;
            r.image_id = j.at("image_id").get<std::string>();
            r.environment_id = j.at("env_id").get<std::string>();
            for (const auto& pair : j.at("ranked")) {
                r.ranked.push_back({pair.at(0).get<int>(), static_cast<float>(pair.at(1).get<double>())});
            }
            r.accepted_labels = j.at("accepted").get<std::vector<int>>();
            if (r.ranked.empty()) throw ParseError("empty ranking");
            records.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw ParseError(where + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(where + ": " + e.what());
        }
    }
    return records;
}

std::size_t save_records(const std::vector<PredictionRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write records " + path);
    out << serialize_records(records);
    if (!out) throw IoError("write failed: " + path);
    return records.size();
}

std::vector<PredictionRecord> load_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open records " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_records(ss.str());
}

} // namespace devstab
