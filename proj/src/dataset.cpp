#include "parkocc/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <tuple>

#include <json.hpp>

#include "parkocc/errors.hpp"

namespace parkocc {

std::string to_string(DatasetId id) {
    switch (id) {
        case DatasetId::PKLot: return "PKLot";
        case DatasetId::CNRExt: return "CNRExt";
        case DatasetId::NDISPark: return "NDISPark";
        case DatasetId::BarryStreet: return "BarryStreet";
        case DatasetId::Synthetic: return "Synthetic";
    }
    return "PKLot";
}

DatasetId dataset_id_from_string(const std::string& text) {
    for (auto id : {DatasetId::PKLot, DatasetId::CNRExt, DatasetId::NDISPark, DatasetId::BarryStreet,
                    DatasetId::Synthetic}) {
        if (to_string(id) == text) return id;
    }
    throw DataError("unknown dataset id '" + text + "'");
}

std::optional<DatasetId> parse_dataset_id(const std::string& text) {
    std::string t;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) t += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (t == "pklot") return DatasetId::PKLot;
    if (t == "cnrext" || t == "cnr" || t == "cnrpark" || t == "cnrparkext") return DatasetId::CNRExt;
    if (t == "ndispark" || t == "ndis") return DatasetId::NDISPark;
    if (t == "barrystreet" || t == "barry") return DatasetId::BarryStreet;
    if (t == "synthetic" || t == "synth") return DatasetId::Synthetic;
    return std::nullopt;
}

std::string to_string(Label label) { return label == Label::occupied ? "occupied" : "empty"; }

Label label_from_string(const std::string& text) {
    if (text == "occupied") return Label::occupied;
    if (text == "empty") return Label::empty;
    throw DataError("unknown label '" + text + "'");
}

std::string format_date(const Date& day) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(day.year()),
                  static_cast<unsigned>(day.month()), static_cast<unsigned>(day.day()));
    return buf;
}

Date parse_date(const std::string& text) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    if (text.size() != 10 || std::sscanf(text.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3 || text[4] != '-' ||
        text[7] != '-') {
        throw DataError("invalid date '" + text + "' (expected YYYY-MM-DD)");
    }
    const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!date.ok()) throw DataError("invalid calendar date '" + text + "'");
    return date;
}

namespace {

auto key_tuple(const SampleRecord& r) {
    return std::tie(r.dataset_id, r.scenario_key, r.camera_id, r.day, r.timestamp, r.spot_id, r.patch_path);
}

}  // namespace

bool record_key_less(const SampleRecord& a, const SampleRecord& b) { return key_tuple(a) < key_tuple(b); }

bool temporal_less(const SampleRecord& a, const SampleRecord& b) {
    const auto ta = a.timestamp.value_or("");
    const auto tb = b.timestamp.value_or("");
    if (a.day != b.day) return a.day < b.day;
    if (ta != tb) return ta < tb;
    return record_key_less(a, b);
}

std::string corpus_key(DatasetId id) { return to_string(id); }

std::string corpus_key(const SampleRecord& record) {
    if (record.dataset_id == DatasetId::Synthetic) return "Synthetic/" + record.scenario_key;
    return corpus_key(record.dataset_id);
}

std::map<std::string, ScenarioStats> compute_stats(const std::vector<SampleRecord>& records) {
    std::map<std::string, ScenarioStats> stats;
    std::map<std::string, std::set<Date>> days;
    for (const auto& r : records) {
        auto& s = stats[r.scenario_key];
        (r.label == Label::occupied ? s.occupied : s.empty) += 1;
        days[r.scenario_key].insert(r.day);
    }
    for (auto& [key, s] : stats) s.days.assign(days[key].begin(), days[key].end());
    return stats;
}

DatasetIndex::DatasetIndex(std::vector<SampleRecord> records)
    : records_(std::move(records)), stats_(compute_stats(records_)) {}

const ScenarioStats& DatasetIndex::stats(const std::string& scenario_key) const {
    auto it = stats_.find(scenario_key);
    if (it == stats_.end()) throw DataError("unknown scenario '" + scenario_key + "'");
    return it->second;
}

std::vector<std::string> DatasetIndex::scenarios() const {
    std::vector<std::string> keys;
    keys.reserve(stats_.size());
    for (const auto& [key, _] : stats_) keys.push_back(key);
    return keys;
}

std::vector<SampleRecord> DatasetIndex::scenario_records(const std::string& scenario_key) const {
    std::vector<SampleRecord> out;
    for (const auto& r : records_) {
        if (r.scenario_key == scenario_key) out.push_back(r);
    }
    return out;
}

namespace {

nlohmann::json optional_json(const std::optional<std::string>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<std::string> optional_field(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
}

}  // namespace

std::string record_to_json_line(const SampleRecord& r) {
    nlohmann::ordered_json j;
    j["dataset_id"] = to_string(r.dataset_id);
    j["scenario_key"] = r.scenario_key;
    j["camera_id"] = r.camera_id;
    j["day"] = format_date(r.day);
    j["timestamp"] = optional_json(r.timestamp);
    j["spot_id"] = r.spot_id;
    j["label"] = to_string(r.label);
    j["patch_path"] = r.patch_path;
    j["weather_tag"] = optional_json(r.weather_tag);
    j["synthetic_day"] = r.synthetic_day;
    return j.dump();
}

SampleRecord record_from_json_line(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw DataError("record is not a JSON object");
    try {
        SampleRecord r;
        r.dataset_id = dataset_id_from_string(j.at("dataset_id").get<std::string>());
        r.scenario_key = j.at("scenario_key").get<std::string>();
        r.camera_id = j.at("camera_id").get<std::string>();
        r.day = parse_date(j.at("day").get<std::string>());
        r.timestamp = optional_field(j, "timestamp");
        r.spot_id = j.at("spot_id").get<std::string>();
        r.label = label_from_string(j.at("label").get<std::string>());
        r.patch_path = j.at("patch_path").get<std::string>();
        r.weather_tag = optional_field(j, "weather_tag");
        r.synthetic_day = j.value("synthetic_day", false);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad record field: ") + e.what());
    }
}

void write_manifest(const std::vector<SampleRecord>& records, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        if (!out) throw Error("cannot write manifest " + tmp.string());
        for (const auto& r : records) out << record_to_json_line(r) << '\n';
        if (!out) throw Error("cannot write manifest " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_manifest(const DatasetIndex& index, const std::filesystem::path& path) {
    write_manifest(index.records(), path);
}

DatasetIndex read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open manifest " + path.string());
    std::vector<SampleRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        try {
            records.push_back(record_from_json_line(line));
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return DatasetIndex(std::move(records));
}

}  // namespace parkocc
