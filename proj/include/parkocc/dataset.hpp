#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace parkocc {

enum class DatasetId { PKLot, CNRExt, NDISPark, BarryStreet, Synthetic };

/// Class index convention used everywhere: 0 = empty, 1 = occupied.
enum class Label : int { empty = 0, occupied = 1 };

using Date = std::chrono::year_month_day;

std::string to_string(DatasetId id);
DatasetId dataset_id_from_string(const std::string& text);
/// Accepts the canonical names and common CLI spellings ("pklot", "cnr", "ndis", "barry").
std::optional<DatasetId> parse_dataset_id(const std::string& text);

std::string to_string(Label label);
Label label_from_string(const std::string& text);
constexpr int class_index(Label label) noexcept { return static_cast<int>(label); }

std::string format_date(const Date& day);
/// Parses YYYY-MM-DD; throws DataError otherwise.
Date parse_date(const std::string& text);

struct SampleRecord {
    DatasetId dataset_id = DatasetId::PKLot;
    std::string scenario_key;
    std::string camera_id;
    Date day{};
    std::optional<std::string> timestamp;  // HH:MM[:SS]
    std::string spot_id;
    Label label = Label::empty;
    std::string patch_path;
    std::optional<std::string> weather_tag;
    /// Day was inferred from file modification times rather than a capture timestamp.
    bool synthetic_day = false;

    friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

/// Total order used for deterministic merging: dataset, scenario, camera, day, time, spot, path.
bool record_key_less(const SampleRecord& a, const SampleRecord& b);

/// Temporal order (day, then timestamp), falling back to the record key.
bool temporal_less(const SampleRecord& a, const SampleRecord& b);

/// Evaluation corpus a record belongs to. Real datasets form one corpus each;
/// synthetic scenarios are independent corpora.
std::string corpus_key(const SampleRecord& record);
std::string corpus_key(DatasetId id);

struct ScenarioStats {
    std::size_t occupied = 0;
    std::size_t empty = 0;
    std::vector<Date> days;  // sorted, distinct

    std::size_t total() const noexcept { return occupied + empty; }
    friend bool operator==(const ScenarioStats&, const ScenarioStats&) = default;
};

/// Immutable set of records plus per-scenario label counts and day lists.
class DatasetIndex {
public:
    DatasetIndex() = default;
    explicit DatasetIndex(std::vector<SampleRecord> records);

    const std::vector<SampleRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }

    const std::map<std::string, ScenarioStats>& scenario_stats() const noexcept { return stats_; }
    /// Throws DataError for an unknown scenario.
    const ScenarioStats& stats(const std::string& scenario_key) const;
    bool has_scenario(const std::string& scenario_key) const { return stats_.contains(scenario_key); }
    std::vector<std::string> scenarios() const;

    std::vector<SampleRecord> scenario_records(const std::string& scenario_key) const;

    friend bool operator==(const DatasetIndex& a, const DatasetIndex& b) { return a.records_ == b.records_; }

private:
    std::vector<SampleRecord> records_;
    std::map<std::string, ScenarioStats> stats_;
};

/// Recounts labels and days straight from a record list.
std::map<std::string, ScenarioStats> compute_stats(const std::vector<SampleRecord>& records);

/// JSON-lines manifest, one SampleRecord per line.
void write_manifest(const DatasetIndex& index, const std::filesystem::path& path);
void write_manifest(const std::vector<SampleRecord>& records, const std::filesystem::path& path);
/// Throws DataError naming the line number of the first malformed line.
DatasetIndex read_manifest(const std::filesystem::path& path);

std::string record_to_json_line(const SampleRecord& record);
SampleRecord record_from_json_line(const std::string& line);

}  // namespace parkocc
