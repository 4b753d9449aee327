#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "parkocc/dataset.hpp"
#include "parkocc/frameworks.hpp"

namespace parkocc {

struct EvalOutcome {
    std::size_t correct = 0;
    std::size_t total = 0;
    std::size_t occupied = 0;  // ground-truth class counts of the target
    std::size_t empty = 0;

    double accuracy() const noexcept { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

/// Compares predictions with ground truth record by record.
EvalOutcome score_predictions(std::span<const Label> predicted, std::span<const Label> truth);

/**
 * Classifies every target record and scores it against its label. No balancing
 * is applied. Throws DataError("cross-dataset violation") when a target record
 * belongs to one of the source corpora.
 */
EvalOutcome evaluate_framework(const Framework& framework, const std::set<std::string>& source_corpora,
                               std::span<const SampleRecord> target, std::size_t batch_size = 64);

struct RunAggregate {
    double mean = 0.0;
    double std = 0.0;
};

/// Arithmetic mean and population standard deviation; DataError when empty.
RunAggregate aggregate_runs(std::span<const double> values);

/// "mean (std)" in percent with one decimal, e.g. 0.95, 0.05 -> "95.0 (5.0)".
std::string format_cell(double mean, double std);

struct EvalCell {
    std::string framework;  // row name
    std::string backbone;   // row group
    std::string target;     // column
    std::vector<double> accuracies;

    RunAggregate aggregate() const;
};

struct ReportRow {
    std::string backbone;
    std::string framework;
};

/**
 * Grid of (backbone, framework) rows by target columns. Per-cell spread is the
 * population std over seeded runs; the Average column is the mean of the row's
 * cell means with the sample std across target columns.
 */
class EvalReport {
public:
    EvalReport() = default;
    explicit EvalReport(std::string source_dataset) : source_(std::move(source_dataset)) {}

    const std::string& source_dataset() const noexcept { return source_; }

    /// Declares a target column (kept in first-declared order).
    void add_target(const std::string& target);
    /// Appends one run's accuracy to a cell, creating row/column as needed.
    void add_accuracy(const std::string& backbone, const std::string& framework, const std::string& target,
                      double accuracy);
    void set_accuracies(const std::string& backbone, const std::string& framework, const std::string& target,
                        std::vector<double> accuracies);
    void set_class_counts(const std::string& target, std::size_t occupied, std::size_t empty);

    const std::vector<std::string>& targets() const noexcept { return targets_; }
    /// Rows grouped by backbone in first-seen order.
    std::vector<ReportRow> rows() const;
    const EvalCell* cell(const ReportRow& row, const std::string& target) const;
    /// Average column for a row over its present cells; nullopt when the row is empty.
    std::optional<RunAggregate> average(const ReportRow& row) const;

    const std::map<std::string, std::pair<std::size_t, std::size_t>>& class_counts() const noexcept {
        return class_counts_;
    }

    friend void to_json(nlohmann::json& j, const EvalReport& report);
    friend void from_json(const nlohmann::json& j, EvalReport& report);

private:
    EvalCell& cell_for(const std::string& backbone, const std::string& framework, const std::string& target);

    std::string source_;
    std::vector<std::string> targets_;
    std::vector<ReportRow> row_order_;
    std::vector<EvalCell> cells_;
    std::map<std::string, std::pair<std::size_t, std::size_t>> class_counts_;  // occupied, empty
};

enum class ReportFormat { csv, markdown };

/// Pure rendering; missing cells show U+2014 (em dash).
std::string render_report(const EvalReport& report, ReportFormat format);

/// Column label for a target: CAM1 -> "CAM#1", NDISPark -> "NDIS".
std::string target_display_name(const std::string& target);

}  // namespace parkocc
