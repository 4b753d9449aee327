#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "parkocc/backbones.hpp"
#include "parkocc/evaluator.hpp"
#include "parkocc/meta.hpp"
#include "parkocc/trainer.hpp"

namespace parkocc {

/// A report column group drawn from one target manifest.
struct TargetSpec {
    std::filesystem::path manifest;
    /// Scenarios to use; empty means all of them.
    std::vector<std::string> scenarios;
    /// One column per scenario instead of one column for the whole selection.
    bool per_scenario = false;
    /// Column name when not per_scenario; defaults to the dataset name.
    std::string label;
};

/// Framework columns of a report, in the order rows should appear.
enum class FrameworkChoice { single_model, dynamic_selection, majority_vote, stacking_svm, stacking_mlp };

std::string to_string(FrameworkChoice choice);
FrameworkChoice framework_choice_from_string(const std::string& text);

/**
 * Cross-dataset protocol: for every backbone and seeded run, split each source
 * scenario by day, train the single model, the pool and the requested
 * meta-models, then score every framework on every target column.
 */
struct ExperimentConfig {
    std::string id = "experiment";
    std::filesystem::path source_manifest;
    /// Empty means every scenario of the source manifest with at least 3 days.
    std::vector<std::string> source_scenarios;
    std::vector<TargetSpec> targets;
    std::vector<BackboneSpec> backbones{BackboneSpec::defaults(BackboneFamily::conv3)};
    std::vector<FrameworkChoice> frameworks{FrameworkChoice::single_model, FrameworkChoice::dynamic_selection,
                                            FrameworkChoice::majority_vote, FrameworkChoice::stacking_svm,
                                            FrameworkChoice::stacking_mlp};
    int runs = 10;
    std::uint64_t seed = 0;
    TrainConfig train;
    SvmSettings svm;
    MlpSettings mlp;
    /// Directory for report.{json,csv,md} and, when save_models is set, trained artifacts.
    std::filesystem::path out_dir = "runs/experiment";
    bool save_models = false;
    bool cache_patches = true;
    /// Lets pretrained families run without ImageNet weights (architecture checks only).
    bool allow_random_features = false;
};

void to_json(nlohmann::json& j, const ExperimentConfig& config);
void from_json(const nlohmann::json& j, ExperimentConfig& config);

/**
 * Records used to score a target scenario: the temporal test split for
 * datasets that define one (PKLot, CNR-EXT) when the scenario has at least 3
 * days, the whole scenario otherwise.
 */
std::vector<SampleRecord> evaluation_records(const DatasetIndex& index, const std::string& scenario_key,
                                             std::uint64_t seed);

/// Receives the report after every completed run so progress is never lost.
using ReportCallback = std::function<void(const EvalReport&)>;

EvalReport run_experiment(const ExperimentConfig& config, const ReportCallback& on_run = {});

/// Writes report.json, report.csv and report.md into `dir`.
void write_report_files(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace parkocc
