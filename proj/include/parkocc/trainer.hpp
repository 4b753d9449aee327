#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "parkocc/augment.hpp"
#include "parkocc/backbones.hpp"
#include "parkocc/patch_source.hpp"
#include "parkocc/split.hpp"

namespace parkocc {

struct TrainConfig {
    int batch_size = 64;
    double initial_lr = 1e-3;
    double lr_factor = 0.1;  // reduce-on-plateau multiplier
    int lr_patience = 3;     // epochs without val improvement before reducing
    int max_epochs = 30;
    int early_stop_patience = 7;
    bool augment_enabled = true;
    AugmentParams augment;
    std::uint64_t seed = 0;
    /// Stacking metas are fitted on validation posteriors instead of training posteriors.
    bool stacking_on_validation = false;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
    double lr = 0.0;
};

struct TrainRun {
    Model model;  // restored to chosen_epoch
    std::vector<EpochRecord> history;
    int chosen_epoch = 0;
    std::uint64_t seed = 0;
    std::string run_id;
};

/// Tracks validation accuracy; best epoch is the first one reaching the maximum.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {}

    /// Feeds the accuracy of the next epoch; returns true when training should stop.
    bool update(double val_acc);
    /// True when the last update set a new best.
    bool improved() const noexcept { return improved_; }
    int best_epoch() const noexcept { return best_epoch_; }
    double best_value() const noexcept { return best_; }
    int epochs_seen() const noexcept { return epoch_; }

private:
    int patience_;
    int epoch_ = 0;
    int best_epoch_ = 0;
    double best_ = -1.0;
    int stale_ = 0;
    bool improved_ = false;
};

/// Reduce-on-plateau schedule over validation accuracy.
class PlateauSchedule {
public:
    PlateauSchedule(double initial_lr, double factor, int patience)
        : lr_(initial_lr), factor_(factor), patience_(patience) {}

    /// Feeds an epoch's metric and returns the learning rate for the next epoch.
    double update(double metric);
    double lr() const noexcept { return lr_; }

private:
    double lr_;
    double factor_;
    int patience_;
    double best_ = -1.0;
    int stale_ = 0;
};

/// Sample visiting order for an epoch; a pure function of (n, seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

/// Optional per-epoch progress callback.
using EpochCallback = std::function<void(const EpochRecord&)>;

/**
 * Trains a private copy of `initial` with Adam on mini-batches, augmenting
 * every training batch, evaluating validation accuracy after each epoch and
 * keeping the weights of the best epoch. Throws DataError on empty train or
 * validation data and TrainingError if the loss stops being finite.
 */
TrainRun train(const Model& initial, const PatchSource& train_data, const PatchSource& val_data,
               const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Concatenated (shuffled) training records and concatenated validation records
/// of several splits, after applying the validation fallback to each split.
struct UnionData {
    std::vector<SampleRecord> train;
    std::vector<SampleRecord> val;
};
UnionData union_of_splits(std::span<const ScenarioSplit> splits, std::uint64_t seed);

/// Builds a model for `spec` and trains it on the union of `splits`.
TrainRun train_on_splits(const BackboneSpec& spec, std::span<const ScenarioSplit> splits, const TrainConfig& config,
                         const BuildOptions& build = {}, bool cache_patches = false);

/// Fraction of argmax predictions equal to the labels.
double accuracy(const Model& model, const PatchSource& data, int batch_size = 64);

/// Writes config.json, history.csv and the model/ directory under `dir`.
void save_run(const TrainRun& run, const TrainConfig& config, const std::filesystem::path& dir);
void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

/// Seeds used by run_seeds: n distinct values derived from the base seed.
std::vector<std::uint64_t> run_seed_list(std::uint64_t base_seed, int n);

/**
 * Repeats the protocol n times with distinct seeds. Every run redoes the
 * temporal split (so the balancing subsample changes), reseeds initialisation,
 * augmentation and batch order, and is persisted under runs_dir/<run_id>.
 */
std::vector<TrainRun> run_seeds(const DatasetIndex& index, const std::vector<std::string>& scenario_keys,
                                const BackboneSpec& spec, const TrainConfig& config_template, int n,
                                const std::optional<std::filesystem::path>& runs_dir, const BuildOptions& build = {});

void to_json(nlohmann::json& j, const TrainConfig& config);
void from_json(const nlohmann::json& j, TrainConfig& config);

}  // namespace parkocc
