#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>

#include "parkocc/backbones.hpp"
#include "parkocc/dataset.hpp"
#include "parkocc/split.hpp"
#include "parkocc/trainer.hpp"

namespace parkocc {

/// Per-member posterior layout inside a PosteriorVector.
inline constexpr const char* kPosteriorOrder = "empty,occupied";

/// Ordered collection of per-scenario classifiers. Order is fixed at creation
/// and defines the layout of posterior vectors.
class Pool {
public:
    Pool() = default;
    /// Throws DataError for fewer than 2 members or duplicate scenario keys.
    explicit Pool(std::vector<std::pair<std::string, Model>> members);

    std::size_t size() const noexcept { return keys_.size(); }
    const std::vector<std::string>& scenario_keys() const noexcept { return keys_; }
    const Model& member(std::size_t i) const { return models_.at(i); }
    const std::vector<Model>& members() const noexcept { return models_; }

private:
    std::vector<std::string> keys_;
    std::vector<Model> models_;
};

/// Length 2n: [p1(empty), p1(occupied), p2(empty), ...] in pool order.
using PosteriorVector = std::vector<float>;

/// Posterior vectors for a batch, one row of 2n values per patch.
ProbabilityMatrix posterior_matrix(const Pool& pool, std::span<const cv::Mat> patches);
PosteriorVector posterior_vector(const Pool& pool, const cv::Mat& patch);

struct VoteTally {
    int occupied_votes = 0;
    int empty_votes = 0;
    double mean_occupied = 0.0;  // mean member posterior for occupied
    double mean_empty = 0.0;
    bool tie_broken = false;
};

struct VoteDecision {
    Label label = Label::occupied;
    VoteTally tally;
};

/**
 * Majority vote over a posterior vector. Each member votes for its argmax
 * (an exact 0.5/0.5 member votes occupied); more votes win. A vote tie goes to
 * the class with the higher mean posterior, and an exact tie there to occupied.
 */
VoteDecision majority_vote(std::span<const float> posteriors);
VoteDecision majority_vote(const Pool& pool, const cv::Mat& patch);

/// Trains one member per split (each on its own scenario only).
Pool train_pool(std::span<const ScenarioSplit> source_scenarios, const BackboneSpec& spec, const TrainConfig& config,
                const BuildOptions& build = {}, bool cache_patches = false);

/// Single model trained on the union of all source scenarios.
Model build_single_model(std::span<const ScenarioSplit> source_scenarios, const BackboneSpec& spec,
                         const TrainConfig& config, const BuildOptions& build = {}, bool cache_patches = false);

/// Pool directory: pool.json plus members/<index>_<scenario>/ model directories.
void save_pool(const Pool& pool, const std::filesystem::path& dir);
Pool load_pool(const std::filesystem::path& dir);

}  // namespace parkocc
