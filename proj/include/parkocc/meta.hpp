#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "parkocc/backbones.hpp"
#include "parkocc/pool.hpp"

namespace parkocc {

enum class MetaKind { stacking_svm, stacking_mlp, dynse_selector };

std::string to_string(MetaKind kind);
MetaKind meta_kind_from_string(const std::string& text);

/// Stacking SVM settings: RBF kernel with C = 0.1. gamma <= 0 means
/// 1 / (n_features * variance of the training features).
struct SvmSettings {
    double c = 0.1;
    double gamma = 0.0;
};

/// Stacking MLP settings: hidden widths 16 and 8 followed by a 2-way softmax.
struct MlpSettings {
    std::vector<int> layers{16, 8, 2};
    int epochs = 100;
    int batch_size = 64;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

/// Explicit MLP weights, row-major [out x in] matrices.
struct MlpWeights {
    std::vector<std::vector<float>> weights;
    std::vector<std::vector<float>> biases;
};

namespace detail {
struct MetaImpl;
}

/// Meta-model sitting on top of a pool: a stacking classifier over posterior
/// vectors or a dynamic-selection router over image patches.
class MetaModel {
public:
    MetaModel() = default;
    MetaModel(MetaKind kind, std::vector<std::string> pool_signature, std::shared_ptr<const detail::MetaImpl> impl);

    MetaKind kind() const noexcept { return kind_; }
    const std::vector<std::string>& pool_signature() const noexcept { return signature_; }
    /// Expected posterior-vector length for stacking kinds.
    std::size_t input_dimension() const noexcept { return 2 * signature_.size(); }

    /// Stacking kinds: predicted label for each row of posterior vectors.
    std::vector<Label> predict_posteriors(const ProbabilityMatrix& posteriors) const;
    /// Stacking kinds: confidence in [0.5, 1] of each prediction.
    std::vector<double> confidence_posteriors(const ProbabilityMatrix& posteriors) const;

    /// Selector: scores over pool members for each patch (rows sum to 1).
    ProbabilityMatrix selector_scores(std::span<const cv::Mat> patches) const;
    /// Selector: underlying network.
    const Model& selector_model() const;

    /// MLP layer widths (stacking_mlp only).
    std::vector<int> mlp_layer_widths() const;

    const detail::MetaImpl& impl() const;

private:
    MetaKind kind_ = MetaKind::stacking_svm;
    std::vector<std::string> signature_;
    std::shared_ptr<const detail::MetaImpl> impl_;
};

/// Fits a stacking meta directly on posterior vectors (rows) and labels.
MetaModel fit_stacking_meta(const ProbabilityMatrix& posteriors, std::span<const Label> labels,
                            std::vector<std::string> pool_signature, MetaKind kind, const SvmSettings& svm = {},
                            const MlpSettings& mlp = {});

/**
 * Computes the pool's posterior vector for every training patch and fits the
 * meta on them. Records from scenarios outside the pool are allowed but logged.
 */
MetaModel train_stacking_meta(const Pool& pool, std::span<const SampleRecord> train_records, MetaKind kind,
                              const SvmSettings& svm = {}, const MlpSettings& mlp = {});

/// MLP meta with caller-provided weights (layer widths taken from the weights).
MetaModel make_mlp_meta(std::vector<std::string> pool_signature, MlpWeights weights);

/// Throws ModelError when the meta was trained against a different pool.
void check_signature(const Pool& pool, const MetaModel& meta);

Label stacking_predict(const Pool& pool, const MetaModel& meta, const cv::Mat& patch);

/**
 * Trains a scenario-identity classifier over the pool's source scenarios with
 * the pool's backbone family: patches of split k are labelled k.
 */
MetaModel train_dynse_selector(std::span<const ScenarioSplit> source_scenarios, const BackboneSpec& spec,
                               const TrainConfig& config, const BuildOptions& build = {},
                               bool cache_patches = false);

/// Wraps an existing n-way model as a selector for the given pool signature.
MetaModel make_dynse_selector(std::vector<std::string> pool_signature, Model selector);

/// Index of the highest score; ties go to the lowest index.
std::size_t select_member(std::span<const float> scores);

struct DynseDecision {
    Label label = Label::occupied;
    std::size_t member = 0;
    double confidence = 0.5;
};

DynseDecision dynse_predict(const Pool& pool, const MetaModel& selector, const cv::Mat& patch);

void save_meta(const MetaModel& meta, const std::filesystem::path& dir);
MetaModel load_meta(const std::filesystem::path& dir);

}  // namespace parkocc
