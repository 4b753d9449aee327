#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>

namespace parkocc {

enum class BackboneFamily { conv3, mobilenetv3_large, resnet50 };

std::string to_string(BackboneFamily family);
/// Accepts "conv3", "mobilenetv3_large"/"mobilenetv3", "resnet50".
BackboneFamily backbone_family_from_string(const std::string& text);
/// Row-group title used in reports.
std::string display_name(BackboneFamily family);

struct BackboneSpec {
    BackboneFamily family = BackboneFamily::conv3;
    int input_size = 32;
    std::vector<int> head;  // hidden dense widths before the output layer
    bool pretrained_features = false;
    bool frozen_features = false;
    int num_outputs = 2;

    /// The canonical spec for a family: conv3 at 32 px trained from scratch,
    /// pretrained families at 128 px with frozen features and a [1024, 128] head.
    static BackboneSpec defaults(BackboneFamily family, int num_outputs = 2);

    /// Throws DataError when the family invariants do not hold.
    void validate() const;

    friend bool operator==(const BackboneSpec&, const BackboneSpec&) = default;
};

struct ParamCount {
    std::int64_t total = 0;
    std::int64_t trainable = 0;
};

/// Per-channel input normalization applied after scaling to [0, 1], RGB order.
struct Normalization {
    std::array<float, 3> mean{0.f, 0.f, 0.f};
    std::array<float, 3> stddev{1.f, 1.f, 1.f};
    std::string name = "unit";

    static Normalization unit();
    static Normalization imagenet();
    friend bool operator==(const Normalization&, const Normalization&) = default;
};

struct ModelMetadata {
    std::vector<std::string> scenario_keys;
    std::uint64_t seed = 0;
    double val_accuracy = 0.0;
    int chosen_epoch = 0;
    std::string pretrain_checkpoint = "none";
    Normalization normalization;
};

/// Row-major probability matrix, one row per input.
struct ProbabilityMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values;

    std::span<const float> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
    float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct BuildOptions {
    /// state_dict exported from the reference implementation (see tools/export_pretrained.py).
    std::optional<std::filesystem::path> pretrained_weights;
    /// Skips the pretrained requirement and keeps randomly initialised features.
    /// Meant for tests and architecture inspection only; recorded in metadata.
    bool allow_random_features = false;
    std::uint64_t init_seed = 0;
};

enum class ParameterGroup { features, head, all };

namespace detail {
struct ModelImpl;
}

/**
 * Handle to a classifier. Copies share the underlying network, which is never
 * mutated after training, so a handle can serve concurrent inference.
 */
class Model {
public:
    Model() = default;
    explicit Model(std::shared_ptr<detail::ModelImpl> impl) : impl_(std::move(impl)) {}

    const BackboneSpec& spec() const;
    const ModelMetadata& metadata() const;
    ModelMetadata& metadata();

    /// Patches must already be spec().input_size square and 8-bit BGR.
    ProbabilityMatrix predict_proba(std::span<const cv::Mat> patches) const;

    ParamCount count_params() const;

    /// Deep copy with independent weights.
    Model clone() const;

    bool valid() const noexcept { return impl_ != nullptr; }
    detail::ModelImpl& impl() const;

private:
    std::shared_ptr<detail::ModelImpl> impl_;
};

/// Looks up pretrained weights for a family in $PARKOCC_PRETRAINED_DIR, if set.
std::optional<std::filesystem::path> find_pretrained_weights(BackboneFamily family);

/// File name expected for a family's exported ImageNet weights.
std::string pretrained_file_name(BackboneFamily family);

/// Builds an untrained model. Pretrained families need weights (explicit or via
/// $PARKOCC_PRETRAINED_DIR) unless allow_random_features is set; otherwise a
/// ModelError explains how to export them.
Model build_model(const BackboneSpec& spec, const BuildOptions& options = {});

ParamCount count_params(const Model& model);
ProbabilityMatrix predict_proba(const Model& model, std::span<const cv::Mat> patches);

/// Writes weights.pt and metadata.json into `dir`.
void save_model(const Model& model, const std::filesystem::path& dir);
Model load_model(const std::filesystem::path& dir);

/// Resizes (area/linear) to a square side; returns a copy when already that size.
cv::Mat resize_patch(const cv::Mat& patch, int side);

// Introspection used by gradient checks and freeze checks.

/// Mean cross-entropy of the model on a batch (inference mode).
double batch_loss(const Model& model, std::span<const cv::Mat> patches, std::span<const int> labels);
/// Weights then bias of the output layer, flattened.
std::vector<float> output_layer_parameters(const Model& model);
void set_output_layer_parameters(Model& model, std::span<const float> values);
/// Analytic gradient of batch_loss with respect to output_layer_parameters.
std::vector<float> output_layer_gradient(const Model& model, std::span<const cv::Mat> patches,
                                         std::span<const int> labels);
/// Concatenation of every parameter in the group, in registration order.
std::vector<float> flat_parameters(const Model& model, ParameterGroup group);
/// Parameter names in registration order (torchvision-compatible for pretrained families).
std::vector<std::string> parameter_names(const Model& model, ParameterGroup group);
/// Backbone output for one patch, before the head: globally averaged for the
/// pretrained families, flattened for conv3.
std::vector<float> backbone_features(const Model& model, const cv::Mat& patch);

void to_json(nlohmann::json& j, const BackboneSpec& spec);
void from_json(const nlohmann::json& j, BackboneSpec& spec);
void to_json(nlohmann::json& j, const ModelMetadata& metadata);
void from_json(const nlohmann::json& j, ModelMetadata& metadata);

}  // namespace parkocc
