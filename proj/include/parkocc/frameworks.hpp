#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>

#include "parkocc/dataset.hpp"
#include "parkocc/meta.hpp"
#include "parkocc/pool.hpp"

namespace parkocc {

enum class FrameworkKind { single_model, dynamic_selection, stacking, majority_vote };

std::string to_string(FrameworkKind kind);
FrameworkKind framework_kind_from_string(const std::string& text);

struct Decision {
    Label label = Label::occupied;
    double confidence = 0.5;  // in [0.5, 1]
};

/// A complete inference route from patch to occupancy label.
class Framework {
public:
    virtual ~Framework() = default;

    virtual FrameworkKind kind() const = 0;
    /// Report row name, e.g. "Majority Vote" or "Stacking (SVM)".
    virtual std::string name() const = 0;
    /// Any patch size; each model resizes to its own input.
    virtual std::vector<Decision> classify(std::span<const cv::Mat> patches) const = 0;
};

std::shared_ptr<const Framework> make_single_model_framework(Model model);
std::shared_ptr<const Framework> make_majority_vote_framework(Pool pool);
std::shared_ptr<const Framework> make_stacking_framework(Pool pool, MetaModel meta);
std::shared_ptr<const Framework> make_dynse_framework(Pool pool, MetaModel selector);

/// Where a framework's artifacts live on disk.
struct FrameworkSelection {
    FrameworkKind kind = FrameworkKind::single_model;
    std::filesystem::path model_dir;  // single_model
    std::filesystem::path pool_dir;   // pool-based kinds
    std::filesystem::path meta_dir;   // stacking / dynamic_selection
};

/// Loads the artifacts named by the selection; DataError when something is missing.
std::shared_ptr<const Framework> load_framework(const FrameworkSelection& selection);

void to_json(nlohmann::json& j, const FrameworkSelection& selection);
void from_json(const nlohmann::json& j, FrameworkSelection& selection);

}  // namespace parkocc
