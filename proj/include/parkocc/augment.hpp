#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>

namespace parkocc {

struct Interval {
    double lo = 1.0;
    double hi = 1.0;

    bool contains(double v) const noexcept { return lo <= v && v <= hi; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Per-batch photometric and geometric jitter. Rotation is applied at patch
/// resolution, before resizing to the network input.
struct AugmentParams {
    double rotation_deg = 15.0;  // symmetric range [-r, r]
    Interval brightness{0.7, 1.3};
    Interval contrast{0.7, 1.3};
    double apply_probability = 0.5;  // per transform
    std::uint64_t seed = 0;

    /// Throws DataError when a range excludes the identity or the probability is out of [0, 1].
    void validate() const;

    /// All ranges collapsed to the identity.
    static AugmentParams identity();

    friend bool operator==(const AugmentParams&, const AugmentParams&) = default;
};

/// Transform parameters drawn for one patch.
struct AugmentDraw {
    bool rotate = false;
    double angle_deg = 0.0;
    bool adjust_brightness = false;
    double brightness = 1.0;
    bool adjust_contrast = false;
    double contrast = 1.0;
};

using LabeledPatch = std::pair<cv::Mat, int>;

/// Draws depend only on (params.seed, step, index).
AugmentDraw draw_augmentation(const AugmentParams& params, std::uint64_t step, std::size_t index);

/// Rotation (reflected borders), then brightness scaling, then contrast around the mean.
cv::Mat apply_augmentation(const cv::Mat& patch, const AugmentDraw& draw);

/**
 * Augments every patch independently. Labels pass through untouched and the
 * output has the input's shape. Patches must share one size (DataError
 * otherwise). When `log` is given it receives the draw for each patch.
 */
std::vector<LabeledPatch> augment_batch(std::span<const LabeledPatch> batch, const AugmentParams& params,
                                        std::uint64_t step, std::vector<AugmentDraw>* log = nullptr);

void to_json(nlohmann::json& j, const AugmentParams& params);
void from_json(const nlohmann::json& j, AugmentParams& params);

}  // namespace parkocc
