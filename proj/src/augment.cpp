#include "parkocc/augment.hpp"

#include <opencv2/imgproc.hpp>

#include "parkocc/errors.hpp"
#include "parkocc/rng.hpp"

namespace parkocc {

void AugmentParams::validate() const {
    if (!(rotation_deg >= 0.0)) throw DataError("rotation range must be non-negative");
    if (!(brightness.lo <= 1.0 && 1.0 <= brightness.hi)) throw DataError("brightness range must contain 1.0");
    if (!(contrast.lo <= 1.0 && 1.0 <= contrast.hi)) throw DataError("contrast range must contain 1.0");
    if (brightness.lo < 0.0 || contrast.lo < 0.0) throw DataError("factors must be non-negative");
    if (!(apply_probability >= 0.0 && apply_probability <= 1.0)) {
        throw DataError("apply_probability must lie in [0, 1]");
    }
}

AugmentParams AugmentParams::identity() {
    AugmentParams p;
    p.rotation_deg = 0.0;
    p.brightness = {1.0, 1.0};
    p.contrast = {1.0, 1.0};
    return p;
}

AugmentDraw draw_augmentation(const AugmentParams& params, std::uint64_t step, std::size_t index) {
    Rng rng(derive_seed(params.seed, step, index));
    AugmentDraw d;
    // Fixed draw order keeps every value a function of (seed, step, index).
    d.rotate = rng.bernoulli(params.apply_probability);
    d.angle_deg = rng.uniform(-params.rotation_deg, params.rotation_deg);
    d.adjust_brightness = rng.bernoulli(params.apply_probability);
    d.brightness = rng.uniform(params.brightness.lo, params.brightness.hi);
    d.adjust_contrast = rng.bernoulli(params.apply_probability);
    d.contrast = rng.uniform(params.contrast.lo, params.contrast.hi);
    if (!d.rotate) d.angle_deg = 0.0;
    if (!d.adjust_brightness) d.brightness = 1.0;
    if (!d.adjust_contrast) d.contrast = 1.0;
    return d;
}

cv::Mat apply_augmentation(const cv::Mat& patch, const AugmentDraw& draw) {
    cv::Mat out = patch.clone();
    if (draw.angle_deg != 0.0) {
        const cv::Point2f center(out.cols / 2.0f, out.rows / 2.0f);
        const cv::Mat m = cv::getRotationMatrix2D(center, draw.angle_deg, 1.0);
        cv::Mat rotated;
        cv::warpAffine(out, rotated, m, out.size(), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
        out = rotated;
    }
    if (draw.brightness != 1.0) {
        out.convertTo(out, -1, draw.brightness, 0.0);
    }
    if (draw.contrast != 1.0) {
        const cv::Scalar channel_mean = cv::mean(out);
        double mean = 0.0;
        for (int c = 0; c < out.channels(); ++c) mean += channel_mean[c] / out.channels();
        out.convertTo(out, -1, draw.contrast, mean * (1.0 - draw.contrast));
    }
    return out;
}

std::vector<LabeledPatch> augment_batch(std::span<const LabeledPatch> batch, const AugmentParams& params,
                                        std::uint64_t step, std::vector<AugmentDraw>* log) {
    params.validate();
    std::vector<LabeledPatch> out;
    if (batch.empty()) return out;
    const cv::Size size = batch.front().first.size();
    const int type = batch.front().first.type();
    for (const auto& [patch, label] : batch) {
        if (patch.size() != size || patch.type() != type) throw DataError("augment_batch: patches differ in size or type");
    }
    out.reserve(batch.size());
    if (log) log->clear();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const AugmentDraw draw = draw_augmentation(params, step, i);
        if (log) log->push_back(draw);
        out.emplace_back(apply_augmentation(batch[i].first, draw), batch[i].second);
    }
    return out;
}

void to_json(nlohmann::json& j, const AugmentParams& p) {
    j = nlohmann::json{{"rotation_deg", p.rotation_deg},
                       {"brightness", {p.brightness.lo, p.brightness.hi}},
                       {"contrast", {p.contrast.lo, p.contrast.hi}},
                       {"apply_probability", p.apply_probability},
                       {"seed", p.seed},
                       {"rotate_before_resize", true}};
}

void from_json(const nlohmann::json& j, AugmentParams& p) {
    p.rotation_deg = j.value("rotation_deg", p.rotation_deg);
    if (j.contains("brightness")) p.brightness = {j["brightness"].at(0).get<double>(), j["brightness"].at(1).get<double>()};
    if (j.contains("contrast")) p.contrast = {j["contrast"].at(0).get<double>(), j["contrast"].at(1).get<double>()};
    p.apply_probability = j.value("apply_probability", p.apply_probability);
    p.seed = j.value("seed", p.seed);
}

}  // namespace parkocc
