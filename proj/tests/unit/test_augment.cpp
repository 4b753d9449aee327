#include <doctest.h>

#include <cmath>

#include <opencv2/imgproc.hpp>

#include "parkocc/augment.hpp"
#include "parkocc/errors.hpp"
#include "test_support.hpp"

using namespace parkocc;

namespace {

std::vector<LabeledPatch> make_batch(std::size_t n, int size) {
    std::vector<LabeledPatch> batch;
    for (std::size_t i = 0; i < n; ++i) {
        batch.emplace_back(parkocc::testing::random_image(size, size, i + 1), static_cast<int>(i % 2));
    }
    return batch;
}

}  // namespace

TEST_SUITE("augment") {

TEST_CASE("identity parameters leave every patch untouched") {
    const auto batch = make_batch(8, 24);
    const auto out = augment_batch(batch, AugmentParams::identity(), 3);
    REQUIRE(out.size() == batch.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i].second == batch[i].second);
        CHECK(cv::norm(out[i].first, batch[i].first, cv::NORM_INF) == 0);
    }
}

TEST_CASE("shape and labels are preserved; draws stay inside their ranges") {
    AugmentParams p;
    p.seed = 17;
    const auto batch = make_batch(64, 20);
    std::vector<AugmentDraw> draws;
    const auto out = augment_batch(batch, p, 5, &draws);
    REQUIRE(draws.size() == batch.size());
    int rotated = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i].first.size() == batch[i].first.size());
        CHECK(out[i].first.type() == batch[i].first.type());
        CHECK(out[i].second == batch[i].second);
        CHECK(std::abs(draws[i].angle_deg) <= p.rotation_deg);
        CHECK(p.brightness.contains(draws[i].brightness));
        CHECK(p.contrast.contains(draws[i].contrast));
        rotated += draws[i].rotate;
    }
    // p = 0.5 over 64 patches: far from 0 or 64
    CHECK(rotated > 10);
    CHECK(rotated < 54);
}

TEST_CASE("draws depend only on seed, step and index") {
    AugmentParams p;
    p.seed = 1;
    const auto a = draw_augmentation(p, 4, 2);
    const auto b = draw_augmentation(p, 4, 2);
    CHECK(a.angle_deg == b.angle_deg);
    CHECK(a.brightness == b.brightness);
    CHECK(a.contrast == b.contrast);
    const auto batch = make_batch(4, 16);
    const auto x = augment_batch(batch, p, 4);
    const auto y = augment_batch(batch, p, 4);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(cv::norm(x[i].first, y[i].first, cv::NORM_INF) == 0);
    bool any_differs = false;
    for (std::size_t i = 0; i < 16; ++i) {
        any_differs |= draw_augmentation(p, 4, i).angle_deg != draw_augmentation(p, 5, i).angle_deg;
    }
    CHECK(any_differs);
}

TEST_CASE("photometric adjustments follow their pixel formulas") {
    const cv::Mat patch = parkocc::testing::random_image(12, 9, 5);
    AugmentDraw d;
    d.adjust_brightness = true;
    d.brightness = 1.2;
    const cv::Mat bright = apply_augmentation(patch, d);
    for (int y = 0; y < patch.rows; ++y) {
        for (int x = 0; x < patch.cols; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double expect = std::min(255.0, std::round(patch.at<cv::Vec3b>(y, x)[c] * 1.2));
                CHECK(std::abs(bright.at<cv::Vec3b>(y, x)[c] - expect) <= 1.0);
            }
        }
    }

    AugmentDraw k;
    k.adjust_contrast = true;
    k.contrast = 0.8;
    const cv::Mat flat = apply_augmentation(patch, k);
    double mean = 0.0;
    for (int y = 0; y < patch.rows; ++y)
        for (int x = 0; x < patch.cols; ++x)
            for (int c = 0; c < 3; ++c) mean += patch.at<cv::Vec3b>(y, x)[c];
    mean /= patch.total() * 3.0;
    for (int y = 0; y < patch.rows; ++y) {
        for (int x = 0; x < patch.cols; ++x) {
            const double v = patch.at<cv::Vec3b>(y, x)[0];
            CHECK(std::abs(flat.at<cv::Vec3b>(y, x)[0] - (mean + 0.8 * (v - mean))) <= 1.0);
        }
    }
}

TEST_CASE("brightness 1.3 on a constant 64 patch gives constant 83") {
    const cv::Mat gray(10, 10, CV_8UC3, cv::Scalar::all(64));
    AugmentDraw d;
    d.adjust_brightness = true;
    d.brightness = 1.3;
    const cv::Mat out = apply_augmentation(gray, d);
    const auto expected = static_cast<uchar>(std::min(255.0, std::round(64 * 1.3)));
    CHECK(expected == 83);
    CHECK(cv::countNonZero(out.reshape(1) != expected) == 0);
    const cv::Mat bright(4, 4, CV_8UC3, cv::Scalar::all(250));
    CHECK(cv::countNonZero(apply_augmentation(bright, d).reshape(1) != 255) == 0);
}

TEST_CASE("rotation by 180 degrees flips a centred square patch") {
    cv::Mat patch = parkocc::testing::random_image(16, 16, 8);
    AugmentDraw d;
    d.rotate = true;
    d.angle_deg = 180.0;
    const cv::Mat out = apply_augmentation(patch, d);
    cv::Mat flipped;
    cv::flip(patch, flipped, -1);
    // centre at (8, 8) maps x -> 16 - x, one pixel off the flip; compare the interior shifted by one
    const cv::Rect inner(1, 1, 15, 15);
    CHECK(cv::norm(out(inner), flipped(cv::Rect(0, 0, 15, 15)), cv::NORM_INF) <= 1.0);
}

TEST_CASE("invalid parameters and mixed sizes are rejected") {
    AugmentParams p;
    p.brightness = {1.1, 1.3};
    CHECK_THROWS_AS(p.validate(), DataError);
    p = AugmentParams{};
    p.apply_probability = 1.5;
    CHECK_THROWS_AS(p.validate(), DataError);
    p = AugmentParams{};
    p.rotation_deg = -1;
    CHECK_THROWS_AS(p.validate(), DataError);

    std::vector<LabeledPatch> mixed{{parkocc::testing::random_image(8, 8, 1), 0},
                                    {parkocc::testing::random_image(9, 8, 2), 1}};
    CHECK_THROWS_AS(augment_batch(mixed, AugmentParams{}, 0), DataError);
}

TEST_CASE("parameters round-trip through JSON") {
    AugmentParams p;
    p.rotation_deg = 7.5;
    p.brightness = {0.9, 1.1};
    p.contrast = {0.5, 2.0};
    p.apply_probability = 0.25;
    p.seed = 123;
    const nlohmann::json j = p;
    CHECK(j.get<AugmentParams>() == p);
}

}
