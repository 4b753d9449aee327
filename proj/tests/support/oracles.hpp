#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include <opencv2/core.hpp>

#include "parkocc/dataset.hpp"
#include "parkocc/geometry.hpp"
#include "parkocc/rng.hpp"

namespace parkocc::testing {

// Closed-form projective map from the unit square onto a quadrilateral
// (corners (0,0), (1,0), (1,1), (0,1) -> q0..q3), independent of the
// linear-system solve used by the implementation.
struct SquareToQuad {
    double a, b, c, d, e, f, g, h;

    explicit SquareToQuad(const std::array<Point2, 4>& q) {
        const double dx1 = q[1].x - q[2].x, dx2 = q[3].x - q[2].x, dx3 = q[0].x - q[1].x + q[2].x - q[3].x;
        const double dy1 = q[1].y - q[2].y, dy2 = q[3].y - q[2].y, dy3 = q[0].y - q[1].y + q[2].y - q[3].y;
        if (dx3 == 0.0 && dy3 == 0.0) {
            g = h = 0.0;
            a = q[1].x - q[0].x;
            b = q[2].x - q[1].x;
            d = q[1].y - q[0].y;
            e = q[2].y - q[1].y;
        } else {
            const double det = dx1 * dy2 - dx2 * dy1;
            g = (dx3 * dy2 - dx2 * dy3) / det;
            h = (dx1 * dy3 - dx3 * dy1) / det;
            a = q[1].x - q[0].x + g * q[1].x;
            b = q[3].x - q[0].x + h * q[3].x;
            d = q[1].y - q[0].y + g * q[1].y;
            e = q[3].y - q[0].y + h * q[3].y;
        }
        c = q[0].x;
        f = q[0].y;
    }

    Point2 operator()(double u, double v) const {
        const double w = g * u + h * v + 1.0;
        return {(a * u + b * v + c) / w, (d * u + e * v + f) / w};
    }
};

// Reference bilinear lookup: pixel (i, j) holds the value at (i + 0.5, j + 0.5);
// positions beyond the outermost centres take the edge value.
inline double reference_sample(const cv::Mat& img, double x, double y, int channel) {
    auto clampd = [](double v, double hi) { return v < 0.0 ? 0.0 : (v > hi ? hi : v); };
    const double cx = clampd(x - 0.5, img.cols - 1.0);
    const double cy = clampd(y - 0.5, img.rows - 1.0);
    const int i0 = static_cast<int>(cx), j0 = static_cast<int>(cy);
    const int i1 = i0 + 1 < img.cols ? i0 + 1 : i0, j1 = j0 + 1 < img.rows ? j0 + 1 : j0;
    const double tx = cx - i0, ty = cy - j0;
    auto px = [&](int i, int j) { return static_cast<double>(img.at<cv::Vec3b>(j, i)[channel]); };
    return (1 - tx) * (1 - ty) * px(i0, j0) + tx * (1 - ty) * px(i1, j0) + (1 - tx) * ty * px(i0, j1) +
           tx * ty * px(i1, j1);
}

/// Largest per-channel difference between a rectified patch and the oracle.
inline int worst_rectify_error(const cv::Mat& frame, const std::array<Point2, 4>& quad, const cv::Mat& patch) {
    const SquareToQuad map(quad);
    int worst = 0;
    for (int v = 0; v < patch.rows; ++v) {
        for (int u = 0; u < patch.cols; ++u) {
            const Point2 p = map((u + 0.5) / patch.cols, (v + 0.5) / patch.rows);
            for (int ch = 0; ch < 3; ++ch) {
                const int expected = static_cast<int>(std::lround(reference_sample(frame, p.x, p.y, ch)));
                worst = std::max(worst, std::abs(expected - patch.at<cv::Vec3b>(v, u)[ch]));
            }
        }
    }
    return worst;
}

/// Convex quadrilateral around a random centre, corners in clockwise order from top-left.
inline std::array<Point2, 4> random_quad(Rng& rng, Point2 lo, Point2 hi, double r_min, double r_max) {
    const Point2 c{rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y)};
    std::array<Point2, 4> q;
    for (int k = 0; k < 4; ++k) {
        const double angle = (-135.0 + 90.0 * k + rng.uniform(-20, 20)) * M_PI / 180.0;
        const double r = rng.uniform(r_min, r_max);
        q[k] = {c.x + r * std::cos(angle), c.y + r * std::sin(angle)};
    }
    return q;
}

// Straightforward restatement of the voting rule: count argmax votes, break a
// vote tie on summed posteriors, and an exact tie there towards occupied.
inline Label vote_oracle(const std::vector<float>& p) {
    int occ = 0, emp = 0;
    double sum_occ = 0.0, sum_emp = 0.0;
    for (std::size_t k = 0; k < p.size() / 2; ++k) {
        const float e = p[2 * k];
        const float o = p[2 * k + 1];
        if (o >= e) {
            ++occ;
        } else {
            ++emp;
        }
        sum_occ += o;
        sum_emp += e;
    }
    if (occ != emp) return occ > emp ? Label::occupied : Label::empty;
    return sum_emp > sum_occ ? Label::empty : Label::occupied;
}

inline std::vector<float> random_posteriors(std::size_t members, Rng& rng) {
    std::vector<float> p;
    for (std::size_t k = 0; k < members; ++k) {
        // coarse values make vote and mean ties frequent
        const float o = static_cast<float>(rng.below(11)) / 10.0f;
        p.push_back(1.0f - o);
        p.push_back(o);
    }
    return p;
}

inline double l2_norm(const std::vector<double>& v) {
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

}  // namespace parkocc::testing
