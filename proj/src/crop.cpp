#include "parkocc/crop.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgproc.hpp>

#include "parkocc/errors.hpp"

namespace parkocc {

std::string to_string(CropPolicy policy) {
    switch (policy) {
        case CropPolicy::warp_rectify: return "warp_rectify";
        case CropPolicy::bounding_box: return "bounding_box";
        case CropPolicy::fixed_square: return "fixed_square";
    }
    return "warp_rectify";
}

CropPolicy crop_policy_from_string(const std::string& text) {
    if (text == "warp_rectify") return CropPolicy::warp_rectify;
    if (text == "bounding_box") return CropPolicy::bounding_box;
    if (text == "fixed_square") return CropPolicy::fixed_square;
    throw DataError("unknown crop policy '" + text + "'");
}

cv::Mat as_bgr8(const cv::Mat& image) {
    if (image.empty()) throw DataError("empty image");
    cv::Mat out = image;
    if (out.depth() != CV_8U) {
        const double scale = out.depth() == CV_16U ? 1.0 / 257.0 : 1.0;
        out.convertTo(out, CV_8U, scale);
    }
    switch (out.channels()) {
        case 3: return out;
        case 1: cv::cvtColor(out, out, cv::COLOR_GRAY2BGR); return out;
        case 4: cv::cvtColor(out, out, cv::COLOR_BGRA2BGR); return out;
        default: throw DataError("unsupported channel count " + std::to_string(out.channels()));
    }
}

std::array<double, 9> patch_to_frame_homography(const std::array<Point2, 4>& quad, int out_size) {
    const double s = out_size;
    const std::array<Point2, 4> src{Point2{0, 0}, Point2{s, 0}, Point2{s, s}, Point2{0, s}};
    // Direct linear system with h33 = 1.
    cv::Mat a(8, 8, CV_64F, cv::Scalar(0));
    cv::Mat b(8, 1, CV_64F);
    for (int i = 0; i < 4; ++i) {
        const double u = src[i].x, v = src[i].y, x = quad[i].x, y = quad[i].y;
        double* r0 = a.ptr<double>(2 * i);
        double* r1 = a.ptr<double>(2 * i + 1);
        r0[0] = u; r0[1] = v; r0[2] = 1; r0[6] = -u * x; r0[7] = -v * x;
        r1[3] = u; r1[4] = v; r1[5] = 1; r1[6] = -u * y; r1[7] = -v * y;
        b.at<double>(2 * i) = x;
        b.at<double>(2 * i + 1) = y;
    }
    cv::Mat h;
    if (!cv::solve(a, b, h, cv::DECOMP_LU)) throw DataError("degenerate quadrilateral: no homography");
    std::array<double, 9> out{};
    for (int i = 0; i < 8; ++i) out[i] = h.at<double>(i);
    out[8] = 1.0;
    return out;
}

namespace {

// Bilinear sample at continuous frame coordinates (pixel centres at +0.5),
// replicating the border for the half pixel outside the centre grid.
cv::Vec3b sample_bilinear(const cv::Mat& img, double x, double y) {
    const double fx = std::clamp(x - 0.5, 0.0, static_cast<double>(img.cols - 1));
    const double fy = std::clamp(y - 0.5, 0.0, static_cast<double>(img.rows - 1));
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const int x1 = std::min(x0 + 1, img.cols - 1);
    const int y1 = std::min(y0 + 1, img.rows - 1);
    const double ax = fx - x0;
    const double ay = fy - y0;
    const auto& p00 = img.at<cv::Vec3b>(y0, x0);
    const auto& p01 = img.at<cv::Vec3b>(y0, x1);
    const auto& p10 = img.at<cv::Vec3b>(y1, x0);
    const auto& p11 = img.at<cv::Vec3b>(y1, x1);
    cv::Vec3b out;
    for (int c = 0; c < 3; ++c) {
        const double top = p00[c] * (1 - ax) + p01[c] * ax;
        const double bottom = p10[c] * (1 - ax) + p11[c] * ax;
        out[c] = cv::saturate_cast<uchar>(top * (1 - ay) + bottom * ay);
    }
    return out;
}

cv::Mat warp_rectify(const cv::Mat& frame, const SpotGeometry& g, int out_size) {
    const auto h = patch_to_frame_homography(g.points, out_size);
    cv::Mat patch(out_size, out_size, CV_8UC3);
    for (int v = 0; v < out_size; ++v) {
        auto* row = patch.ptr<cv::Vec3b>(v);
        for (int u = 0; u < out_size; ++u) {
            const double pu = u + 0.5, pv = v + 0.5;
            const double w = h[6] * pu + h[7] * pv + h[8];
            const double x = (h[0] * pu + h[1] * pv + h[2]) / w;
            const double y = (h[3] * pu + h[4] * pv + h[5]) / w;
            row[u] = sample_bilinear(frame, x, y);
        }
    }
    return patch;
}

cv::Mat resize_to(const cv::Mat& roi, int out_size) {
    if (roi.cols == out_size && roi.rows == out_size) return roi.clone();
    cv::Mat out;
    const bool shrinking = roi.cols > out_size || roi.rows > out_size;
    cv::resize(roi, out, cv::Size(out_size, out_size), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
    return out;
}

cv::Rect hull(const SpotGeometry& g) {
    double x0 = g.points[0].x, x1 = x0, y0 = g.points[0].y, y1 = y0;
    for (const auto& p : g.points) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    const int left = static_cast<int>(std::floor(x0));
    const int top = static_cast<int>(std::floor(y0));
    const int right = static_cast<int>(std::ceil(x1));
    const int bottom = static_cast<int>(std::ceil(y1));
    return {left, top, right - left, bottom - top};
}

}  // namespace

cv::Mat crop_spot(const cv::Mat& frame_in, const SpotGeometry& geometry, CropPolicy policy, int out_size) {
    if (out_size <= 0) throw DataError("crop size must be positive");
    const cv::Mat frame = as_bgr8(frame_in);
    validate_geometry(geometry, FrameSize{frame.cols, frame.rows});

    switch (policy) {
        case CropPolicy::warp_rectify:
            return warp_rectify(frame, geometry, out_size);
        case CropPolicy::bounding_box: {
            const cv::Rect box = hull(geometry);
            if (box.width <= 0 || box.height <= 0) throw DataError("spot '" + geometry.spot_id + "' has an empty hull");
            return resize_to(frame(box), out_size);
        }
        case CropPolicy::fixed_square: {
            const cv::Rect box = hull(geometry);
            double cx = 0, cy = 0;
            for (const auto& p : geometry.points) {
                cx += p.x / 4.0;
                cy += p.y / 4.0;
            }
            const int side = std::max(box.width, box.height);
            const cv::Rect square(static_cast<int>(std::lround(cx - side / 2.0)),
                                  static_cast<int>(std::lround(cy - side / 2.0)), side, side);
            if (side <= 0 || square.x < 0 || square.y < 0 || square.x + side > frame.cols ||
                square.y + side > frame.rows) {
                throw DataError("spot '" + geometry.spot_id + "': fixed square exceeds the frame");
            }
            return resize_to(frame(square), out_size);
        }
    }
    throw DataError("unknown crop policy");
}

}  // namespace parkocc
