#pragma once

#include <array>
#include <string>

#include <opencv2/core.hpp>

#include "parkocc/geometry.hpp"

namespace parkocc {

enum class CropPolicy { warp_rectify, bounding_box, fixed_square };

std::string to_string(CropPolicy policy);
CropPolicy crop_policy_from_string(const std::string& text);

/// Row-major 3x3 homography taking output-patch coordinates to frame
/// coordinates, with the patch corners (0,0), (s,0), (s,s), (0,s) landing on
/// the quadrilateral's points in order.
std::array<double, 9> patch_to_frame_homography(const std::array<Point2, 4>& quad, int out_size);

/**
 * Cuts one spot out of a frame as an out_size x out_size BGR patch.
 *
 * warp_rectify maps the quadrilateral onto the square with a perspective
 * transform and bilinear sampling at pixel centres; bounding_box crops the
 * integer hull of the points; fixed_square crops a square centred on the
 * centroid with side equal to the longer hull side. Geometry that leaves the
 * frame raises DataError; nothing is clamped.
 */
cv::Mat crop_spot(const cv::Mat& frame, const SpotGeometry& geometry, CropPolicy policy, int out_size);

/// Converts gray/BGRA input to 8-bit BGR; returns the input unchanged when it already is.
cv::Mat as_bgr8(const cv::Mat& image);

}  // namespace parkocc
