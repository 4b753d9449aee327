#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace parkocc {

enum class SpotKind { rotated_rect, quadrilateral, axis_aligned_box };

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

struct FrameSize {
    int width = 0;
    int height = 0;

    friend bool operator==(const FrameSize&, const FrameSize&) = default;
};

/**
 * One demarcated parking space in image coordinates.
 *
 * Points are continuous pixel coordinates (the top-left corner of the image is
 * (0, 0), the bottom-right corner is (width, height)) ordered clockwise on
 * screen starting from the top-left corner. `angle` is only meaningful for
 * rotated rectangles and is kept for provenance.
 */
struct SpotGeometry {
    std::string spot_id;
    SpotKind kind = SpotKind::quadrilateral;
    std::array<Point2, 4> points{};
    double angle = 0.0;

    friend bool operator==(const SpotGeometry&, const SpotGeometry&) = default;
};

/// Per-camera set of spots drawn once on a reference frame.
struct SpotMap {
    std::string camera_id;
    FrameSize reference_frame;
    std::vector<SpotGeometry> spots;
    std::int64_t version = 0;

    friend bool operator==(const SpotMap&, const SpotMap&) = default;
};

std::string to_string(SpotKind kind);
SpotKind spot_kind_from_string(const std::string& text);

/// Shoelace area; positive for clockwise order in image coordinates (y down).
double signed_area(const std::array<Point2, 4>& points);

/// True when no two non-adjacent edges touch or cross.
bool is_simple_quadrilateral(const std::array<Point2, 4>& points);

/// Reorders four points clockwise starting from the top-left-most one.
std::array<Point2, 4> order_clockwise_from_top_left(std::array<Point2, 4> points);

SpotGeometry make_axis_aligned_box(std::string spot_id, double x, double y, double width, double height);

/// Rectangle of the given size centred at `center`, rotated by `angle_deg`
/// (positive = clockwise on screen).
SpotGeometry make_rotated_rect(std::string spot_id, Point2 center, double width, double height, double angle_deg);

/// Describes why a geometry is invalid on its own, or nullopt when it is fine.
std::optional<std::string> geometry_problem(const SpotGeometry& geometry);

/// Like geometry_problem, additionally checking the points against frame bounds.
std::optional<std::string> geometry_problem(const SpotGeometry& geometry, FrameSize frame);

/// Throws ValidationError naming the offending spot when the geometry is invalid.
void validate_geometry(const SpotGeometry& geometry, FrameSize frame);

/// Spot ids that break a SpotMap invariant (bad geometry, out of bounds, duplicates).
std::vector<std::string> invalid_spot_ids(const SpotMap& map);

/// Throws ValidationError listing every offending spot id.
void validate_spot_map(const SpotMap& map);

void to_json(nlohmann::json& j, const SpotGeometry& geometry);
void from_json(const nlohmann::json& j, SpotGeometry& geometry);
void to_json(nlohmann::json& j, const SpotMap& map);
void from_json(const nlohmann::json& j, SpotMap& map);

SpotMap read_spot_map(const std::filesystem::path& path);

/// Writes through a temporary file and renames it into place.
void write_spot_map(const SpotMap& map, const std::filesystem::path& path);

}  // namespace parkocc
