#include "parkocc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "parkocc/errors.hpp"

namespace parkocc {

std::string to_string(SpotKind kind) {
    switch (kind) {
        case SpotKind::rotated_rect: return "rotated_rect";
        case SpotKind::quadrilateral: return "quadrilateral";
        case SpotKind::axis_aligned_box: return "axis_aligned_box";
    }
    return "quadrilateral";
}

SpotKind spot_kind_from_string(const std::string& text) {
    if (text == "rotated_rect") return SpotKind::rotated_rect;
    if (text == "quadrilateral") return SpotKind::quadrilateral;
    if (text == "axis_aligned_box") return SpotKind::axis_aligned_box;
    throw DataError("unknown spot kind '" + text + "'");
}

double signed_area(const std::array<Point2, 4>& p) {
    double twice = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& a = p[i];
        const auto& b = p[(i + 1) % 4];
        twice += a.x * b.y - b.x * a.y;
    }
    return 0.5 * twice;
}

namespace {

double cross(Point2 o, Point2 a, Point2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

bool on_segment(Point2 a, Point2 b, Point2 p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

int sign(double v) { return (v > 0) - (v < 0); }

// Closed-segment intersection test, including touching and collinear overlap.
bool segments_intersect(Point2 p1, Point2 p2, Point2 q1, Point2 q2) {
    const int d1 = sign(cross(q1, q2, p1));
    const int d2 = sign(cross(q1, q2, p2));
    const int d3 = sign(cross(p1, p2, q1));
    const int d4 = sign(cross(p1, p2, q2));
    if (d1 * d2 < 0 && d3 * d4 < 0) return true;
    if (d1 == 0 && on_segment(q1, q2, p1)) return true;
    if (d2 == 0 && on_segment(q1, q2, p2)) return true;
    if (d3 == 0 && on_segment(p1, p2, q1)) return true;
    if (d4 == 0 && on_segment(p1, p2, q2)) return true;
    return false;
}

}  // namespace

bool is_simple_quadrilateral(const std::array<Point2, 4>& p) {
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = i + 1; j < 4; ++j) {
            if (p[i] == p[j]) return false;
        }
    }
    return !segments_intersect(p[0], p[1], p[2], p[3]) && !segments_intersect(p[1], p[2], p[3], p[0]);
}

std::array<Point2, 4> order_clockwise_from_top_left(std::array<Point2, 4> points) {
    Point2 c{};
    for (const auto& p : points) {
        c.x += p.x / 4.0;
        c.y += p.y / 4.0;
    }
    // With y pointing down, increasing atan2 sweeps clockwise on screen.
    std::sort(points.begin(), points.end(), [&](const Point2& a, const Point2& b) {
        return std::atan2(a.y - c.y, a.x - c.x) < std::atan2(b.y - c.y, b.x - c.x);
    });
    const auto first = std::min_element(points.begin(), points.end(), [](const Point2& a, const Point2& b) {
        return a.x + a.y < b.x + b.y || (a.x + a.y == b.x + b.y && a.x < b.x);
    });
    std::rotate(points.begin(), first, points.end());
    return points;
}

SpotGeometry make_axis_aligned_box(std::string spot_id, double x, double y, double width, double height) {
    SpotGeometry g;
    g.spot_id = std::move(spot_id);
    g.kind = SpotKind::axis_aligned_box;
    g.points = {Point2{x, y}, Point2{x + width, y}, Point2{x + width, y + height}, Point2{x, y + height}};
    return g;
}

SpotGeometry make_rotated_rect(std::string spot_id, Point2 center, double width, double height, double angle_deg) {
    const double a = angle_deg * std::numbers::pi / 180.0;
    const double ca = std::cos(a);
    const double sa = std::sin(a);
    const std::array<Point2, 4> local{Point2{-width / 2, -height / 2}, Point2{width / 2, -height / 2},
                                      Point2{width / 2, height / 2}, Point2{-width / 2, height / 2}};
    SpotGeometry g;
    g.spot_id = std::move(spot_id);
    g.kind = SpotKind::rotated_rect;
    g.angle = angle_deg;
    for (std::size_t i = 0; i < 4; ++i) {
        g.points[i] = {center.x + local[i].x * ca - local[i].y * sa, center.y + local[i].x * sa + local[i].y * ca};
    }
    return g;
}

std::optional<std::string> geometry_problem(const SpotGeometry& g) {
    for (const auto& p : g.points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) return "non-finite coordinate";
    }
    if (!std::isfinite(g.angle)) return "non-finite angle";
    if (!is_simple_quadrilateral(g.points)) return "self-intersecting or degenerate polygon";
    if (std::abs(signed_area(g.points)) <= 0.0) return "zero area";
    return std::nullopt;
}

std::optional<std::string> geometry_problem(const SpotGeometry& g, FrameSize frame) {
    if (auto problem = geometry_problem(g)) return problem;
    for (const auto& p : g.points) {
        if (p.x < 0.0 || p.y < 0.0 || p.x > frame.width || p.y > frame.height) {
            std::ostringstream msg;
            msg << "point (" << p.x << ", " << p.y << ") outside " << frame.width << "x" << frame.height << " frame";
            return msg.str();
        }
    }
    return std::nullopt;
}

void validate_geometry(const SpotGeometry& geometry, FrameSize frame) {
    if (auto problem = geometry_problem(geometry, frame)) {
        throw ValidationError("spot '" + geometry.spot_id + "': " + *problem, {geometry.spot_id});
    }
}

std::vector<std::string> invalid_spot_ids(const SpotMap& map) {
    std::vector<std::string> bad;
    std::set<std::string> seen;
    for (const auto& spot : map.spots) {
        const bool duplicate = !seen.insert(spot.spot_id).second;
        if (duplicate || spot.spot_id.empty() || geometry_problem(spot, map.reference_frame)) {
            if (std::find(bad.begin(), bad.end(), spot.spot_id) == bad.end()) bad.push_back(spot.spot_id);
        }
    }
    return bad;
}

void validate_spot_map(const SpotMap& map) {
    if (map.reference_frame.width <= 0 || map.reference_frame.height <= 0) {
        throw ValidationError("spot map '" + map.camera_id + "' has an empty reference frame", {});
    }
    auto bad = invalid_spot_ids(map);
    if (!bad.empty()) {
        std::ostringstream msg;
        msg << "spot map '" << map.camera_id << "' has invalid spots:";
        for (const auto& id : bad) {
            msg << ' ' << (id.empty() ? "<empty id>" : id);
            for (const auto& spot : map.spots) {
                if (spot.spot_id != id) continue;
                if (auto problem = geometry_problem(spot, map.reference_frame)) msg << " (" << *problem << ")";
                break;
            }
        }
        throw ValidationError(msg.str(), std::move(bad));
    }
}

void to_json(nlohmann::json& j, const SpotGeometry& g) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : g.points) points.push_back({p.x, p.y});
    j = nlohmann::json{{"spot_id", g.spot_id}, {"kind", to_string(g.kind)}, {"points", points}, {"angle", g.angle}};
}

void from_json(const nlohmann::json& j, SpotGeometry& g) {
    g.spot_id = j.at("spot_id").get<std::string>();
    g.kind = spot_kind_from_string(j.value("kind", std::string{"quadrilateral"}));
    const auto& points = j.at("points");
    if (!points.is_array() || points.size() != 4) {
        throw ValidationError("spot '" + g.spot_id + "' must have exactly 4 points", {g.spot_id});
    }
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& p = points[i];
        if (!p.is_array() || p.size() != 2) {
            throw ValidationError("spot '" + g.spot_id + "' has a malformed point", {g.spot_id});
        }
        g.points[i] = {p[0].get<double>(), p[1].get<double>()};
    }
    g.angle = j.contains("angle") && !j.at("angle").is_null() ? j.at("angle").get<double>() : 0.0;
}

void to_json(nlohmann::json& j, const SpotMap& map) {
    j = nlohmann::json{{"camera_id", map.camera_id},
                       {"width", map.reference_frame.width},
                       {"height", map.reference_frame.height},
                       {"version", map.version},
                       {"spots", map.spots}};
}

void from_json(const nlohmann::json& j, SpotMap& map) {
    map.camera_id = j.value("camera_id", std::string{});
    map.reference_frame = {j.at("width").get<int>(), j.at("height").get<int>()};
    map.version = j.value("version", std::int64_t{0});
    map.spots = j.value("spots", std::vector<SpotGeometry>{});
}

SpotMap read_spot_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open spot map " + path.string());
    try {
        return nlohmann::json::parse(in).get<SpotMap>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed spot map " + path.string() + ": " + e.what());
    }
}

void write_spot_map(const SpotMap& map, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << nlohmann::json(map).dump(2) << '\n';
        if (!out) throw Error("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace parkocc
