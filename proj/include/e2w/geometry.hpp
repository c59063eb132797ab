#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace e2w::geometry {

// Axis-aligned 2D box in pixel coordinates, origin top-left, x right, y down.
// Half-open in the math; serialized as the four floats [x1, y1, x2, y2].
struct BoundingBox2D {
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    bool contains(double u, double v) const { return u >= x1 && u <= x2 && v >= y1 && v <= y2; }
    bool valid() const;

    friend bool operator==(const BoundingBox2D& a, const BoundingBox2D& b) {
        return a.x1 == b.x1 && a.y1 == b.y1 && a.x2 == b.x2 && a.y2 == b.y2;
    }
};

// One rigid object: an axis-aligned volume with a stable id and a canonical
// grasp location (defaults to the center of the top face).
struct ObjectInstance {
    int id = 0;
    std::string class_name;
    Eigen::Vector3d position{0, 0, 0};      // meters, volume center
    Eigen::Vector3d half_extents{0, 0, 0};  // meters, strictly positive
    Eigen::Vector3d grasp_point{0, 0, 0};   // meters, world frame

    static ObjectInstance make(int id, std::string class_name, const Eigen::Vector3d& position,
                               const Eigen::Vector3d& half_extents);

    std::array<Eigen::Vector3d, 8> corners() const;
};

// Posed pinhole camera. world -> camera: p_cam = rotation * p_world + translation.
// Camera frame: +z forward, +x right, +y down (image y grows downward).
struct CameraView {
    int agent_id = 0;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation{0, 0, 0};
    double fx = 500.0, fy = 500.0;
    double cx = 320.0, cy = 240.0;
    int width = 640, height = 480;

    // Camera placed at `eye` looking toward `target`, world +z up.
    static CameraView look_at(int agent_id, const Eigen::Vector3d& eye, const Eigen::Vector3d& target);

    bool valid(std::string* why = nullptr) const;
};

struct Scene {
    std::vector<ObjectInstance> objects;
    std::vector<CameraView> views;
    std::uint64_t seed = 0;
};

struct VisibleObject {
    int id = 0;
    BoundingBox2D box;  // clamped to the frame
    double depth = 0.0; // camera-frame distance to the object center
};

// Per-object visibility diagnostics for one view; rows ordered by object id.
struct ViewStats {
    int id = 0;
    bool projects = false;          // has a nonempty clamped box and center in front
    BoundingBox2D box;              // clamped; meaningful iff projects
    BoundingBox2D unclamped_box;    // raw corner-projection AABB; meaningful iff projects
    double depth = 0.0;
    double area = 0.0;              // clamped area, px^2
    double unoccluded_fraction = 0.0;
    bool visible = false;
};

// Visibility thresholds of the analytic occlusion model.
inline constexpr double kMinVisibleArea = 64.0;     // px^2
inline constexpr double kMinVisibleFraction = 0.4;

std::optional<Eigen::Vector2d> project_point(const Eigen::Vector3d& p_world, const CameraView& view);

// Inverse of project_point at a known camera-frame depth z > 0.
Eigen::Vector3d unproject_point(const CameraView& view, double u, double v, double depth);

// AABB of the projected volume corners, before clamping. Absent when every
// corner is behind the camera.
std::optional<BoundingBox2D> project_object_unclamped(const ObjectInstance& obj, const CameraView& view);

// Clamped to [0, width] x [0, height]; absent when the clamped box is empty.
std::optional<BoundingBox2D> project_object(const ObjectInstance& obj, const CameraView& view);

std::vector<ViewStats> view_visibility(const Scene& scene, int view_index);

// Objects passing the area and unoccluded-fraction thresholds, sorted by id.
// Throws std::invalid_argument on an out-of-range view index.
std::vector<VisibleObject> visible_objects(const Scene& scene, int view_index);

// Exact area of box ∩ (∪ others).
double covered_area(const BoundingBox2D& box, const std::vector<BoundingBox2D>& others);

nlohmann::ordered_json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

}  // namespace e2w::geometry
