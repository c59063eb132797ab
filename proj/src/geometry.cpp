#include "e2w/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "e2w/errors.hpp"

namespace e2w::geometry {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

Eigen::Vector3d vec3_from_json(const json& j, const char* field) {
    if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number())
        throw SchemaError(std::string("scene: field '") + field + "' is not a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

bool BoundingBox2D::valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
           x1 < x2 && y1 < y2;
}

ObjectInstance ObjectInstance::make(int id, std::string class_name, const Eigen::Vector3d& position,
                                    const Eigen::Vector3d& half_extents) {
    ObjectInstance obj;
    obj.id = id;
    obj.class_name = std::move(class_name);
    obj.position = position;
    obj.half_extents = half_extents;
    obj.grasp_point = position + Eigen::Vector3d(0, 0, half_extents.z());
    return obj;
}

std::array<Eigen::Vector3d, 8> ObjectInstance::corners() const {
    std::array<Eigen::Vector3d, 8> out;
    int k = 0;
    for (double sx : {-1.0, 1.0})
        for (double sy : {-1.0, 1.0})
            for (double sz : {-1.0, 1.0})
                out[k++] = position + Eigen::Vector3d(sx * half_extents.x(), sy * half_extents.y(),
                                                      sz * half_extents.z());
    return out;
}

CameraView CameraView::look_at(int agent_id, const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
    CameraView view;
    view.agent_id = agent_id;
    Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d world_up(0, 0, 1);
    Eigen::Vector3d right = forward.cross(world_up);
    if (right.norm() < 1e-9) {
        // Looking straight up/down; pick an arbitrary horizontal right axis.
        right = Eigen::Vector3d(1, 0, 0);
    }
    right.normalize();
    Eigen::Vector3d down = forward.cross(right).normalized();
    view.rotation.row(0) = right;
    view.rotation.row(1) = down;
    view.rotation.row(2) = forward;
    view.translation = -view.rotation * eye;
    return view;
}

bool CameraView::valid(std::string* why) const {
    auto fail = [&](const char* msg) {
        if (why) *why = msg;
        return false;
    };
    if (!(fx > 0.0) || !(fy > 0.0)) return fail("focal components must be positive");
    if (width <= 0 || height <= 0) return fail("resolution must be positive");
    Eigen::Matrix3d gram = rotation * rotation.transpose();
    if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9)
        return fail("rotation is not orthonormal within 1e-9");
    return true;
}

std::optional<Eigen::Vector2d> project_point(const Eigen::Vector3d& p_world, const CameraView& view) {
    Eigen::Vector3d p_cam = view.rotation * p_world + view.translation;
    if (!(p_cam.z() > 0.0)) return std::nullopt;
    return Eigen::Vector2d(view.fx * p_cam.x() / p_cam.z() + view.cx,
                           view.fy * p_cam.y() / p_cam.z() + view.cy);
}

Eigen::Vector3d unproject_point(const CameraView& view, double u, double v, double depth) {
    Eigen::Vector3d p_cam((u - view.cx) / view.fx * depth, (v - view.cy) / view.fy * depth, depth);
    return view.rotation.transpose() * (p_cam - view.translation);
}

std::optional<BoundingBox2D> project_object_unclamped(const ObjectInstance& obj, const CameraView& view) {
    bool any = false;
    BoundingBox2D box{1e300, 1e300, -1e300, -1e300};
    for (const auto& corner : obj.corners()) {
        auto uv = project_point(corner, view);
        if (!uv) continue;
        any = true;
        box.x1 = std::min(box.x1, uv->x());
        box.y1 = std::min(box.y1, uv->y());
        box.x2 = std::max(box.x2, uv->x());
        box.y2 = std::max(box.y2, uv->y());
    }
    if (!any) return std::nullopt;
    return box;
}

std::optional<BoundingBox2D> project_object(const ObjectInstance& obj, const CameraView& view) {
    auto raw = project_object_unclamped(obj, view);
    if (!raw) return std::nullopt;
    BoundingBox2D box;
    box.x1 = std::clamp(raw->x1, 0.0, static_cast<double>(view.width));
    box.x2 = std::clamp(raw->x2, 0.0, static_cast<double>(view.width));
    box.y1 = std::clamp(raw->y1, 0.0, static_cast<double>(view.height));
    box.y2 = std::clamp(raw->y2, 0.0, static_cast<double>(view.height));
    if (!(box.x1 < box.x2) || !(box.y1 < box.y2)) return std::nullopt;
    return box;
}

double covered_area(const BoundingBox2D& box, const std::vector<BoundingBox2D>& others) {
    // Clip every rectangle to `box`, then sweep slabs in x measuring the
    // union length in y. Exact for axis-aligned rectangles.
    struct Rect {
        double x1, y1, x2, y2;
    };
    std::vector<Rect> clipped;
    std::vector<double> xs;
    for (const auto& o : others) {
        Rect r{std::max(o.x1, box.x1), std::max(o.y1, box.y1), std::min(o.x2, box.x2),
               std::min(o.y2, box.y2)};
        if (r.x1 < r.x2 && r.y1 < r.y2) {
            clipped.push_back(r);
            xs.push_back(r.x1);
            xs.push_back(r.x2);
        }
    }
    if (clipped.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

    double area = 0.0;
    std::vector<std::pair<double, double>> spans;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        const double x_lo = xs[i], x_hi = xs[i + 1];
        spans.clear();
        for (const auto& r : clipped)
            if (r.x1 <= x_lo && r.x2 >= x_hi) spans.emplace_back(r.y1, r.y2);
        if (spans.empty()) continue;
        std::sort(spans.begin(), spans.end());
        double y_len = 0.0, cur_lo = spans[0].first, cur_hi = spans[0].second;
        for (std::size_t k = 1; k < spans.size(); ++k) {
            if (spans[k].first > cur_hi) {
                y_len += cur_hi - cur_lo;
                cur_lo = spans[k].first;
                cur_hi = spans[k].second;
            } else {
                cur_hi = std::max(cur_hi, spans[k].second);
            }
        }
        y_len += cur_hi - cur_lo;
        area += y_len * (x_hi - x_lo);
    }
    return area;
}

std::vector<ViewStats> view_visibility(const Scene& scene, int view_index) {
    if (view_index < 0 || view_index >= static_cast<int>(scene.views.size()))
        throw std::invalid_argument("view_visibility: view index " + std::to_string(view_index) +
                                    " out of range");
    const CameraView& view = scene.views[view_index];

    std::vector<ViewStats> stats(scene.objects.size());
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const auto& obj = scene.objects[i];
        ViewStats& s = stats[i];
        s.id = obj.id;
        Eigen::Vector3d center_cam = view.rotation * obj.position + view.translation;
        if (!(center_cam.z() > 0.0)) continue;
        auto raw = project_object_unclamped(obj, view);
        auto clamped = project_object(obj, view);
        if (!raw || !clamped) continue;
        s.projects = true;
        s.unclamped_box = *raw;
        s.box = *clamped;
        s.depth = center_cam.norm();
        s.area = clamped->area();
    }

    // Depth-ordered screen-overlap occlusion: strictly nearer boxes cover.
    for (auto& s : stats) {
        if (!s.projects) continue;
        std::vector<BoundingBox2D> nearer;
        for (const auto& other : stats)
            if (other.projects && other.id != s.id && other.depth < s.depth)
                nearer.push_back(other.box);
        const double occluded = covered_area(s.box, nearer);
        s.unoccluded_fraction = s.area > 0.0 ? 1.0 - occluded / s.area : 0.0;
        s.visible = s.area >= kMinVisibleArea && s.unoccluded_fraction >= kMinVisibleFraction;
    }

    std::sort(stats.begin(), stats.end(), [](const ViewStats& a, const ViewStats& b) { return a.id < b.id; });
    return stats;
}

std::vector<VisibleObject> visible_objects(const Scene& scene, int view_index) {
    std::vector<VisibleObject> out;
    for (const auto& s : view_visibility(scene, view_index))
        if (s.visible) out.push_back(VisibleObject{s.id, s.box, s.depth});
    return out;
}

nlohmann::ordered_json scene_to_json(const Scene& scene) {
    ordered_json j;
    j["seed"] = scene.seed;
    j["objects"] = ordered_json::array();
    for (const auto& obj : scene.objects) {
        ordered_json o;
        o["id"] = obj.id;
        o["class_name"] = obj.class_name;
        o["position"] = vec3_to_json(obj.position);
        o["half_extents"] = vec3_to_json(obj.half_extents);
        o["grasp_point"] = vec3_to_json(obj.grasp_point);
        j["objects"].push_back(std::move(o));
    }
    j["views"] = ordered_json::array();
    for (const auto& view : scene.views) {
        ordered_json v;
        v["agent_id"] = view.agent_id;
        ordered_json rot = ordered_json::array();
        for (int r = 0; r < 3; ++r)
            rot.push_back(ordered_json::array({view.rotation(r, 0), view.rotation(r, 1), view.rotation(r, 2)}));
        v["pose"] = ordered_json{{"rotation", std::move(rot)}, {"translation", vec3_to_json(view.translation)}};
        v["focal"] = ordered_json::array({view.fx, view.fy});
        v["principal"] = ordered_json::array({view.cx, view.cy});
        v["resolution"] = ordered_json::array({view.width, view.height});
        j["views"].push_back(std::move(v));
    }
    return j;
}

Scene scene_from_json(const nlohmann::json& j) {
    Scene scene;
    try {
        scene.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& o : j.at("objects")) {
            ObjectInstance obj;
            obj.id = o.at("id").get<int>();
            obj.class_name = o.at("class_name").get<std::string>();
            obj.position = vec3_from_json(o.at("position"), "position");
            obj.half_extents = vec3_from_json(o.at("half_extents"), "half_extents");
            obj.grasp_point = vec3_from_json(o.at("grasp_point"), "grasp_point");
            if (!(obj.half_extents.minCoeff() > 0.0))
                throw SchemaError("scene: half_extents must be strictly positive");
            scene.objects.push_back(std::move(obj));
        }
        for (const auto& v : j.at("views")) {
            CameraView view;
            view.agent_id = v.at("agent_id").get<int>();
            const auto& pose = v.at("pose");
            const auto& rot = pose.at("rotation");
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) view.rotation(r, c) = rot.at(r).at(c).get<double>();
            view.translation = vec3_from_json(pose.at("translation"), "translation");
            view.fx = v.at("focal").at(0).get<double>();
            view.fy = v.at("focal").at(1).get<double>();
            view.cx = v.at("principal").at(0).get<double>();
            view.cy = v.at("principal").at(1).get<double>();
            view.width = v.at("resolution").at(0).get<int>();
            view.height = v.at("resolution").at(1).get<int>();
            std::string why;
            if (!view.valid(&why)) throw SchemaError("scene: invalid view: " + why);
            scene.views.push_back(std::move(view));
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("scene: ") + e.what());
    }
    if (scene.views.size() < 2) throw SchemaError("scene: needs at least 2 views");
    if (scene.objects.empty()) throw SchemaError("scene: needs at least 1 object");
    return scene;
}

}  // namespace e2w::geometry
