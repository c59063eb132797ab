#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "e2w/geometry.hpp"

namespace e2w {

enum class TaskKind { Counting, Relation, Grasp };

const char* to_string(TaskKind task);
TaskKind task_from_string(const std::string& name);  // throws SchemaError

// Exactly one alternative is populated, matching the task kind.
struct GroundTruth {
    struct Grasp {
        int view = 0;
        double u = 0.0, v = 0.0;
    };

    std::optional<long long> count;          // Counting
    std::optional<std::string> answer_text;  // Relation
    std::optional<Grasp> grasp;              // Grasp
};

struct PerViewBox {
    int id = 0;
    std::string class_name;
    geometry::BoundingBox2D box;
};

// One benchmark item. per_view_boxes[v] lists the visible objects of view v
// exactly as geometry::visible_objects reports them.
struct TaskInstance {
    std::string instance_id;
    TaskKind task = TaskKind::Counting;
    geometry::Scene scene;
    std::string question;
    std::vector<std::vector<PerViewBox>> per_view_boxes;
    long long overlap_truth = 0;  // object ids visible in >= 2 views
    GroundTruth ground_truth;
    std::string reference_trace;

    // Relation metadata: the questioned pair is not co-visible in any single
    // view. Not serialized.
    std::optional<bool> cross_view_pair;
};

nlohmann::ordered_json instance_to_json(const TaskInstance& instance);
TaskInstance instance_from_json(const nlohmann::json& j);  // throws SchemaError

std::vector<TaskInstance> load_dataset_jsonl(const std::string& path);  // throws SchemaError

}  // namespace e2w
