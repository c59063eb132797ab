#include "e2w/task.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "e2w/errors.hpp"

namespace e2w {

namespace {
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
}  // namespace

const char* to_string(TaskKind task) {
    switch (task) {
        case TaskKind::Counting: return "counting";
        case TaskKind::Relation: return "relation";
        case TaskKind::Grasp: return "grasp";
    }
    return "counting";
}

TaskKind task_from_string(const std::string& name) {
    if (name == "counting") return TaskKind::Counting;
    if (name == "relation") return TaskKind::Relation;
    if (name == "grasp") return TaskKind::Grasp;
    throw SchemaError("unknown task kind '" + name + "'");
}

nlohmann::ordered_json instance_to_json(const TaskInstance& instance) {
    ordered_json j;
    j["instance_id"] = instance.instance_id;
    j["task"] = to_string(instance.task);
    j["question"] = instance.question;
    j["views"] = ordered_json::array();
    for (std::size_t v = 0; v < instance.per_view_boxes.size(); ++v) {
        ordered_json view;
        view["agent_id"] = instance.scene.views[v].agent_id;
        view["boxes"] = ordered_json::array();
        for (const auto& b : instance.per_view_boxes[v]) {
            view["boxes"].push_back(ordered_json{{"id", b.id},
                                                 {"class", b.class_name},
                                                 {"box", {b.box.x1, b.box.y1, b.box.x2, b.box.y2}}});
        }
        j["views"].push_back(std::move(view));
    }
    j["overlap_truth"] = instance.overlap_truth;
    ordered_json gt;
    if (instance.ground_truth.count) {
        gt["count"] = *instance.ground_truth.count;
    } else if (instance.ground_truth.answer_text) {
        gt["answer_text"] = *instance.ground_truth.answer_text;
    } else if (instance.ground_truth.grasp) {
        gt["view"] = instance.ground_truth.grasp->view;
        gt["point"] = {instance.ground_truth.grasp->u, instance.ground_truth.grasp->v};
    }
    j["ground_truth"] = std::move(gt);
    j["reference_trace"] = instance.reference_trace;
    j["scene"] = geometry::scene_to_json(instance.scene);
    return j;
}

TaskInstance instance_from_json(const nlohmann::json& j) {
    TaskInstance instance;
    try {
        instance.instance_id = j.at("instance_id").get<std::string>();
        instance.task = task_from_string(j.at("task").get<std::string>());
        instance.question = j.at("question").get<std::string>();
        instance.scene = geometry::scene_from_json(j.at("scene"));
        const auto& views = j.at("views");
        if (views.size() != instance.scene.views.size())
            throw SchemaError("instance: views[] length does not match scene");
        for (const auto& v : views) {
            std::vector<PerViewBox> boxes;
            for (const auto& b : v.at("boxes")) {
                PerViewBox pvb;
                pvb.id = b.at("id").get<int>();
                pvb.class_name = b.at("class").get<std::string>();
                const auto& bb = b.at("box");
                pvb.box = geometry::BoundingBox2D{bb.at(0).get<double>(), bb.at(1).get<double>(),
                                                  bb.at(2).get<double>(), bb.at(3).get<double>()};
                if (!pvb.box.valid()) throw SchemaError("instance: invalid per-view box");
                boxes.push_back(std::move(pvb));
            }
            instance.per_view_boxes.push_back(std::move(boxes));
        }
        instance.overlap_truth = j.at("overlap_truth").get<long long>();
        const auto& gt = j.at("ground_truth");
        if (gt.contains("count")) {
            instance.ground_truth.count = gt.at("count").get<long long>();
        } else if (gt.contains("answer_text")) {
            instance.ground_truth.answer_text = gt.at("answer_text").get<std::string>();
        } else if (gt.contains("view")) {
            GroundTruth::Grasp grasp;
            grasp.view = gt.at("view").get<int>();
            grasp.u = gt.at("point").at(0).get<double>();
            grasp.v = gt.at("point").at(1).get<double>();
            instance.ground_truth.grasp = grasp;
        } else {
            throw SchemaError("instance: ground_truth has no recognized field");
        }
        instance.reference_trace = j.at("reference_trace").get<std::string>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("instance: ") + e.what());
    }
    return instance;
}

std::vector<TaskInstance> load_dataset_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open dataset file '" + path + "'");
    std::vector<TaskInstance> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw SchemaError(path + ":" + std::to_string(line_no) + ": invalid JSON");
        out.push_back(instance_from_json(j));
    }
    return out;
}

}  // namespace e2w
