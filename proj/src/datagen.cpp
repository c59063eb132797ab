#include "e2w/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "e2w/errors.hpp"
#include "e2w/reward.hpp"
#include "e2w/rng.hpp"
#include "e2w/strfmt.hpp"

namespace e2w::datagen {

namespace {

constexpr double kSeparationFactor = 0.8;  // center distance >= factor * sum of half-extent norms

const char* kOrdinalWords[] = {"first", "second", "third",   "fourth", "fifth",
                               "sixth", "seventh", "eighth", "ninth",  "tenth"};

std::uint64_t task_tag(TaskKind task) {
    switch (task) {
        case TaskKind::Counting: return 1;
        case TaskKind::Relation: return 2;
        case TaskKind::Grasp: return 3;
    }
    return 0;
}

struct VisibilityTable {
    // visible[v] = per-view visible objects, id-sorted (geometry order).
    std::vector<std::vector<geometry::ViewStats>> stats;
    std::vector<std::set<int>> visible_ids;
    std::set<int> union_ids;

    explicit VisibilityTable(const geometry::Scene& scene) {
        for (int v = 0; v < static_cast<int>(scene.views.size()); ++v) {
            stats.push_back(geometry::view_visibility(scene, v));
            std::set<int> ids;
            for (const auto& s : stats.back())
                if (s.visible) ids.insert(s.id);
            for (int id : ids) union_ids.insert(id);
            visible_ids.push_back(std::move(ids));
        }
    }

    bool co_visible(int a, int b) const {
        for (const auto& ids : visible_ids)
            if (ids.count(a) && ids.count(b)) return true;
        return false;
    }

    int view_count(int id) const {
        int n = 0;
        for (const auto& ids : visible_ids) n += ids.count(id) ? 1 : 0;
        return n;
    }
};

void populate_common(TaskInstance& instance, const geometry::Scene& scene,
                     const VisibilityTable& table) {
    instance.scene = scene;
    instance.per_view_boxes.clear();
    for (std::size_t v = 0; v < scene.views.size(); ++v) {
        std::vector<PerViewBox> boxes;
        for (const auto& s : table.stats[v]) {
            if (!s.visible) continue;
            const auto* obj = &*std::find_if(scene.objects.begin(), scene.objects.end(),
                                             [&](const auto& o) { return o.id == s.id; });
            boxes.push_back(PerViewBox{s.id, obj->class_name, s.box});
        }
        instance.per_view_boxes.push_back(std::move(boxes));
    }
    instance.overlap_truth = 0;
    for (int id : table.union_ids)
        if (table.view_count(id) >= 2) ++instance.overlap_truth;
}

const geometry::ObjectInstance& object_by_id(const geometry::Scene& scene, int id) {
    auto it = std::find_if(scene.objects.begin(), scene.objects.end(),
                           [&](const auto& o) { return o.id == id; });
    if (it == scene.objects.end()) throw std::invalid_argument("object id not in scene");
    return *it;
}

// Ids of all objects sorted by world x ascending (fused left-to-right order).
std::vector<int> fused_order(const geometry::Scene& scene) {
    std::vector<int> ids;
    for (const auto& o : scene.objects) ids.push_back(o.id);
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
        const double xa = object_by_id(scene, a).position.x();
        const double xb = object_by_id(scene, b).position.x();
        if (xa != xb) return xa < xb;
        return a < b;
    });
    return ids;
}

bool class_unique(const geometry::Scene& scene, const std::string& class_name) {
    int n = 0;
    for (const auto& o : scene.objects) n += o.class_name == class_name ? 1 : 0;
    return n == 1;
}

std::string box_text(const geometry::BoundingBox2D& b) {
    return "[" + format_shortest(b.x1) + ", " + format_shortest(b.y1) + ", " + format_shortest(b.x2) +
           ", " + format_shortest(b.y2) + "]";
}

std::string view_short_name(int v) {
    switch (v) {
        case 0: return "main perspective";
        case 1: return "auxiliary perspective";
        default: return "second auxiliary perspective";
    }
}

std::string view_header(int v) {
    switch (v) {
        case 0: return "Let me first examine the main perspective (Image A):";
        case 1: return "Now examining the auxiliary perspective (Image B):";
        default: return "Finally examining the second auxiliary perspective (Image C):";
    }
}

}  // namespace

const std::vector<std::string>& class_vocabulary() {
    static const std::vector<std::string> vocab = {
        "pizza",  "banana", "bread",       "scissors", "tomato",  "cardboardbox", "knife",
        "strawberry", "carambola", "cup",  "apple",    "orange",  "lemon",        "pear",
        "peach",  "grape",  "onion",       "potato",   "carrot",  "cucumber",     "plate",
        "bowl",   "mug",    "fork",        "spoon",    "bottle",  "can",          "jar",
        "pot",    "pan",    "hammer",      "screwdriver", "wrench", "pliers",     "tape",
        "marker", "pen",    "pencil",      "notebook", "stapler", "phone",        "remote",
        "keyboard", "mouse", "book",       "eraser",   "ruler",   "sponge",       "towel",
        "clock"};
    return vocab;
}

geometry::Scene sample_scene(const SceneSamplerConfig& config, std::uint64_t seed) {
    if (config.num_views < 2 || config.num_views > 3)
        throw std::invalid_argument("sample_scene: num_views must be 2 or 3");
    if (config.min_objects < 1 || config.max_objects < config.min_objects)
        throw std::invalid_argument("sample_scene: bad object-count range");

    Rng rng(mix_seed(seed, 0x5ce9eULL));
    for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
        geometry::Scene scene;
        scene.seed = seed;
        const int n_obj =
            static_cast<int>(rng.uniform_int(config.min_objects, config.max_objects));

        // Class assignment.
        std::vector<std::string> classes;
        if (config.distinct_classes) {
            std::vector<std::size_t> order(config.class_vocab.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            rng.shuffle(order);
            if (static_cast<int>(order.size()) < n_obj)
                throw std::invalid_argument("sample_scene: vocabulary smaller than object count");
            for (int i = 0; i < n_obj; ++i) classes.push_back(config.class_vocab[order[i]]);
        } else {
            // Small pool so repeated classes occur (counting needs duplicates).
            std::vector<std::size_t> order(config.class_vocab.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            rng.shuffle(order);
            const int pool = std::max(2, (n_obj + 1) / 2);
            for (int i = 0; i < n_obj; ++i)
                classes.push_back(config.class_vocab[order[rng.uniform_int(0, pool - 1)]]);
        }

        // Object placement with pairwise separation.
        bool placed_all = true;
        for (int i = 0; i < n_obj && placed_all; ++i) {
            geometry::ObjectInstance candidate;
            bool ok = false;
            for (int tries = 0; tries < 50; ++tries) {
                Eigen::Vector3d he(rng.uniform(config.half_extent_min, config.half_extent_max),
                                   rng.uniform(config.half_extent_min, config.half_extent_max),
                                   rng.uniform(config.half_extent_min, config.half_extent_max));
                Eigen::Vector3d pos(rng.uniform(-config.workspace_half_x, config.workspace_half_x),
                                    rng.uniform(-config.workspace_half_y, config.workspace_half_y),
                                    he.z());
                candidate = geometry::ObjectInstance::make(i, classes[i], pos, he);
                ok = true;
                for (const auto& other : scene.objects) {
                    const double min_dist =
                        kSeparationFactor * (candidate.half_extents.norm() + other.half_extents.norm());
                    if ((candidate.position - other.position).norm() < min_dist) {
                        ok = false;
                        break;
                    }
                }
                if (ok) break;
            }
            if (!ok) {
                placed_all = false;
                break;
            }
            scene.objects.push_back(candidate);
        }
        if (!placed_all) continue;

        // Camera ring; each view aims at one of the objects so views stay
        // partial and complementary.
        const double base_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (int v = 0; v < config.num_views; ++v) {
            const double angle = base_angle + 2.0 * std::numbers::pi * v / config.num_views +
                                 rng.uniform(-std::numbers::pi / 10.0, std::numbers::pi / 10.0);
            const double radius = rng.uniform(config.ring_radius_min, config.ring_radius_max);
            const double height = rng.uniform(config.ring_height_min, config.ring_height_max);
            const Eigen::Vector3d eye(radius * std::cos(angle), radius * std::sin(angle), height);
            const auto& aim = scene.objects[rng.uniform_int(0, n_obj - 1)];
            const Eigen::Vector3d target = aim.position + Eigen::Vector3d(rng.uniform(-0.08, 0.08),
                                                                          rng.uniform(-0.08, 0.08), 0.0);
            scene.views.push_back(geometry::CameraView::look_at(v, eye, target));
        }

        // Every object must be visible somewhere.
        VisibilityTable table(scene);
        if (static_cast<int>(table.union_ids.size()) == n_obj) return scene;
    }
    throw GenerationError("sample_scene: attempt budget exhausted", seed);
}

TaskInstance gen_counting(const geometry::Scene& scene, const std::string& target_class) {
    const auto& vocab = class_vocabulary();
    if (std::find(vocab.begin(), vocab.end(), target_class) == vocab.end())
        throw std::invalid_argument("gen_counting: unknown class '" + target_class + "'");

    VisibilityTable table(scene);
    TaskInstance instance;
    instance.task = TaskKind::Counting;
    populate_common(instance, scene, table);
    instance.question = "How many " + target_class + " do you observe?";

    long long count = 0;
    for (int id : table.union_ids)
        if (object_by_id(scene, id).class_name == target_class) ++count;
    instance.ground_truth.count = count;

    instance.reference_trace = render_trace(instance);
    return instance;
}

TaskInstance gen_relation(const geometry::Scene& scene, std::uint64_t seed) {
    std::set<std::string> distinct;
    for (const auto& o : scene.objects) distinct.insert(o.class_name);
    if (scene.objects.size() < 3 || distinct.size() != scene.objects.size())
        throw std::invalid_argument("gen_relation: needs >= 3 objects of distinct classes");

    VisibilityTable table(scene);
    Rng rng(mix_seed(seed, 0x31fbULL));
    const auto order = fused_order(scene);
    const int n = static_cast<int>(order.size());

    TaskInstance instance;
    instance.task = TaskKind::Relation;
    populate_common(instance, scene, table);

    auto pick_pair = [&](std::vector<std::pair<int, int>> candidates,
                         std::optional<std::pair<int, int>>& out, bool& cross_view) {
        if (candidates.empty()) return;
        std::vector<std::pair<int, int>> cross;
        for (const auto& pair : candidates)
            if (!table.co_visible(pair.first, pair.second)) cross.push_back(pair);
        const auto& pool = cross.empty() ? candidates : cross;
        out = pool[rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1)];
        cross_view = !cross.empty();
    };

    std::vector<int> templates = {0, 1, 2};
    rng.shuffle(templates);
    for (int tmpl : templates) {
        if (tmpl == 0 && n <= 10) {
            // Ordinal from the left in the fused ordering.
            const int k = static_cast<int>(rng.uniform_int(0, n - 1));
            instance.question = std::string("What do you see as the ") + kOrdinalWords[k] +
                                " item from the left on the table?";
            instance.ground_truth.answer_text = object_by_id(scene, order[k]).class_name;
            instance.reference_trace = render_trace(instance);
            return instance;
        }
        if (tmpl == 1) {
            // Left-of yes/no.
            std::vector<std::pair<int, int>> candidates;
            for (int a : order)
                for (int b : order)
                    if (a != b) candidates.emplace_back(a, b);
            std::optional<std::pair<int, int>> pair;
            bool cross = false;
            pick_pair(std::move(candidates), pair, cross);
            if (!pair) continue;
            const auto& a = object_by_id(scene, pair->first);
            const auto& b = object_by_id(scene, pair->second);
            instance.question = "Is the " + a.class_name + " to the left of the " + b.class_name + "?";
            instance.ground_truth.answer_text = a.position.x() < b.position.x() ? "yes" : "no";
            instance.cross_view_pair = cross;
            instance.reference_trace = render_trace(instance);
            return instance;
        }
        if (tmpl == 2) {
            // Nearest object to an anchor; requires a unique nearest.
            std::vector<std::pair<int, int>> candidates;
            constexpr double kInf = std::numeric_limits<double>::infinity();
            for (int a : order) {
                int best = -1;
                double best_dist = kInf, second = kInf;
                for (int b : order) {
                    if (b == a) continue;
                    const double d = (object_by_id(scene, a).position - object_by_id(scene, b).position).norm();
                    if (d < best_dist) {
                        second = best_dist;
                        best = b;
                        best_dist = d;
                    } else if (d < second) {
                        second = d;
                    }
                }
                if (best >= 0 && second - best_dist > 1e-9) candidates.emplace_back(a, best);
            }
            std::optional<std::pair<int, int>> pair;
            bool cross = false;
            pick_pair(std::move(candidates), pair, cross);
            if (!pair) continue;
            const auto& anchor = object_by_id(scene, pair->first);
            instance.question = "Which object is nearest to the " + anchor.class_name + "?";
            instance.ground_truth.answer_text = object_by_id(scene, pair->second).class_name;
            instance.cross_view_pair = cross;
            instance.reference_trace = render_trace(instance);
            return instance;
        }
    }
    throw GenerationError("gen_relation: no template applies", seed);
}

TaskInstance gen_grasp(const geometry::Scene& scene, std::uint64_t seed) {
    VisibilityTable table(scene);
    Rng rng(mix_seed(seed, 0x9ea5ULL));
    const auto order = fused_order(scene);
    const int n = static_cast<int>(order.size());

    struct Option {
        std::string question;
        int target_id;
    };
    std::vector<Option> options;

    // Unique-class direct reference.
    for (const auto& obj : scene.objects)
        if (class_unique(scene, obj.class_name))
            options.push_back({"Please grasp the " + obj.class_name + ".", obj.id});

    if (n >= 2) {
        // "In the left of {anchor}": the target is the only object left of it.
        const auto& anchor_l = object_by_id(scene, order[1]);
        if (class_unique(scene, anchor_l.class_name))
            options.push_back(
                {"Please grasp the things in the left of " + anchor_l.class_name + ".", order[0]});
        const auto& anchor_r = object_by_id(scene, order[n - 2]);
        if (class_unique(scene, anchor_r.class_name))
            options.push_back(
                {"Please grasp the things in the right of " + anchor_r.class_name + ".", order[n - 1]});

        // Farthest from an anchor, when the argmax is unique.
        for (const auto& anchor : scene.objects) {
            if (!class_unique(scene, anchor.class_name)) continue;
            int best = -1;
            double best_dist = -1.0, second = -1.0;
            for (const auto& other : scene.objects) {
                if (other.id == anchor.id) continue;
                const double d = (anchor.position - other.position).norm();
                if (d > best_dist) {
                    second = best_dist;
                    best = other.id;
                    best_dist = d;
                } else if (d > second) {
                    second = d;
                }
            }
            if (best >= 0 && best_dist - second > 1e-9)
                options.push_back(
                    {"Please grasp the thing farthest from the " + anchor.class_name + ".", best});
        }
    }

    rng.shuffle(options);
    for (const auto& option : options) {
        // Designated view: maximal unoccluded fraction, ties to lowest index.
        int best_view = -1;
        double best_frac = -1.0;
        for (std::size_t v = 0; v < scene.views.size(); ++v) {
            for (const auto& s : table.stats[v]) {
                if (s.id != option.target_id || !s.visible) continue;
                if (s.unoccluded_fraction > best_frac + 1e-12) {
                    best_frac = s.unoccluded_fraction;
                    best_view = static_cast<int>(v);
                }
            }
        }
        if (best_view < 0) continue;

        const auto& target = object_by_id(scene, option.target_id);
        const auto uv = geometry::project_point(target.grasp_point, scene.views[best_view]);
        if (!uv) continue;
        const auto* stat = &*std::find_if(table.stats[best_view].begin(), table.stats[best_view].end(),
                                          [&](const auto& s) { return s.id == option.target_id; });
        if (!stat->box.contains(uv->x(), uv->y())) continue;

        TaskInstance instance;
        instance.task = TaskKind::Grasp;
        populate_common(instance, scene, table);
        instance.question = option.question;
        instance.ground_truth.grasp = GroundTruth::Grasp{best_view, uv->x(), uv->y()};
        instance.reference_trace = render_trace(instance);
        return instance;
    }
    throw GenerationError("gen_grasp: no target selectable", seed);
}

std::string render_trace(const TaskInstance& instance) {
    const auto keys = reward::key_object_ids(instance);
    auto is_key = [&keys](int id) { return std::binary_search(keys.begin(), keys.end(), id); };
    const int n_views = static_cast<int>(instance.per_view_boxes.size());
    const char* perspectives_word = n_views == 2 ? "two" : "three";

    std::string body;
    switch (instance.task) {
        case TaskKind::Counting:
            body = std::string("I need to analyze images from ") + perspectives_word +
                   " robot perspectives to answer the question about '" + instance.question + "'.\n";
            break;
        case TaskKind::Relation:
            body = std::string("I need to analyze images from ") + perspectives_word +
                   " robot perspectives to answer the spatial reasoning question: '" +
                   instance.question + "'.\n";
            break;
        case TaskKind::Grasp:
            body = std::string("I need to analyze images from ") + perspectives_word +
                   " robot perspectives to determine the precise grasping location for the instruction: '" +
                   instance.question + "'.\n";
            break;
    }

    for (int v = 0; v < n_views; ++v) {
        body += "\n" + view_header(v) + "\n";
        bool any = false;
        for (const auto& b : instance.per_view_boxes[v]) {
            if (!is_key(b.id)) continue;
            body += "- I can see a " + b.class_name + " at " + box_text(b.box) + "\n";
            any = true;
        }
        if (!any) body += "- I do not see any objects relevant to the question in this perspective.\n";
    }

    body += "\nOverlap number = " + std::to_string(instance.overlap_truth) + "\n";

    // Correspondence statements for the key objects.
    std::string correspondence;
    for (int id : keys) {
        std::vector<int> views_with;
        for (int v = 0; v < n_views; ++v)
            for (const auto& b : instance.per_view_boxes[v])
                if (b.id == id) views_with.push_back(v);
        if (views_with.empty()) continue;
        const auto box_in = [&](int v) -> std::string {
            for (const auto& b : instance.per_view_boxes[v])
                if (b.id == id) return box_text(b.box);
            return "";
        };
        const std::string label =
            object_by_id(instance.scene, id).class_name + "_" + std::to_string(id);
        if (views_with.size() == 1) {
            correspondence += "- " + label + " is only visible in " + view_short_name(views_with[0]) +
                              " at " + box_in(views_with[0]) + "\n";
        } else {
            correspondence += "- " + label + " visible in " + view_short_name(views_with[0]) + " at " +
                              box_in(views_with[0]) + " corresponds to the same object visible in " +
                              view_short_name(views_with[1]) + " at " + box_in(views_with[1]) + "\n";
        }
    }
    if (!correspondence.empty())
        body += "\nAnalyzing spatial correspondence between the perspectives:\n" + correspondence;

    std::string boxed;
    switch (instance.task) {
        case TaskKind::Counting:
            body += "\nCombining observations from " +
                    std::string(n_views == 2 ? "both perspectives" : "all perspectives") +
                    ", the total number of objects you asked me to count is " +
                    std::to_string(*instance.ground_truth.count) + ".\n";
            boxed = std::to_string(*instance.ground_truth.count);
            break;
        case TaskKind::Relation:
            body += "\nTherefore, the answer to '" + instance.question + "' is " +
                    *instance.ground_truth.answer_text + ".\n";
            boxed = *instance.ground_truth.answer_text;
            break;
        case TaskKind::Grasp: {
            const auto& grasp = *instance.ground_truth.grasp;
            body += "\nThus I should grasp at image " + std::to_string(grasp.view) + " coordinates [" +
                    format_shortest(grasp.u) + ", " + format_shortest(grasp.v) + "].\n";
            boxed = std::to_string(grasp.view) + ", [" + format_shortest(grasp.u) + ", " +
                    format_shortest(grasp.v) + "]";
            break;
        }
    }

    return "<think>\n" + body + "</think>\n\n\\boxed{" + boxed + "}";
}

void export_dataset(const std::vector<TaskInstance>& instances, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("export_dataset: cannot open '" + path + "' for writing");
    for (const auto& instance : instances) {
        out << instance_to_json(instance).dump() << '\n';
        if (!out) throw std::runtime_error("export_dataset: write failed for '" + path + "'");
    }
}

std::vector<TaskInstance> generate_instances(TaskKind task, int count, std::uint64_t seed,
                                             Split split, int num_views) {
    const std::uint64_t split_tag = split == Split::Train ? 0 : 1;
    const char* task_prefix = task == TaskKind::Counting ? "e2w1"
                              : task == TaskKind::Relation ? "e2w2"
                                                           : "e2w3";
    const char* split_name = split == Split::Train ? "train" : "test";

    std::vector<TaskInstance> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        const std::uint64_t instance_seed = mix_seed(seed, task_tag(task), split_tag, i);
        bool made = false;
        for (int attempt = 0; attempt < 100 && !made; ++attempt) {
            const std::uint64_t attempt_seed = mix_seed(instance_seed, attempt);
            SceneSamplerConfig config;
            config.num_views = num_views;
            config.distinct_classes = task != TaskKind::Counting;
            try {
                const auto scene = sample_scene(config, attempt_seed);
                TaskInstance instance;
                switch (task) {
                    case TaskKind::Counting: {
                        Rng rng(mix_seed(attempt_seed, 0xc0117ULL));
                        std::string target;
                        if (rng.bernoulli(0.1)) {
                            // Sometimes ask about a class that is absent.
                            std::set<std::string> present;
                            for (const auto& o : scene.objects) present.insert(o.class_name);
                            std::vector<std::string> absent;
                            for (const auto& cls : class_vocabulary())
                                if (!present.count(cls)) absent.push_back(cls);
                            target = absent[rng.uniform_int(0, static_cast<std::int64_t>(absent.size()) - 1)];
                        } else {
                            target = scene.objects[rng.uniform_int(0, static_cast<std::int64_t>(scene.objects.size()) - 1)]
                                         .class_name;
                        }
                        instance = gen_counting(scene, target);
                        break;
                    }
                    case TaskKind::Relation:
                        instance = gen_relation(scene, attempt_seed);
                        break;
                    case TaskKind::Grasp:
                        instance = gen_grasp(scene, attempt_seed);
                        break;
                }
                char id[64];
                std::snprintf(id, sizeof id, "%s-%s-%06d", task_prefix, split_name, i);
                instance.instance_id = id;
                out.push_back(std::move(instance));
                made = true;
            } catch (const GenerationError&) {
                // Try the next derived seed.
            }
        }
        if (!made)
            throw GenerationError("generate_instances: budget exhausted for instance " +
                                      std::to_string(i),
                                  instance_seed);
    }
    return out;
}

int scaled_train_count(TaskKind task, double scale) {
    const long long base = task == TaskKind::Counting ? 30000
                           : task == TaskKind::Relation ? 60000
                                                        : 70000;
    return static_cast<int>(std::max(1LL, std::llround(base * scale)));
}

int scaled_test_count(double scale) {
    return static_cast<int>(std::max(1LL, std::llround(200.0 * scale)));
}

}  // namespace e2w::datagen
