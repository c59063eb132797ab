#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "e2w/geometry.hpp"
#include "e2w/task.hpp"

namespace e2w::datagen {

// 50 everyday categories; includes every class used by the trace fixtures.
const std::vector<std::string>& class_vocabulary();

// Tabletop sampler parameters. The canonical table frame is the world frame
// itself: +x is rightward, so fused left-to-right ordering is ascending
// world x.
struct SceneSamplerConfig {
    int min_objects = 3;
    int max_objects = 6;
    std::vector<std::string> class_vocab = class_vocabulary();
    bool distinct_classes = true;  // false: draw from a small pool, duplicates likely
    double workspace_half_x = 0.5;   // meters
    double workspace_half_y = 0.35;  // meters
    double half_extent_min = 0.03;   // meters, per axis
    double half_extent_max = 0.07;   // meters, per axis
    double ring_radius_min = 0.75;   // camera ring, meters
    double ring_radius_max = 1.1;
    double ring_height_min = 0.45;
    double ring_height_max = 0.8;
    int num_views = 2;  // N in {2, 3}
    int max_attempts = 1000;
};

// Deterministic for a given (config, seed). Guarantees non-interpenetrating
// objects (center distance >= 0.8 * sum of half-extent norms) and that every
// object is visible in at least one view. Throws GenerationError when the
// attempt budget runs out.
geometry::Scene sample_scene(const SceneSamplerConfig& config, std::uint64_t seed);

// E2W-1: "How many {class} do you observe?" counted once across views.
TaskInstance gen_counting(const geometry::Scene& scene, const std::string& target_class);

// E2W-2: ordinal-from-left, left-of/right-of yes-no, or nearest-to; answers
// come from world coordinates in the fused frame. Prefers object pairs that
// are not co-visible in any single view. Throws GenerationError when no
// template applies.
TaskInstance gen_relation(const geometry::Scene& scene, std::uint64_t seed);

// E2W-3: target selected by a relational clause; ground truth is the grasp
// point projected into the view where the target is least occluded.
// Throws GenerationError when no target/clause works.
TaskInstance gen_grasp(const geometry::Scene& scene, std::uint64_t seed);

// Reference chain-of-thought in the benchmark grammar: <think> with per-view
// evidence boxes, an "Overlap number = n" line, correspondence statements,
// then the boxed answer. Round-trips through parser::parse_response.
std::string render_trace(const TaskInstance& instance);

// One JSON object per line, stable field order. Throws on I/O failure with
// the path in the message.
void export_dataset(const std::vector<TaskInstance>& instances, const std::string& path);

enum class Split { Train, Test };

// Deterministic batch generation; instance i derives from
// mix(seed, task, split, i) so splits are seed-disjoint by construction.
std::vector<TaskInstance> generate_instances(TaskKind task, int count, std::uint64_t seed,
                                             Split split, int num_views = 2);

// Published split sizes (30k/60k/70k train, 200 test per task) scaled by
// `scale`, never below 1.
int scaled_train_count(TaskKind task, double scale);
int scaled_test_count(double scale);

}  // namespace e2w::datagen
