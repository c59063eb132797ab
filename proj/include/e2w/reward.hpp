#pragma once

#include <string>
#include <utility>
#include <vector>

#include "e2w/geometry.hpp"
#include "e2w/parser.hpp"
#include "e2w/task.hpp"

namespace e2w::reward {

// Published defaults: lambda_1 = 0.1, lambda_2 = 1.0, w_ans = 0.7,
// w_ground = 0.1, w_overlap = 0.2, d_max = 100 px.
struct RewardWeights {
    double lambda_format = 0.1;
    double lambda_cvsr = 1.0;
    double w_ground = 0.1;
    double w_overlap = 0.2;
    double w_ans = 0.7;
    double d_max = 100.0;
};

struct RewardBreakdown {
    double r_format = 0.0;
    double r_ground = 0.0;
    double r_overlap = 0.0;
    double r_ans = 0.0;
    double r_cvsr = 0.0;
    double r_total = 0.0;
};

// Partial injection between predicted and ground-truth boxes.
// pairs are (pred index, gt index) sorted by pred index; |pairs| = min(m, n).
struct Matching {
    std::vector<std::pair<int, int>> pairs;
    double total_iou = 0.0;
};

double iou(const geometry::BoundingBox2D& a, const geometry::BoundingBox2D& b);

// IoU-maximizing matching over all partial injections of size min(m, n).
// Ties broken by the lexicographically smallest pair-index sequence.
Matching hungarian_match(const std::vector<geometry::BoundingBox2D>& pred,
                         const std::vector<geometry::BoundingBox2D>& gt);

// Sum of matched IoUs / max(m, n); 1.0 when both sides are empty.
double grounding_reward(const std::vector<geometry::BoundingBox2D>& pred,
                        const std::vector<geometry::BoundingBox2D>& gt);

// 1 iff an overlap count was declared and equals n_star.
int overlap_reward(const parser::ParsedResponse& parsed, long long n_star);

// Exact match after normalization; numeric answers compared as integers.
int qa_answer_reward(const parser::ParsedResponse& parsed, const GroundTruth& gt);

// Distance-shaped: max(0, 1 - |pred - gt|_2 / d_max); 0 on view mismatch.
double grasp_answer_reward(const parser::ParsedResponse& parsed, const GroundTruth& gt,
                           const RewardWeights& weights);

// Objects whose boxes anchor R_ground for this instance: instances of the
// classes named in the question, plus the answer/target object. Sorted ids.
std::vector<int> key_object_ids(const TaskInstance& instance);

// Pooled over views, restricted to key objects, deduplicated; the ground
// truth side of the grounding reward.
std::vector<geometry::BoundingBox2D> grounding_gt_boxes(const TaskInstance& instance);

RewardBreakdown total_reward(const parser::ParsedResponse& parsed, const TaskInstance& instance,
                             const RewardWeights& weights);

// parse_response + total_reward in one call.
RewardBreakdown score_response_text(const std::string& response_text, const TaskInstance& instance,
                                    const RewardWeights& weights);

// One output line of the batch-scoring JSONL contract (12 significant digits).
std::string score_line(const std::string& instance_id, const RewardBreakdown& breakdown);

}  // namespace e2w::reward
