#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "e2w/reward.hpp"
#include "e2w/task.hpp"

namespace e2w::evalharness {

// Per-response benchmark result. Exactly one of correct / grasp_score is
// populated, matching the task kind.
struct EvalRecord {
    std::string instance_id;
    TaskKind task = TaskKind::Counting;
    std::optional<bool> correct;        // QA tasks
    std::optional<double> grasp_score;  // 0..100
    reward::RewardBreakdown breakdown;
};

// Main-table conventions: accuracies to one decimal, scores and averages to
// two; a column with no records is absent, not zero.
struct BenchmarkReport {
    std::optional<double> counting_acc;
    std::optional<double> relation_acc;
    std::optional<double> reasoning_avg;  // equal-weight mean of present accuracies
    std::optional<double> grasp_score;    // mean grasp score == perception average
    long long n_records = 0;
    long long n_counting = 0;
    long long n_relation = 0;
    long long n_grasp = 0;
    reward::RewardWeights weights;
};

// Total over arbitrary response text; unparseable input scores 0, never throws.
EvalRecord score_record(const TaskInstance& instance, const std::string& response_text,
                        const reward::RewardWeights& weights);

// Throws std::invalid_argument when records is empty.
BenchmarkReport aggregate(const std::vector<EvalRecord>& records,
                          const reward::RewardWeights& weights);

nlohmann::ordered_json report_to_json(const BenchmarkReport& report);
std::string render_report_table(const BenchmarkReport& report);

}  // namespace e2w::evalharness
