#include "e2w/evalharness.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "e2w/parser.hpp"

namespace e2w::evalharness {

namespace {

double round1(double x) { return std::llround(x * 10.0) / 10.0; }
double round2(double x) { return std::llround(x * 100.0) / 100.0; }

}  // namespace

EvalRecord score_record(const TaskInstance& instance, const std::string& response_text,
                        const reward::RewardWeights& weights) {
    EvalRecord record;
    record.instance_id = instance.instance_id;
    record.task = instance.task;
    record.breakdown = reward::score_response_text(response_text, instance, weights);
    if (instance.task == TaskKind::Grasp) {
        record.grasp_score = 100.0 * record.breakdown.r_ans;
    } else {
        record.correct = record.breakdown.r_ans == 1.0;
    }
    return record;
}

BenchmarkReport aggregate(const std::vector<EvalRecord>& records,
                          const reward::RewardWeights& weights) {
    if (records.empty()) throw std::invalid_argument("aggregate: no records");
    BenchmarkReport report;
    report.weights = weights;
    report.n_records = static_cast<long long>(records.size());

    long long counting_correct = 0, relation_correct = 0;
    double grasp_sum = 0.0;
    for (const auto& r : records) {
        switch (r.task) {
            case TaskKind::Counting:
                ++report.n_counting;
                counting_correct += r.correct.value_or(false) ? 1 : 0;
                break;
            case TaskKind::Relation:
                ++report.n_relation;
                relation_correct += r.correct.value_or(false) ? 1 : 0;
                break;
            case TaskKind::Grasp:
                ++report.n_grasp;
                grasp_sum += r.grasp_score.value_or(0.0);
                break;
        }
    }

    if (report.n_counting > 0)
        report.counting_acc = round1(100.0 * counting_correct / report.n_counting);
    if (report.n_relation > 0)
        report.relation_acc = round1(100.0 * relation_correct / report.n_relation);
    if (report.counting_acc || report.relation_acc) {
        // Equal-weight mean of the accuracy columns that are present.
        double sum = 0.0;
        int cols = 0;
        if (report.counting_acc) sum += *report.counting_acc, ++cols;
        if (report.relation_acc) sum += *report.relation_acc, ++cols;
        report.reasoning_avg = round2(sum / cols);
    }
    if (report.n_grasp > 0) report.grasp_score = round2(grasp_sum / report.n_grasp);
    return report;
}

nlohmann::ordered_json report_to_json(const BenchmarkReport& report) {
    nlohmann::ordered_json j;
    if (report.counting_acc) j["counting_acc"] = *report.counting_acc;
    if (report.relation_acc) j["relation_acc"] = *report.relation_acc;
    if (report.reasoning_avg) j["reasoning_avg"] = *report.reasoning_avg;
    if (report.grasp_score) j["grasp_score"] = *report.grasp_score;
    j["n_records"] = report.n_records;
    j["weights"] = nlohmann::ordered_json{{"lambda_format", report.weights.lambda_format},
                                          {"lambda_cvsr", report.weights.lambda_cvsr},
                                          {"w_ground", report.weights.w_ground},
                                          {"w_overlap", report.weights.w_overlap},
                                          {"w_ans", report.weights.w_ans},
                                          {"d_max", report.weights.d_max}};
    return j;
}

std::string render_report_table(const BenchmarkReport& report) {
    char line[160];
    std::string out;
    out += "Task        Metric       Value       N\n";
    out += "--------------------------------------\n";
    auto row = [&](const char* task, const char* metric, const std::optional<double>& value,
                   long long n, int decimals) {
        if (!value) return;
        std::snprintf(line, sizeof line, "%-11s %-9s %*.*f %7lld\n", task, metric, 9, decimals, *value, n);
        out += line;
    };
    row("Counting", "Acc (%)", report.counting_acc, report.n_counting, 1);
    row("Relation", "Acc (%)", report.relation_acc, report.n_relation, 1);
    if (report.reasoning_avg) {
        std::snprintf(line, sizeof line, "%-11s %-9s %9.2f\n", "Reasoning", "Avg", *report.reasoning_avg);
        out += line;
    }
    row("Grasp", "Score", report.grasp_score, report.n_grasp, 2);
    return out;
}

}  // namespace e2w::evalharness
