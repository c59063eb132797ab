#include "e2w/reward.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "e2w/strfmt.hpp"

namespace e2w::reward {

namespace {

constexpr double kTieEps = 1e-9;

// Max-weight assignment value over partial injections of size min(m, n),
// O(s^3) potential-based Hungarian on the zero-padded square matrix.
// Weights must be nonnegative.
double best_assignment_total(const std::vector<std::vector<double>>& w) {
    const int m = static_cast<int>(w.size());
    const int n = m > 0 ? static_cast<int>(w[0].size()) : 0;
    if (m == 0 || n == 0) return 0.0;
    const int s = std::max(m, n);
    constexpr double kInf = std::numeric_limits<double>::infinity();

    std::vector<std::vector<double>> cost(s + 1, std::vector<double>(s + 1, 0.0));
    for (int i = 1; i <= m; ++i)
        for (int j = 1; j <= n; ++j) cost[i][j] = -w[i - 1][j - 1];

    std::vector<double> u(s + 1, 0.0), v(s + 1, 0.0);
    std::vector<int> match(s + 1, 0), way(s + 1, 0);
    for (int i = 1; i <= s; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(s + 1, kInf);
        std::vector<char> used(s + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            int j1 = 0;
            double delta = kInf;
            for (int j = 1; j <= s; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0][j] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= s; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    double total = 0.0;
    for (int j = 1; j <= n; ++j) {
        const int i = match[j];
        if (i >= 1 && i <= m) total += w[i - 1][j - 1];
    }
    return total;
}

// Best attainable total from preds {first_pred, ..} x gts not in used_gt,
// with pred `first_pred` onward.
double remaining_total(const std::vector<std::vector<double>>& w, int first_pred,
                       const std::vector<char>& used_gt) {
    const int m = static_cast<int>(w.size());
    const int n = m > 0 ? static_cast<int>(w[0].size()) : 0;
    std::vector<int> gts;
    for (int j = 0; j < n; ++j)
        if (!used_gt[j]) gts.push_back(j);
    if (first_pred >= m || gts.empty()) return 0.0;
    std::vector<std::vector<double>> sub(m - first_pred, std::vector<double>(gts.size()));
    for (int i = first_pred; i < m; ++i)
        for (std::size_t k = 0; k < gts.size(); ++k) sub[i - first_pred][k] = w[i][gts[k]];
    return best_assignment_total(sub);
}

bool parse_full_int(std::string_view s, long long& out) {
    if (s.empty()) return false;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

std::vector<std::string> question_tokens(const std::string& question) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : question) {
        if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
            cur.push_back(c);
        } else if (c >= 'A' && c <= 'Z') {
            cur.push_back(static_cast<char>(c - 'A' + 'a'));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

}  // namespace

double iou(const geometry::BoundingBox2D& a, const geometry::BoundingBox2D& b) {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

Matching hungarian_match(const std::vector<geometry::BoundingBox2D>& pred,
                         const std::vector<geometry::BoundingBox2D>& gt) {
    const int m = static_cast<int>(pred.size());
    const int n = static_cast<int>(gt.size());
    Matching result;
    if (m == 0 || n == 0) return result;

    std::vector<std::vector<double>> w(m, std::vector<double>(n));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) w[i][j] = iou(pred[i], gt[j]);

    const double best = best_assignment_total(w);

    // Fix pairs greedily in pred order, preferring the smallest gt index that
    // still attains the optimum; a pred is skipped only when forced, which
    // yields the lexicographically smallest optimal pair sequence.
    std::vector<char> used_gt(n, 0);
    int slots = std::min(m, n);
    double acc = 0.0;
    for (int i = 0; i < m && slots > 0; ++i) {
        int chosen = -1;
        std::vector<char> trial = used_gt;
        for (int j = 0; j < n; ++j) {
            if (used_gt[j]) continue;
            trial[j] = 1;
            const double attainable = acc + w[i][j] + remaining_total(w, i + 1, trial);
            trial[j] = 0;
            if (attainable >= best - kTieEps) {
                chosen = j;
                break;
            }
        }
        if (chosen < 0) continue;  // every optimum excludes this pred
        used_gt[chosen] = 1;
        acc += w[i][chosen];
        result.pairs.emplace_back(i, chosen);
        --slots;
    }
    result.total_iou = acc;
    return result;
}

double grounding_reward(const std::vector<geometry::BoundingBox2D>& pred,
                        const std::vector<geometry::BoundingBox2D>& gt) {
    if (pred.empty() && gt.empty()) return 1.0;
    if (pred.empty() || gt.empty()) return 0.0;
    const double denom = static_cast<double>(std::max(pred.size(), gt.size()));
    return hungarian_match(pred, gt).total_iou / denom;
}

int overlap_reward(const parser::ParsedResponse& parsed, long long n_star) {
    return (parsed.overlap_count && *parsed.overlap_count == n_star) ? 1 : 0;
}

int qa_answer_reward(const parser::ParsedResponse& parsed, const GroundTruth& gt) {
    if (gt.count) {
        if (const auto* count = std::get_if<long long>(&parsed.answer)) return *count == *gt.count ? 1 : 0;
        if (const auto* text = std::get_if<std::string>(&parsed.answer)) {
            long long value;
            if (parse_full_int(parser::normalize_answer_text(*text), value)) return value == *gt.count ? 1 : 0;
        }
        return 0;
    }
    if (gt.answer_text) {
        const std::string expected = parser::normalize_answer_text(*gt.answer_text);
        std::string got;
        if (const auto* text = std::get_if<std::string>(&parsed.answer)) {
            got = parser::normalize_answer_text(*text);
        } else if (const auto* count = std::get_if<long long>(&parsed.answer)) {
            got = std::to_string(*count);
        } else {
            return 0;
        }
        long long a, b;
        if (parse_full_int(expected, a) && parse_full_int(got, b)) return a == b ? 1 : 0;
        return expected == got ? 1 : 0;
    }
    throw std::invalid_argument("qa_answer_reward: ground truth is not a QA answer");
}

double grasp_answer_reward(const parser::ParsedResponse& parsed, const GroundTruth& gt,
                           const RewardWeights& weights) {
    if (!gt.grasp) throw std::invalid_argument("grasp_answer_reward: ground truth is not a grasp");
    const auto* answer = std::get_if<parser::GraspAnswer>(&parsed.answer);
    if (!answer || answer->view != gt.grasp->view) return 0.0;
    const double du = answer->u - gt.grasp->u;
    const double dv = answer->v - gt.grasp->v;
    const double dist = std::sqrt(du * du + dv * dv);
    return std::max(0.0, 1.0 - dist / weights.d_max);
}

std::vector<int> key_object_ids(const TaskInstance& instance) {
    // Class names mentioned in the question, matched on word boundaries.
    const auto tokens = question_tokens(instance.question);
    auto mentioned = [&tokens](const std::string& class_name) {
        return std::find(tokens.begin(), tokens.end(), class_name) != tokens.end();
    };

    std::vector<int> ids;
    auto add = [&ids](int id) {
        if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
    };

    std::string answer_class;
    if (instance.task == TaskKind::Relation && instance.ground_truth.answer_text)
        answer_class = parser::normalize_answer_text(*instance.ground_truth.answer_text);

    bool any_mentioned = false;
    for (const auto& view : instance.per_view_boxes)
        for (const auto& b : view)
            if (mentioned(b.class_name)) any_mentioned = true;

    for (const auto& view : instance.per_view_boxes) {
        for (const auto& b : view) {
            switch (instance.task) {
                case TaskKind::Counting:
                    if (mentioned(b.class_name)) add(b.id);
                    break;
                case TaskKind::Relation:
                    // Ordinal questions name no class: every visible object
                    // anchors the ordering. Otherwise the named classes plus
                    // the answer object.
                    if (!any_mentioned || mentioned(b.class_name) || b.class_name == answer_class)
                        add(b.id);
                    break;
                case TaskKind::Grasp:
                    if (mentioned(b.class_name)) add(b.id);
                    break;
            }
        }
    }

    // Grasp target: whichever object's box contains the ground-truth point
    // in the designated view.
    if (instance.task == TaskKind::Grasp && instance.ground_truth.grasp) {
        const auto& grasp = *instance.ground_truth.grasp;
        if (grasp.view >= 0 && grasp.view < static_cast<int>(instance.per_view_boxes.size()))
            for (const auto& b : instance.per_view_boxes[grasp.view])
                if (b.box.contains(grasp.u, grasp.v)) add(b.id);
    }

    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<geometry::BoundingBox2D> grounding_gt_boxes(const TaskInstance& instance) {
    const auto keys = key_object_ids(instance);
    std::vector<geometry::BoundingBox2D> boxes;
    for (const auto& view : instance.per_view_boxes)
        for (const auto& b : view)
            if (std::binary_search(keys.begin(), keys.end(), b.id))
                if (std::find(boxes.begin(), boxes.end(), b.box) == boxes.end()) boxes.push_back(b.box);
    return boxes;
}

RewardBreakdown total_reward(const parser::ParsedResponse& parsed, const TaskInstance& instance,
                             const RewardWeights& weights) {
    RewardBreakdown out;
    out.r_format = parser::check_format(parsed);
    out.r_ground = grounding_reward(parsed.evidence_boxes, grounding_gt_boxes(instance));
    out.r_overlap = overlap_reward(parsed, instance.overlap_truth);
    switch (instance.task) {
        case TaskKind::Counting:
        case TaskKind::Relation:
            out.r_ans = qa_answer_reward(parsed, instance.ground_truth);
            break;
        case TaskKind::Grasp:
            out.r_ans = grasp_answer_reward(parsed, instance.ground_truth, weights);
            break;
    }
    out.r_cvsr = weights.w_ground * out.r_ground + weights.w_overlap * out.r_overlap +
                 weights.w_ans * out.r_ans;
    out.r_total = weights.lambda_format * out.r_format + weights.lambda_cvsr * out.r_cvsr;
    return out;
}

RewardBreakdown score_response_text(const std::string& response_text, const TaskInstance& instance,
                                    const RewardWeights& weights) {
    return total_reward(parser::parse_response(response_text, instance.task), instance, weights);
}

std::string score_line(const std::string& instance_id, const RewardBreakdown& b) {
    std::string out = "{\"instance_id\":";
    out += nlohmann::json(instance_id).dump();
    out += ",\"r_format\":" + format_sig12(b.r_format);
    out += ",\"r_ground\":" + format_sig12(b.r_ground);
    out += ",\"r_overlap\":" + format_sig12(b.r_overlap);
    out += ",\"r_ans\":" + format_sig12(b.r_ans);
    out += ",\"r_cvsr\":" + format_sig12(b.r_cvsr);
    out += ",\"r_total\":" + format_sig12(b.r_total);
    out += "}";
    return out;
}

}  // namespace e2w::reward
