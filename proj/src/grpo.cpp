#include "e2w/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "e2w/parser.hpp"
#include "e2w/rng.hpp"
#include "e2w/strfmt.hpp"

namespace e2w::grpo {

namespace {

std::vector<double> softmax(const std::vector<double>& z) {
    const double zmax = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double total = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        p[k] = std::exp(z[k] - zmax);
        total += p[k];
    }
    for (auto& v : p) v /= total;
    return p;
}

double log_sum_exp(const std::vector<double>& z) {
    const double zmax = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double v : z) total += std::exp(v - zmax);
    return zmax + std::log(total);
}

// d/dr of min(r*A, clip(r, 1-eps, 1+eps)*A): the usual pessimistic-clip rule.
double surrogate_slope(double ratio, double advantage, double eps) {
    if (ratio >= 1.0 - eps && ratio <= 1.0 + eps) return advantage;
    if (ratio > 1.0 + eps) return advantage < 0.0 ? advantage : 0.0;
    return advantage > 0.0 ? advantage : 0.0;  // ratio < 1 - eps
}

long long counting_ground_truth(const TaskInstance& instance) {
    if (instance.task != TaskKind::Counting || !instance.ground_truth.count)
        throw std::invalid_argument("grpo_train: dataset must contain counting instances");
    return *instance.ground_truth.count;
}

}  // namespace

ToyPolicy ToyPolicy::uniform(int contexts, int vocab) {
    ToyPolicy policy;
    policy.logits.assign(contexts, std::vector<double>(vocab, 0.0));
    return policy;
}

std::vector<double> ToyPolicy::probs(int context) const { return softmax(logits.at(context)); }

std::vector<double> ToyPolicy::log_probs(int context) const {
    const auto& z = logits.at(context);
    const double lse = log_sum_exp(z);
    std::vector<double> lp(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) lp[k] = z[k] - lse;
    return lp;
}

double ToyPolicy::log_prob(int context, int answer) const {
    const auto& z = logits.at(context);
    return z.at(answer) - log_sum_exp(z);
}

int ToyPolicy::greedy(int context) const {
    const auto& z = logits.at(context);
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

std::vector<double> group_advantages(const std::vector<double>& rewards, double sigma_floor) {
    if (rewards.size() < 2) throw std::invalid_argument("group_advantages: needs G >= 2");
    // A fully degenerate group carries no signal; rounding in the mean must
    // not leak through the sigma floor.
    if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); }))
        return std::vector<double>(rewards.size(), 0.0);
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= n;  // population variance
    const double denom = std::max(std::sqrt(var), sigma_floor);
    std::vector<double> adv(rewards.size());
    for (std::size_t j = 0; j < rewards.size(); ++j) adv[j] = (rewards[j] - mean) / denom;
    return adv;
}

double prob_ratio(double logp_current, double logp_ref) { return std::exp(logp_current - logp_ref); }

double clipped_surrogate(double ratio, double advantage, double eps) {
    const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
    return std::min(ratio * advantage, clipped * advantage);
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: support mismatch");
    double kl = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k] == 0.0) continue;
        if (!(q[k] > 0.0)) throw std::invalid_argument("kl_divergence: q must be positive on support");
        kl += p[k] * std::log(p[k] / q[k]);
    }
    return kl < 0.0 ? 0.0 : kl;  // exact KL is nonnegative; clamp rounding dust
}

double grpo_objective(const std::vector<GroupSample>& groups, const ToyPolicy& policy,
                      const ToyPolicy& ref, const GrpoConfig& cfg) {
    if (groups.empty()) throw std::invalid_argument("grpo_objective: no groups");
    double surrogate_sum = 0.0;
    double kl_sum = 0.0;
    for (const auto& group : groups) {
        std::vector<double> rewards;
        rewards.reserve(group.candidates.size());
        for (const auto& c : group.candidates) rewards.push_back(c.reward);
        const auto adv = group_advantages(rewards, cfg.sigma_floor);

        const auto lp = policy.log_probs(group.context);
        const auto lq = ref.log_probs(group.context);
        for (std::size_t j = 0; j < group.candidates.size(); ++j) {
            const int a = group.candidates[j].answer;
            const double ratio = prob_ratio(lp.at(a), lq.at(a));
            surrogate_sum += clipped_surrogate(ratio, adv[j], cfg.clip_eps);
        }
        kl_sum += kl_divergence(policy.probs(group.context), ref.probs(group.context));
    }
    const double n = static_cast<double>(groups.size());
    return surrogate_sum / n - cfg.kl_beta * kl_sum / n;
}

std::vector<std::vector<double>> grpo_objective_gradient(const std::vector<GroupSample>& groups,
                                                         const ToyPolicy& policy,
                                                         const ToyPolicy& ref,
                                                         const GrpoConfig& cfg) {
    if (groups.empty()) throw std::invalid_argument("grpo_objective_gradient: no groups");
    std::vector<std::vector<double>> grad(policy.logits.size());
    for (std::size_t c = 0; c < policy.logits.size(); ++c) grad[c].assign(policy.logits[c].size(), 0.0);

    const double inv_n = 1.0 / static_cast<double>(groups.size());
    for (const auto& group : groups) {
        std::vector<double> rewards;
        rewards.reserve(group.candidates.size());
        for (const auto& c : group.candidates) rewards.push_back(c.reward);
        const auto adv = group_advantages(rewards, cfg.sigma_floor);

        const auto p = policy.probs(group.context);
        const auto lp = policy.log_probs(group.context);
        const auto lq = ref.log_probs(group.context);
        auto& g = grad[group.context];

        for (std::size_t j = 0; j < group.candidates.size(); ++j) {
            const int a = group.candidates[j].answer;
            const double ratio = prob_ratio(lp.at(a), lq.at(a));
            const double slope = surrogate_slope(ratio, adv[j], cfg.clip_eps);
            if (slope == 0.0) continue;
            // dr/dz_k = r * (1[k == a] - p_k)
            const double scale = inv_n * slope * ratio;
            for (std::size_t k = 0; k < g.size(); ++k) g[k] -= scale * p[k];
            g[a] += scale;
        }

        // dKL/dz_k = p_k * (log(p_k / q_k) - KL)
        const auto q = ref.probs(group.context);
        const double kl = kl_divergence(p, q);
        for (std::size_t k = 0; k < g.size(); ++k)
            g[k] -= inv_n * cfg.kl_beta * p[k] * (std::log(p[k] / q[k]) - kl);
    }
    return grad;
}

ToyPolicy sft_warmstart(ToyPolicy policy, const std::vector<std::pair<int, int>>& labeled,
                        int epochs, double learning_rate) {
    if (labeled.empty()) throw std::invalid_argument("sft_warmstart: no labeled data");
    for (const auto& [context, answer] : labeled) {
        if (context < 0 || context >= policy.contexts() || answer < 0 || answer >= policy.vocab())
            throw std::invalid_argument("sft_warmstart: label out of range");
    }
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::vector<std::vector<double>> grad(policy.logits.size());
        for (std::size_t c = 0; c < policy.logits.size(); ++c)
            grad[c].assign(policy.logits[c].size(), 0.0);
        for (const auto& [context, answer] : labeled) {
            const auto p = policy.probs(context);
            for (std::size_t k = 0; k < p.size(); ++k) grad[context][k] -= p[k];
            grad[context][answer] += 1.0;
        }
        for (std::size_t c = 0; c < policy.logits.size(); ++c)
            for (std::size_t k = 0; k < policy.logits[c].size(); ++k)
                policy.logits[c][k] += learning_rate * grad[c][k];
    }
    return policy;
}

std::string render_candidate_response(const TaskInstance& instance, long long answer) {
    return "<think>\nCombining observations from the robot perspectives to answer '" +
           instance.question + "'.\n</think>\n\n\\boxed{" + std::to_string(answer) + "}";
}

std::string render_rich_candidate_response(const TaskInstance& instance, long long answer,
                                           bool with_boxes, long long overlap_declared) {
    std::string body = "Combining observations from the robot perspectives to answer '" +
                       instance.question + "'.\n";
    if (with_boxes) {
        const auto gt_boxes = reward::grounding_gt_boxes(instance);
        for (const auto& b : gt_boxes)
            body += "- I can see an object at [" + format_shortest(b.x1) + ", " + format_shortest(b.y1) +
                    ", " + format_shortest(b.x2) + ", " + format_shortest(b.y2) + "]\n";
    }
    body += "Overlap number = " + std::to_string(overlap_declared) + "\n";
    return "<think>\n" + body + "</think>\n\n\\boxed{" + std::to_string(answer) + "}";
}

TrainResult grpo_train(const std::vector<TaskInstance>& dataset, ToyPolicy policy,
                       const GrpoConfig& cfg, int steps, std::uint64_t seed,
                       int answer_vocab_size, bool rich_candidates,
                       const reward::RewardWeights& weights) {
    if (dataset.empty()) throw std::invalid_argument("grpo_train: empty dataset");
    if (cfg.group_size < 2) throw std::invalid_argument("grpo_train: group size must be >= 2");
    const int contexts = static_cast<int>(dataset.size());
    if (policy.contexts() != contexts || policy.vocab() != answer_vocab_size)
        throw std::invalid_argument("grpo_train: policy shape does not match dataset/vocabulary");
    std::vector<long long> gt(contexts);
    for (int c = 0; c < contexts; ++c) {
        gt[c] = counting_ground_truth(dataset[c]);
        if (gt[c] < 0 || gt[c] >= answer_vocab_size)
            throw std::invalid_argument("grpo_train: answer vocabulary does not cover ground truth " +
                                        std::to_string(gt[c]));
    }

    const ToyPolicy ref = policy;
    Rng rng(mix_seed(seed, 0xa11ceULL));

    TrainResult result;
    result.trace.reserve(steps);
    for (int step = 1; step <= steps; ++step) {
        const int ctx = static_cast<int>(rng.uniform_int(0, contexts - 1));
        const auto probs = policy.probs(ctx);
        const auto lp = policy.log_probs(ctx);
        const auto lq = ref.log_probs(ctx);

        GroupSample group;
        group.context = ctx;
        double reward_sum = 0.0;
        for (int j = 0; j < cfg.group_size; ++j) {
            const int answer = static_cast<int>(rng.categorical(probs));
            std::string response;
            if (rich_candidates) {
                const bool with_boxes = rng.bernoulli(0.5);
                const long long declared =
                    rng.bernoulli(0.5) ? dataset[ctx].overlap_truth : dataset[ctx].overlap_truth + 1;
                response = render_rich_candidate_response(dataset[ctx], answer, with_boxes, declared);
            } else {
                response = render_candidate_response(dataset[ctx], answer);
            }
            const auto breakdown = reward::score_response_text(response, dataset[ctx], weights);
            reward_sum += breakdown.r_total;
            group.candidates.push_back(Candidate{answer, lp[answer], lq[answer], breakdown.r_total});
        }

        const std::vector<GroupSample> groups{group};
        TrainStep row;
        row.step = step;
        row.objective = grpo_objective(groups, policy, ref, cfg);
        row.mean_reward = reward_sum / cfg.group_size;
        row.mean_kl = kl_divergence(probs, ref.probs(ctx));

        const auto grad = grpo_objective_gradient(groups, policy, ref, cfg);
        for (std::size_t k = 0; k < policy.logits[ctx].size(); ++k)
            policy.logits[ctx][k] += cfg.learning_rate * grad[ctx][k];

        int correct = 0;
        for (int c = 0; c < contexts; ++c)
            if (policy.greedy(c) == gt[c]) ++correct;
        row.greedy_accuracy = static_cast<double>(correct) / contexts;
        result.trace.push_back(row);
    }
    result.policy = std::move(policy);
    return result;
}

std::string trace_to_csv(const std::vector<TrainStep>& trace) {
    std::string out = "step,objective,mean_reward,mean_kl,greedy_accuracy\n";
    for (const auto& row : trace) {
        out += std::to_string(row.step);
        out += ',' + format_sig12(row.objective);
        out += ',' + format_sig12(row.mean_reward);
        out += ',' + format_sig12(row.mean_kl);
        out += ',' + format_sig12(row.greedy_accuracy);
        out += '\n';
    }
    return out;
}

}  // namespace e2w::grpo
