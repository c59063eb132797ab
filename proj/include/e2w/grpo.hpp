#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "e2w/reward.hpp"
#include "e2w/task.hpp"

namespace e2w::grpo {

struct GrpoConfig {
    int group_size = 8;        // G
    double clip_eps = 0.2;     // epsilon
    double kl_beta = 0.04;     // beta
    double learning_rate = 0.01;
    double sigma_floor = 1e-8; // advantage denominator floor
};

// Small categorical policy: one logit vector per context over a finite
// answer vocabulary.
struct ToyPolicy {
    std::vector<std::vector<double>> logits;  // [context][answer]

    static ToyPolicy uniform(int contexts, int vocab);

    int contexts() const { return static_cast<int>(logits.size()); }
    int vocab() const { return logits.empty() ? 0 : static_cast<int>(logits.front().size()); }
    std::vector<double> probs(int context) const;
    std::vector<double> log_probs(int context) const;
    double log_prob(int context, int answer) const;
    int greedy(int context) const;  // argmax, ties to the lowest index
};

struct Candidate {
    int answer = 0;
    double logp_current = 0.0;  // at sampling time
    double logp_ref = 0.0;
    double reward = 0.0;
};

struct GroupSample {
    int context = 0;
    std::vector<Candidate> candidates;  // size G
};

// A_j = (R_j - mean) / max(population std, sigma_floor).
std::vector<double> group_advantages(const std::vector<double>& rewards, double sigma_floor);

double prob_ratio(double logp_current, double logp_ref);

// min(r*A, clip(r, 1-eps, 1+eps)*A).
double clipped_surrogate(double ratio, double advantage, double eps);

// Exact KL(p || q) for categorical distributions on a shared support;
// q must be strictly positive wherever p is.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

// Mean over groups of the clipped-surrogate sum, minus beta times the mean
// per-context KL(policy || ref). Log-probs are recomputed from the policies;
// stored candidate log-probs are sampling-time snapshots only.
// Throws std::invalid_argument on an empty group list.
double grpo_objective(const std::vector<GroupSample>& groups, const ToyPolicy& policy,
                      const ToyPolicy& ref, const GrpoConfig& cfg);

// Analytic gradient of grpo_objective with respect to every logit.
std::vector<std::vector<double>> grpo_objective_gradient(const std::vector<GroupSample>& groups,
                                                         const ToyPolicy& policy,
                                                         const ToyPolicy& ref,
                                                         const GrpoConfig& cfg);

// Gradient ascent on sum log pi(answer | context) over the labeled set.
ToyPolicy sft_warmstart(ToyPolicy policy, const std::vector<std::pair<int, int>>& labeled,
                        int epochs, double learning_rate = 0.5);

struct TrainStep {
    int step = 0;            // 1-based
    double objective = 0.0;  // at the pre-update policy
    double mean_reward = 0.0;
    double mean_kl = 0.0;    // sampled context, pre-update
    double greedy_accuracy = 0.0;  // post-update, whole dataset
};

struct TrainResult {
    ToyPolicy policy;
    std::vector<TrainStep> trace;
};

// Desk-scale training loop over counting instances: per step, sample one
// context, draw G candidate answers, render them as minimally formatted
// responses, score with the full reward, and ascend the GRPO objective.
// answer_vocab_size defines answers {0, .., V-1}; throws
// std::invalid_argument if a ground truth is not covered.
// rich_candidates additionally samples evidence boxes and overlap
// declarations so the grounding/overlap reward paths are exercised.
TrainResult grpo_train(const std::vector<TaskInstance>& dataset, ToyPolicy policy,
                       const GrpoConfig& cfg, int steps, std::uint64_t seed,
                       int answer_vocab_size, bool rich_candidates = false,
                       const reward::RewardWeights& weights = {});

// Minimal well-formed response used for toy candidates.
std::string render_candidate_response(const TaskInstance& instance, long long answer);

// Rich candidate: optionally includes the instance's key boxes and an
// overlap declaration, so grounding/overlap reward paths see signal.
std::string render_rich_candidate_response(const TaskInstance& instance, long long answer,
                                           bool with_boxes, long long overlap_declared);

// "step,objective,mean_reward,mean_kl,greedy_accuracy" rows, 12 significant
// digits, with a header line.
std::string trace_to_csv(const std::vector<TrainStep>& trace);

}  // namespace e2w::grpo
