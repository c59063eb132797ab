// Acceptance suite: one pass/fail line per criterion. Criteria 9 and 10 run
// the real CLI binary end to end.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "e2w/datagen.hpp"
#include "e2w/evalharness.hpp"
#include "e2w/grpo.hpp"
#include "e2w/parser.hpp"
#include "e2w/reward.hpp"
#include "e2w/rng.hpp"
#include "e2w/service.hpp"
#include "e2w/strfmt.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace e2w;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define ACC_REQUIRE(cond)                                                              \
    do {                                                                               \
        if (!(cond)) throw CheckFailure(std::string(#cond) + " @ " + std::to_string(__LINE__)); \
    } while (0)

fs::path work_dir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "e2w_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(E2W_CLI_PATH) + " " + args;
    const int status = std::system(cmd.c_str());
    return status < 0 ? status : WEXITSTATUS(status);
}

// --- 1. published hyperparameter defaults -------------------------------

void criterion_paper_constants() {
    const reward::RewardWeights w;
    ACC_REQUIRE(w.lambda_format == 0.1);
    ACC_REQUIRE(w.lambda_cvsr == 1.0);
    ACC_REQUIRE(w.d_max == 100.0);
    ACC_REQUIRE(w.w_ans == 0.7);
    ACC_REQUIRE(w.w_ground == 0.1);
    ACC_REQUIRE(w.w_overlap == 0.2);
    const grpo::GrpoConfig g;
    ACC_REQUIRE(g.group_size == 8);
    ACC_REQUIRE(g.clip_eps == 0.2);
    ACC_REQUIRE(g.kl_beta == 0.04);
    ACC_REQUIRE(g.sigma_floor == 1e-8);
}

// --- 2. appendix fixture replay ------------------------------------------

void criterion_fixture_replay() {
    const auto case1 = oracles::read_file(oracles::fixture_path("case1_response.txt"));
    const auto p1 = parser::parse_response(case1, TaskKind::Counting);
    ACC_REQUIRE(p1.format_ok);
    ACC_REQUIRE(p1.think_text.has_value());
    ACC_REQUIRE(std::holds_alternative<long long>(p1.answer));
    ACC_REQUIRE(std::get<long long>(p1.answer) == 3);
    GroundTruth gt3;
    gt3.count = 3;
    ACC_REQUIRE(reward::qa_answer_reward(p1, gt3) == 1);

    const auto case3 = oracles::read_file(oracles::fixture_path("case3_response.txt"));
    const auto p3 = parser::parse_response(case3, TaskKind::Grasp);
    ACC_REQUIRE(p3.format_ok);
    ACC_REQUIRE(p3.overlap_count.has_value() && *p3.overlap_count == 1);
    ACC_REQUIRE(std::holds_alternative<parser::GraspAnswer>(p3.answer));
    const auto& grasp = std::get<parser::GraspAnswer>(p3.answer);
    ACC_REQUIRE(grasp.view == 0);
    ACC_REQUIRE(grasp.u == 467.5);
    ACC_REQUIRE(grasp.v == 263.5);
}

// --- 3. Hungarian optimality ----------------------------------------------

void criterion_hungarian() {
    Rng rng(0xbeef);
    for (int t = 0; t < 1000; ++t) {
        const int m = static_cast<int>(rng.uniform_int(0, 6));
        const int n = static_cast<int>(rng.uniform_int(0, 6));
        std::vector<geometry::BoundingBox2D> pred, gt;
        for (int i = 0; i < m; ++i) {
            const double x = rng.uniform(0, 50), y = rng.uniform(0, 50);
            pred.push_back({x, y, x + rng.uniform(1, 30), y + rng.uniform(1, 30)});
        }
        for (int j = 0; j < n; ++j) {
            const double x = rng.uniform(0, 50), y = rng.uniform(0, 50);
            gt.push_back({x, y, x + rng.uniform(1, 30), y + rng.uniform(1, 30)});
        }
        const auto got = reward::hungarian_match(pred, gt);
        const auto want = oracles::brute_force_match(pred, gt);
        ACC_REQUIRE(std::abs(got.total_iou - want.total) <= 1e-9);
        ACC_REQUIRE(got.pairs.size() == want.pairs.size());
        for (std::size_t i = 0; i < got.pairs.size(); ++i) ACC_REQUIRE(got.pairs[i] == want.pairs[i]);
    }
}

// --- 4. gradient correctness ----------------------------------------------

void criterion_gradient() {
    Rng rng(0x9d);
    for (int t = 0; t < 100; ++t) {
        const int contexts = 1 + static_cast<int>(rng.uniform_int(0, 3));
        const int vocab = 3 + static_cast<int>(rng.uniform_int(0, 5));
        grpo::GrpoConfig cfg;
        cfg.clip_eps = rng.uniform(0.1, 0.3);
        cfg.kl_beta = rng.uniform(0.0, 1.0);
        auto policy = grpo::ToyPolicy::uniform(contexts, vocab);
        auto ref = grpo::ToyPolicy::uniform(contexts, vocab);
        for (int c = 0; c < contexts; ++c)
            for (int k = 0; k < vocab; ++k) {
                policy.logits[c][k] = rng.uniform(-1, 1);
                ref.logits[c][k] = rng.uniform(-1, 1);
            }
        std::vector<grpo::GroupSample> groups;
        const int n_groups = 1 + static_cast<int>(rng.uniform_int(0, 3));
        for (int g = 0; g < n_groups; ++g) {
            grpo::GroupSample group;
            group.context = static_cast<int>(rng.uniform_int(0, contexts - 1));
            const auto lp = policy.log_probs(group.context);
            const auto lq = ref.log_probs(group.context);
            for (int j = 0; j < 8; ++j) {
                grpo::Candidate c;
                for (int tries = 0; tries < 200; ++tries) {
                    c.answer = static_cast<int>(rng.uniform_int(0, vocab - 1));
                    const double ratio = std::exp(lp[c.answer] - lq[c.answer]);
                    if (std::abs(ratio - (1.0 - cfg.clip_eps)) > 1e-3 &&
                        std::abs(ratio - (1.0 + cfg.clip_eps)) > 1e-3)
                        break;
                }
                c.logp_current = lp[c.answer];
                c.logp_ref = lq[c.answer];
                c.reward = rng.uniform(0.0, 1.0);
                group.candidates.push_back(c);
            }
            groups.push_back(group);
        }
        const auto analytic = grpo::grpo_objective_gradient(groups, policy, ref, cfg);
        const auto fd = oracles::fd_gradient(groups, policy, ref, cfg, 1e-5);
        ACC_REQUIRE(oracles::gradient_relative_error(analytic, fd) < 1e-4);
    }
}

// --- 5. advantage standardization ------------------------------------------

void criterion_advantages() {
    Rng rng(0x51);
    for (int t = 0; t < 10000; ++t) {
        std::vector<double> rewards(8);
        const bool degenerate = t % 10 == 0;
        const double fill = rng.uniform(0, 1);
        for (auto& r : rewards) r = degenerate ? fill : rng.uniform(0, 1);
        const auto adv = grpo::group_advantages(rewards, 1e-8);

        double mean = 0.0;
        for (double r : rewards) mean += r;
        mean /= 8.0;
        double var = 0.0;
        for (double r : rewards) var += (r - mean) * (r - mean);
        var /= 8.0;

        if (std::sqrt(var) > 1e-8) {
            double am = 0.0;
            for (double a : adv) am += a;
            am /= 8.0;
            double av = 0.0;
            for (double a : adv) av += (a - am) * (a - am);
            av /= 8.0;
            ACC_REQUIRE(std::abs(am) <= 1e-9);
            ACC_REQUIRE(std::abs(std::sqrt(av) - 1.0) <= 1e-9);
        } else {
            for (double a : adv) ACC_REQUIRE(std::abs(a) <= 1e-9);
        }
    }
}

// --- 6. toy GRPO convergence + trust region --------------------------------

void criterion_convergence() {
    const auto dataset =
        datagen::generate_instances(TaskKind::Counting, 16, 2024, datagen::Split::Train);
    const grpo::GrpoConfig cfg;  // paper config: G=8, eps=0.2, beta=0.04
    const auto policy = grpo::ToyPolicy::uniform(16, 9);

    int converged = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto result = grpo::grpo_train(dataset, policy, cfg, 500, seed, 9);
        if (result.trace.back().greedy_accuracy >= 0.95) ++converged;
    }
    ACC_REQUIRE(converged >= 9);

    // Huge KL coefficient pins the policy to the reference.
    grpo::GrpoConfig tight = cfg;
    tight.kl_beta = 1e3;
    const auto result = grpo::grpo_train(dataset, policy, tight, 100, 1, 9);
    for (const auto& row : result.trace) ACC_REQUIRE(row.mean_kl < 1e-3);
}

// --- 7. dataset self-consistency -------------------------------------------

void criterion_dataset() {
    const reward::RewardWeights weights;
    for (const auto task : {TaskKind::Counting, TaskKind::Relation, TaskKind::Grasp}) {
        const auto instances = datagen::generate_instances(task, 1000, 7, datagen::Split::Train);
        ACC_REQUIRE(instances.size() == 1000);
        for (const auto& inst : instances) {
            const auto parsed = parser::parse_response(inst.reference_trace, inst.task);
            const auto b = reward::total_reward(parsed, inst, weights);
            ACC_REQUIRE(b.r_format == 1.0);
            ACC_REQUIRE(b.r_overlap == 1.0);
            ACC_REQUIRE(b.r_ans == 1.0);
            ACC_REQUIRE(std::abs(b.r_ground - 1.0) <= 1e-12);

            if (task == TaskKind::Counting) {
                // Independent set-union oracle straight from geometry.
                std::set<int> ids;
                for (int v = 0; v < static_cast<int>(inst.scene.views.size()); ++v)
                    for (const auto& vis : geometry::visible_objects(inst.scene, v)) ids.insert(vis.id);
                long long count = 0;
                for (int id : ids) {
                    for (const auto& o : inst.scene.objects)
                        if (o.id == id &&
                            inst.question.find(" " + o.class_name + " ") != std::string::npos)
                            ++count;
                }
                ACC_REQUIRE(count == *inst.ground_truth.count);
            }
            if (task == TaskKind::Grasp) {
                const auto& grasp = *inst.ground_truth.grasp;
                bool contained = false;
                for (const auto& box : inst.per_view_boxes[grasp.view])
                    if (box.box.contains(grasp.u, grasp.v)) contained = true;
                ACC_REQUIRE(contained);
            }
        }
    }
}

// --- 8. grasp score law ------------------------------------------------------

void criterion_grasp_law() {
    const reward::RewardWeights weights;
    GroundTruth gt;
    gt.grasp = GroundTruth::Grasp{0, 200.0, 200.0};
    const double expected[] = {100.0, 50.0, 0.0, 0.0};
    const double distances[] = {0.0, 50.0, 100.0, 150.0};
    for (int i = 0; i < 4; ++i) {
        parser::ParsedResponse parsed;
        parsed.answer = parser::GraspAnswer{0, 200.0 + distances[i], 200.0};
        const double score = 100.0 * reward::grasp_answer_reward(parsed, gt, weights);
        ACC_REQUIRE(score == expected[i]);
    }
}

// --- 9. batch/stream equivalence ---------------------------------------------

void criterion_batch_stream() {
    const auto dir = work_dir();
    const auto dataset_path = (dir / "bs_dataset.jsonl").string();

    std::vector<TaskInstance> instances;
    for (const auto task : {TaskKind::Counting, TaskKind::Relation, TaskKind::Grasp})
        for (auto& inst : datagen::generate_instances(task, 60, 3, datagen::Split::Train))
            instances.push_back(std::move(inst));
    datagen::export_dataset(instances, dataset_path);

    // 10k requests: references, perturbed answers, junk, unknown ids,
    // malformed lines.
    Rng rng(0xcafe);
    const auto requests_path = (dir / "bs_requests.jsonl").string();
    {
        std::ofstream req(requests_path, std::ios::binary);
        for (int t = 0; t < 10000; ++t) {
            const double roll = rng.uniform01();
            if (roll < 0.02) {
                req << "not json at all\n";
                continue;
            }
            if (roll < 0.04) {
                req << "{\"instance_id\":\"missing\",\"response_text\":\"x\"}\n";
                continue;
            }
            const auto& inst = instances[rng.uniform_int(0, static_cast<std::int64_t>(instances.size()) - 1)];
            std::string text;
            if (roll < 0.5) {
                text = inst.reference_trace;
            } else if (roll < 0.75) {
                text = "<think>guess</think>\\boxed{" + std::to_string(rng.uniform_int(0, 9)) + "}";
            } else {
                text = "free-form guess with a box [10, 10, 50, 50] and Overlap number = " +
                       std::to_string(rng.uniform_int(0, 3));
            }
            nlohmann::ordered_json j;
            j["instance_id"] = inst.instance_id;
            j["response_text"] = text;
            req << j.dump() << '\n';
        }
    }

    const auto batch_path = (dir / "bs_batch.jsonl").string();
    const auto serve_path = (dir / "bs_serve.jsonl").string();
    ACC_REQUIRE(run_cli("score --dataset " + dataset_path + " --responses " + requests_path +
                        " --out " + batch_path) == 0);
    ACC_REQUIRE(run_cli("serve --dataset " + dataset_path + " < " + requests_path + " > " +
                        serve_path) == 0);
    ACC_REQUIRE(oracles::read_file(batch_path) == oracles::read_file(serve_path));
    // The replay actually covered 10k requests.
    std::ifstream check(batch_path);
    std::size_t lines = 0;
    std::string line;
    while (std::getline(check, line)) ++lines;
    ACC_REQUIRE(lines == 10000);
}

// --- 10. CLI determinism -------------------------------------------------------

void criterion_determinism() {
    const auto dir = work_dir();
    const auto g1 = (dir / "gen1").string();
    const auto g2 = (dir / "gen2").string();
    const std::string flags = "generate --tasks e2w1,e2w2,e2w3 --scale 0.001 --seed 7 --out ";
    ACC_REQUIRE(run_cli(flags + g1 + " > /dev/null") == 0);
    ACC_REQUIRE(run_cli(flags + g2 + " > /dev/null") == 0);
    for (const char* name :
         {"e2w1_train.jsonl", "e2w1_test.jsonl", "e2w2_train.jsonl", "e2w2_test.jsonl",
          "e2w3_train.jsonl", "e2w3_test.jsonl"}) {
        const auto a = oracles::read_file(g1 + "/" + name);
        ACC_REQUIRE(!a.empty());
        ACC_REQUIRE(a == oracles::read_file(g2 + "/" + name));
    }

    const auto t1 = (dir / "trace1.csv").string();
    const auto t2 = (dir / "trace2.csv").string();
    const std::string demo = "grpo-demo --instances 8 --steps 60 --seed 3 --trace-out ";
    ACC_REQUIRE(run_cli(demo + t1 + " > /dev/null") == 0);
    ACC_REQUIRE(run_cli(demo + t2 + " > /dev/null") == 0);
    const auto trace = oracles::read_file(t1);
    ACC_REQUIRE(!trace.empty());
    ACC_REQUIRE(trace == oracles::read_file(t2));
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<void()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "paper-constant reproduction", criterion_paper_constants},
        {2, "appendix fixture replay", criterion_fixture_replay},
        {3, "hungarian optimality vs exhaustive oracle", criterion_hungarian},
        {4, "grpo gradient vs finite differences", criterion_gradient},
        {5, "advantage standardization", criterion_advantages},
        {6, "toy grpo convergence + trust region", criterion_convergence},
        {7, "dataset self-consistency", criterion_dataset},
        {8, "grasp score law", criterion_grasp_law},
        {9, "batch/stream equivalence (10k replay)", criterion_batch_stream},
        {10, "generation and training determinism", criterion_determinism},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string error;
        try {
            criterion.run();
        } catch (const std::exception& e) {
            error = e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (error.empty()) {
            std::printf("PASS %2d  %-45s (%.2fs)\n", criterion.id, criterion.name, secs);
        } else {
            std::printf("FAIL %2d  %-45s (%.2fs): %s\n", criterion.id, criterion.name, secs,
                        error.c_str());
            ++failures;
        }
        std::fflush(stdout);
    }
    if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
