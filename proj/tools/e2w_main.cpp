// e2w: multi-view spatial-reasoning benchmark generator, reward scorer,
// GRPO toy trainer, eval harness, and streaming reward service.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "e2w/datagen.hpp"
#include "e2w/errors.hpp"
#include "e2w/evalharness.hpp"
#include "e2w/grpo.hpp"
#include "e2w/service.hpp"
#include "e2w/strfmt.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitGenBudget = 4;

struct Options {
    std::int64_t seed = 0;

    // generate
    std::string tasks = "e2w1,e2w2,e2w3";
    double scale = 0.01;
    std::string out_dir;
    int views = 2;

    // score / eval / serve
    std::string dataset_path;
    std::string responses_path;
    std::string out_path;
    std::string report_path;
    std::string listen_addr;
    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    // reward weight overrides
    e2w::reward::RewardWeights weights;

    // grpo-demo
    int instances = 16;
    int steps = 500;
    e2w::grpo::GrpoConfig grpo;
    int vocab = 9;
    int sft_epochs = 0;
    bool rich_candidates = false;
    std::string trace_path = "grpo_trace.csv";
};

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw e2w::SchemaError("cannot open '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

int cmd_generate(const Options& opt) {
    std::vector<e2w::TaskKind> tasks;
    std::stringstream ss(opt.tasks);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "e2w1") tasks.push_back(e2w::TaskKind::Counting);
        else if (item == "e2w2") tasks.push_back(e2w::TaskKind::Relation);
        else if (item == "e2w3") tasks.push_back(e2w::TaskKind::Grasp);
        else throw CLI::ValidationError("--tasks", "unknown task '" + item + "'");
    }
    std::filesystem::create_directories(opt.out_dir);
    const std::uint64_t seed = static_cast<std::uint64_t>(opt.seed);
    for (auto task : tasks) {
        const char* prefix = task == e2w::TaskKind::Counting ? "e2w1"
                             : task == e2w::TaskKind::Relation ? "e2w2"
                                                               : "e2w3";
        const int n_train = e2w::datagen::scaled_train_count(task, opt.scale);
        const int n_test = e2w::datagen::scaled_test_count(opt.scale);
        const auto train =
            e2w::datagen::generate_instances(task, n_train, seed, e2w::datagen::Split::Train, opt.views);
        const auto test =
            e2w::datagen::generate_instances(task, n_test, seed, e2w::datagen::Split::Test, opt.views);
        const std::string train_path = opt.out_dir + "/" + prefix + "_train.jsonl";
        const std::string test_path = opt.out_dir + "/" + prefix + "_test.jsonl";
        e2w::datagen::export_dataset(train, train_path);
        e2w::datagen::export_dataset(test, test_path);
        std::cout << prefix << ": train " << train.size() << " -> " << train_path << ", test "
                  << test.size() << " -> " << test_path << "\n";
    }
    return kExitOk;
}

int cmd_score(const Options& opt) {
    e2w::service::InstanceIndex index(e2w::load_dataset_jsonl(opt.dataset_path));
    const auto lines = read_lines(opt.responses_path);
    const auto replies = e2w::service::score_lines(lines, index, opt.weights, opt.threads);
    std::ofstream out(opt.out_path, std::ios::binary);
    if (!out) throw e2w::SchemaError("cannot open '" + opt.out_path + "' for writing");
    for (const auto& reply : replies) out << reply << '\n';
    std::cout << "scored " << replies.size() << " responses -> " << opt.out_path << "\n";
    return kExitOk;
}

int cmd_eval(const Options& opt) {
    const auto instances = e2w::load_dataset_jsonl(opt.dataset_path);
    e2w::service::InstanceIndex index(instances);
    std::vector<e2w::evalharness::EvalRecord> records;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(opt.responses_path)) {
        ++line_no;
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("instance_id") || !j.contains("response_text"))
            throw e2w::SchemaError(opt.responses_path + ":" + std::to_string(line_no) +
                                   ": expected {instance_id, response_text}");
        const std::string id = j["instance_id"].get<std::string>();
        const auto* instance = index.find(id);
        if (!instance)
            throw e2w::SchemaError(opt.responses_path + ":" + std::to_string(line_no) +
                                   ": unknown instance_id '" + id + "'");
        records.push_back(e2w::evalharness::score_record(
            *instance, j["response_text"].get<std::string>(), opt.weights));
    }
    if (records.empty()) throw e2w::SchemaError(opt.responses_path + ": no responses");
    const auto report = e2w::evalharness::aggregate(records, opt.weights);
    if (!opt.report_path.empty()) {
        std::ofstream out(opt.report_path, std::ios::binary);
        if (!out) throw e2w::SchemaError("cannot open '" + opt.report_path + "' for writing");
        out << e2w::evalharness::report_to_json(report).dump(2) << '\n';
    }
    std::cout << e2w::evalharness::render_report_table(report);
    return kExitOk;
}

int cmd_grpo_demo(const Options& opt) {
    const auto dataset = e2w::datagen::generate_instances(
        e2w::TaskKind::Counting, opt.instances, static_cast<std::uint64_t>(opt.seed),
        e2w::datagen::Split::Train, opt.views);
    auto policy = e2w::grpo::ToyPolicy::uniform(static_cast<int>(dataset.size()), opt.vocab);
    if (opt.sft_epochs > 0) {
        std::vector<std::pair<int, int>> labeled;
        for (std::size_t c = 0; c < dataset.size(); ++c)
            labeled.emplace_back(static_cast<int>(c),
                                 static_cast<int>(*dataset[c].ground_truth.count));
        policy = e2w::grpo::sft_warmstart(std::move(policy), labeled, opt.sft_epochs);
    }
    const auto result =
        e2w::grpo::grpo_train(dataset, std::move(policy), opt.grpo, opt.steps,
                              static_cast<std::uint64_t>(opt.seed), opt.vocab, opt.rich_candidates,
                              opt.weights);
    std::ofstream out(opt.trace_path, std::ios::binary);
    if (!out) throw e2w::SchemaError("cannot open '" + opt.trace_path + "' for writing");
    out << e2w::grpo::trace_to_csv(result.trace);
    const auto& last = result.trace.back();
    std::cout << "steps " << last.step << ", final greedy accuracy "
              << e2w::format_sig12(last.greedy_accuracy) << ", final mean reward "
              << e2w::format_sig12(last.mean_reward) << ", trace -> " << opt.trace_path << "\n";
    return kExitOk;
}

int cmd_serve(const Options& opt) {
    e2w::service::InstanceIndex index(e2w::load_dataset_jsonl(opt.dataset_path));
    if (!opt.listen_addr.empty()) {
        e2w::service::serve_tcp(opt.listen_addr, index, opt.weights, opt.threads);
        return kExitOk;
    }
    e2w::service::serve_stream(std::cin, std::cout, index, opt.weights, opt.threads);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    Options opt;
    CLI::App app{"multi-view spatial reasoning benchmark and reward toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // global --seed may appear after the subcommand
    app.add_option("--seed", opt.seed, "global seed (env E2W_SEED)")->envname("E2W_SEED");

    auto add_weight_flags = [&](CLI::App* cmd) {
        cmd->add_option("--w-ans", opt.weights.w_ans, "answer-reward weight");
        cmd->add_option("--w-ground", opt.weights.w_ground, "grounding-reward weight");
        cmd->add_option("--w-overlap", opt.weights.w_overlap, "overlap-reward weight");
        cmd->add_option("--lambda-format", opt.weights.lambda_format, "format-reward weight");
        cmd->add_option("--lambda-cvsr", opt.weights.lambda_cvsr, "spatial-reward weight");
        cmd->add_option("--d-max", opt.weights.d_max, "grasp distance radius, px");
    };

    auto* generate = app.add_subcommand("generate", "generate benchmark datasets");
    generate->add_option("--tasks", opt.tasks, "comma list of e2w1,e2w2,e2w3");
    generate->add_option("--scale", opt.scale, "split-size scale factor");
    generate->add_option("--out", opt.out_dir, "output directory")->required();
    generate->add_option("--views", opt.views, "views per scene (2 or 3)")
        ->check(CLI::Range(2, 3));

    auto* score = app.add_subcommand("score", "batch-score responses against a dataset");
    score->add_option("--dataset", opt.dataset_path, "dataset JSONL")->required();
    score->add_option("--responses", opt.responses_path, "responses JSONL")->required();
    score->add_option("--out", opt.out_path, "output scores JSONL")->required();
    score->add_option("--threads", opt.threads, "worker threads");
    add_weight_flags(score);

    auto* eval = app.add_subcommand("eval", "benchmark evaluation report");
    eval->add_option("--dataset", opt.dataset_path, "dataset JSONL")->required();
    eval->add_option("--responses", opt.responses_path, "responses JSONL")->required();
    eval->add_option("--report", opt.report_path, "report JSON output");
    add_weight_flags(eval);

    auto* demo = app.add_subcommand("grpo-demo", "toy GRPO training run");
    demo->add_option("--instances", opt.instances, "counting contexts")->check(CLI::PositiveNumber);
    demo->add_option("--steps", opt.steps, "training steps")->check(CLI::PositiveNumber);
    demo->add_option("--G", opt.grpo.group_size, "group size");
    demo->add_option("--eps", opt.grpo.clip_eps, "clip range");
    demo->add_option("--beta", opt.grpo.kl_beta, "KL coefficient");
    demo->add_option("--lr", opt.grpo.learning_rate, "learning rate");
    demo->add_option("--vocab", opt.vocab, "answer vocabulary size");
    demo->add_option("--sft-epochs", opt.sft_epochs, "SFT warm-start epochs (0 = disabled)");
    demo->add_option("--views", opt.views, "views per scene (2 or 3)")->check(CLI::Range(2, 3));
    demo->add_flag("--rich-candidates", opt.rich_candidates,
                   "sample box/overlap declarations in candidates");
    demo->add_option("--trace-out", opt.trace_path, "CSV trace path");
    add_weight_flags(demo);

    auto* serve = app.add_subcommand("serve", "streaming reward service over stdio or TCP");
    serve->add_option("--dataset", opt.dataset_path, "dataset JSONL")->required();
    serve->add_option("--listen", opt.listen_addr, "TCP listen address host:port");
    serve->add_option("--threads", opt.threads, "worker threads");
    add_weight_flags(serve);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (generate->parsed()) return cmd_generate(opt);
        if (score->parsed()) return cmd_score(opt);
        if (eval->parsed()) return cmd_eval(opt);
        if (demo->parsed()) return cmd_grpo_demo(opt);
        if (serve->parsed()) return cmd_serve(opt);
    } catch (const e2w::GenerationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitGenBudget;
    } catch (const e2w::SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
