#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "scorematch/bounds.hpp"
#include "scorematch/dgp.hpp"
#include "scorematch/experiment.hpp"
#include "scorematch/matching.hpp"
#include "scorematch/numeric_io.hpp"
#include "scorematch/oracles.hpp"

namespace {

using namespace scorematch;

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return nlohmann::json::parse(std::string(std::istreambuf_iterator<char>(in),
                                             std::istreambuf_iterator<char>()));
}

int cmd_generate(const std::string& config_path, const std::string& out_dir,
                 const std::optional<std::uint64_t>& seed) {
    DgpConfig cfg = DgpConfig::from_json(load_json(config_path));
    if (seed.has_value()) cfg.seed = *seed;
    const Dataset data = generate(cfg);
    std::filesystem::create_directories(out_dir);
    save_csv(data, out_dir + "/data.csv");
    std::ofstream manifest(out_dir + "/dgp.json");
    manifest << cfg.to_json().dump(2) << "\n";

    std::size_t treated = data.treated_indices().size();
    std::printf("wrote %s/data.csv: n=%zu d=%zu treated=%zu ground_truth_att=%s\n",
                out_dir.c_str(), data.n(), data.dim(), treated,
                format_double(ground_truth_att(data)).c_str());
    return 0;
}

ExperimentConfig load_experiment_config(const std::string& config_path,
                                        const std::string& out_dir) {
    ExperimentConfig cfg = ExperimentConfig::from_json(load_json(config_path));
    if (!out_dir.empty()) {
        cfg.output_dir = out_dir;
        cfg.validate();
    }
    return cfg;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, std::size_t jobs) {
    const ExperimentConfig cfg = load_experiment_config(config_path, out_dir);
    train_models(cfg, jobs);
    std::printf("trained %zu model(s) under %s/models\n",
                cfg.dgp_seeds.size() * cfg.train_seeds.size(), cfg.output_dir.c_str());
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& out_dir, std::size_t jobs) {
    const ExperimentConfig cfg = load_experiment_config(config_path, out_dir);
    const ExperimentResult res = run_experiment(cfg, jobs);
    std::fputs(report_csv(res.rows).c_str(), stdout);
    for (const std::string& notice : res.notices) {
        std::fprintf(stderr, "notice: %s\n", notice.c_str());
    }
    std::fprintf(stderr, "report written to %s\n", cfg.output_dir.c_str());
    return 0;
}

int cmd_bounds(const BoundsRequest& req, const std::string& out_dir) {
    const BoundReport report = run_bounds(req);
    const std::string text = report.to_json().dump(2) + "\n";
    std::fputs(text.c_str(), stdout);
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream out(out_dir + "/bounds.json");
        out << text;
    }
    return 0;
}

int cmd_oracle_check(const std::string& suite, std::size_t trials, std::uint64_t seed) {
    std::vector<std::string> names;
    if (suite == "all") {
        names = oracle_suite_names();
    } else {
        names = {suite};
    }
    bool ok = true;
    for (const std::string& name : names) {
        const OracleResult res = run_oracle_suite(name, trials, seed);
        std::printf("%s\n", res.summary_line().c_str());
        ok = ok && res.passed();
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"score-based matching workbench"};
    app.set_version_flag("--version", std::string("scorematch ") + kToolVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed_override;

    auto* gen = app.add_subcommand("generate", "draw a synthetic dataset and write data.csv");
    gen->add_option("--config", config_path, "generator config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    gen->add_option("--out", out_dir, "output directory")->required();
    std::uint64_t gen_seed = 0;
    auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "override the config seed");

    auto* train_cmd = app.add_subcommand("train", "fit the networks for every seed pair");
    train_cmd->add_option("--config", config_path, "experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--out", out_dir, "override the config output_dir");
    train_cmd->add_option("--jobs", jobs, "concurrent runs")->check(CLI::PositiveNumber);

    auto* eval = app.add_subcommand("evaluate", "run the full matching comparison");
    eval->add_option("--config", config_path, "experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--out", out_dir, "override the config output_dir");
    eval->add_option("--jobs", jobs, "concurrent runs")->check(CLI::PositiveNumber);

    auto* bounds = app.add_subcommand("bounds", "imbalance bounds for a stored score map");
    BoundsRequest req;
    std::string metric_name = "linear_mmd";
    bool raw_csv = false;
    bool unbounded_sigmoid = false;
    bounds->add_option("--model", req.model_path, "network or {\"weights\": [[...]]} JSON")
        ->required()
        ->check(CLI::ExistingFile);
    bounds->add_option("--data", req.dataset_path, "dataset CSV")
        ->required()
        ->check(CLI::ExistingFile);
    bounds->add_option("--layer", req.layer, "score = pre-activation of this layer (1-based)")
        ->check(CLI::PositiveNumber);
    bounds->add_option("--metric", metric_name, "wass or linear_mmd");
    bounds->add_option("--cap", req.wasserstein_cap, "max treated*control pairs for wass")
        ->check(CLI::PositiveNumber);
    bounds->add_flag("--raw", raw_csv, "skip covariate standardization");
    bounds->add_flag("--unbounded-sigmoid", unbounded_sigmoid,
                     "keep global sigmoid constants (m = 0)");
    bounds->add_option("--out", out_dir, "also write bounds.json here");

    auto* oracle = app.add_subcommand("oracle-check", "run a property suite against its oracle");
    std::string suite;
    std::size_t trials = 100;
    std::uint64_t oracle_seed = 0;
    std::string suite_help = "one of: all";
    for (const std::string& name : oracle_suite_names()) suite_help += ", " + name;
    oracle->add_option("--suite", suite, suite_help)->required();
    oracle->add_option("--trials", trials, "instances to draw")->check(CLI::PositiveNumber);
    oracle->add_option("--seed", oracle_seed, "master seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            if (*gen_seed_opt) seed_override = gen_seed;
            return cmd_generate(config_path, out_dir, seed_override);
        }
        if (*train_cmd) return cmd_train(config_path, out_dir, jobs);
        if (*eval) return cmd_evaluate(config_path, out_dir, jobs);
        if (*bounds) {
            req.metric = bound_metric_from_name(metric_name);
            req.standardize_csv = !raw_csv;
            req.bound_sigmoid_from_data = !unbounded_sigmoid;
            return cmd_bounds(req, out_dir);
        }
        if (*oracle) return cmd_oracle_check(suite, trials, oracle_seed);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
