#include "scorematch/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>
#include <utility>

#include "scorematch/matching.hpp"
#include "scorematch/metrics.hpp"
#include "scorematch/numeric_io.hpp"
#include "scorematch/rng.hpp"
#include "scorematch/scores.hpp"

namespace scorematch {
namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kNnInitTag = 0x6e6e5f696e6974ull;
constexpr std::uint64_t kLogRegTag = 0x6c6f67726567ull;
constexpr std::uint64_t kPcaLogRegTag = 0x70636c7267ull;
constexpr std::uint64_t kRandomScoreTag = 0x726e6473ull;

const std::vector<MethodKind> kAllMethods = {
    MethodKind::NnLayer1, MethodKind::NnPs,        MethodKind::RawX, MethodKind::Random,
    MethodKind::LogRegPs, MethodKind::PcaLogRegPs, MethodKind::Pca,  MethodKind::NoMatching,
};

const char* const kMetricNames[] = {"calibration_error", "att_error", "imbalance"};
const char* const kSampleNames[] = {"in_sample", "hold_out"};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

struct RunOutput {
    std::vector<RunRecord> records;
    std::set<std::string> notices;
};

Dataset load_run_dataset(const ExperimentConfig& cfg, std::uint64_t dgp_seed) {
    if (cfg.dgp.has_value()) {
        DgpConfig c = *cfg.dgp;
        c.seed = dgp_seed;
        return generate(c);
    }
    return load_csv(cfg.csv_path, cfg.standardize_csv);
}

// Runs fn(run_index) for every index in [0, total) on up to `jobs` threads
// and rethrows the first failure after the pool drains.
template <typename F>
void run_pool(std::size_t total, std::size_t jobs, F&& fn) {
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    const auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= total) return;
            try {
                fn(i);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    if (jobs <= 1 || total == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < std::min(jobs, total); ++i) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);
}

std::string model_path(const ExperimentConfig& cfg, const std::string& name, std::uint64_t g,
                       std::uint64_t s) {
    return cfg.output_dir + "/models/" + name + "_dgp" + std::to_string(g) + "_train" +
           std::to_string(s) + ".json";
}

RunOutput execute_run(const ExperimentConfig& cfg, std::uint64_t g, std::uint64_t s) {
    RunOutput out;
    const Dataset data = load_run_dataset(cfg, g);

    SplitSpec split_spec = cfg.split;
    split_spec.seed = mix_seed(cfg.split.seed, g);
    const SplitResult parts = split(data, split_spec);

    std::vector<std::size_t> in_idx;
    in_idx.reserve(parts.train_indices.size() + parts.val_indices.size());
    std::merge(parts.train_indices.begin(), parts.train_indices.end(), parts.val_indices.begin(),
               parts.val_indices.end(), std::back_inserter(in_idx));
    const Dataset in_sample = subset(data, in_idx);
    const Dataset& hold_out = parts.test;

    const auto has_method = [&](MethodKind m) {
        return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end();
    };

    Mlp trained;
    if (has_method(MethodKind::NnLayer1) || has_method(MethodKind::NnPs)) {
        TrainConfig tc = cfg.train;
        tc.rng_seed = mix_seed(cfg.train.rng_seed, mix_seed(g, s));
        const Mlp init = default_architecture(data.dim(), mix_seed(kNnInitTag, mix_seed(g, s)));
        trained = train(init, parts.train, &parts.val, tc).model;
        save_model(trained, model_path(cfg, "nn", g, s));
    }

    std::optional<ScoreProvider> pca;
    const auto get_pca = [&]() -> const ScoreProvider& {
        if (!pca.has_value()) {
            pca = fit_pca(in_sample.x, std::min(cfg.pca_dim, in_sample.dim()));
            pca->save(model_path(cfg, "pca", g, s));
        }
        return *pca;
    };

    const auto record = [&](MethodKind m, const char* metric, const char* sample, double value) {
        out.records.push_back({g, s, method_name(m), metric, sample, value});
    };

    // Matched metrics for one method on one sample; metric order is fixed so
    // runs.csv has a stable layout.
    const auto eval_sample = [&](MethodKind m, const Dataset& sample_data, const Matrix& scores,
                                 const char* sample_name) {
        if (m == MethodKind::NoMatching) {
            const MatchWeights w = MatchWeights::uniform(sample_data.control_indices());
            record(m, "imbalance", sample_name, sample_imbalance(sample_data, w));
            return;
        }
        if (method_is_propensity(m)) {
            if (!sample_data.e_true.empty()) {
                std::vector<double> estimated(sample_data.n());
                for (std::size_t i = 0; i < estimated.size(); ++i) estimated[i] = scores.at(i, 0);
                record(m, "calibration_error", sample_name,
                       calibration_error(estimated, sample_data.e_true));
            } else {
                out.notices.insert("calibration_error skipped: dataset has no e_true column");
            }
        }
        const MatchWeights w = knn_match(scores, sample_data.t, 1, true);
        if (sample_data.has_truth()) {
            record(m, "att_error", sample_name,
                   std::abs(estimate_att(sample_data, w) - ground_truth_att(sample_data)));
        } else {
            out.notices.insert("att_error skipped: dataset has no mu0/mu1 columns");
        }
        record(m, "imbalance", sample_name, sample_imbalance(sample_data, w));
    };

    for (MethodKind m : cfg.methods) {
        Matrix scores_in;
        Matrix scores_out;
        switch (m) {
            case MethodKind::NnLayer1: {
                const ScoreProvider p = make_nn_layer_provider(trained, 1);
                scores_in = p.score(in_sample.x);
                scores_out = p.score(hold_out.x);
                break;
            }
            case MethodKind::NnPs: {
                const ScoreProvider p = make_nn_ps_provider(trained);
                scores_in = p.score(in_sample.x);
                scores_out = p.score(hold_out.x);
                break;
            }
            case MethodKind::RawX:
                scores_in = in_sample.x;
                scores_out = hold_out.x;
                break;
            case MethodKind::Random: {
                const ScoreProvider p =
                    make_random_provider(mix_seed(kRandomScoreTag, mix_seed(g, s)));
                scores_in = p.score(in_sample.x);
                scores_out = p.score(hold_out.x);
                break;
            }
            case MethodKind::LogRegPs: {
                TrainConfig lc = cfg.train;
                lc.early_stopping_patience.reset();
                lc.rng_seed = mix_seed(kLogRegTag, mix_seed(g, s));
                const ScoreProvider p = fit_logreg(in_sample.x, in_sample.t, lc);
                p.save(model_path(cfg, "logreg", g, s));
                scores_in = p.score(in_sample.x);
                scores_out = p.score(hold_out.x);
                break;
            }
            case MethodKind::Pca: {
                const ScoreProvider& p = get_pca();
                scores_in = p.score(in_sample.x);
                scores_out = p.score(hold_out.x);
                break;
            }
            case MethodKind::PcaLogRegPs: {
                const ScoreProvider& p = get_pca();
                const Matrix z_in = p.score(in_sample.x);
                TrainConfig lc = cfg.train;
                lc.early_stopping_patience.reset();
                lc.rng_seed = mix_seed(kPcaLogRegTag, mix_seed(g, s));
                const ScoreProvider lr = fit_logreg(z_in, in_sample.t, lc);
                lr.save(model_path(cfg, "pca_logreg", g, s));
                scores_in = lr.score(z_in);
                scores_out = lr.score(p.score(hold_out.x));
                break;
            }
            case MethodKind::NoMatching:
                break;
        }
        eval_sample(m, in_sample, scores_in, "in_sample");
        eval_sample(m, hold_out, scores_out, "hold_out");
    }
    return out;
}

}  // namespace

std::string method_name(MethodKind method) {
    switch (method) {
        case MethodKind::NnLayer1: return "nn_layer1";
        case MethodKind::NnPs: return "nn_ps";
        case MethodKind::RawX: return "raw_x";
        case MethodKind::Random: return "random";
        case MethodKind::LogRegPs: return "logreg_ps";
        case MethodKind::Pca: return "pca";
        case MethodKind::PcaLogRegPs: return "pca_logreg_ps";
        case MethodKind::NoMatching: return "no_matching";
    }
    throw std::logic_error("method_name: bad method");
}

MethodKind method_from_name(const std::string& name) {
    for (MethodKind m : kAllMethods) {
        if (method_name(m) == name) return m;
    }
    std::string known;
    for (MethodKind m : kAllMethods) {
        if (!known.empty()) known += ", ";
        known += method_name(m);
    }
    throw std::invalid_argument("unknown method '" + name + "'; expected one of: " + known);
}

bool method_is_propensity(MethodKind method) {
    return method == MethodKind::NnPs || method == MethodKind::LogRegPs ||
           method == MethodKind::PcaLogRegPs;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    nlohmann::json j;
    j["learning_rate"] = cfg.learning_rate;
    j["weight_decay"] = cfg.weight_decay;
    j["batch_size"] = cfg.batch_size;
    j["max_epochs"] = cfg.max_epochs;
    if (cfg.early_stopping_patience.has_value()) {
        j["early_stopping_patience"] = *cfg.early_stopping_patience;
    } else {
        j["early_stopping_patience"] = nullptr;
    }
    j["rng_seed"] = cfg.rng_seed;
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    if (j.contains("learning_rate")) cfg.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("weight_decay")) cfg.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("max_epochs")) cfg.max_epochs = j.at("max_epochs").get<std::size_t>();
    if (j.contains("early_stopping_patience") && !j.at("early_stopping_patience").is_null()) {
        cfg.early_stopping_patience = j.at("early_stopping_patience").get<std::size_t>();
    }
    if (j.contains("rng_seed")) cfg.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

ExperimentConfig::ExperimentConfig() : methods(kAllMethods) {}

void ExperimentConfig::validate() const {
    const bool has_dgp = dgp.has_value();
    const bool has_csv = !csv_path.empty();
    if (has_dgp == has_csv) {
        throw std::invalid_argument(
            "ExperimentConfig: exactly one data source (dgp or csv) must be set");
    }
    if (has_dgp) dgp->validate();
    if (methods.empty()) throw std::invalid_argument("ExperimentConfig: methods must not be empty");
    std::set<std::string> seen;
    for (MethodKind m : methods) {
        if (!seen.insert(method_name(m)).second) {
            throw std::invalid_argument("ExperimentConfig: duplicate method " + method_name(m));
        }
    }
    if (dgp_seeds.empty() || train_seeds.empty()) {
        throw std::invalid_argument("ExperimentConfig: need at least one seed on each axis");
    }
    if (std::set<std::uint64_t>(dgp_seeds.begin(), dgp_seeds.end()).size() != dgp_seeds.size() ||
        std::set<std::uint64_t>(train_seeds.begin(), train_seeds.end()).size() !=
            train_seeds.size()) {
        throw std::invalid_argument("ExperimentConfig: seeds within a list must be distinct");
    }
    if (has_csv && dgp_seeds.size() != 1) {
        throw std::invalid_argument(
            "ExperimentConfig: CSV input has no generator axis; use a single dgp seed");
    }
    if (pca_dim == 0) throw std::invalid_argument("ExperimentConfig: pca_dim must be positive");
    if (output_dir.empty()) throw std::invalid_argument("ExperimentConfig: output_dir must be set");
    train.validate();
    split.validate();
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    if (dgp.has_value()) {
        j["dgp"] = dgp->to_json();
    } else {
        j["csv"] = csv_path;
        j["standardize_csv"] = standardize_csv;
    }
    j["methods"] = nlohmann::json::array();
    for (MethodKind m : methods) j["methods"].push_back(method_name(m));
    j["train"] = train_config_to_json(train);
    j["split"] = split.to_json();
    j["pca_dim"] = pca_dim;
    j["dgp_seeds"] = dgp_seeds;
    j["train_seeds"] = train_seeds;
    j["output_dir"] = output_dir;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    if (j.contains("dgp") && !j.at("dgp").is_null()) {
        cfg.dgp = DgpConfig::from_json(j.at("dgp"));
    }
    if (j.contains("csv")) cfg.csv_path = j.at("csv").get<std::string>();
    if (j.contains("standardize_csv")) cfg.standardize_csv = j.at("standardize_csv").get<bool>();
    if (j.contains("methods")) {
        cfg.methods.clear();
        for (const auto& name : j.at("methods")) {
            cfg.methods.push_back(method_from_name(name.get<std::string>()));
        }
    }
    if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
    if (j.contains("split")) cfg.split = SplitSpec::from_json(j.at("split"));
    if (j.contains("pca_dim")) cfg.pca_dim = j.at("pca_dim").get<std::size_t>();
    if (j.contains("dgp_seeds")) cfg.dgp_seeds = j.at("dgp_seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("train_seeds")) {
        cfg.train_seeds = j.at("train_seeds").get<std::vector<std::uint64_t>>();
    }
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    cfg.validate();
    return cfg;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
    std::string out = "method,metric,sample,mean,standard_error,n_runs\n";
    for (const ReportRow& r : rows) {
        out += r.method + "," + r.metric + "," + r.sample + "," + format_double(r.mean) + "," +
               format_double(r.standard_error) + "," + std::to_string(r.n_runs) + "\n";
    }
    return out;
}

std::string runs_csv(const std::vector<RunRecord>& runs) {
    std::string out = "dgp_seed,train_seed,method,metric,sample,value\n";
    for (const RunRecord& r : runs) {
        out += std::to_string(r.dgp_seed) + "," + std::to_string(r.train_seed) + "," + r.method +
               "," + r.metric + "," + r.sample + "," + format_double(r.value) + "\n";
    }
    return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t jobs) {
    cfg.validate();
    fs::create_directories(cfg.output_dir + "/models");

    const std::size_t n_train = cfg.train_seeds.size();
    const std::size_t total = cfg.dgp_seeds.size() * n_train;
    std::vector<RunOutput> slots(total);
    run_pool(total, jobs, [&](std::size_t i) {
        slots[i] = execute_run(cfg, cfg.dgp_seeds[i / n_train], cfg.train_seeds[i % n_train]);
    });

    ExperimentResult result;
    std::set<std::string> notices;
    for (const RunOutput& slot : slots) {
        result.runs.insert(result.runs.end(), slot.records.begin(), slot.records.end());
        notices.insert(slot.notices.begin(), slot.notices.end());
    }
    result.notices.assign(notices.begin(), notices.end());

    for (MethodKind m : cfg.methods) {
        const std::string method = method_name(m);
        for (const char* metric : kMetricNames) {
            for (const char* sample : kSampleNames) {
                std::vector<double> values;
                for (const RunRecord& r : result.runs) {
                    if (r.method == method && r.metric == metric && r.sample == sample) {
                        values.push_back(r.value);
                    }
                }
                if (values.empty()) continue;
                double mean = 0.0;
                for (double v : values) mean += v;
                mean /= static_cast<double>(values.size());
                double se = 0.0;
                if (values.size() > 1) {
                    double ss = 0.0;
                    for (double v : values) ss += (v - mean) * (v - mean);
                    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
                    se = sd / std::sqrt(static_cast<double>(values.size()));
                }
                result.rows.push_back({method, metric, sample, mean, se, values.size()});
            }
        }
    }

    write_file(cfg.output_dir + "/report.csv", report_csv(result.rows));
    write_file(cfg.output_dir + "/runs.csv", runs_csv(result.runs));

    nlohmann::json report;
    report["rows"] = nlohmann::json::array();
    for (const ReportRow& r : result.rows) {
        report["rows"].push_back({{"method", r.method},
                                  {"metric", r.metric},
                                  {"sample", r.sample},
                                  {"mean", r.mean},
                                  {"standard_error", r.standard_error},
                                  {"n_runs", r.n_runs}});
    }
    report["notices"] = result.notices;
    write_file(cfg.output_dir + "/report.json", report.dump(2) + "\n");

    nlohmann::json manifest;
    manifest["tool"] = "scorematch";
    manifest["version"] = kToolVersion;
    manifest["config"] = cfg.to_json();
    write_file(cfg.output_dir + "/manifest.json", manifest.dump(2) + "\n");

    return result;
}

void train_models(const ExperimentConfig& cfg, std::size_t jobs) {
    cfg.validate();
    fs::create_directories(cfg.output_dir + "/models");
    const std::size_t n_train = cfg.train_seeds.size();
    run_pool(cfg.dgp_seeds.size() * n_train, jobs, [&](std::size_t i) {
        const std::uint64_t g = cfg.dgp_seeds[i / n_train];
        const std::uint64_t s = cfg.train_seeds[i % n_train];
        const Dataset data = load_run_dataset(cfg, g);
        SplitSpec split_spec = cfg.split;
        split_spec.seed = mix_seed(cfg.split.seed, g);
        const SplitResult parts = split(data, split_spec);

        TrainConfig tc = cfg.train;
        tc.rng_seed = mix_seed(cfg.train.rng_seed, mix_seed(g, s));
        const Mlp init = default_architecture(data.dim(), mix_seed(kNnInitTag, mix_seed(g, s)));
        const TrainResult result = train(init, parts.train, &parts.val, tc);
        save_model(result.model, model_path(cfg, "nn", g, s));

        nlohmann::json losses;
        losses["train_loss"] = result.train_loss;
        losses["val_loss"] = result.val_loss;
        losses["epochs_run"] = result.epochs_run;
        losses["best_epoch"] = result.best_epoch;
        write_file(model_path(cfg, "nn_losses", g, s), losses.dump(2) + "\n");
    });
}

BoundReport run_bounds(const BoundsRequest& req) {
    const Dataset data = load_csv(req.dataset_path, req.standardize_csv);
    const std::vector<std::size_t> treated = data.treated_indices();
    const std::vector<std::size_t> controls = data.control_indices();
    if (treated.empty() || controls.empty()) {
        throw std::invalid_argument("run_bounds: dataset needs both treatment arms");
    }

    const std::string text = read_file(req.model_path);
    const nlohmann::json j = nlohmann::json::parse(text);

    std::vector<std::pair<Matrix, LipschitzConstants>> stack;
    Matrix scores;
    if (j.contains("layers")) {
        const Mlp model = model_from_json(text);
        if (req.layer < 1 || req.layer > model.depth()) {
            throw std::invalid_argument("run_bounds: layer " + std::to_string(req.layer) +
                                        " out of range for a depth-" +
                                        std::to_string(model.depth()) + " model");
        }
        if (model.input_dim() != data.dim()) {
            throw std::invalid_argument("run_bounds: model expects " +
                                        std::to_string(model.input_dim()) +
                                        " features, dataset has " + std::to_string(data.dim()));
        }
        for (std::size_t l = 0; l < req.layer; ++l) {
            LipschitzConstants lip;  // identity for the final pre-activation
            if (l + 1 < req.layer) {
                const ActivationKind& act = model.layers[l].activation;
                if (act.kind == Activation::sigmoid && req.bound_sigmoid_from_data) {
                    // Domain bound from this dataset: the largest observed
                    // pre-activation magnitude entering the sigmoid.
                    const Matrix z = pre_activation_batch(model, data.x, l + 1);
                    double bound = 0.0;
                    for (double v : z.data) bound = std::max(bound, std::abs(v));
                    lip = activation_lipschitz(act, bound);
                } else {
                    lip = activation_lipschitz(act);
                }
            }
            stack.emplace_back(model.layers[l].weights, lip);
        }
        scores = pre_activation_batch(model, data.x, req.layer);
    } else if (j.contains("weights")) {
        const auto& rows = j.at("weights");
        if (!rows.is_array() || rows.empty() || !rows[0].is_array()) {
            throw std::invalid_argument("run_bounds: weights must be a 2-d array");
        }
        Matrix w(rows.size(), rows[0].size());
        for (std::size_t i = 0; i < w.rows; ++i) {
            if (rows[i].size() != w.cols) {
                throw std::invalid_argument("run_bounds: ragged weights array");
            }
            for (std::size_t c = 0; c < w.cols; ++c) w.at(i, c) = rows[i][c].get<double>();
        }
        if (req.layer != 1) {
            throw std::invalid_argument("run_bounds: a plain linear map has exactly one layer");
        }
        if (w.cols != data.dim()) {
            throw std::invalid_argument("run_bounds: map expects " + std::to_string(w.cols) +
                                        " features, dataset has " + std::to_string(data.dim()));
        }
        scores = matmul(data.x, transpose(w));
        if (j.contains("bias")) {
            const std::vector<double> bias = j.at("bias").get<std::vector<double>>();
            if (bias.size() != w.rows) {
                throw std::invalid_argument("run_bounds: bias length does not match weights");
            }
            for (std::size_t i = 0; i < scores.rows; ++i) {
                for (std::size_t c = 0; c < scores.cols; ++c) scores.at(i, c) += bias[c];
            }
        }
        stack.emplace_back(std::move(w), LipschitzConstants{});
    } else {
        throw std::invalid_argument("run_bounds: model file is neither a network nor a linear map");
    }

    Matrix score_t(treated.size(), scores.cols);
    Matrix score_c(controls.size(), scores.cols);
    for (std::size_t i = 0; i < treated.size(); ++i) {
        std::copy(scores.row(treated[i]), scores.row(treated[i]) + scores.cols, score_t.row(i));
    }
    for (std::size_t i = 0; i < controls.size(); ++i) {
        std::copy(scores.row(controls[i]), scores.row(controls[i]) + scores.cols, score_c.row(i));
    }
    const EmpiricalPair pair = EmpiricalPair::uniform(std::move(score_t), std::move(score_c));
    const double imbalance = req.metric == BoundMetric::Wass
                                 ? wasserstein_exact(pair, req.wasserstein_cap)
                                 : linear_mmd(pair);
    return multilayer_bounds(stack, imbalance, req.metric);
}

}  // namespace scorematch
