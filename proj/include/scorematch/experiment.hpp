#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scorematch/bounds.hpp"
#include "scorematch/dgp.hpp"
#include "scorematch/nn.hpp"

#include "json.hpp"

namespace scorematch {

inline constexpr char kToolVersion[] = "0.1.0";

// Matching methods compared by the harness. The first seven produce score
// spaces for 1-NN matching; NoMatching keeps every control at weight 1 and
// only reports the raw imbalance floor.
enum class MethodKind {
    NnLayer1,
    NnPs,
    RawX,
    Random,
    LogRegPs,
    Pca,
    PcaLogRegPs,
    NoMatching,
};

std::string method_name(MethodKind method);
MethodKind method_from_name(const std::string& name);
// True for methods whose score is an estimated propensity in (0, 1).
bool method_is_propensity(MethodKind method);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct ExperimentConfig {
    // Exactly one data source: a synthetic generator or a CSV file.
    std::optional<DgpConfig> dgp;
    std::string csv_path;
    bool standardize_csv = true;

    std::vector<MethodKind> methods;  // default: all eight
    TrainConfig train;
    SplitSpec split;
    std::size_t pca_dim = 5;
    std::vector<std::uint64_t> dgp_seeds{0};
    std::vector<std::uint64_t> train_seeds{0};
    std::string output_dir = "out";

    ExperimentConfig();

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

struct ReportRow {
    std::string method;
    std::string metric;  // calibration_error | att_error | imbalance
    std::string sample;  // in_sample | hold_out
    double mean = 0.0;
    double standard_error = 0.0;  // sample sd / sqrt(n_runs), 0 when n_runs < 2
    std::size_t n_runs = 0;
};

struct RunRecord {
    std::uint64_t dgp_seed = 0;
    std::uint64_t train_seed = 0;
    std::string method;
    std::string metric;
    std::string sample;
    double value = 0.0;
};

struct ExperimentResult {
    std::vector<ReportRow> rows;
    std::vector<RunRecord> runs;
    std::vector<std::string> notices;  // skipped metrics, deduplicated
};

// Runs the full protocol: per (dgp_seed, train_seed) draw or load the data,
// split, fit every method on train(+val), match in-sample and hold-out, and
// aggregate. Writes report.csv, report.json, runs.csv, manifest.json, and the
// fitted models under output_dir. Output is a pure function of the config;
// jobs only controls how many runs execute concurrently.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1);

// Fits the network for every (dgp_seed, train_seed) pair with the same seed
// derivation as run_experiment and saves models plus loss curves under
// output_dir/models, without any matching or metrics.
void train_models(const ExperimentConfig& cfg, std::size_t jobs = 1);

std::string report_csv(const std::vector<ReportRow>& rows);
std::string runs_csv(const std::vector<RunRecord>& runs);

struct BoundsRequest {
    std::string model_path;    // serialized network, or {"weights": [[...]]}
    std::string dataset_path;  // CSV with the covariates to score
    std::size_t layer = 1;     // how many layers of the network form the score
    BoundMetric metric = BoundMetric::LinearMmd;
    std::size_t wasserstein_cap = 4000000;
    bool standardize_csv = true;
    // With this off, a sigmoid inside the stack keeps its global constants
    // (m = 0), which makes the upper bound infinite.
    bool bound_sigmoid_from_data = true;
};

// Imbalance of the layer-`layer` score across the dataset's arms, sandwiched
// by the multilayer constants of the truncated network. Sigmoid activations
// inside the stack get their domain bound from the dataset's pre-activations.
BoundReport run_bounds(const BoundsRequest& req);

}  // namespace scorematch
