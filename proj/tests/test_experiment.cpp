#include "scorematch/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include "doctest.h"

#include "scorematch/dgp.hpp"
#include "scorematch/linalg.hpp"
#include "scorematch/metrics.hpp"
#include "scorematch/nn.hpp"

using namespace scorematch;

namespace {

struct TempDir {
    std::string path;
    explicit TempDir(const std::string& name) {
        path = (std::filesystem::temp_directory_path() / name).string();
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return path + "/" + name; }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Two dyadic covariate points, each present as 40 treated and 40 control
// copies with noiseless outcomes: every split slice keeps exact duplicates,
// so raw-covariate matching must be perfect.
Dataset duplicated_controls() {
    const double points[2][2] = {{0.5, -1.0}, {2.0, 0.25}};
    const double mu0s[2] = {0.25, -0.5};
    const double tau = 1.5;
    Dataset d;
    d.x = Matrix(160, 2);
    d.t.resize(160);
    d.y.resize(160);
    d.mu0.resize(160);
    d.mu1.resize(160);
    for (std::size_t i = 0; i < 160; ++i) {
        const std::size_t p = (i / 2) % 2;
        const int treated = i % 2 == 0 ? 1 : 0;
        d.x.at(i, 0) = points[p][0];
        d.x.at(i, 1) = points[p][1];
        d.t[i] = treated;
        d.mu0[i] = mu0s[p];
        d.mu1[i] = mu0s[p] + tau;
        d.y[i] = treated == 1 ? d.mu1[i] : d.mu0[i];
    }
    d.validate();
    return d;
}

const ReportRow* find_row(const ExperimentResult& res, const std::string& method,
                          const std::string& metric, const std::string& sample) {
    for (const ReportRow& r : res.rows) {
        if (r.method == method && r.metric == metric && r.sample == sample) return &r;
    }
    return nullptr;
}

}  // namespace

TEST_CASE("experiment config round trips and validates") {
    ExperimentConfig cfg;
    CHECK(cfg.methods.size() == 8);

    cfg.dgp = DgpConfig{};
    cfg.dgp_seeds = {3, 1};
    cfg.train_seeds = {7};
    cfg.output_dir = "somewhere";
    cfg.pca_dim = 4;
    cfg.train.max_epochs = 17;
    cfg.train.early_stopping_patience = 5;
    const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back.to_json().dump() == cfg.to_json().dump());

    ExperimentConfig csv_cfg;
    csv_cfg.csv_path = "data.csv";
    const ExperimentConfig csv_back = ExperimentConfig::from_json(csv_cfg.to_json());
    CHECK(csv_back.to_json().dump() == csv_cfg.to_json().dump());
    CHECK_FALSE(csv_back.dgp.has_value());

    SUBCASE("rejects bad configs") {
        ExperimentConfig bad = cfg;
        bad.csv_path = "also.csv";
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = cfg;
        bad.dgp.reset();
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = cfg;
        bad.methods = {MethodKind::RawX, MethodKind::RawX};
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = cfg;
        bad.methods.clear();
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = cfg;
        bad.dgp_seeds = {1, 1};
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = cfg;
        bad.train_seeds.clear();
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = cfg;
        bad.pca_dim = 0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        ExperimentConfig bad_csv = csv_cfg;
        bad_csv.dgp_seeds = {0, 1};
        CHECK_THROWS_AS(bad_csv.validate(), std::invalid_argument);
    }

    SUBCASE("method names round trip") {
        for (MethodKind m :
             {MethodKind::NnLayer1, MethodKind::NnPs, MethodKind::RawX, MethodKind::Random,
              MethodKind::LogRegPs, MethodKind::Pca, MethodKind::PcaLogRegPs,
              MethodKind::NoMatching}) {
            CHECK(method_from_name(method_name(m)) == m);
        }
        CHECK_THROWS_AS(method_from_name("nope"), std::invalid_argument);
        CHECK(method_is_propensity(MethodKind::NnPs));
        CHECK(method_is_propensity(MethodKind::LogRegPs));
        CHECK(method_is_propensity(MethodKind::PcaLogRegPs));
        CHECK_FALSE(method_is_propensity(MethodKind::RawX));
        CHECK_FALSE(method_is_propensity(MethodKind::Pca));
    }
}

TEST_CASE("raw matching on duplicated controls is exact") {
    TempDir dir("scorematch_exp_dup");
    const std::string csv = dir.file("data.csv");
    save_csv(duplicated_controls(), csv);

    ExperimentConfig cfg;
    cfg.csv_path = csv;
    cfg.standardize_csv = false;
    cfg.methods = {MethodKind::RawX, MethodKind::NoMatching};
    cfg.output_dir = dir.file("out");
    const ExperimentResult res = run_experiment(cfg);

    for (const char* sample : {"in_sample", "hold_out"}) {
        const ReportRow* att = find_row(res, "raw_x", "att_error", sample);
        const ReportRow* imb = find_row(res, "raw_x", "imbalance", sample);
        REQUIRE(att != nullptr);
        REQUIRE(imb != nullptr);
        CHECK(att->mean == 0.0);
        CHECK(imb->mean == 0.0);
        CHECK(att->n_runs == 1);
        CHECK(att->standard_error == 0.0);
        // the floor is not zero: the two points differ across arms pre-match
        const ReportRow* floor = find_row(res, "no_matching", "imbalance", sample);
        REQUIRE(floor != nullptr);
        CHECK(floor->mean >= 0.0);
    }
    CHECK(find_row(res, "no_matching", "att_error", "in_sample") == nullptr);
    CHECK(find_row(res, "raw_x", "calibration_error", "in_sample") == nullptr);
    // no e_true column and no propensity method: nothing to notice about
    // calibration, but without it the csv has mu columns, so no att notice
    CHECK(res.notices.empty());
    CHECK(std::filesystem::exists(cfg.output_dir + "/report.csv"));
    CHECK(std::filesystem::exists(cfg.output_dir + "/report.json"));
    CHECK(std::filesystem::exists(cfg.output_dir + "/runs.csv"));
    CHECK(std::filesystem::exists(cfg.output_dir + "/manifest.json"));
}

TEST_CASE("propensity methods carry calibration rows and plain scores do not") {
    TempDir dir("scorematch_exp_calib");
    ExperimentConfig cfg;
    DgpConfig dgp;
    dgp.n = 240;
    dgp.d_observed = 6;
    dgp.d_latent = 2;
    cfg.dgp = dgp;
    cfg.methods = {MethodKind::NnPs, MethodKind::RawX};
    cfg.train.max_epochs = 6;
    cfg.train.batch_size = 40;
    cfg.train.learning_rate = 0.05;
    cfg.output_dir = dir.file("out");
    const ExperimentResult res = run_experiment(cfg);

    CHECK(find_row(res, "nn_ps", "calibration_error", "in_sample") != nullptr);
    CHECK(find_row(res, "nn_ps", "calibration_error", "hold_out") != nullptr);
    CHECK(find_row(res, "nn_ps", "att_error", "in_sample") != nullptr);
    CHECK(find_row(res, "raw_x", "calibration_error", "in_sample") == nullptr);
    CHECK(find_row(res, "raw_x", "calibration_error", "hold_out") == nullptr);
    CHECK(find_row(res, "raw_x", "imbalance", "hold_out") != nullptr);
    CHECK(res.notices.empty());
    CHECK(std::filesystem::exists(cfg.output_dir + "/models/nn_dgp0_train0.json"));
}

TEST_CASE("missing truth columns skip metrics with a notice") {
    TempDir dir("scorematch_exp_notruth");
    Dataset plain = duplicated_controls();
    plain.mu0.clear();
    plain.mu1.clear();
    const std::string csv = dir.file("plain.csv");
    save_csv(plain, csv);

    ExperimentConfig cfg;
    cfg.csv_path = csv;
    cfg.standardize_csv = false;
    cfg.methods = {MethodKind::LogRegPs};
    cfg.train.max_epochs = 3;
    cfg.train.batch_size = 40;
    cfg.output_dir = dir.file("out");
    const ExperimentResult res = run_experiment(cfg);

    CHECK(find_row(res, "logreg_ps", "att_error", "in_sample") == nullptr);
    CHECK(find_row(res, "logreg_ps", "calibration_error", "in_sample") == nullptr);
    CHECK(find_row(res, "logreg_ps", "imbalance", "in_sample") != nullptr);
    REQUIRE(res.notices.size() == 2);
    CHECK(res.notices[0].find("att_error skipped") != std::string::npos);
    CHECK(res.notices[1].find("calibration_error skipped") != std::string::npos);
}

TEST_CASE("reports are byte identical across reruns and job counts") {
    TempDir dir("scorematch_exp_det");
    ExperimentConfig cfg;
    DgpConfig dgp;
    dgp.n = 160;
    dgp.d_observed = 5;
    dgp.d_latent = 2;
    cfg.dgp = dgp;
    cfg.methods = {MethodKind::NnPs, MethodKind::Pca, MethodKind::Random, MethodKind::NoMatching};
    cfg.train.max_epochs = 4;
    cfg.train.batch_size = 32;
    cfg.dgp_seeds = {0, 1};
    cfg.train_seeds = {0, 1};

    cfg.output_dir = dir.file("a");
    run_experiment(cfg, 1);
    const std::string report_a = slurp(cfg.output_dir + "/report.csv");
    const std::string runs_a = slurp(cfg.output_dir + "/runs.csv");
    const std::string json_a = slurp(cfg.output_dir + "/report.json");

    cfg.output_dir = dir.file("b");
    run_experiment(cfg, 4);
    CHECK(slurp(cfg.output_dir + "/report.csv") == report_a);
    CHECK(slurp(cfg.output_dir + "/runs.csv") == runs_a);
    CHECK(slurp(cfg.output_dir + "/report.json") == json_a);

    cfg.output_dir = dir.file("a");
    run_experiment(cfg, 2);
    CHECK(slurp(cfg.output_dir + "/report.csv") == report_a);
    CHECK(slurp(cfg.output_dir + "/runs.csv") == runs_a);

    // per-run rows: 4 runs x (nn_ps 3+3 metrics, pca 2+2, random 2+2, floor 1+1)
    CHECK(runs_a.find("dgp_seed,train_seed,method,metric,sample,value\n") == 0);
}

TEST_CASE("run bounds on an identity map reproduces the measured imbalance") {
    TempDir dir("scorematch_exp_bounds_id");
    const std::string csv = dir.file("data.csv");
    save_csv(duplicated_controls(), csv);
    const std::string map = dir.file("identity.json");
    {
        std::ofstream out(map);
        out << R"({"weights": [[1.0, 0.0], [0.0, 1.0]]})";
    }

    BoundsRequest req;
    req.model_path = map;
    req.dataset_path = csv;
    req.standardize_csv = false;
    req.metric = BoundMetric::LinearMmd;
    const BoundReport rep = run_bounds(req);
    CHECK(rep.lower == rep.upper);
    CHECK(rep.lower == rep.score_imbalance);
    CHECK(rep.alpha == 1.0);
    CHECK(rep.beta == 1.0);

    req.layer = 2;
    CHECK_THROWS_AS(run_bounds(req), std::invalid_argument);
}

TEST_CASE("run bounds layer one matches the first-layer singular values") {
    TempDir dir("scorematch_exp_bounds_nn");
    DgpConfig dgp;
    dgp.n = 60;
    dgp.d_observed = 3;
    dgp.d_latent = 2;
    dgp.seed = 11;
    const Dataset data = generate(dgp);
    const std::string csv = dir.file("data.csv");
    save_csv(data, csv);

    const Mlp model = make_mlp({3, 4, 1}, 0.05, 17);
    const std::string model_file = dir.file("model.json");
    save_model(model, model_file);

    BoundsRequest req;
    req.model_path = model_file;
    req.dataset_path = csv;
    req.standardize_csv = false;
    req.layer = 1;
    req.metric = BoundMetric::LinearMmd;
    const BoundReport rep = run_bounds(req);

    const std::vector<double> sv = svd(model.layers[0].weights).singular_values;
    CHECK(rep.lower == doctest::Approx(rep.score_imbalance / sv.front()).epsilon(1e-12));
    CHECK(rep.upper == doctest::Approx(rep.score_imbalance / sv.back()).epsilon(1e-12));
    REQUIRE(rep.layers.size() == 1);
    CHECK(rep.layers[0].norm_w == doctest::Approx(sv.front()).epsilon(1e-12));

    req.metric = BoundMetric::Wass;
    const BoundReport wrep = run_bounds(req);
    CHECK(wrep.lower <= wrep.upper);
    CHECK(wrep.score_imbalance > 0.0);

    req.layer = 2;
    req.metric = BoundMetric::LinearMmd;
    const BoundReport deep = run_bounds(req);
    REQUIRE(deep.layers.size() == 2);
    CHECK(deep.layers[0].lip.m == 0.05);  // leaky slope between the layers
    CHECK(deep.layers[1].lip.m == 1.0);   // pre-activation output
    CHECK(deep.lower <= deep.upper);

    req.layer = 3;
    CHECK_THROWS_AS(run_bounds(req), std::invalid_argument);
}

TEST_CASE("run bounds resolves sigmoid stacks from data or goes infinite") {
    TempDir dir("scorematch_exp_bounds_sig");
    DgpConfig dgp;
    dgp.n = 50;
    dgp.d_observed = 2;
    dgp.d_latent = 1;
    dgp.seed = 5;
    save_csv(generate(dgp), dir.file("data.csv"));

    Mlp model;
    DenseLayer l1;
    l1.weights = Matrix(2, 2, {1.0, 0.5, -0.25, 0.75});
    l1.bias = {0.1, -0.2};
    l1.activation = ActivationKind::sigmoid();
    DenseLayer l2;
    l2.weights = Matrix(1, 2, {0.8, -0.3});
    l2.bias = {0.0};
    l2.activation = ActivationKind::sigmoid();
    model.layers = {l1, l2};
    model.validate();
    save_model(model, dir.file("model.json"));

    BoundsRequest req;
    req.model_path = dir.file("model.json");
    req.dataset_path = dir.file("data.csv");
    req.standardize_csv = false;
    req.layer = 2;
    req.metric = BoundMetric::LinearMmd;

    const BoundReport bounded = run_bounds(req);
    REQUIRE(bounded.layers.size() == 2);
    CHECK(bounded.layers[0].lip.source == LipschitzSource::BoundedDomain);
    CHECK(bounded.layers[0].lip.m > 0.0);
    CHECK(std::isfinite(bounded.upper));

    req.bound_sigmoid_from_data = false;
    const BoundReport global = run_bounds(req);
    CHECK(global.layers[0].lip.m == 0.0);
    CHECK(global.upper == std::numeric_limits<double>::infinity());
    CHECK(global.to_json().at("upper").get<std::string>() == "inf");
}

TEST_CASE("run bounds enforces the wasserstein size cap") {
    TempDir dir("scorematch_exp_cap");
    save_csv(duplicated_controls(), dir.file("data.csv"));
    {
        std::ofstream out(dir.file("map.json"));
        out << R"({"weights": [[1.0, 0.0]]})";
    }
    BoundsRequest req;
    req.model_path = dir.file("map.json");
    req.dataset_path = dir.file("data.csv");
    req.standardize_csv = false;
    req.metric = BoundMetric::Wass;
    req.wasserstein_cap = 100;
    CHECK_THROWS_WITH_AS(run_bounds(req), doctest::Contains("cap of 100"), std::invalid_argument);
}
