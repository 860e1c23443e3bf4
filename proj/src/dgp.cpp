#include "scorematch/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "scorematch/nn.hpp"
#include "scorematch/numeric_io.hpp"
#include "scorematch/rng.hpp"

namespace scorematch {

PropensityForm PropensityForm::polynomial(std::size_t degree) {
    if (degree < 2) {
        throw std::invalid_argument("PropensityForm: polynomial degree must be >= 2");
    }
    return {PropensityKind::PolynomialOnProjection, degree};
}

void DgpConfig::validate() const {
    if (n < 2) throw std::invalid_argument("DgpConfig: n must be >= 2");
    if (d_latent == 0 || d_latent > d_observed) {
        throw std::invalid_argument("DgpConfig: need 1 <= d_latent <= d_observed");
    }
    if (!(overlap_clamp > 0.0) || !(overlap_clamp < 0.5)) {
        throw std::invalid_argument("DgpConfig: overlap_clamp must lie in (0, 0.5)");
    }
    if (!(treated_fraction_target > overlap_clamp) ||
        !(treated_fraction_target < 1.0 - overlap_clamp)) {
        throw std::invalid_argument(
            "DgpConfig: treated_fraction_target must lie strictly inside "
            "[overlap_clamp, 1 - overlap_clamp]");
    }
    if (propensity_form.kind == PropensityKind::PolynomialOnProjection &&
        propensity_form.degree < 2) {
        throw std::invalid_argument("DgpConfig: polynomial degree must be >= 2");
    }
    if (!(effect_heterogeneity >= 0.0) || !std::isfinite(effect_heterogeneity)) {
        throw std::invalid_argument("DgpConfig: effect_heterogeneity must be finite and >= 0");
    }
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) {
        throw std::invalid_argument("DgpConfig: noise_sd must be finite and >= 0");
    }
    if (!std::isfinite(treatment_effect_base)) {
        throw std::invalid_argument("DgpConfig: treatment_effect_base must be finite");
    }
}

nlohmann::json DgpConfig::to_json() const {
    nlohmann::json j;
    j["n"] = n;
    j["d_observed"] = d_observed;
    j["d_latent"] = d_latent;
    j["treated_fraction_target"] = treated_fraction_target;
    if (propensity_form.kind == PropensityKind::LogisticOnProjection) {
        j["propensity_form"] = {{"kind", "logistic_on_projection"}};
    } else {
        j["propensity_form"] = {{"kind", "polynomial_on_projection"},
                                {"degree", propensity_form.degree}};
    }
    j["outcome_form"] = outcome_form == OutcomeForm::Linear ? "linear" : "exponential";
    j["treatment_effect_base"] = treatment_effect_base;
    j["effect_heterogeneity"] = effect_heterogeneity;
    j["noise_sd"] = noise_sd;
    j["overlap_clamp"] = overlap_clamp;
    j["seed"] = seed;
    return j;
}

DgpConfig DgpConfig::from_json(const nlohmann::json& j) {
    DgpConfig cfg;
    cfg.n = j.at("n").get<std::size_t>();
    cfg.d_observed = j.at("d_observed").get<std::size_t>();
    cfg.d_latent = j.at("d_latent").get<std::size_t>();
    cfg.treated_fraction_target = j.at("treated_fraction_target").get<double>();
    if (j.contains("propensity_form")) {
        const nlohmann::json& p = j.at("propensity_form");
        const std::string kind = p.at("kind").get<std::string>();
        if (kind == "logistic_on_projection") {
            cfg.propensity_form = PropensityForm::logistic();
        } else if (kind == "polynomial_on_projection") {
            cfg.propensity_form = PropensityForm::polynomial(p.at("degree").get<std::size_t>());
        } else {
            throw std::invalid_argument("DgpConfig: unknown propensity form '" + kind + "'");
        }
    }
    if (j.contains("outcome_form")) {
        const std::string o = j.at("outcome_form").get<std::string>();
        if (o == "linear") {
            cfg.outcome_form = OutcomeForm::Linear;
        } else if (o == "exponential") {
            cfg.outcome_form = OutcomeForm::Exponential;
        } else {
            throw std::invalid_argument("DgpConfig: unknown outcome form '" + o + "'");
        }
    }
    if (j.contains("treatment_effect_base")) {
        cfg.treatment_effect_base = j.at("treatment_effect_base").get<double>();
    }
    if (j.contains("effect_heterogeneity")) {
        cfg.effect_heterogeneity = j.at("effect_heterogeneity").get<double>();
    }
    if (j.contains("noise_sd")) cfg.noise_sd = j.at("noise_sd").get<double>();
    if (j.contains("overlap_clamp")) cfg.overlap_clamp = j.at("overlap_clamp").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

namespace {

constexpr double kEmbeddingNoiseSd = 0.1;

// Columns of a Gaussian draw, orthonormalized in place.
Matrix orthonormal_embedding(std::size_t d_observed, std::size_t d_latent, Rng& rng) {
    Matrix e(d_observed, d_latent);
    for (double& v : e.data) v = rng.normal();
    for (std::size_t c = 0; c < d_latent; ++c) {
        for (int round = 0; round < 2; ++round) {
            for (std::size_t p = 0; p < c; ++p) {
                double dot = 0.0;
                for (std::size_t r = 0; r < d_observed; ++r) dot += e.at(r, c) * e.at(r, p);
                for (std::size_t r = 0; r < d_observed; ++r) e.at(r, c) -= dot * e.at(r, p);
            }
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < d_observed; ++r) norm += e.at(r, c) * e.at(r, c);
        norm = std::sqrt(norm);
        if (norm < 1e-8) {
            throw std::runtime_error("generate: degenerate embedding draw");
        }
        for (std::size_t r = 0; r < d_observed; ++r) e.at(r, c) /= norm;
    }
    return e;
}

double link_value(const DgpConfig& cfg, double u, double intercept) {
    double z = u;
    if (cfg.propensity_form.kind == PropensityKind::PolynomialOnProjection) {
        z = u + 0.5 * std::pow(u, static_cast<double>(cfg.propensity_form.degree));
    }
    const double raw = sigmoid_value(z + intercept);
    return std::clamp(raw, cfg.overlap_clamp, 1.0 - cfg.overlap_clamp);
}

// Mean propensity is non-decreasing in the intercept, so a bisection pins the
// realized treated fraction at the target.
double calibrate_intercept(const DgpConfig& cfg, const std::vector<double>& u) {
    double lo = -40.0, hi = 40.0;
    auto mean_e = [&](double c) {
        double sum = 0.0;
        for (double ui : u) sum += link_value(cfg, ui, c);
        return sum / static_cast<double>(u.size());
    };
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mean_e(mid) < cfg.treated_fraction_target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

Dataset generate(const DgpConfig& cfg) {
    cfg.validate();
    Rng rng(mix_seed(cfg.seed, 0x646770));  // "dgp"

    Matrix z(cfg.n, cfg.d_latent);
    for (double& v : z.data) v = rng.normal();
    const Matrix embed = orthonormal_embedding(cfg.d_observed, cfg.d_latent, rng);

    Dataset data;
    data.x = Matrix(cfg.n, cfg.d_observed);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        for (std::size_t c = 0; c < cfg.d_observed; ++c) {
            double v = kEmbeddingNoiseSd * rng.normal();
            for (std::size_t k = 0; k < cfg.d_latent; ++k) {
                v += embed.at(c, k) * z.at(i, k);
            }
            data.x.at(i, c) = v;
        }
    }

    // Latent projections drive assignment, heterogeneity, and outcomes.
    Matrix proj(cfg.n, cfg.d_latent);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        for (std::size_t k = 0; k < cfg.d_latent; ++k) {
            double v = 0.0;
            for (std::size_t c = 0; c < cfg.d_observed; ++c) {
                v += embed.at(c, k) * data.x.at(i, c);
            }
            proj.at(i, k) = v;
        }
    }

    auto unit_direction = [&]() {
        std::vector<double> dir(cfg.d_latent);
        double norm = 0.0;
        for (double& v : dir) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw std::runtime_error("generate: degenerate direction draw");
        for (double& v : dir) v /= norm;
        return dir;
    };

    const std::vector<double> theta = unit_direction();
    const std::vector<double> eta = unit_direction();
    std::vector<double> gamma = unit_direction();
    // Tilt the outcome direction toward the assignment direction so ignoring
    // the covariates leaves visible confounding.
    for (std::size_t k = 0; k < cfg.d_latent; ++k) gamma[k] = theta[k] + 0.5 * gamma[k];

    const double assignment_scale = 1.8;
    std::vector<double> u(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        double dot = 0.0;
        for (std::size_t k = 0; k < cfg.d_latent; ++k) dot += theta[k] * proj.at(i, k);
        u[i] = assignment_scale * dot;
    }
    const double intercept = calibrate_intercept(cfg, u);

    data.e_true.resize(cfg.n);
    data.t.resize(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        data.e_true[i] = link_value(cfg, u[i], intercept);
        data.t[i] = rng.bernoulli(data.e_true[i]) ? 1 : 0;
    }

    // Unit-variance heterogeneity score over the sample.
    std::vector<double> het(cfg.n, 0.0);
    if (cfg.effect_heterogeneity > 0.0) {
        double mean = 0.0;
        for (std::size_t i = 0; i < cfg.n; ++i) {
            for (std::size_t k = 0; k < cfg.d_latent; ++k) het[i] += eta[k] * proj.at(i, k);
            mean += het[i];
        }
        mean /= static_cast<double>(cfg.n);
        double var = 0.0;
        for (double& v : het) {
            v -= mean;
            var += v * v;
        }
        var /= static_cast<double>(cfg.n);
        const double sd = std::max(std::sqrt(var), 1e-12);
        for (double& v : het) v /= sd;
    }

    data.mu0.resize(cfg.n);
    data.mu1.resize(cfg.n);
    data.y.resize(cfg.n);
    const double exp_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_latent));
    for (std::size_t i = 0; i < cfg.n; ++i) {
        double drive = 0.0;
        for (std::size_t k = 0; k < cfg.d_latent; ++k) drive += gamma[k] * proj.at(i, k);
        const double base = cfg.outcome_form == OutcomeForm::Linear
                                ? drive
                                : std::exp(drive * exp_scale);
        const double tau = cfg.treatment_effect_base + cfg.effect_heterogeneity * het[i];
        // Nudge mu0 by at most a few ulps so the stored pair subtracts back
        // to tau bit-exactly when the mantissas allow it (always the case for
        // a constant dyadic effect like the default 2.0). Heterogeneous taus
        // carry full mantissas and keep whatever residue remains.
        double m0 = base;
        double m1 = m0 + tau;
        for (int rounds = 0; rounds < 4 && m1 - m0 != tau; ++rounds) {
            m0 = m1 - tau;
            m1 = m0 + tau;
        }
        data.mu0[i] = m0;
        data.mu1[i] = m1;
        data.y[i] = (data.t[i] == 1 ? m1 : m0) + cfg.noise_sd * rng.normal();
    }

    std::size_t treated = 0;
    for (int ti : data.t) treated += static_cast<std::size_t>(ti);
    if (treated == 0 || treated == cfg.n) {
        throw std::invalid_argument(
            "generate: the draw produced a single-arm dataset; adjust the target fraction, "
            "clamp, or n");
    }
    data.validate();
    return data;
}

DiscreteJoint discrete_scenario(ScenarioKind kind, std::size_t support_size,
                                std::size_t score_levels, std::uint64_t seed,
                                double perturbation) {
    if (score_levels == 0 || support_size == 0) {
        throw std::invalid_argument("discrete_scenario: sizes must be positive");
    }
    if (score_levels > support_size) {
        throw std::invalid_argument("discrete_scenario: score_levels must not exceed support_size");
    }
    if (!(perturbation >= 0.0) || perturbation > 1.0) {
        throw std::invalid_argument("discrete_scenario: perturbation must lie in [0, 1]");
    }
    if (kind == ScenarioKind::NonBalancing && perturbation > 0.0 &&
        support_size == score_levels) {
        throw std::invalid_argument(
            "discrete_scenario: NonBalancing needs a level with at least two support points "
            "(support_size > score_levels)");
    }

    Rng rng(mix_seed(seed, 0x7363656e));  // "scen"

    // Every level gets at least one point; the remainder lands uniformly.
    std::vector<std::size_t> level_of(support_size);
    for (std::size_t i = 0; i < support_size; ++i) {
        level_of[i] = i < score_levels ? i : rng.index(score_levels);
    }

    const std::size_t dim = 2;
    DiscreteJoint joint;
    joint.support = Matrix(support_size, dim);
    for (std::size_t i = 0; i < support_size; ++i) {
        // Distinct integer grid points: x = (i, small jitter grid value).
        joint.support.at(i, 0) = static_cast<double>(i);
        joint.support.at(i, 1) = static_cast<double>(rng.index(7)) - 3.0;
        joint.scores.push_back({static_cast<double>(level_of[i])});
    }

    // Small-integer weights keep every probability a simple rational.
    std::vector<double> level_mass(score_levels);
    for (double& v : level_mass) v = static_cast<double>(1 + rng.index(9));
    std::vector<double> point_mass(support_size);
    for (double& v : point_mass) v = static_cast<double>(1 + rng.index(9));
    std::vector<double> level_q(score_levels);
    for (double& v : level_q) v = static_cast<double>(2 + rng.index(7)) / 10.0;  // 0.2 .. 0.8

    std::vector<double> level_total(score_levels, 0.0);
    for (std::size_t i = 0; i < support_size; ++i) level_total[level_of[i]] += point_mass[i];
    double mass_total = 0.0;
    for (double v : level_mass) mass_total += v;

    // Within-level assignment perturbation; zero reproduces Balancing exactly.
    std::vector<double> q(support_size);
    for (std::size_t i = 0; i < support_size; ++i) q[i] = level_q[level_of[i]];
    if (kind == ScenarioKind::NonBalancing) {
        for (std::size_t i = 0; i < support_size; ++i) {
            const double delta = (static_cast<double>(rng.index(5)) - 2.0) / 2.0;  // -1 .. 1
            q[i] = std::clamp(q[i] + perturbation * delta, 0.05, 0.95);
        }
        // Force a genuine within-level split in the first crowded level.
        for (std::size_t lv = 0; lv < score_levels; ++lv) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < support_size; ++i) {
                if (level_of[i] == lv) members.push_back(i);
            }
            if (members.size() >= 2) {
                q[members[0]] = std::clamp(level_q[lv] - perturbation, 0.05, 0.95);
                q[members[1]] = std::clamp(level_q[lv] + perturbation, 0.05, 0.95);
                break;
            }
        }
    }

    joint.p_treated.resize(support_size);
    joint.p_control.resize(support_size);
    for (std::size_t i = 0; i < support_size; ++i) {
        const std::size_t lv = level_of[i];
        const double mass = (level_mass[lv] / mass_total) * (point_mass[i] / level_total[lv]);
        joint.p_treated[i] = mass * q[i];
        joint.p_control[i] = mass * (1.0 - q[i]);
    }
    joint.validate();
    return joint;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

[[noreturn]] void row_error(std::size_t line_no, const std::string& what) {
    throw std::invalid_argument("load_csv: row " + std::to_string(line_no) + ": " + what);
}

}  // namespace

Dataset load_csv(const std::string& path, bool standardize) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("load_csv: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("load_csv: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_line(line);

    std::size_t d = 0;
    while (d < header.size() && header[d] == "x" + std::to_string(d)) ++d;
    if (d == 0) throw std::invalid_argument("load_csv: header must start with x0");
    std::size_t col = d;
    auto expect = [&](const std::string& name) {
        if (col >= header.size() || header[col] != name) {
            throw std::invalid_argument("load_csv: expected column '" + name + "' at position " +
                                        std::to_string(col));
        }
        ++col;
    };
    expect("t");
    expect("y");
    bool has_e = col < header.size() && header[col] == "e";
    if (has_e) ++col;
    bool has_mu = col < header.size() && header[col] == "mu0";
    if (has_mu) {
        ++col;
        expect("mu1");
    }
    if (col != header.size()) {
        throw std::invalid_argument("load_csv: unexpected trailing column '" + header[col] + "'");
    }
    const std::size_t n_cols = header.size();

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_line(line);
        if (fields.size() != n_cols) {
            row_error(line_no, "expected " + std::to_string(n_cols) + " fields, found " +
                                   std::to_string(fields.size()));
        }
        std::vector<double> values(n_cols);
        for (std::size_t c = 0; c < n_cols; ++c) {
            double v = 0.0;
            try {
                v = parse_double(fields[c]);
            } catch (const std::exception&) {
                row_error(line_no, "cannot parse '" + fields[c] + "' in column " + header[c]);
            }
            if (!std::isfinite(v)) row_error(line_no, "non-finite value in column " + header[c]);
            values[c] = v;
        }
        const double tv = values[d];
        if (tv != 0.0 && tv != 1.0) row_error(line_no, "t must be 0 or 1");
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw std::invalid_argument("load_csv: no data rows");

    Dataset data;
    const std::size_t n = rows.size();
    data.x = Matrix(n, d);
    data.t.resize(n);
    data.y.resize(n);
    if (has_e) data.e_true.resize(n);
    if (has_mu) {
        data.mu0.resize(n);
        data.mu1.resize(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c) data.x.at(i, c) = rows[i][c];
        data.t[i] = static_cast<int>(rows[i][d]);
        data.y[i] = rows[i][d + 1];
        std::size_t c = d + 2;
        if (has_e) data.e_true[i] = rows[i][c++];
        if (has_mu) {
            data.mu0[i] = rows[i][c++];
            data.mu1[i] = rows[i][c++];
        }
    }

    if (standardize) {
        for (std::size_t c = 0; c < d; ++c) {
            bool binary = true;
            for (std::size_t i = 0; i < n; ++i) {
                const double v = data.x.at(i, c);
                if (v != 0.0 && v != 1.0) {
                    binary = false;
                    break;
                }
            }
            if (binary) continue;
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += data.x.at(i, c);
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double dvi = data.x.at(i, c) - mean;
                var += dvi * dvi;
            }
            const double sd = std::max(std::sqrt(var / static_cast<double>(n)), 1e-12);
            for (std::size_t i = 0; i < n; ++i) {
                data.x.at(i, c) = (data.x.at(i, c) - mean) / sd;
            }
        }
    }

    data.validate();
    return data;
}

void save_csv(const Dataset& data, const std::string& path) {
    data.validate();
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("save_csv: cannot open '" + path + "'");
    const bool has_e = !data.e_true.empty();
    const bool has_mu = data.has_truth();
    for (std::size_t c = 0; c < data.dim(); ++c) out << "x" << c << ",";
    out << "t,y";
    if (has_e) out << ",e";
    if (has_mu) out << ",mu0,mu1";
    out << "\n";
    for (std::size_t i = 0; i < data.n(); ++i) {
        for (std::size_t c = 0; c < data.dim(); ++c) {
            out << format_double(data.x.at(i, c)) << ",";
        }
        out << data.t[i] << "," << format_double(data.y[i]);
        if (has_e) out << "," << format_double(data.e_true[i]);
        if (has_mu) {
            out << "," << format_double(data.mu0[i]) << "," << format_double(data.mu1[i]);
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("save_csv: write failed for '" + path + "'");
}

void SplitSpec::validate() const {
    double sum = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0) || !std::isfinite(r)) {
            throw std::invalid_argument("SplitSpec: every ratio must be positive");
        }
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("SplitSpec: ratios must sum to 1");
    }
}

nlohmann::json SplitSpec::to_json() const {
    return {{"ratios", {ratios[0], ratios[1], ratios[2]}}, {"seed", seed}};
}

SplitSpec SplitSpec::from_json(const nlohmann::json& j) {
    SplitSpec spec;
    if (j.contains("ratios")) {
        const nlohmann::json& r = j.at("ratios");
        if (!r.is_array() || r.size() != 3) {
            throw std::invalid_argument("SplitSpec: ratios must be a 3-element array");
        }
        for (std::size_t i = 0; i < 3; ++i) spec.ratios[i] = r[i].get<double>();
    }
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    spec.validate();
    return spec;
}

SplitResult split(const Dataset& data, const SplitSpec& spec) {
    spec.validate();
    data.validate();
    const std::size_t n = data.n();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(spec.seed, 0x73706c74));  // "splt"
    rng.shuffle(order);

    const std::size_t cut1 =
        static_cast<std::size_t>(std::llround(spec.ratios[0] * static_cast<double>(n)));
    const std::size_t cut2 = static_cast<std::size_t>(
        std::llround((spec.ratios[0] + spec.ratios[1]) * static_cast<double>(n)));
    if (cut1 == 0 || cut2 <= cut1 || cut2 >= n) {
        throw std::invalid_argument("split: a split would be empty at n = " + std::to_string(n));
    }

    SplitResult res;
    res.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut1));
    res.val_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(cut1),
                           order.begin() + static_cast<std::ptrdiff_t>(cut2));
    res.test_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(cut2), order.end());
    std::sort(res.train_indices.begin(), res.train_indices.end());
    std::sort(res.val_indices.begin(), res.val_indices.end());
    std::sort(res.test_indices.begin(), res.test_indices.end());

    auto build = [&](const std::vector<std::size_t>& idx, const char* name) {
        Dataset part = subset(data, idx);
        bool has_t = false, has_c = false;
        for (int ti : part.t) (ti == 1 ? has_t : has_c) = true;
        if (!has_t || !has_c) {
            throw std::invalid_argument(std::string("split: the ") + name +
                                        " split lost one treatment arm; use a larger n or "
                                        "another seed");
        }
        return part;
    };
    res.train = build(res.train_indices, "train");
    res.val = build(res.val_indices, "val");
    res.test = build(res.test_indices, "test");
    return res;
}

}  // namespace scorematch
