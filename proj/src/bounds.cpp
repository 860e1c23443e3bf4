#include "scorematch/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "scorematch/metrics.hpp"

namespace scorematch {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

nlohmann::json finite_or_inf(double v) {
    if (std::isinf(v)) return nlohmann::json("inf");
    return nlohmann::json(v);
}

}  // namespace

std::string bound_metric_name(BoundMetric metric) {
    switch (metric) {
        case BoundMetric::Wass: return "wass";
        case BoundMetric::LinearMmd: return "linear_mmd";
    }
    throw std::logic_error("bound_metric_name: unknown metric");
}

BoundMetric bound_metric_from_name(const std::string& name) {
    if (name == "wass") return BoundMetric::Wass;
    if (name == "linear_mmd") return BoundMetric::LinearMmd;
    throw std::invalid_argument("unknown bound metric '" + name +
                                "' (expected wass or linear_mmd)");
}

void LipschitzConstants::validate() const {
    if (!std::isfinite(m) || m < 0.0) {
        throw std::invalid_argument("LipschitzConstants: m must be finite and >= 0");
    }
    if (!std::isfinite(M) || M <= 0.0) {
        throw std::invalid_argument("LipschitzConstants: M must be finite and > 0");
    }
    if (m > M) {
        throw std::invalid_argument("LipschitzConstants: m must not exceed M");
    }
    if (source == LipschitzSource::BoundedDomain &&
        (!std::isfinite(domain_bound) || domain_bound < 0.0)) {
        throw std::invalid_argument("LipschitzConstants: domain bound must be finite and >= 0");
    }
}

LipschitzConstants activation_lipschitz(const ActivationKind& kind,
                                        std::optional<double> domain_bound) {
    LipschitzConstants c;
    switch (kind.kind) {
        case Activation::identity:
            c.m = 1.0;
            c.M = 1.0;
            break;
        case Activation::leaky_relu:
            // Derivative is `slope` on the left branch and 1 on the right,
            // so the global constants are exactly (slope, 1).
            c.m = kind.slope;
            c.M = 1.0;
            break;
        case Activation::sigmoid:
            c.M = 0.25;  // sigma'(0) = 1/4 is the global maximum
            if (domain_bound.has_value()) {
                const double b = *domain_bound;
                if (!std::isfinite(b) || b < 0.0) {
                    throw std::invalid_argument(
                        "activation_lipschitz: sigmoid domain bound must be finite and >= 0");
                }
                // sigma' is even and decreasing in |z|, so the minimum over
                // |z| <= B sits at the boundary.
                const double s = sigmoid_value(b);
                c.m = s * (1.0 - s);
                c.source = LipschitzSource::BoundedDomain;
                c.domain_bound = b;
            } else {
                c.m = 0.0;  // sigma'(z) -> 0 in the tails
            }
            break;
    }
    c.validate();
    return c;
}

nlohmann::json BoundReport::to_json() const {
    nlohmann::json j;
    j["metric"] = bound_metric_name(metric);
    j["score_imbalance"] = score_imbalance;
    j["lower"] = lower;
    j["upper"] = finite_or_inf(upper);
    j["alpha"] = alpha;
    j["beta"] = finite_or_inf(beta);
    j["layers"] = nlohmann::json::array();
    for (const LayerConstants& lc : layers) {
        nlohmann::json layer;
        layer["norm_w"] = lc.norm_w;
        layer["norm_w_pinv"] = lc.norm_w_pinv;
        layer["m"] = lc.lip.m;
        layer["M"] = lc.lip.M;
        layer["source"] =
            lc.lip.source == LipschitzSource::ExactGlobal ? "exact_global" : "bounded_domain";
        if (lc.lip.source == LipschitzSource::BoundedDomain) {
            layer["domain_bound"] = lc.lip.domain_bound;
        }
        j["layers"].push_back(std::move(layer));
    }
    if (error_terms.has_value()) {
        j["error_terms"] = {{"e1", error_terms->first}, {"e0", error_terms->second}};
    } else {
        j["error_terms"] = nullptr;
    }
    return j;
}

BoundReport multilayer_bounds(const std::vector<std::pair<Matrix, LipschitzConstants>>& layers,
                              double score_imbalance, BoundMetric metric) {
    if (layers.empty()) {
        throw std::invalid_argument("multilayer_bounds: layer list must not be empty");
    }
    if (!std::isfinite(score_imbalance) || score_imbalance < 0.0) {
        throw std::invalid_argument("multilayer_bounds: score imbalance must be finite and >= 0");
    }

    BoundReport report;
    report.metric = metric;
    report.score_imbalance = score_imbalance;

    double prod_norm = 1.0;
    double prod_norm_pinv = 1.0;
    double prod_m = 1.0;
    double prod_big_m = 1.0;
    bool vacuous_upper = false;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Matrix& w = layers[l].first;
        const LipschitzConstants& lip = layers[l].second;
        lip.validate();
        if (l > 0 && w.cols != layers[l - 1].first.rows) {
            throw std::invalid_argument("multilayer_bounds: layer " + std::to_string(l + 1) +
                                        " input width does not match the previous output width");
        }
        LayerConstants lc;
        lc.norm_w = operator_norm(w);
        if (lc.norm_w == 0.0) {
            throw std::invalid_argument("multilayer_bounds: layer " + std::to_string(l + 1) +
                                        " has a zero weight matrix");
        }
        lc.norm_w_pinv = 1.0 / min_nonzero_singular_value(w);
        lc.lip = lip;
        prod_norm *= lc.norm_w;
        prod_norm_pinv *= lc.norm_w_pinv;
        prod_big_m *= lip.M;
        if (lip.m == 0.0) {
            vacuous_upper = true;
        } else {
            prod_m *= lip.m;
        }
        report.layers.push_back(lc);
    }

    report.alpha = 1.0 / (prod_norm * prod_big_m);
    report.beta = vacuous_upper ? kInf : prod_norm_pinv / prod_m;
    report.lower = report.alpha * score_imbalance;
    report.upper = vacuous_upper ? kInf : report.beta * score_imbalance;
    return report;
}

BoundReport linear_bounds(const Matrix& w, double score_imbalance, BoundMetric metric) {
    return multilayer_bounds({{w, LipschitzConstants{}}}, score_imbalance, metric);
}

BoundReport corrected_bounds(const BoundReport& report, std::pair<double, double> error_terms) {
    const double e1 = error_terms.first;
    const double e0 = error_terms.second;
    if (!std::isfinite(e1) || e1 < 0.0 || !std::isfinite(e0) || e0 < 0.0) {
        throw std::invalid_argument("corrected_bounds: error terms must be finite and >= 0");
    }
    BoundReport out = report;
    out.upper = report.upper + e1 + e0;  // lower bound holds without correction
    out.error_terms = {e1, e0};
    return out;
}

namespace {

// Projection of each score onto the first principal direction of the pooled
// scores; one-dimensional scores pass through unchanged.
std::vector<double> principal_projection(const BinnedErrorInput& input, std::size_t dim) {
    const std::size_t n1 = input.treated_scores.size();
    const std::size_t n0 = input.control_scores.size();
    const std::size_t n = n1 + n0;
    auto score_at = [&](std::size_t i) -> const std::vector<double>& {
        return i < n1 ? input.treated_scores[i] : input.control_scores[i - n1];
    };

    std::vector<double> proj(n);
    if (dim == 1) {
        for (std::size_t i = 0; i < n; ++i) proj[i] = score_at(i)[0];
        return proj;
    }

    std::vector<double> mean(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double>& s = score_at(i);
        for (std::size_t k = 0; k < dim; ++k) mean[k] += s[k];
    }
    for (double& v : mean) v /= static_cast<double>(n);

    Matrix cov(dim, dim);
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double>& s = score_at(i);
        for (std::size_t a = 0; a < dim; ++a) {
            const double da = s[a] - mean[a];
            for (std::size_t b = a; b < dim; ++b) {
                cov.at(a, b) += da * (s[b] - mean[b]);
            }
        }
    }
    for (std::size_t a = 0; a < dim; ++a) {
        for (std::size_t b = 0; b < a; ++b) cov.at(a, b) = cov.at(b, a);
    }

    const SvdResult dec = svd(cov);
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double>& s = score_at(i);
        double dot = 0.0;
        for (std::size_t k = 0; k < dim; ++k) dot += (s[k] - mean[k]) * dec.v_t.at(0, k);
        proj[i] = dot;
    }
    return proj;
}

}  // namespace

BinnedErrorEstimate binned_error_estimate(const BinnedErrorInput& input, std::size_t n_bins,
                                          BoundMetric metric) {
    if (n_bins == 0) {
        throw std::invalid_argument("binned_error_estimate: n_bins must be >= 1");
    }
    if (metric != BoundMetric::LinearMmd) {
        throw std::invalid_argument("binned_error_estimate: only the linear_mmd metric is supported");
    }
    const std::size_t n1 = input.treated_scores.size();
    const std::size_t n0 = input.control_scores.size();
    if (n1 == 0 || n0 == 0) {
        throw std::invalid_argument("binned_error_estimate: both arms need samples");
    }
    if (input.treated_covariates.size() != n1 || input.control_covariates.size() != n0) {
        throw std::invalid_argument("binned_error_estimate: scores and covariates disagree in length");
    }
    const std::size_t score_dim = input.treated_scores.front().size();
    const std::size_t cov_dim = input.treated_covariates.front().size();
    if (score_dim == 0 || cov_dim == 0) {
        throw std::invalid_argument("binned_error_estimate: empty score or covariate vectors");
    }
    auto check = [&](const std::vector<std::vector<double>>& rows, std::size_t want,
                     const char* what) {
        for (const std::vector<double>& r : rows) {
            if (r.size() != want) {
                throw std::invalid_argument(std::string("binned_error_estimate: ragged ") + what);
            }
            for (double v : r) {
                if (!std::isfinite(v)) {
                    throw std::invalid_argument(std::string("binned_error_estimate: non-finite ") +
                                                what);
                }
            }
        }
    };
    check(input.treated_scores, score_dim, "scores");
    check(input.control_scores, score_dim, "scores");
    check(input.treated_covariates, cov_dim, "covariates");
    check(input.control_covariates, cov_dim, "covariates");

    const std::size_t n = n1 + n0;
    const std::vector<double> proj = principal_projection(input, score_dim);

    // Equal-mass edges at the pooled quantiles; midpoints keep the cut from
    // landing on a sample value when adjacent order statistics differ.
    std::vector<double> sorted = proj;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> edges;
    for (std::size_t k = 1; k < n_bins; ++k) {
        std::size_t pos = (k * n) / n_bins;
        pos = std::clamp<std::size_t>(pos, 1, n - 1);
        edges.push_back(0.5 * (sorted[pos - 1] + sorted[pos]));
    }

    auto bin_of = [&](double value) -> std::size_t {
        return static_cast<std::size_t>(
            std::upper_bound(edges.begin(), edges.end(), value) - edges.begin());
    };

    std::vector<std::vector<std::size_t>> treated_in(n_bins), control_in(n_bins);
    for (std::size_t i = 0; i < n1; ++i) treated_in[bin_of(proj[i])].push_back(i);
    for (std::size_t i = 0; i < n0; ++i) control_in[bin_of(proj[n1 + i])].push_back(i);

    BinnedErrorEstimate est;
    est.n_bins = n_bins;

    auto arm_points = [&](const std::vector<std::size_t>& idx, bool treated) {
        Matrix pts(idx.size(), cov_dim);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const std::vector<double>& src =
                treated ? input.treated_covariates[idx[r]] : input.control_covariates[idx[r]];
            std::copy(src.begin(), src.end(), pts.row(r));
        }
        return pts;
    };

    for (std::size_t b = 0; b < n_bins; ++b) {
        const std::size_t m1 = treated_in[b].size();
        const std::size_t m0 = control_in[b].size();
        if (m1 == 0) est.empty_treated_bins.push_back(b);
        if (m0 == 0) est.empty_control_bins.push_back(b);
        if (m1 + m0 == 0) continue;

        Matrix pooled(m1 + m0, cov_dim);
        {
            const Matrix t_pts = arm_points(treated_in[b], true);
            const Matrix c_pts = arm_points(control_in[b], false);
            std::copy(t_pts.data.begin(), t_pts.data.end(), pooled.data.begin());
            std::copy(c_pts.data.begin(), c_pts.data.end(),
                      pooled.data.begin() + static_cast<std::ptrdiff_t>(t_pts.data.size()));
            if (m1 > 0) {
                const double d1 = linear_mmd(EmpiricalPair::uniform(t_pts, pooled));
                est.e1 += (static_cast<double>(m1) / static_cast<double>(n1)) * d1;
            }
            if (m0 > 0) {
                const double d0 = linear_mmd(EmpiricalPair::uniform(c_pts, pooled));
                est.e0 += (static_cast<double>(m0) / static_cast<double>(n0)) * d0;
            }
        }
    }
    return est;
}

}  // namespace scorematch
