#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scorematch/linalg.hpp"
#include "scorematch/nn.hpp"

#include "json.hpp"

namespace scorematch {

enum class BoundMetric { Wass, LinearMmd };

std::string bound_metric_name(BoundMetric metric);
BoundMetric bound_metric_from_name(const std::string& name);

enum class LipschitzSource { ExactGlobal, BoundedDomain };

// Bi-Lipschitz constants of a coordinate-wise activation:
// m * |a - b| <= |h(a) - h(b)| <= M * |a - b| on the relevant domain.
struct LipschitzConstants {
    double m = 1.0;
    double M = 1.0;
    LipschitzSource source = LipschitzSource::ExactGlobal;
    double domain_bound = 0.0;  // |pre-activation| <= domain_bound when BoundedDomain

    void validate() const;
};

// Identity -> (1, 1); leaky ReLU(slope) -> (slope, 1); sigmoid -> (0, 1/4)
// globally, or (sigma'(B), 1/4) when a domain bound B on |pre-activation|
// is supplied.
LipschitzConstants activation_lipschitz(const ActivationKind& kind,
                                        std::optional<double> domain_bound = std::nullopt);

struct LayerConstants {
    double norm_w = 0.0;       // largest singular value of W
    double norm_w_pinv = 0.0;  // largest singular value of W's pseudo-inverse
    LipschitzConstants lip;
};

// Sandwich on the covariate imbalance implied by an imbalance measured in
// score space: alpha * score_imbalance <= true imbalance <= beta *
// score_imbalance (+ error terms when the score is not exactly balancing).
struct BoundReport {
    BoundMetric metric = BoundMetric::LinearMmd;
    double score_imbalance = 0.0;
    double lower = 0.0;
    double upper = 0.0;  // +inf when some layer has m = 0
    double alpha = 0.0;
    double beta = 0.0;   // +inf when some layer has m = 0
    std::vector<LayerConstants> layers;
    std::optional<std::pair<double, double>> error_terms;  // (e1, e0)

    nlohmann::json to_json() const;
};

// Single linear map b(x) = Wx: lower = imbalance / sigma_max(W),
// upper = imbalance / sigma_min_nonzero(W). W = 0 is rejected.
BoundReport linear_bounds(const Matrix& w, double score_imbalance, BoundMetric metric);

// Stack b(x) = W_L h(... h(W_1 x)): alpha = 1 / (prod |||W_l||| * prod M_l),
// beta = prod |||W_l^+||| / prod m_l. Any m_l = 0 makes the upper bound +inf.
BoundReport multilayer_bounds(const std::vector<std::pair<Matrix, LipschitzConstants>>& layers,
                              double score_imbalance, BoundMetric metric);

// Adds the non-balancing correction e1 + e0 to the upper bound; the lower
// bound needs no correction.
BoundReport corrected_bounds(const BoundReport& report, std::pair<double, double> error_terms);

// Samples carrying both their score and their covariate vector, used to
// estimate the correction terms from data.
struct BinnedErrorInput {
    std::vector<std::vector<double>> treated_scores;
    std::vector<std::vector<double>> control_scores;
    std::vector<std::vector<double>> treated_covariates;
    std::vector<std::vector<double>> control_covariates;
};

struct BinnedErrorEstimate {
    double e1 = 0.0;
    double e0 = 0.0;
    std::size_t n_bins = 0;
    // Bins where an arm had no samples; their weight in that arm's average is
    // zero, so the remaining bins carry the mass. Diagnostic only.
    std::vector<std::size_t> empty_treated_bins;
    std::vector<std::size_t> empty_control_bins;
};

// Equal-mass quantile bins over the score (multi-dimensional scores are
// projected onto their first principal direction). Within each bin the
// arm-conditional covariates are compared against the pooled covariates and
// the per-bin discrepancies are averaged with the arm's bin masses.
BinnedErrorEstimate binned_error_estimate(const BinnedErrorInput& input, std::size_t n_bins = 10,
                                          BoundMetric metric = BoundMetric::LinearMmd);

}  // namespace scorematch
