#pragma once

#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "scorematch/linalg.hpp"

namespace scorematch {

// Observational sample. e_true, mu0 and mu1 are optional columns: empty
// vectors mean "not available" (real data), full vectors mean the generating
// process exposed them (synthetic data).
struct Dataset {
    Matrix x;                    // n x d covariates
    std::vector<int> t;          // binary treatment indicator
    std::vector<double> y;       // observed outcome
    std::vector<double> e_true;  // true propensity, optional
    std::vector<double> mu0;     // noiseless untreated outcome, optional
    std::vector<double> mu1;     // noiseless treated outcome, optional

    std::size_t n() const { return x.rows; }
    std::size_t dim() const { return x.cols; }
    bool has_truth() const { return !mu0.empty() && !mu1.empty(); }

    std::vector<std::size_t> treated_indices() const;
    std::vector<std::size_t> control_indices() const;

    // Throws with a description of the first offending row or column.
    void validate() const;
};

Dataset subset(const Dataset& d, const std::vector<std::size_t>& indices);

// Matching result. `pairs` keeps the per-treated-unit weights over controls;
// `aggregated` folds them into one weight per control unit,
// w_j = sum_i w_ij / sum_j' w_ij', so sum_j w_j equals the number of matched
// treated units.
struct MatchWeights {
    std::map<std::size_t, std::vector<std::pair<std::size_t, double>>> pairs;
    std::map<std::size_t, double> aggregated;

    static MatchWeights from_pairs(
        std::map<std::size_t, std::vector<std::pair<std::size_t, double>>> pairs);

    // Uniform weight 1 on every listed control with no treated bookkeeping.
    // Stands in for "no matching" when measuring raw imbalance.
    static MatchWeights uniform(const std::vector<std::size_t>& control_indices);

    std::size_t n_matched_treated() const { return pairs.size(); }
};

}  // namespace scorematch
