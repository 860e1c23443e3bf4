#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "scorematch/linalg.hpp"
#include "scorematch/metrics.hpp"

namespace scorematch {

// Finite joint whose attached score is an exact linear map b(x) = Wx: support
// points sit at W^+ beta plus null-space offsets whose mixture is shared
// across levels, and the stored score of a point is its exact level vector.
// Balancing keeps p(T=1 | x) constant per level; the non-balancing variant
// varies it within a level, which the error terms of the corrected bounds
// then have to absorb.
struct LinearScenario {
    DiscreteJoint joint;
    Matrix w;
    bool balancing = false;
};

LinearScenario make_linear_scenario(std::uint64_t seed, bool balancing);

// One support with two score assignments: f1 groups covariate points into
// levels, and the propensity e = f2(f1(x)) coarsens those levels further.
// Treatment is assigned through e, so both scores are balancing.
struct LayeredScenario {
    DiscreteJoint first_score;     // scores = f1(x)
    DiscreteJoint composed_score;  // scores = f2(f1(x)) = e(x)
};

LayeredScenario make_layered_scenario(std::uint64_t seed);

// Arm-conditional weighted point clouds of a finite joint, over covariates
// or over scores.
EmpiricalPair joint_covariate_pair(const DiscreteJoint& joint);
EmpiricalPair joint_score_pair(const DiscreteJoint& joint);

struct OracleResult {
    std::string suite;
    std::size_t trials = 0;
    std::size_t failures = 0;
    double tolerance = 0.0;
    // Largest violation seen; negative values mean every trial kept a margin.
    double worst_deviation = 0.0;
    std::uint64_t worst_seed = 0;
    double elapsed_seconds = 0.0;

    bool passed() const { return failures == 0; }
    std::string summary_line() const;
};

// Equality of covariate-TV and score-TV on balancing scenarios (1e-12).
OracleResult check_tv_equality(std::size_t trials, std::uint64_t seed);
// Exact-balancing linear scenarios: measured covariate imbalance inside
// [score/sigma_max, score/sigma_min] for linear MMD and Wasserstein (1e-9).
OracleResult check_bound_sandwich(std::size_t trials, std::uint64_t seed);
// Arbitrary linear scores on arbitrary weighted pairs: the lower bound never
// exceeds the measured covariate imbalance (no slack).
OracleResult check_lower_bound_universal(std::size_t trials, std::uint64_t seed);
// Non-balancing scenarios: corrected upper bounds for TV, linear MMD, and
// Wasserstein hold with exactly enumerated error terms (1e-9).
OracleResult check_corrected_bounds(std::size_t trials, std::uint64_t seed);
// Population matching on balancing scenarios leaves a zero conditional gap
// and zero covariate TV (1e-12).
OracleResult check_matching_preserves_balance(std::size_t trials, std::uint64_t seed);
// Composed propensities e = f2(f1(x)): both intermediate scores balance
// (1e-12).
OracleResult check_layered_scores(std::size_t trials, std::uint64_t seed);
// Min-cost-flow Wasserstein against the permutation brute force (1e-9).
OracleResult check_ot_bruteforce(std::size_t trials, std::uint64_t seed);
// Backpropagation against central finite differences (relative 1e-4).
OracleResult check_gradient(std::size_t trials, std::uint64_t seed);
// SVD ordering, Moore-Penrose identities, and operator-norm compatibility on
// condition-controlled random matrices (1e-9).
OracleResult check_linalg_identities(std::size_t trials, std::uint64_t seed);

// Dispatch by suite name; unknown names are rejected.
OracleResult run_oracle_suite(const std::string& name, std::size_t trials, std::uint64_t seed);
std::vector<std::string> oracle_suite_names();

}  // namespace scorematch
