#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "scorematch/dataset.hpp"
#include "scorematch/linalg.hpp"

namespace scorematch {

// Weighted point clouds for the two treatment arms. Weights are non-negative
// and sum to 1 within 1e-9 on each side; zero-weight points are allowed.
struct EmpiricalPair {
    Matrix treated_points;  // nt x d
    Matrix control_points;  // nc x d
    std::vector<double> treated_weights;
    std::vector<double> control_weights;

    static EmpiricalPair uniform(Matrix treated, Matrix control);
    void validate() const;
};

// Finite joint distribution over (X, T). Row i of `support` is a covariate
// level, p_treated[i] = p(x_i, T=1), p_control[i] = p(x_i, T=0), and
// scores[i] is the score value attached to x_i. Probabilities sum to 1 and
// both arms carry positive mass.
struct DiscreteJoint {
    Matrix support;
    std::vector<double> p_treated;
    std::vector<double> p_control;
    std::vector<std::vector<double>> scores;

    double treated_mass() const;
    double control_mass() const;
    void validate() const;
};

// L2 distance between the weighted arm means (linear-kernel MMD).
double linear_mmd(const EmpiricalPair& pair);

// Exact 1-Wasserstein distance with Euclidean ground cost, solved as a
// min-cost flow by successive shortest paths with Johnson potentials. The
// solution is certified optimal through complementary slackness within 1e-9;
// a violated certificate throws. Problems with more than max_cost_entries
// treated*control pairs are rejected up front.
double wasserstein_exact(const EmpiricalPair& pair, std::size_t max_cost_entries = 4000000);

// Independent oracle: minimum over all assignments, for uniformly weighted
// pairs with equal sizes up to 7 points per arm.
double wasserstein_bruteforce(const EmpiricalPair& pair);

// Total variation between the two arm-conditional distributions, either over
// covariate levels or (on_score = true) over score levels after grouping
// support points whose scores are identical.
double tv_discrete(const DiscreteJoint& joint, bool on_score);

// Squared L2 distance between the treated covariate mean and the weighted
// control covariate mean induced by the matching weights.
double sample_imbalance(const Dataset& data, const MatchWeights& weights);

// Mean absolute error between estimated and true propensities.
double calibration_error(const std::vector<double>& estimated, const std::vector<double>& truth);

// One cell per (score level, arm): how far the covariate distribution inside
// the level and arm sits from the pooled within-level distribution. A cell is
// undefined when the arm has no mass at that level.
struct ConditionalGapCell {
    std::vector<double> score;
    int arm = 0;
    bool defined = false;
    double arm_mass = 0.0;  // p(score level | T = arm)
    double tv = 0.0;
    double mmd = 0.0;
    double wasserstein = 0.0;
};

struct ConditionalGapReport {
    std::vector<ConditionalGapCell> cells;
    // Expectations of the cell discrepancies over score levels, conditional
    // on the arm. Index 0 = control, 1 = treated. All zero exactly when the
    // score is balancing.
    std::array<double, 2> expected_tv{};
    std::array<double, 2> expected_mmd{};
    std::array<double, 2> expected_wasserstein{};

    double max_gap() const;
};

ConditionalGapReport conditional_independence_gap(const DiscreteJoint& joint);

}  // namespace scorematch
