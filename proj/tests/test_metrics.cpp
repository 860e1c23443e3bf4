#include "scorematch/metrics.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "scorematch/rng.hpp"

using namespace scorematch;

namespace {

Matrix random_points(Rng& rng, std::size_t n, std::size_t d) {
    Matrix m(n, d);
    for (double& v : m.data) v = rng.normal();
    return m;
}

// Joint where p(x, t) factors as p(level) * p(x | level) * p(t | level), so
// the attached score is balancing by construction.
DiscreteJoint balanced_joint() {
    DiscreteJoint joint;
    joint.support = Matrix(4, 1, {0.0, 1.0, 2.0, 3.0});
    joint.scores = {{0.0}, {0.0}, {1.0}, {1.0}};
    // level 0: mass 0.6 split 0.25/0.75 over points, p(T=1|level)=0.3
    // level 1: mass 0.4 split 0.5/0.5 over points, p(T=1|level)=0.8
    joint.p_treated = {0.6 * 0.25 * 0.3, 0.6 * 0.75 * 0.3, 0.4 * 0.5 * 0.8, 0.4 * 0.5 * 0.8};
    joint.p_control = {0.6 * 0.25 * 0.7, 0.6 * 0.75 * 0.7, 0.4 * 0.5 * 0.2, 0.4 * 0.5 * 0.2};
    return joint;
}

}  // namespace

TEST_CASE("linear mmd of hand-computed pairs") {
    EmpiricalPair same = EmpiricalPair::uniform(Matrix(2, 1, {1.0, 3.0}),
                                                Matrix(2, 1, {3.0, 1.0}));
    CHECK(linear_mmd(same) == doctest::Approx(0.0).epsilon(1e-15));

    EmpiricalPair shifted = EmpiricalPair::uniform(Matrix(2, 2, {1.0, 0.0, 3.0, 0.0}),
                                                   Matrix(2, 2, {1.0, 1.0, 3.0, 1.0}));
    CHECK(linear_mmd(shifted) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("linear mmd is invariant under common translation") {
    Rng rng(3);
    Matrix t = random_points(rng, 5, 3);
    Matrix c = random_points(rng, 7, 3);
    EmpiricalPair pair = EmpiricalPair::uniform(t, c);
    const double base = linear_mmd(pair);
    for (std::size_t i = 0; i < t.rows; ++i) {
        for (std::size_t k = 0; k < 3; ++k) t.at(i, k) += 10.0 + k;
    }
    for (std::size_t j = 0; j < c.rows; ++j) {
        for (std::size_t k = 0; k < 3; ++k) c.at(j, k) += 10.0 + k;
    }
    EmpiricalPair moved = EmpiricalPair::uniform(t, c);
    CHECK(linear_mmd(moved) == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("wasserstein distance of hand-computed cases") {
    EmpiricalPair single = EmpiricalPair::uniform(Matrix(1, 1, {0.0}), Matrix(1, 1, {1.0}));
    CHECK(wasserstein_exact(single) == doctest::Approx(1.0).epsilon(1e-12));

    EmpiricalPair same = EmpiricalPair::uniform(Matrix(2, 1, {0.0, 2.0}),
                                                Matrix(2, 1, {2.0, 0.0}));
    CHECK(wasserstein_exact(same) == doctest::Approx(0.0).epsilon(1e-12));

    // Both controls sit at 1, each treated point is one unit away.
    EmpiricalPair mid = EmpiricalPair::uniform(Matrix(2, 1, {0.0, 2.0}),
                                               Matrix(2, 1, {1.0, 1.0}));
    CHECK(wasserstein_exact(mid) == doctest::Approx(1.0).epsilon(1e-12));

    // Weighted case: treated mass 1 at 0, control splits 0.5 at 0 and 0.5 at 1.
    EmpiricalPair weighted;
    weighted.treated_points = Matrix(1, 1, {0.0});
    weighted.treated_weights = {1.0};
    weighted.control_points = Matrix(2, 1, {0.0, 1.0});
    weighted.control_weights = {0.5, 0.5};
    CHECK(wasserstein_exact(weighted) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("wasserstein matches the brute-force assignment oracle") {
    Rng rng(99);
    for (int trial = 0; trial < 120; ++trial) {
        const std::size_t n = 2 + rng.index(5);  // up to 6 per arm
        const std::size_t d = 1 + rng.index(3);
        EmpiricalPair pair = EmpiricalPair::uniform(random_points(rng, n, d),
                                                    random_points(rng, n, d));
        const double fast = wasserstein_exact(pair);
        const double slow = wasserstein_bruteforce(pair);
        CHECK(std::abs(fast - slow) < 1e-9);
    }
}

TEST_CASE("wasserstein is symmetric and satisfies the triangle inequality") {
    Rng rng(17);
    for (int trial = 0; trial < 25; ++trial) {
        Matrix a = random_points(rng, 4, 2);
        Matrix b = random_points(rng, 5, 2);
        Matrix c = random_points(rng, 3, 2);
        const double ab = wasserstein_exact(EmpiricalPair::uniform(a, b));
        const double ba = wasserstein_exact(EmpiricalPair::uniform(b, a));
        const double bc = wasserstein_exact(EmpiricalPair::uniform(b, c));
        const double ac = wasserstein_exact(EmpiricalPair::uniform(a, c));
        CHECK(ab == doctest::Approx(ba).epsilon(1e-9));
        CHECK(ac <= ab + bc + 1e-9);
    }
}

TEST_CASE("wasserstein rejects oversized problems") {
    EmpiricalPair pair = EmpiricalPair::uniform(Matrix(3, 1, {0.0, 1.0, 2.0}),
                                                Matrix(3, 1, {0.0, 1.0, 2.0}));
    CHECK_THROWS(wasserstein_exact(pair, 8));
}

TEST_CASE("brute-force oracle rejects unsupported inputs") {
    EmpiricalPair uneven = EmpiricalPair::uniform(Matrix(2, 1, {0.0, 1.0}), Matrix(1, 1, {0.0}));
    CHECK_THROWS(wasserstein_bruteforce(uneven));
    EmpiricalPair weighted;
    weighted.treated_points = Matrix(2, 1, {0.0, 1.0});
    weighted.treated_weights = {0.3, 0.7};
    weighted.control_points = Matrix(2, 1, {0.0, 1.0});
    weighted.control_weights = {0.5, 0.5};
    CHECK_THROWS(wasserstein_bruteforce(weighted));
}

TEST_CASE("discrete total variation over covariates and scores") {
    DiscreteJoint joint;
    joint.support = Matrix(2, 1, {0.0, 1.0});
    joint.scores = {{5.0}, {5.0}};  // score constant: no separation on scores
    joint.p_treated = {0.10, 0.40};
    joint.p_control = {0.25, 0.25};
    // Conditionals: treated (0.2, 0.8), control (0.5, 0.5) -> TV = 0.3.
    CHECK(tv_discrete(joint, false) == doctest::Approx(0.3).epsilon(1e-13));
    CHECK(tv_discrete(joint, true) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("identical conditionals have zero total variation") {
    DiscreteJoint joint;
    joint.support = Matrix(2, 1, {0.0, 1.0});
    joint.scores = {{0.0}, {1.0}};
    joint.p_treated = {0.2 * 0.3, 0.8 * 0.3};
    joint.p_control = {0.2 * 0.7, 0.8 * 0.7};
    CHECK(tv_discrete(joint, false) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(tv_discrete(joint, true) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("sample imbalance of hand-built datasets") {
    Dataset data;
    data.x = Matrix(4, 2, {1.0, 0.0,   // treated
                           1.0, 1.0,   // treated
                           1.0, 0.5,   // control
                           1.0, 0.5}); // control
    data.t = {1, 1, 0, 0};
    data.y = {0.0, 0.0, 0.0, 0.0};
    MatchWeights uniform = MatchWeights::uniform({2, 3});
    // treated mean (1, 0.5), weighted control mean (1, 0.5)
    CHECK(sample_imbalance(data, uniform) == doctest::Approx(0.0).epsilon(1e-15));

    Dataset shifted = data;
    shifted.x.at(2, 1) = 1.5;
    shifted.x.at(3, 1) = 1.5;
    // control mean (1, 1.5), difference (0, 1), squared norm 1
    CHECK(sample_imbalance(shifted, uniform) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("sample imbalance equals the squared linear mmd of the weighted pair") {
    Rng rng(31);
    Dataset data;
    const std::size_t n = 20;
    data.x = random_points(rng, n, 3);
    data.t.assign(n, 0);
    data.y.assign(n, 0.0);
    for (std::size_t i = 0; i < 8; ++i) data.t[i] = 1;

    std::map<std::size_t, std::vector<std::pair<std::size_t, double>>> pairs;
    for (std::size_t i = 0; i < 8; ++i) {
        pairs[i] = {{8 + rng.index(n - 8), 1.0}};
    }
    MatchWeights w = MatchWeights::from_pairs(pairs);

    double total = 0.0;
    for (const auto& [j, wj] : w.aggregated) total += wj;
    CHECK(total == doctest::Approx(8.0).epsilon(1e-12));

    Matrix treated(8, 3);
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t k = 0; k < 3; ++k) treated.at(i, k) = data.x.at(i, k);
    }
    Matrix controls(w.aggregated.size(), 3);
    std::vector<double> cw;
    std::size_t row = 0;
    for (const auto& [j, wj] : w.aggregated) {
        for (std::size_t k = 0; k < 3; ++k) controls.at(row, k) = data.x.at(j, k);
        cw.push_back(wj / total);
        ++row;
    }
    EmpiricalPair pair;
    pair.treated_points = treated;
    pair.treated_weights.assign(8, 1.0 / 8.0);
    pair.control_points = controls;
    pair.control_weights = cw;
    CHECK(sample_imbalance(data, w) ==
          doctest::Approx(linear_mmd(pair) * linear_mmd(pair)).epsilon(1e-10));
}

TEST_CASE("sample imbalance rejects degenerate weights") {
    Dataset data;
    data.x = Matrix(2, 1, {0.0, 1.0});
    data.t = {1, 0};
    data.y = {0.0, 0.0};
    MatchWeights empty;
    CHECK_THROWS(sample_imbalance(data, empty));
}

TEST_CASE("calibration error of hand-computed vectors") {
    CHECK(calibration_error({0.5, 0.5}, {0.5, 0.5}) == doctest::Approx(0.0));
    CHECK(calibration_error({0.2, 0.9}, {0.4, 0.5}) == doctest::Approx(0.3).epsilon(1e-13));
    CHECK_THROWS(calibration_error({0.5}, {0.5, 0.5}));
    CHECK_THROWS(calibration_error({}, {}));
}

TEST_CASE("calibration error of a constant guess against uniform truth") {
    // E|U - 0.5| = 0.25 for U uniform on [0, 1].
    Rng rng(8);
    std::vector<double> truth(20000), guess(20000, 0.5);
    for (double& v : truth) v = rng.uniform();
    CHECK(calibration_error(guess, truth) == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("conditional independence gap vanishes for a balancing score") {
    ConditionalGapReport report = conditional_independence_gap(balanced_joint());
    CHECK(report.max_gap() < 1e-12);
    for (int arm = 0; arm < 2; ++arm) {
        CHECK(report.expected_tv[arm] < 1e-12);
        CHECK(report.expected_mmd[arm] < 1e-12);
        CHECK(report.expected_wasserstein[arm] < 1e-12);
    }
}

TEST_CASE("conditional independence gap vanishes when the score separates every point") {
    DiscreteJoint joint;
    joint.support = Matrix(3, 1, {0.0, 1.0, 2.0});
    joint.scores = {{0.0}, {1.0}, {2.0}};  // injective score: within-level X is a point mass
    joint.p_treated = {0.1, 0.2, 0.1};
    joint.p_control = {0.3, 0.1, 0.2};
    ConditionalGapReport report = conditional_independence_gap(joint);
    CHECK(report.max_gap() < 1e-15);
}

TEST_CASE("conditional independence gap of a hand-solved non-balancing joint") {
    // Four equally likely covariate points, score = point index mod 2,
    // p(T=1|x) = (0.9, 0.5, 0.5, 0.5).
    DiscreteJoint joint;
    joint.support = Matrix(4, 1, {0.0, 1.0, 2.0, 3.0});
    joint.scores = {{0.0}, {1.0}, {0.0}, {1.0}};
    joint.p_treated = {0.25 * 0.9, 0.25 * 0.5, 0.25 * 0.5, 0.25 * 0.5};
    joint.p_control = {0.25 * 0.1, 0.25 * 0.5, 0.25 * 0.5, 0.25 * 0.5};

    // Level 0 holds points {0, 2}. Given (level 0, T=1) the split is
    // (0.9, 0.5)/1.4 = (9/14, 5/14); pooled within level 0 it is (1/2, 1/2).
    // TV = |9/14 - 7/14| = 1/7... halved twice: 0.5 * (2/14 + 2/14) = 1/7.
    ConditionalGapReport report = conditional_independence_gap(joint);
    bool found = false;
    for (const auto& cell : report.cells) {
        if (cell.arm == 1 && cell.defined && cell.score == std::vector<double>{0.0}) {
            found = true;
            CHECK(cell.tv == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
            // Same two-point geometry: mmd = wasserstein = |9/14 - 1/2| * 2.
            CHECK(cell.mmd == doctest::Approx(2.0 / 7.0).epsilon(1e-12));
            CHECK(cell.wasserstein == doctest::Approx(2.0 / 7.0).epsilon(1e-9));
        }
    }
    CHECK(found);
    CHECK(report.expected_tv[1] > 0.0);
}

TEST_CASE("empirical pair validation") {
    EmpiricalPair pair;
    pair.treated_points = Matrix(1, 1, {0.0});
    pair.treated_weights = {0.5};  // does not sum to 1
    pair.control_points = Matrix(1, 1, {0.0});
    pair.control_weights = {1.0};
    CHECK_THROWS(pair.validate());
    pair.treated_weights = {1.0};
    CHECK_NOTHROW(pair.validate());
}

TEST_CASE("discrete joint validation") {
    DiscreteJoint joint;
    joint.support = Matrix(2, 1, {0.0, 1.0});
    joint.scores = {{0.0}, {1.0}};
    joint.p_treated = {0.5, 0.5};
    joint.p_control = {0.0, 0.0};  // control arm empty
    CHECK_THROWS(joint.validate());
    joint.p_treated = {0.25, 0.25};
    joint.p_control = {0.25, 0.25};
    CHECK_NOTHROW(joint.validate());
}
