#include "scorematch/matching.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "scorematch/rng.hpp"

using namespace scorematch;

namespace {

Dataset duplicated_controls_dataset(Rng& rng, std::size_t n_treated, std::size_t d) {
    // Every treated unit has an exact covariate copy among the controls.
    Dataset data;
    data.x = Matrix(2 * n_treated, d);
    data.t.assign(2 * n_treated, 0);
    data.y.assign(2 * n_treated, 0.0);
    for (std::size_t i = 0; i < n_treated; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double v = rng.normal();
            data.x.at(i, j) = v;
            data.x.at(n_treated + i, j) = v;
        }
        data.t[i] = 1;
        data.y[i] = rng.normal() + 1.0;
        data.y[n_treated + i] = rng.normal();
    }
    return data;
}

}  // namespace

TEST_CASE("nearest neighbor matching picks the closest control") {
    // Treated at 0.9; controls at 0.0 and 1.0.
    Matrix scores(3, 1, {0.9, 0.0, 1.0});
    std::vector<int> t = {1, 0, 0};
    MatchWeights w = knn_match(scores, t, 1, true);
    REQUIRE(w.pairs.count(0) == 1);
    CHECK(w.pairs.at(0).size() == 1);
    CHECK(w.pairs.at(0)[0].first == 2);
    CHECK(w.pairs.at(0)[0].second == 1.0);
}

TEST_CASE("distance ties resolve to the lowest control index") {
    Matrix scores(3, 1, {0.5, 0.0, 1.0});
    std::vector<int> t = {1, 0, 0};
    MatchWeights w = knn_match(scores, t, 1, true);
    CHECK(w.pairs.at(0)[0].first == 1);

    Matrix same(4, 1, {3.0, 3.0, 3.0, 3.0});
    std::vector<int> t2 = {1, 0, 0, 0};
    MatchWeights w2 = knn_match(same, t2, 1, true);
    CHECK(w2.pairs.at(0)[0].first == 1);
}

TEST_CASE("k nearest controls share the weight equally") {
    Matrix scores(5, 1, {0.0, 0.1, -0.2, 3.0, 0.05});
    std::vector<int> t = {1, 0, 0, 0, 0};
    MatchWeights w = knn_match(scores, t, 2, true);
    REQUIRE(w.pairs.at(0).size() == 2);
    CHECK(w.pairs.at(0)[0].first == 4);  // |0.05| closest
    CHECK(w.pairs.at(0)[1].first == 1);  // |0.1| next
    CHECK(w.pairs.at(0)[0].second == 0.5);
    CHECK(w.pairs.at(0)[1].second == 0.5);
}

TEST_CASE("matching with replacement reuses controls, without removes them") {
    Matrix scores(4, 1, {0.0, 0.1, 0.5, 0.6});
    std::vector<int> t = {1, 1, 0, 0};
    MatchWeights with = knn_match(scores, t, 1, true);
    CHECK(with.pairs.at(0)[0].first == 2);
    CHECK(with.pairs.at(1)[0].first == 2);  // both treated grab control 2

    MatchWeights without = knn_match(scores, t, 1, false);
    CHECK(without.pairs.at(0)[0].first == 2);
    CHECK(without.pairs.at(1)[0].first == 3);  // control 2 already claimed
}

TEST_CASE("aggregated weights sum to the number of matched treated units") {
    Rng rng(15);
    Matrix scores(30, 2);
    std::vector<int> t(30);
    for (std::size_t i = 0; i < 30; ++i) {
        scores.at(i, 0) = rng.normal();
        scores.at(i, 1) = rng.normal();
        t[i] = i < 12 ? 1 : 0;
    }
    MatchWeights w = knn_match(scores, t, 3, true);
    double total = 0.0;
    for (const auto& [j, wj] : w.aggregated) total += wj;
    CHECK(total == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("matching rejects impossible requests") {
    Matrix scores(3, 1, {0.0, 1.0, 2.0});
    CHECK_THROWS(knn_match(scores, {1, 1, 0}, 2, true));   // only one control
    CHECK_THROWS(knn_match(scores, {1, 1, 0}, 1, false));  // two treated, one control
    CHECK_THROWS(knn_match(scores, {1, 0, 0}, 0, true));
    CHECK_THROWS(knn_match(scores, {1, 1, 1}, 1, true));   // no controls at all
}

TEST_CASE("random matching with one control sends everyone there") {
    MatchWeights w = random_match({0, 1, 2}, {7}, 99);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(w.pairs.at(i)[0].first == 7);
    }
    CHECK(w.aggregated.at(7) == doctest::Approx(3.0));
}

TEST_CASE("random matching is seeded and roughly uniform") {
    std::vector<std::size_t> treated(10000);
    for (std::size_t i = 0; i < treated.size(); ++i) treated[i] = i;
    MatchWeights a = random_match(treated, {10000, 10001}, 5);
    MatchWeights b = random_match(treated, {10000, 10001}, 5);
    CHECK(a.aggregated == b.aggregated);
    // Binomial(10000, 1/2): three sigma is 150.
    CHECK(std::abs(a.aggregated.at(10000) - 5000.0) < 150.0);
    MatchWeights c = random_match(treated, {10000, 10001}, 6);
    CHECK(c.aggregated.at(10000) != a.aggregated.at(10000));
}

TEST_CASE("imputed untreated outcomes average the matched controls") {
    std::map<std::size_t, std::vector<std::pair<std::size_t, double>>> pairs;
    pairs[0] = {{2, 1.0}, {3, 1.0}};
    pairs[1] = {{3, 3.0}};
    MatchWeights w = MatchWeights::from_pairs(pairs);
    std::vector<double> y = {10.0, 20.0, 4.0, 8.0};
    CHECK(estimate_y0(w, y, 0) == doctest::Approx(6.0));
    CHECK(estimate_y0(w, y, 1) == doctest::Approx(8.0));
    CHECK_THROWS(estimate_y0(w, y, 2));
}

TEST_CASE("effect estimate on a hand-built matching") {
    Dataset data;
    data.x = Matrix(4, 1, {0.0, 1.0, 0.0, 1.0});
    data.t = {1, 1, 0, 0};
    data.y = {5.0, 7.0, 2.0, 3.0};
    std::map<std::size_t, std::vector<std::pair<std::size_t, double>>> pairs;
    pairs[0] = {{2, 1.0}};
    pairs[1] = {{3, 1.0}};
    MatchWeights w = MatchWeights::from_pairs(pairs);
    // (5-2 + 7-3)/2 = 3.5
    CHECK(estimate_att(data, w) == doctest::Approx(3.5));
}

TEST_CASE("matching on duplicated controls recovers the exact effect") {
    Rng rng(77);
    Dataset data = duplicated_controls_dataset(rng, 25, 3);
    MatchWeights w = knn_match(data.x, data.t, 1, true);
    CHECK(sample_imbalance(data, w) < 1e-24);
    double expect = 0.0;
    for (std::size_t i = 0; i < 25; ++i) expect += (data.y[i] - data.y[25 + i]) / 25.0;
    CHECK(estimate_att(data, w) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("effect estimate is invariant to control storage order") {
    Rng rng(78);
    Dataset data = duplicated_controls_dataset(rng, 10, 2);
    // Perturb covariates slightly so all distances are unique.
    for (std::size_t i = 0; i < data.n(); ++i) {
        for (std::size_t j = 0; j < 2; ++j) data.x.at(i, j) += 1e-3 * rng.normal();
    }
    const double base = estimate_att(data, knn_match(data.x, data.t, 1, true));

    // Reverse the control block.
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < 10; ++i) order.push_back(i);
    for (std::size_t i = data.n(); i-- > 10;) order.push_back(i);
    Dataset shuffled = subset(data, order);
    const double permuted = estimate_att(shuffled, knn_match(shuffled.x, shuffled.t, 1, true));
    CHECK(base == doctest::Approx(permuted).epsilon(1e-12));
}

TEST_CASE("ground truth effect among the treated") {
    Dataset data;
    data.x = Matrix(3, 1, {0.0, 1.0, 2.0});
    data.t = {1, 0, 1};
    data.y = {0.0, 0.0, 0.0};
    data.mu0 = {1.0, 5.0, 2.0};
    data.mu1 = {3.0, 50.0, 6.0};
    // treated rows 0 and 2: ((3-1) + (6-2)) / 2 = 3
    CHECK(ground_truth_att(data) == doctest::Approx(3.0));
    CHECK_THROWS(ground_truth_att(Dataset{}));
}

TEST_CASE("discrete matching equalizes the score distribution") {
    DiscreteJoint joint;
    joint.support = Matrix(4, 1, {0.0, 1.0, 2.0, 3.0});
    joint.scores = {{0.0}, {0.0}, {1.0}, {1.0}};
    joint.p_treated = {0.05, 0.10, 0.20, 0.15};
    joint.p_control = {0.20, 0.10, 0.10, 0.10};
    DiscreteJoint matched = match_discrete(joint);

    CHECK(matched.treated_mass() == doctest::Approx(joint.treated_mass()).epsilon(1e-12));
    CHECK(matched.control_mass() == doctest::Approx(joint.control_mass()).epsilon(1e-12));
    CHECK(tv_discrete(matched, true) < 1e-12);
    // Treated side untouched.
    for (std::size_t i = 0; i < 4; ++i) CHECK(matched.p_treated[i] == joint.p_treated[i]);
    // Within level 0 the control covariate split stays 2:1.
    CHECK(matched.p_control[0] / matched.p_control[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("discrete matching on a balancing joint removes all covariate imbalance") {
    DiscreteJoint joint;
    joint.support = Matrix(4, 1, {0.0, 1.0, 2.0, 3.0});
    joint.scores = {{0.0}, {0.0}, {1.0}, {1.0}};
    // balancing by construction: p(t | x) depends only on the level
    joint.p_treated = {0.6 * 0.25 * 0.3, 0.6 * 0.75 * 0.3, 0.4 * 0.5 * 0.8, 0.4 * 0.5 * 0.8};
    joint.p_control = {0.6 * 0.25 * 0.7, 0.6 * 0.75 * 0.7, 0.4 * 0.5 * 0.2, 0.4 * 0.5 * 0.2};
    DiscreteJoint matched = match_discrete(joint);
    CHECK(tv_discrete(matched, false) < 1e-12);
    CHECK(tv_discrete(matched, true) < 1e-12);
    CHECK(conditional_independence_gap(matched).max_gap() < 1e-12);
}

TEST_CASE("discrete matching refuses unmatched treated levels") {
    DiscreteJoint joint;
    joint.support = Matrix(3, 1, {0.0, 1.0, 2.0});
    joint.scores = {{0.0}, {1.0}, {1.0}};
    joint.p_treated = {0.3, 0.2, 0.0};
    joint.p_control = {0.0, 0.3, 0.2};  // no control mass at level 0
    CHECK_THROWS_WITH_AS(match_discrete(joint), doctest::Contains("level (0)"),
                         std::invalid_argument);
}

TEST_CASE("an already matched joint passes through unchanged") {
    DiscreteJoint joint;
    joint.support = Matrix(2, 1, {0.0, 1.0});
    joint.scores = {{0.0}, {1.0}};
    joint.p_treated = {0.2, 0.3};
    joint.p_control = {0.2, 0.3};  // control score distribution already matches
    DiscreteJoint matched = match_discrete(joint);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(matched.p_control[i] == doctest::Approx(joint.p_control[i]).epsilon(1e-14));
    }
}
