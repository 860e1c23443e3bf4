#include "scorematch/matching.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "scorematch/numeric_io.hpp"
#include "scorematch/rng.hpp"

namespace scorematch {

namespace {

double squared_distance(const double* a, const double* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double diff = a[k] - b[k];
        acc += diff * diff;
    }
    return acc;
}

}  // namespace

MatchWeights knn_match(const Matrix& scores, const std::vector<int>& t, std::size_t k,
                       bool with_replacement) {
    if (scores.rows != t.size()) {
        throw std::invalid_argument("knn_match: " + std::to_string(scores.rows) +
                                    " score rows vs " + std::to_string(t.size()) + " labels");
    }
    if (k == 0) throw std::invalid_argument("knn_match: k must be positive");
    if (!scores.all_finite()) throw std::invalid_argument("knn_match: non-finite scores");

    std::vector<std::size_t> treated, controls;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] == 1) {
            treated.push_back(i);
        } else if (t[i] == 0) {
            controls.push_back(i);
        } else {
            throw std::invalid_argument("knn_match: t not binary at row " + std::to_string(i));
        }
    }
    if (treated.empty()) throw std::invalid_argument("knn_match: no treated units");
    if (controls.size() < k) {
        throw std::invalid_argument("knn_match: " + std::to_string(controls.size()) +
                                    " controls cannot supply k=" + std::to_string(k));
    }
    if (!with_replacement && controls.size() < k * treated.size()) {
        throw std::invalid_argument("knn_match: matching without replacement needs " +
                                    std::to_string(k * treated.size()) + " controls, have " +
                                    std::to_string(controls.size()));
    }

    std::map<std::size_t, std::vector<std::pair<std::size_t, double>>> pairs;
    std::vector<char> taken(scores.rows, 0);
    const double share = 1.0 / static_cast<double>(k);
    for (std::size_t i : treated) {
        // Selection sort of the k nearest eligible controls; ties resolve to
        // the lowest index because strict inequality keeps the first seen.
        std::vector<std::pair<double, std::size_t>> best;
        for (std::size_t j : controls) {
            if (!with_replacement && taken[j]) continue;
            const double d2 = squared_distance(scores.row(i), scores.row(j), scores.cols);
            if (best.size() < k) {
                best.emplace_back(d2, j);
                std::push_heap(best.begin(), best.end());
            } else if (d2 < best.front().first) {
                std::pop_heap(best.begin(), best.end());
                best.back() = {d2, j};
                std::push_heap(best.begin(), best.end());
            }
        }
        std::sort(best.begin(), best.end());
        auto& matches = pairs[i];
        for (const auto& [d2, j] : best) {
            matches.emplace_back(j, share);
            if (!with_replacement) taken[j] = 1;
        }
    }
    return MatchWeights::from_pairs(std::move(pairs));
}

MatchWeights random_match(const std::vector<std::size_t>& treated_indices,
                          const std::vector<std::size_t>& control_indices, std::uint64_t seed) {
    if (treated_indices.empty() || control_indices.empty()) {
        throw std::invalid_argument("random_match: both index lists must be non-empty");
    }
    Rng rng(mix_seed(seed, 0x726d617463));
    std::map<std::size_t, std::vector<std::pair<std::size_t, double>>> pairs;
    for (std::size_t i : treated_indices) {
        pairs[i] = {{control_indices[rng.index(control_indices.size())], 1.0}};
    }
    return MatchWeights::from_pairs(std::move(pairs));
}

double estimate_y0(const MatchWeights& weights, const std::vector<double>& y,
                   std::size_t treated_index) {
    const auto it = weights.pairs.find(treated_index);
    if (it == weights.pairs.end()) {
        throw std::invalid_argument("estimate_y0: treated unit " + std::to_string(treated_index) +
                                    " is unmatched");
    }
    double num = 0.0, den = 0.0;
    for (const auto& [j, wij] : it->second) {
        if (j >= y.size()) {
            throw std::invalid_argument("estimate_y0: control index " + std::to_string(j) +
                                        " out of range");
        }
        num += wij * y[j];
        den += wij;
    }
    return num / den;
}

double estimate_att(const Dataset& data, const MatchWeights& weights) {
    if (weights.pairs.empty()) throw std::invalid_argument("estimate_att: no matched pairs");
    double acc = 0.0;
    for (const auto& [i, matches] : weights.pairs) {
        if (i >= data.n()) {
            throw std::invalid_argument("estimate_att: treated index " + std::to_string(i) +
                                        " out of range");
        }
        acc += data.y[i] - estimate_y0(weights, data.y, i);
    }
    return acc / static_cast<double>(weights.pairs.size());
}

double ground_truth_att(const Dataset& data) {
    if (!data.has_truth()) {
        throw std::invalid_argument("ground_truth_att: dataset lacks noiseless outcomes");
    }
    const auto treated = data.treated_indices();
    if (treated.empty()) throw std::invalid_argument("ground_truth_att: no treated units");
    double acc = 0.0;
    for (std::size_t i : treated) acc += data.mu1[i] - data.mu0[i];
    return acc / static_cast<double>(treated.size());
}

DiscreteJoint match_discrete(const DiscreteJoint& joint) {
    joint.validate();
    const double pt = joint.treated_mass();
    const double pc = joint.control_mass();

    // Mass per score level and arm.
    std::map<std::vector<double>, std::array<double, 2>> level_mass;
    for (std::size_t i = 0; i < joint.support.rows; ++i) {
        auto& m = level_mass[joint.scores[i]];
        m[0] += joint.p_control[i];
        m[1] += joint.p_treated[i];
    }
    for (const auto& [score, m] : level_mass) {
        if (m[1] > 0.0 && m[0] <= 0.0) {
            std::string s = "(";
            for (std::size_t k = 0; k < score.size(); ++k) {
                if (k) s += ", ";
                s += format_double(score[k]);
            }
            s += ")";
            throw std::invalid_argument(
                "match_discrete: treated mass at score level " + s +
                " has no control mass to match against");
        }
    }

    // Treated side unchanged. Control side: marginal treatment probability is
    // kept, the control score distribution is replaced by the treated one,
    // and covariates within a level keep their control conditional.
    DiscreteJoint matched = joint;
    for (std::size_t i = 0; i < joint.support.rows; ++i) {
        const auto& m = level_mass.at(joint.scores[i]);
        if (m[0] <= 0.0) {
            matched.p_control[i] = 0.0;
            continue;
        }
        const double score_given_treated = m[1] / pt;
        const double x_given_level_control = joint.p_control[i] / m[0];
        matched.p_control[i] = pc * score_given_treated * x_given_level_control;
    }
    matched.validate();
    return matched;
}

void save_match_weights_csv(const MatchWeights& weights, const std::string& pairs_path,
                            const std::string& aggregated_path) {
    std::ofstream pairs(pairs_path);
    if (!pairs) throw std::runtime_error("save_match_weights_csv: cannot open " + pairs_path);
    pairs << "treated_index,control_index,w_ij\n";
    for (const auto& [i, matches] : weights.pairs) {
        for (const auto& [j, wij] : matches) {
            pairs << i << "," << j << "," << format_double(wij) << "\n";
        }
    }
    std::ofstream agg(aggregated_path);
    if (!agg) throw std::runtime_error("save_match_weights_csv: cannot open " + aggregated_path);
    agg << "control_index,w_j\n";
    for (const auto& [j, wj] : weights.aggregated) {
        agg << j << "," << format_double(wj) << "\n";
    }
}

}  // namespace scorematch
