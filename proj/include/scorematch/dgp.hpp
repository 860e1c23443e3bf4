#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "scorematch/dataset.hpp"
#include "scorematch/metrics.hpp"

#include "json.hpp"

namespace scorematch {

enum class PropensityKind { LogisticOnProjection, PolynomialOnProjection };
enum class OutcomeForm { Linear, Exponential };

struct PropensityForm {
    PropensityKind kind = PropensityKind::LogisticOnProjection;
    std::size_t degree = 3;  // PolynomialOnProjection only, >= 2

    static PropensityForm logistic() { return {PropensityKind::LogisticOnProjection, 0}; }
    static PropensityForm polynomial(std::size_t degree);
};

// Synthetic process: a low-dimensional Gaussian latent state embedded into
// the observed space by a random orthonormal-column map, treatment assigned
// through a link of a latent projection, outcomes driven by a correlated
// latent direction. True propensities and both conditional means ride along.
struct DgpConfig {
    std::size_t n = 1000;
    std::size_t d_observed = 20;
    std::size_t d_latent = 5;
    double treated_fraction_target = 0.35;
    PropensityForm propensity_form;
    OutcomeForm outcome_form = OutcomeForm::Linear;
    double treatment_effect_base = 2.0;
    double effect_heterogeneity = 0.0;
    double noise_sd = 1.0;
    double overlap_clamp = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static DgpConfig from_json(const nlohmann::json& j);
};

Dataset generate(const DgpConfig& cfg);

enum class ScenarioKind { Balancing, NonBalancing };

// Finite joint over (X, T) with a discrete score attached to every support
// point. Balancing draws P(T=1 | x) constant within each score level;
// NonBalancing perturbs it within a level by `perturbation` (0 reproduces the
// Balancing output of the same seed). Probabilities are small rationals and
// strictly positive.
DiscreteJoint discrete_scenario(ScenarioKind kind, std::size_t support_size,
                                std::size_t score_levels, std::uint64_t seed,
                                double perturbation = 0.25);

// Header x0..x{D-1},t,y with optional e,mu0,mu1 columns. With standardize
// set, continuous covariate columns are centered and scaled (sd floored at
// 1e-12, so constant columns map to zero); {0,1}-valued columns pass through.
Dataset load_csv(const std::string& path, bool standardize = false);
void save_csv(const Dataset& data, const std::string& path);

struct SplitSpec {
    std::array<double, 3> ratios{0.6, 0.2, 0.2};  // train, val, test
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static SplitSpec from_json(const nlohmann::json& j);
};

struct SplitResult {
    Dataset train;
    Dataset val;
    Dataset test;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;
    std::vector<std::size_t> test_indices;
};

// Seeded uniform shuffle followed by a contiguous cut; indices are reported
// sorted. Splits that end up empty or single-armed are rejected.
SplitResult split(const Dataset& data, const SplitSpec& spec);

}  // namespace scorematch
