#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scorematch/linalg.hpp"
#include "scorematch/nn.hpp"

namespace scorematch {

enum class ScoreKind { raw_x, pca, logreg_ps, nn_layer, nn_ps, random_noise };

std::string score_kind_name(ScoreKind kind);

// Exact affine representation score(x) = W x + c of a provider, when the
// provider is affine.
struct LinearMapMeta {
    Matrix weights;
    std::vector<double> bias;
};

// A fitted (or fixed) map from covariates to a lower-dimensional score used
// for matching.
class ScoreProvider {
public:
    ScoreKind kind() const { return kind_; }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t score_dim() const { return score_dim_; }

    // True when a PCA fit had to shrink the requested dimension to the
    // numerical rank of the data.
    bool rank_truncated() const { return rank_truncated_; }

    // Scores for every row of x, as an n x score_dim matrix.
    Matrix score(const Matrix& x) const;

    // The exact (W, c) with score(x) = W x + c for affine providers
    // (raw covariates, PCA, first network layer); empty otherwise.
    std::optional<LinearMapMeta> linear_map() const;

    const Mlp& model() const;

    std::string to_json() const;
    static ScoreProvider from_json(const std::string& text);
    void save(const std::string& path) const;
    static ScoreProvider load(const std::string& path);

    friend ScoreProvider make_raw_provider(std::size_t dim);
    friend ScoreProvider fit_pca(const Matrix& x, std::size_t k);
    friend ScoreProvider fit_logreg(const Matrix& x, const std::vector<int>& t,
                                    const TrainConfig& cfg);
    friend ScoreProvider make_nn_layer_provider(const Mlp& model, std::size_t layer_index);
    friend ScoreProvider make_nn_ps_provider(const Mlp& model);
    friend ScoreProvider make_random_provider(std::uint64_t seed);

private:
    ScoreProvider() = default;

    ScoreKind kind_ = ScoreKind::raw_x;
    std::size_t input_dim_ = 0;
    std::size_t score_dim_ = 0;
    bool rank_truncated_ = false;

    // pca payload
    std::vector<double> mean_;
    Matrix components_;  // k x input_dim, orthonormal rows

    // model payload (logreg_ps, nn_layer, nn_ps)
    Mlp model_;
    std::size_t layer_index_ = 0;

    // random payload
    std::uint64_t noise_seed_ = 0;
};

// Identity provider: the score is the covariate vector itself.
ScoreProvider make_raw_provider(std::size_t dim);

// Principal components of the column-centered x. Components are the top-k
// right singular vectors; requesting k above the numerical rank shrinks k
// and sets the rank_truncated flag.
ScoreProvider fit_pca(const Matrix& x, std::size_t k);

// Logistic regression propensity score, fit from all-zero parameters with
// the same SGD loop as the network. The score is the estimated propensity.
ScoreProvider fit_logreg(const Matrix& x, const std::vector<int>& t, const TrainConfig& cfg);

// Pre-activation of the given layer (1-based) of a trained network.
ScoreProvider make_nn_layer_provider(const Mlp& model, std::size_t layer_index);

// Network output: the estimated propensity.
ScoreProvider make_nn_ps_provider(const Mlp& model);

// Seeded standard-normal noise, one score per row. Carries no covariate
// information; a floor for comparisons.
ScoreProvider make_random_provider(std::uint64_t seed);

}  // namespace scorematch
