#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "scorematch/dataset.hpp"
#include "scorematch/linalg.hpp"
#include "scorematch/metrics.hpp"

namespace scorematch {

// k-nearest-neighbor matching on score rows (Euclidean distance). Ties go to
// the lowest control index. With replacement, every treated unit picks the
// same k nearest controls independently; without replacement, treated units
// are processed in index order and each claimed control leaves the pool.
// Matched controls of one treated unit share weight 1/k.
MatchWeights knn_match(const Matrix& scores, const std::vector<int>& t, std::size_t k,
                       bool with_replacement);

// Each treated unit draws one control uniformly, seeded: the floor every
// informed matching should beat.
MatchWeights random_match(const std::vector<std::size_t>& treated_indices,
                          const std::vector<std::size_t>& control_indices, std::uint64_t seed);

// Imputed untreated outcome for one treated unit: the weight-averaged
// outcome of its matched controls.
double estimate_y0(const MatchWeights& weights, const std::vector<double>& y,
                   std::size_t treated_index);

// Average of y_i - y0_hat(i) over the matched treated units.
double estimate_att(const Dataset& data, const MatchWeights& weights);

// Average of mu1 - mu0 over treated units; needs the noiseless outcomes.
double ground_truth_att(const Dataset& data);

// Population 1:1 matching of a finite joint on its score: the treated side
// is kept as is, and the control side is reweighted so that the score
// distribution among controls equals the one among treated while each
// within-level control covariate distribution is preserved. Fails when some
// treated score level has no control mass to draw from.
DiscreteJoint match_discrete(const DiscreteJoint& joint);

// pairs_path: treated_index,control_index,w_ij rows.
// aggregated_path: control_index,w_j rows.
void save_match_weights_csv(const MatchWeights& weights, const std::string& pairs_path,
                            const std::string& aggregated_path);

}  // namespace scorematch
