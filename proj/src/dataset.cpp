#include "scorematch/dataset.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace scorematch {

std::vector<std::size_t> Dataset::treated_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] == 1) idx.push_back(i);
    }
    return idx;
}

std::vector<std::size_t> Dataset::control_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] == 0) idx.push_back(i);
    }
    return idx;
}

void Dataset::validate() const {
    const std::size_t rows = n();
    if (rows == 0) throw std::invalid_argument("Dataset: empty");
    auto check_len = [&](const std::vector<double>& col, const char* name, bool optional) {
        if (optional && col.empty()) return;
        if (col.size() != rows) {
            throw std::invalid_argument(std::string("Dataset: column ") + name + " has " +
                                        std::to_string(col.size()) + " rows, expected " +
                                        std::to_string(rows));
        }
        for (std::size_t i = 0; i < col.size(); ++i) {
            if (!std::isfinite(col[i])) {
                throw std::invalid_argument(std::string("Dataset: non-finite ") + name +
                                            " at row " + std::to_string(i));
            }
        }
    };
    if (t.size() != rows) {
        throw std::invalid_argument("Dataset: t has " + std::to_string(t.size()) +
                                    " rows, expected " + std::to_string(rows));
    }
    check_len(y, "y", false);
    check_len(e_true, "e_true", true);
    check_len(mu0, "mu0", true);
    check_len(mu1, "mu1", true);
    if (!mu0.empty() != !mu1.empty()) {
        throw std::invalid_argument("Dataset: mu0 and mu1 must be present together");
    }
    for (std::size_t i = 0; i < rows; ++i) {
        if (t[i] != 0 && t[i] != 1) {
            throw std::invalid_argument("Dataset: t not binary at row " + std::to_string(i) +
                                        " (value " + std::to_string(t[i]) + ")");
        }
        for (std::size_t j = 0; j < dim(); ++j) {
            if (!std::isfinite(x.at(i, j))) {
                throw std::invalid_argument("Dataset: non-finite covariate at row " +
                                            std::to_string(i) + ", column " + std::to_string(j));
            }
        }
    }
    for (std::size_t i = 0; i < e_true.size(); ++i) {
        if (!(e_true[i] > 0.0 && e_true[i] < 1.0)) {
            throw std::invalid_argument("Dataset: e_true outside (0,1) at row " +
                                        std::to_string(i));
        }
    }
    bool any_treated = false, any_control = false;
    for (int v : t) (v == 1 ? any_treated : any_control) = true;
    if (!any_treated || !any_control) {
        throw std::invalid_argument("Dataset: both treatment arms must be non-empty");
    }
}

Dataset subset(const Dataset& d, const std::vector<std::size_t>& indices) {
    Dataset s;
    s.x = Matrix(indices.size(), d.dim());
    s.t.resize(indices.size());
    s.y.resize(indices.size());
    if (!d.e_true.empty()) s.e_true.resize(indices.size());
    if (!d.mu0.empty()) s.mu0.resize(indices.size());
    if (!d.mu1.empty()) s.mu1.resize(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const std::size_t i = indices[k];
        if (i >= d.n()) {
            throw std::invalid_argument("subset: index " + std::to_string(i) +
                                        " out of range for dataset of size " +
                                        std::to_string(d.n()));
        }
        for (std::size_t j = 0; j < d.dim(); ++j) s.x.at(k, j) = d.x.at(i, j);
        s.t[k] = d.t[i];
        s.y[k] = d.y[i];
        if (!d.e_true.empty()) s.e_true[k] = d.e_true[i];
        if (!d.mu0.empty()) s.mu0[k] = d.mu0[i];
        if (!d.mu1.empty()) s.mu1[k] = d.mu1[i];
    }
    return s;
}

MatchWeights MatchWeights::from_pairs(
    std::map<std::size_t, std::vector<std::pair<std::size_t, double>>> pairs) {
    MatchWeights w;
    w.pairs = std::move(pairs);
    for (const auto& [treated, matches] : w.pairs) {
        double total = 0.0;
        for (const auto& [control, wij] : matches) {
            if (wij < 0.0) {
                throw std::invalid_argument("MatchWeights: negative weight for treated unit " +
                                            std::to_string(treated));
            }
            total += wij;
        }
        if (total <= 0.0) {
            throw std::invalid_argument("MatchWeights: treated unit " + std::to_string(treated) +
                                        " has zero total weight");
        }
        for (const auto& [control, wij] : matches) {
            w.aggregated[control] += wij / total;
        }
    }
    return w;
}

MatchWeights MatchWeights::uniform(const std::vector<std::size_t>& control_indices) {
    MatchWeights w;
    for (std::size_t j : control_indices) w.aggregated[j] += 1.0;
    return w;
}

}  // namespace scorematch
