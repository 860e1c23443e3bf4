#include "scorematch/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace scorematch {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != rows * cols) {
        throw std::invalid_argument("Matrix: " + std::to_string(data.size()) +
                                    " values for shape " + shape());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

bool Matrix::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Matrix::shape() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

Matrix transpose(const Matrix& a) {
    Matrix r(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) r.at(j, i) = a.at(i, j);
    }
    return r;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw std::invalid_argument("matmul: shape mismatch " + a.shape() + " * " + b.shape());
    }
    Matrix r(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            double* rrow = r.row(i);
            for (std::size_t j = 0; j < b.cols; ++j) rrow[j] += aik * brow[j];
        }
    }
    return r;
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
    if (a.cols != x.size()) {
        throw std::invalid_argument("matvec: shape mismatch " + a.shape() + " * vector of size " +
                                    std::to_string(x.size()));
    }
    std::vector<double> r(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) acc += arow[j] * x[j];
        r[i] = acc;
    }
    return r;
}

double frobenius_distance(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw std::invalid_argument("frobenius_distance: shape mismatch " + a.shape() + " vs " +
                                    b.shape());
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

namespace {

// One-sided Jacobi on a matrix with rows >= cols. Columns of `b` are rotated
// until pairwise orthogonal; `v` accumulates the right rotations.
void jacobi_sweeps(Matrix& b, Matrix& v) {
    const std::size_t n = b.cols;
    const std::size_t m = b.rows;
    const double tol = 1e-15;
    const int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t k = 0; k < m; ++k) {
                    const double bp = b.at(k, p), bq = b.at(k, q);
                    alpha += bp * bp;
                    beta += bq * bq;
                    gamma += bp * bq;
                }
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t k = 0; k < m; ++k) {
                    const double bp = b.at(k, p), bq = b.at(k, q);
                    b.at(k, p) = c * bp - s * bq;
                    b.at(k, q) = s * bp + c * bq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vp = v.at(k, p), vq = v.at(k, q);
                    v.at(k, p) = c * vp - s * vq;
                    v.at(k, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) return;
    }
    throw std::runtime_error("svd: Jacobi sweeps did not converge for shape " + b.shape());
}

// Replace (near-)null columns of u by unit vectors orthogonal to all other
// columns so that u always has orthonormal columns.
void complete_basis(Matrix& u, const std::vector<bool>& needs_fill) {
    const std::size_t m = u.rows;
    const std::size_t k = u.cols;
    for (std::size_t j = 0; j < k; ++j) {
        if (!needs_fill[j]) continue;
        double best_norm = -1.0;
        std::vector<double> best;
        for (std::size_t cand = 0; cand < m; ++cand) {
            std::vector<double> vec(m, 0.0);
            vec[cand] = 1.0;
            // Two rounds of Gram-Schmidt against the established columns.
            for (int round = 0; round < 2; ++round) {
                for (std::size_t c = 0; c < k; ++c) {
                    if (c == j || (needs_fill[c] && c > j)) continue;
                    double dot = 0.0;
                    for (std::size_t i = 0; i < m; ++i) dot += vec[i] * u.at(i, c);
                    for (std::size_t i = 0; i < m; ++i) vec[i] -= dot * u.at(i, c);
                }
            }
            double norm = 0.0;
            for (double x : vec) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > best_norm) {
                best_norm = norm;
                best = std::move(vec);
            }
            if (best_norm > 0.5) break;  // good enough, keep the scan short
        }
        if (best_norm <= 0.0) {
            throw std::runtime_error("svd: failed to complete orthonormal basis");
        }
        for (std::size_t i = 0; i < m; ++i) u.at(i, j) = best[i] / best_norm;
    }
}

SvdResult svd_tall(const Matrix& a) {
    const std::size_t m = a.rows, n = a.cols;
    Matrix b = a;
    Matrix v = Matrix::identity(n);
    jacobi_sweeps(b, v);

    std::vector<double> sigma(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += b.at(i, j) * b.at(i, j);
        sigma[j] = std::sqrt(acc);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    SvdResult res;
    res.u = Matrix(m, n);
    res.v_t = Matrix(n, n);
    res.singular_values.resize(n);
    std::vector<bool> needs_fill(n, false);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        res.singular_values[j] = sigma[src];
        if (sigma[src] > 0.0) {
            for (std::size_t i = 0; i < m; ++i) res.u.at(i, j) = b.at(i, src) / sigma[src];
        } else {
            needs_fill[j] = true;
        }
        for (std::size_t i = 0; i < n; ++i) res.v_t.at(j, i) = v.at(i, src);
    }
    complete_basis(res.u, needs_fill);
    return res;
}

}  // namespace

SvdResult svd(const Matrix& a) {
    if (a.rows == 0 || a.cols == 0) {
        throw std::invalid_argument("svd: empty matrix of shape " + a.shape());
    }
    if (!a.all_finite()) {
        throw std::invalid_argument("svd: non-finite entries in matrix of shape " + a.shape());
    }
    if (a.rows >= a.cols) return svd_tall(a);
    // Wide case: decompose the transpose and swap the factors.
    SvdResult t = svd_tall(transpose(a));
    SvdResult res;
    res.u = std::move(t.v_t);           // k x k, orthogonal
    res.u = transpose(res.u);           // columns become the left vectors
    res.singular_values = std::move(t.singular_values);
    res.v_t = transpose(t.u);           // k x cols
    return res;
}

double operator_norm(const Matrix& a) {
    return svd(a).singular_values.front();
}

namespace {

double default_rank_tol(const SvdResult& s, std::size_t rows, std::size_t cols) {
    const double sigma_max = s.singular_values.front();
    return std::numeric_limits<double>::epsilon() *
           static_cast<double>(std::max(rows, cols)) * sigma_max;
}

Matrix pinv_from_svd(const SvdResult& s, std::size_t rows, std::size_t cols, double rank_tol) {
    const std::size_t k = s.singular_values.size();
    // pinv = v * diag(1/sigma) * u^t, skipping values at or below the tolerance.
    Matrix scaled_ut(k, rows);
    for (std::size_t i = 0; i < k; ++i) {
        const double sv = s.singular_values[i];
        if (sv <= rank_tol) continue;
        for (std::size_t j = 0; j < rows; ++j) scaled_ut.at(i, j) = s.u.at(j, i) / sv;
    }
    return matmul(transpose(s.v_t), scaled_ut);
}

}  // namespace

Matrix pseudo_inverse(const Matrix& a, double rank_tol) {
    if (rank_tol < 0.0) {
        throw std::invalid_argument("pseudo_inverse: rank_tol must be non-negative");
    }
    SvdResult s = svd(a);
    return pinv_from_svd(s, a.rows, a.cols, rank_tol);
}

Matrix pseudo_inverse(const Matrix& a) {
    SvdResult s = svd(a);
    return pinv_from_svd(s, a.rows, a.cols, default_rank_tol(s, a.rows, a.cols));
}

double min_nonzero_singular_value(const Matrix& a) {
    SvdResult s = svd(a);
    const double tol = default_rank_tol(s, a.rows, a.cols);
    double smallest = -1.0;
    for (double sv : s.singular_values) {
        if (sv > tol) smallest = sv;
    }
    if (smallest <= 0.0) {
        throw std::invalid_argument("min_nonzero_singular_value: matrix of shape " + a.shape() +
                                    " has rank 0");
    }
    return smallest;
}

}  // namespace scorematch
