#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace scorematch {

// Dense row-major matrix. Small sizes only; nothing here is blocked or
// vectorized beyond what the compiler does on its own.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> values);

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    const double* row(std::size_t i) const { return data.data() + i * cols; }
    double* row(std::size_t i) { return data.data() + i * cols; }

    static Matrix identity(std::size_t n);

    bool all_finite() const;
    std::string shape() const;
};

Matrix transpose(const Matrix& a);
Matrix matmul(const Matrix& a, const Matrix& b);
std::vector<double> matvec(const Matrix& a, const std::vector<double>& x);
double frobenius_distance(const Matrix& a, const Matrix& b);

// Thin singular value decomposition a = u * diag(s) * v_t with
// k = min(rows, cols) columns in u, k rows in v_t, and s sorted descending.
struct SvdResult {
    Matrix u;
    std::vector<double> singular_values;
    Matrix v_t;
};

// One-sided Jacobi SVD. Iterates plane rotations until every column pair is
// numerically orthogonal, so no convergence failures at the sizes used here.
SvdResult svd(const Matrix& a);

// Largest singular value; exactly 0 for the zero matrix.
double operator_norm(const Matrix& a);

// Moore-Penrose pseudo-inverse. Singular values at or below rank_tol are
// treated as zero. The single-argument form uses
// machine_epsilon * max(rows, cols) * sigma_max.
Matrix pseudo_inverse(const Matrix& a, double rank_tol);
Matrix pseudo_inverse(const Matrix& a);

// Smallest singular value above rank_tol (same default rule as above).
// Throws for the zero matrix, which has no nonzero singular value.
double min_nonzero_singular_value(const Matrix& a);

}  // namespace scorematch
