#include "scorematch/linalg.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "scorematch/rng.hpp"

using namespace scorematch;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng.normal();
    return m;
}

// Random matrix with column rank `rank` built as an outer-product sum.
Matrix random_rank_deficient(Rng& rng, std::size_t r, std::size_t c, std::size_t rank) {
    Matrix left = random_matrix(rng, r, rank);
    Matrix right = random_matrix(rng, rank, c);
    return matmul(left, right);
}

Matrix reconstruct(const SvdResult& s) {
    Matrix us = s.u;
    for (std::size_t i = 0; i < us.rows; ++i) {
        for (std::size_t j = 0; j < us.cols; ++j) us.at(i, j) *= s.singular_values[j];
    }
    return matmul(us, s.v_t);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    REQUIRE(a.rows == b.rows);
    REQUIRE(a.cols == b.cols);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    }
    return worst;
}

double orthonormality_defect(const Matrix& u) {
    return max_abs_diff(matmul(transpose(u), u), Matrix::identity(u.cols));
}

double vec_norm(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("svd of the identity") {
    SvdResult s = svd(Matrix::identity(3));
    for (double sv : s.singular_values) CHECK(sv == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(orthonormality_defect(s.u) < 1e-12);
    CHECK(orthonormality_defect(transpose(s.v_t)) < 1e-12);
}

TEST_CASE("svd of a diagonal matrix sorts singular values descending") {
    Matrix a(2, 2, {2.0, 0.0, 0.0, 0.5});
    SvdResult s = svd(a);
    CHECK(s.singular_values[0] == doctest::Approx(2.0).epsilon(1e-13));
    CHECK(s.singular_values[1] == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("svd reconstructs random rectangular matrices") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix a = random_matrix(rng, 5, 3);
        SvdResult s = svd(a);
        CHECK(max_abs_diff(reconstruct(s), a) < 1e-9);
        CHECK(orthonormality_defect(s.u) < 1e-9);
        CHECK(orthonormality_defect(transpose(s.v_t)) < 1e-9);
        for (std::size_t i = 0; i + 1 < s.singular_values.size(); ++i) {
            CHECK(s.singular_values[i] >= s.singular_values[i + 1]);
        }
    }
}

TEST_CASE("svd handles wide matrices via the transpose") {
    Rng rng(7);
    Matrix a = random_matrix(rng, 3, 8);
    SvdResult s = svd(a);
    CHECK(s.u.rows == 3);
    CHECK(s.u.cols == 3);
    CHECK(s.v_t.rows == 3);
    CHECK(s.v_t.cols == 8);
    CHECK(max_abs_diff(reconstruct(s), a) < 1e-9);
    CHECK(orthonormality_defect(s.u) < 1e-9);
}

TEST_CASE("svd keeps orthonormal factors on rank-deficient input") {
    Rng rng(11);
    Matrix a = random_rank_deficient(rng, 6, 4, 2);
    SvdResult s = svd(a);
    CHECK(max_abs_diff(reconstruct(s), a) < 1e-9);
    CHECK(orthonormality_defect(s.u) < 1e-9);
    CHECK(orthonormality_defect(transpose(s.v_t)) < 1e-9);
    // Two singular values must be negligible next to the leading one.
    CHECK(s.singular_values[2] < 1e-9 * s.singular_values[0]);
    CHECK(s.singular_values[3] < 1e-9 * s.singular_values[0]);
}

TEST_CASE("svd rejects bad input") {
    CHECK_THROWS(svd(Matrix()));
    Matrix a(2, 2, {1.0, 0.0, 0.0, std::nan("")});
    CHECK_THROWS(svd(a));
}

TEST_CASE("operator norm basics") {
    CHECK(operator_norm(Matrix::identity(4)) == doctest::Approx(1.0).epsilon(1e-13));
    Matrix d(2, 2, {2.0, 0.0, 0.0, 0.5});
    CHECK(operator_norm(d) == doctest::Approx(2.0).epsilon(1e-13));
    Matrix col(2, 1, {3.0, 4.0});
    CHECK(operator_norm(col) == doctest::Approx(5.0).epsilon(1e-13));
    CHECK(operator_norm(Matrix(3, 2)) == 0.0);
}

TEST_CASE("operator norm bounds every matrix-vector product") {
    Rng rng(1234);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t r = 1 + rng.index(5);
        const std::size_t c = 1 + rng.index(5);
        Matrix a = random_matrix(rng, r, c);
        std::vector<double> x(c);
        for (double& v : x) v = rng.normal();
        const double lhs = vec_norm(matvec(a, x));
        const double rhs = operator_norm(a) * vec_norm(x);
        CHECK(lhs <= rhs + 1e-12);
    }
}

TEST_CASE("pseudo-inverse of simple matrices") {
    Matrix d(2, 2, {2.0, 0.0, 0.0, 0.5});
    Matrix p = pseudo_inverse(d);
    CHECK(p.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p.at(1, 1) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(std::abs(p.at(0, 1)) < 1e-12);
    CHECK(operator_norm(p) == doctest::Approx(2.0).epsilon(1e-12));

    Matrix rank1(2, 2, {1.0, 0.0, 0.0, 0.0});
    CHECK(max_abs_diff(pseudo_inverse(rank1), rank1) < 1e-12);

    Matrix zero(3, 2);
    Matrix pz = pseudo_inverse(zero);
    CHECK(pz.rows == 2);
    CHECK(pz.cols == 3);
    for (double v : pz.data) CHECK(v == 0.0);

    CHECK(max_abs_diff(pseudo_inverse(Matrix::identity(3)), Matrix::identity(3)) < 1e-12);
}

TEST_CASE("pseudo-inverse satisfies the Moore-Penrose identities") {
    Rng rng(2026);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t r = 1 + rng.index(6);
        const std::size_t c = 1 + rng.index(6);
        Matrix a;
        if (trial % 3 == 0 && std::min(r, c) > 1) {
            a = random_rank_deficient(rng, r, c, 1 + rng.index(std::min(r, c) - 1));
        } else {
            a = random_matrix(rng, r, c);
        }
        Matrix p = pseudo_inverse(a);
        Matrix ap = matmul(a, p);
        Matrix pa = matmul(p, a);
        CHECK(max_abs_diff(matmul(ap, a), a) < 1e-9);
        CHECK(max_abs_diff(matmul(pa, p), p) < 1e-9);
        CHECK(max_abs_diff(transpose(ap), ap) < 1e-9);
        CHECK(max_abs_diff(transpose(pa), pa) < 1e-9);
    }
}

TEST_CASE("pseudo-inverse norm is the reciprocal of the smallest nonzero singular value") {
    Rng rng(5150);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix a = random_matrix(rng, 4, 3);
        const double lhs = operator_norm(pseudo_inverse(a));
        const double rhs = 1.0 / min_nonzero_singular_value(a);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
}

TEST_CASE("min_nonzero_singular_value rejects the zero matrix") {
    CHECK_THROWS(min_nonzero_singular_value(Matrix(2, 3)));
}

TEST_CASE("explicit rank tolerance truncates small singular values") {
    Matrix d(2, 2, {1.0, 0.0, 0.0, 1e-12});
    Matrix strict = pseudo_inverse(d, 0.0);
    CHECK(strict.at(1, 1) == doctest::Approx(1e12).epsilon(1e-9));
    Matrix loose = pseudo_inverse(d, 1e-6);
    CHECK(loose.at(1, 1) == 0.0);
    CHECK_THROWS(pseudo_inverse(d, -1e-3));
}
