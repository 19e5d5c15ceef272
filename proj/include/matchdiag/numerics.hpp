#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "matchdiag/errors.hpp"

namespace matchdiag {

using Vector = std::vector<double>;

// Dense symmetric matrix with full storage. set() writes both triangles,
// so entries[i][j] == entries[j][i] holds exactly by construction.
class SymMatrix {
  public:
    SymMatrix() = default;
    explicit SymMatrix(std::size_t dim, double fill = 0.0)
        : dim_(dim), data_(dim * dim, fill) {}

    static SymMatrix identity(std::size_t dim);
    static SymMatrix diagonal(const Vector& diag);

    std::size_t dim() const { return dim_; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }
    void set(std::size_t i, std::size_t j, double v) {
        data_[i * dim_ + j] = v;
        data_[j * dim_ + i] = v;
    }
    const Vector& data() const { return data_; }

    bool all_finite() const;
    double max_abs() const;
    double frobenius_norm() const;
    Vector diag() const;

  private:
    std::size_t dim_ = 0;
    Vector data_;
};

// Result of sym_eig: eigenvalues descending, eigenvectors stored as
// column k of a dim x dim array.
struct EigDecomp {
    std::size_t dim = 0;
    Vector eigenvalues;
    Vector eigenvectors;  // row-major dim x dim, column k = k-th eigenvector

    double vec(std::size_t i, std::size_t k) const { return eigenvectors[i * dim + k]; }
};

// Cyclic Jacobi eigendecomposition for symmetric matrices.
EigDecomp sym_eig(const SymMatrix& m);

// Frobenius-nearest PSD matrix: eigenvalues clamped at zero.
SymMatrix psd_project(const SymMatrix& m);

// Symmetric inverse square root of an SPD matrix via eigendecomposition.
// Throws SingularMatrix when min eigenvalue <= 1e-10 * max eigenvalue.
SymMatrix inv_sqrt(const SymMatrix& m);

// Inverse of an SPD matrix via eigendecomposition, same singularity rule.
SymMatrix inv_spd(const SymMatrix& m);

// Solves m x = b for SPD m by Cholesky. Throws SingularMatrix on a
// non-positive pivot.
Vector solve_spd(const SymMatrix& m, const Vector& b);

// quadratic form v' m v
double quad_form(const SymMatrix& m, std::span<const double> v);

// Exact binomial tails, log-gamma accumulation with Kahan summation.
// binom_sf(n, p, t)  = P(X >= t),  binom_cdf(n, p, t) = P(X <= t).
double binom_sf(long n, double p, long t);
double binom_cdf(long n, double p, long t);

double binom_log_pmf(long n, double p, long k);

// Standard normal distribution function, absolute error <= 1e-10.
double normal_cdf(double z);

// Small row-major rectangular matrix for covariate tables.
class RowMatrix {
  public:
    RowMatrix() = default;
    RowMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }
    std::span<double> row(std::size_t i) {
        return {data_.data() + i * cols_, cols_};
    }
    const Vector& data() const { return data_; }
    Vector& data() { return data_; }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

}  // namespace matchdiag
