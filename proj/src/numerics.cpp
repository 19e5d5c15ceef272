#include "matchdiag/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace matchdiag {

SymMatrix SymMatrix::identity(std::size_t dim) {
    SymMatrix m(dim);
    for (std::size_t i = 0; i < dim; ++i) m.set(i, i, 1.0);
    return m;
}

SymMatrix SymMatrix::diagonal(const Vector& diag) {
    SymMatrix m(diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m.set(i, i, diag[i]);
    return m;
}

bool SymMatrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
}

double SymMatrix::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
}

double SymMatrix::frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

Vector SymMatrix::diag() const {
    Vector d(dim_);
    for (std::size_t i = 0; i < dim_; ++i) d[i] = (*this)(i, i);
    return d;
}

namespace {

double off_diag_norm(const std::vector<double>& a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) s += a[i * n + j] * a[i * n + j];
    return std::sqrt(2.0 * s);
}

}  // namespace

EigDecomp sym_eig(const SymMatrix& m) {
    if (!m.all_finite()) throw InvalidInput("sym_eig: matrix has non-finite entries");
    const std::size_t n = m.dim();
    if (n == 0) throw InvalidInput("sym_eig: empty matrix");

    std::vector<double> a = m.data();
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    const double tol = 1e-12 * std::max(m.frobenius_norm(), 1e-300);
    const int max_sweeps = 100;

    for (int sweep = 0; sweep < max_sweeps && n > 1; ++sweep) {
        if (off_diag_norm(a, n) <= tol) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double app = a[p * n + p];
                const double aqq = a[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                // stable rotation: t = sign(theta)/(|theta| + sqrt(theta^2+1))
                double t;
                if (std::fabs(theta) > 1e150) {
                    t = 1.0 / (2.0 * theta);
                } else {
                    t = 1.0 / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                    if (theta < 0.0) t = -t;
                }
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p];
                    const double akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k];
                    const double aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k * n + p];
                    const double vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    // sort eigenpairs descending
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return a[x * n + x] > a[y * n + y];
    });

    EigDecomp out;
    out.dim = n;
    out.eigenvalues.resize(n);
    out.eigenvectors.resize(n * n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        out.eigenvalues[k] = a[src * n + src];
        for (std::size_t i = 0; i < n; ++i) out.eigenvectors[i * n + k] = v[i * n + src];
    }
    return out;
}

namespace {

SymMatrix reconstruct(const EigDecomp& e, const Vector& lambda) {
    const std::size_t n = e.dim;
    SymMatrix out(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += e.vec(i, k) * lambda[k] * e.vec(j, k);
            out.set(i, j, s);
        }
    }
    return out;
}

}  // namespace

SymMatrix psd_project(const SymMatrix& m) {
    if (!m.all_finite()) throw InvalidInput("psd_project: non-finite entries");
    EigDecomp e = sym_eig(m);
    Vector lambda = e.eigenvalues;
    bool changed = false;
    for (double& l : lambda) {
        if (l < 0.0) {
            l = 0.0;
            changed = true;
        }
    }
    if (!changed) return m;
    return reconstruct(e, lambda);
}

SymMatrix inv_sqrt(const SymMatrix& m) {
    if (!m.all_finite()) throw InvalidInput("inv_sqrt: non-finite entries");
    EigDecomp e = sym_eig(m);
    const double max_eig = e.eigenvalues.empty() ? 0.0 : e.eigenvalues.front();
    const double min_eig = e.eigenvalues.empty() ? 0.0 : e.eigenvalues.back();
    if (min_eig <= 1e-10 * max_eig || max_eig <= 0.0)
        throw SingularMatrix("inv_sqrt: matrix is singular or not positive definite", min_eig);
    Vector lambda(e.dim);
    for (std::size_t k = 0; k < e.dim; ++k) lambda[k] = 1.0 / std::sqrt(e.eigenvalues[k]);
    return reconstruct(e, lambda);
}

SymMatrix inv_spd(const SymMatrix& m) {
    if (!m.all_finite()) throw InvalidInput("inv_spd: non-finite entries");
    EigDecomp e = sym_eig(m);
    const double max_eig = e.eigenvalues.empty() ? 0.0 : e.eigenvalues.front();
    const double min_eig = e.eigenvalues.empty() ? 0.0 : e.eigenvalues.back();
    if (min_eig <= 1e-10 * max_eig || max_eig <= 0.0)
        throw SingularMatrix("inv_spd: matrix is singular or not positive definite", min_eig);
    Vector lambda(e.dim);
    for (std::size_t k = 0; k < e.dim; ++k) lambda[k] = 1.0 / e.eigenvalues[k];
    return reconstruct(e, lambda);
}

Vector solve_spd(const SymMatrix& m, const Vector& b) {
    const std::size_t n = m.dim();
    if (b.size() != n) throw InvalidInput("solve_spd: dimension mismatch");
    // lower-triangular Cholesky factor
    std::vector<double> l(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
            if (i == j) {
                if (s <= 0.0 || !std::isfinite(s))
                    throw SingularMatrix("solve_spd: non-positive pivot", s);
                l[i * n + i] = std::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l[i * n + k] * y[k];
        y[i] = s / l[i * n + i];
    }
    Vector x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l[k * n + ii] * x[k];
        x[ii] = s / l[ii * n + ii];
    }
    return x;
}

double quad_form(const SymMatrix& m, std::span<const double> v) {
    const std::size_t n = m.dim();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += m(i, j) * v[j];
        s += v[i] * row;
    }
    return s;
}

double binom_log_pmf(long n, double p, long k) {
    if (p == 0.0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    if (p == 1.0) return k == n ? 0.0 : -std::numeric_limits<double>::infinity();
    const double dn = static_cast<double>(n);
    const double dk = static_cast<double>(k);
    return std::lgamma(dn + 1.0) - std::lgamma(dk + 1.0) - std::lgamma(dn - dk + 1.0) +
           dk * std::log(p) + (dn - dk) * std::log1p(-p);
}

namespace {

// Kahan-compensated sum of pmf terms for k in [lo, hi].
double pmf_range_sum(long n, double p, long lo, long hi) {
    double sum = 0.0;
    double comp = 0.0;
    for (long k = lo; k <= hi; ++k) {
        const double term = std::exp(binom_log_pmf(n, p, k));
        const double y = term - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return std::min(sum, 1.0);
}

}  // namespace

double binom_sf(long n, double p, long t) {
    if (n < 1) throw InvalidInput("binom_sf: n must be positive");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("binom_sf: p outside [0,1]");
    if (t <= 0) return 1.0;
    if (t > n) return 0.0;
    // sum whichever tail is shorter and complement if needed
    if (static_cast<double>(t) > static_cast<double>(n) * p) {
        return pmf_range_sum(n, p, t, n);
    }
    const double lower = pmf_range_sum(n, p, 0, t - 1);
    return std::max(1.0 - lower, 0.0);
}

double binom_cdf(long n, double p, long t) {
    if (n < 1) throw InvalidInput("binom_cdf: n must be positive");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("binom_cdf: p outside [0,1]");
    if (t < 0) return 0.0;
    if (t >= n) return 1.0;
    if (static_cast<double>(t) < static_cast<double>(n) * p) {
        return pmf_range_sum(n, p, 0, t);
    }
    const double upper = pmf_range_sum(n, p, t + 1, n);
    return std::max(1.0 - upper, 0.0);
}

double normal_cdf(double z) {
    if (!std::isfinite(z)) throw InvalidInput("normal_cdf: non-finite argument");
    // erfc keeps full relative accuracy in the lower tail
    return 0.5 * std::erfc(-z / 1.4142135623730950488);
}

}  // namespace matchdiag
