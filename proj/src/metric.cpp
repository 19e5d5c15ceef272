#include "matchdiag/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace matchdiag {

std::string metric_form_name(MetricForm f) {
    switch (f) {
        case MetricForm::euclidean: return "euclidean";
        case MetricForm::diagonal: return "diagonal";
        case MetricForm::full: return "full";
        case MetricForm::dform: return "dform";
    }
    return "unknown";
}

double dist_A(std::span<const double> x, std::span<const double> y, const MetricMatrix& metric) {
    const std::size_t d = metric.A.dim();
    if (x.size() != d || y.size() != d)
        throw InvalidInput("dist_A: dimension mismatch");
    Vector diff(d);
    for (std::size_t k = 0; k < d; ++k) diff[k] = x[k] - y[k];
    return std::sqrt(std::max(quad_form(metric.A, diff), 0.0));
}

namespace {

// Fixed data of one metric-learning subproblem: similar-pair difference
// vectors (unit minus its cluster center) and all within-set pair
// differences (the cannot-link pairs).
struct MetricProblem {
    RowMatrix similar;     // n x d
    RowMatrix pair_diffs;  // P x d
    std::size_t dim = 0;
};

MetricProblem build_problem(const MatchedSample& sample, const Partition& partition,
                            const Vector& c1, const Vector& c2) {
    const std::size_t d = sample.covariate_dim;
    const std::size_t set_size = sample.set_size();
    MetricProblem prob;
    prob.dim = d;
    prob.similar = RowMatrix(sample.num_units(), d);
    std::size_t row = 0;
    for (std::size_t i = 0; i < sample.num_sets; ++i) {
        for (std::size_t j = 0; j < set_size; ++j) {
            auto x = sample.covariates.row(sample.unit_index(i, j));
            const Vector& c = (j == partition.pi1_slot[i]) ? c1 : c2;
            for (std::size_t k = 0; k < d; ++k) prob.similar(row, k) = x[k] - c[k];
            ++row;
        }
    }
    const std::size_t pairs_per_set = set_size * (set_size - 1) / 2;
    prob.pair_diffs = RowMatrix(sample.num_sets * pairs_per_set, d);
    row = 0;
    for (std::size_t i = 0; i < sample.num_sets; ++i) {
        for (std::size_t j = 0; j < set_size; ++j) {
            auto xj = sample.covariates.row(sample.unit_index(i, j));
            for (std::size_t jp = j + 1; jp < set_size; ++jp) {
                auto xp = sample.covariates.row(sample.unit_index(i, jp));
                for (std::size_t k = 0; k < d; ++k) prob.pair_diffs(row, k) = xj[k] - xp[k];
                ++row;
            }
        }
    }
    return prob;
}

double similar_term(const MetricProblem& prob, const SymMatrix& a) {
    double s = 0.0;
    for (std::size_t r = 0; r < prob.similar.rows(); ++r)
        s += quad_form(a, prob.similar.row(r));
    return s;
}

double dissimilar_term(const MetricProblem& prob, const SymMatrix& a) {
    double s = 0.0;
    for (std::size_t r = 0; r < prob.pair_diffs.rows(); ++r)
        s += std::sqrt(std::max(quad_form(a, prob.pair_diffs.row(r)), 0.0));
    return s;
}

double g_value_only(const MetricProblem& prob, const SymMatrix& a) {
    const double dissim = dissimilar_term(prob, a);
    if (!(dissim > 0.0)) throw DegenerateMetric("metric annihilates all within-set differences");
    return similar_term(prob, a) - std::log(dissim);
}

GValue g_of(const MetricProblem& prob, const SymMatrix& a) {
    const std::size_t d = prob.dim;
    GValue out;
    out.gradient = SymMatrix(d);

    double sim = 0.0;
    SymMatrix grad(d);
    for (std::size_t r = 0; r < prob.similar.rows(); ++r) {
        auto v = prob.similar.row(r);
        sim += quad_form(a, v);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i; j < d; ++j)
                grad.set(i, j, grad(i, j) + v[i] * v[j]);
    }

    double dissim = 0.0;
    SymMatrix pair_grad(d);
    for (std::size_t r = 0; r < prob.pair_diffs.rows(); ++r) {
        auto w = prob.pair_diffs.row(r);
        const double norm = std::sqrt(std::max(quad_form(a, w), 0.0));
        dissim += norm;
        if (norm > 0.0) {
            const double scale = 1.0 / (2.0 * norm);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = i; j < d; ++j)
                    pair_grad.set(i, j, pair_grad(i, j) + scale * w[i] * w[j]);
        }
    }
    if (!(dissim > 0.0)) throw DegenerateMetric("metric annihilates all within-set differences");

    out.value = sim - std::log(dissim);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j)
            out.gradient.set(i, j, grad(i, j) - pair_grad(i, j) / dissim);
    return out;
}

// rescale so the within-cluster constraint holds with equality at 1;
// assignments are invariant to this
void rescale_to_boundary(const MetricProblem& prob, SymMatrix& a) {
    const double sim = similar_term(prob, a);
    if (!(sim > 0.0)) return;
    SymMatrix scaled(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i)
        for (std::size_t j = i; j < a.dim(); ++j) scaled.set(i, j, a(i, j) / sim);
    a = scaled;
}

// ---- diagonal path ----

struct DiagProblem {
    Vector q;            // similar-term coefficient per coordinate
    RowMatrix w2;        // squared pair differences, P x d
    std::size_t dim = 0;
};

DiagProblem diag_problem(const MetricProblem& prob) {
    DiagProblem dp;
    dp.dim = prob.dim;
    dp.q.assign(prob.dim, 0.0);
    for (std::size_t r = 0; r < prob.similar.rows(); ++r) {
        auto v = prob.similar.row(r);
        for (std::size_t k = 0; k < prob.dim; ++k) dp.q[k] += v[k] * v[k];
    }
    dp.w2 = RowMatrix(prob.pair_diffs.rows(), prob.dim);
    for (std::size_t r = 0; r < prob.pair_diffs.rows(); ++r) {
        auto w = prob.pair_diffs.row(r);
        for (std::size_t k = 0; k < prob.dim; ++k) dp.w2(r, k) = w[k] * w[k];
    }
    return dp;
}

double diag_g(const DiagProblem& dp, const Vector& a) {
    double sim = 0.0;
    for (std::size_t k = 0; k < dp.dim; ++k) sim += dp.q[k] * a[k];
    double dissim = 0.0;
    for (std::size_t r = 0; r < dp.w2.rows(); ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < dp.dim; ++k) s += a[k] * dp.w2(r, k);
        dissim += std::sqrt(std::max(s, 0.0));
    }
    if (!(dissim > 0.0)) throw DegenerateMetric("diagonal metric annihilates all pairs");
    return sim - std::log(dissim);
}

// gradient and Hessian of g restricted to diagonal metrics
void diag_derivatives(const DiagProblem& dp, const Vector& a, Vector& grad, SymMatrix& hess) {
    const std::size_t d = dp.dim;
    const std::size_t P = dp.w2.rows();
    Vector norms(P);
    double dissim = 0.0;
    for (std::size_t r = 0; r < P; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += a[k] * dp.w2(r, k);
        norms[r] = std::sqrt(std::max(s, 0.0));
        dissim += norms[r];
    }
    if (!(dissim > 0.0)) throw DegenerateMetric("diagonal metric annihilates all pairs");

    Vector u(d, 0.0);  // u_k = sum_r w2(r,k) / (2 norm_r)
    for (std::size_t r = 0; r < P; ++r) {
        if (norms[r] == 0.0) continue;
        const double inv2n = 1.0 / (2.0 * norms[r]);
        for (std::size_t k = 0; k < d; ++k) u[k] += dp.w2(r, k) * inv2n;
    }
    grad.assign(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) grad[k] = dp.q[k] - u[k] / dissim;

    hess = SymMatrix(d);
    for (std::size_t r = 0; r < P; ++r) {
        if (norms[r] == 0.0) continue;
        const double c = 1.0 / (4.0 * norms[r] * norms[r] * norms[r] * dissim);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i; j < d; ++j)
                hess.set(i, j, hess(i, j) + c * dp.w2(r, i) * dp.w2(r, j));
    }
    const double inv_s2 = 1.0 / (dissim * dissim);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j)
            hess.set(i, j, hess(i, j) + inv_s2 * u[i] * u[j]);
}

Vector learn_diagonal_weights(const DiagProblem& dp, int max_newton_iters,
                              bool& used_gradient_fallback, Vector& g_trace) {
    const std::size_t d = dp.dim;
    const double floor = 1e-12;
    Vector a(d, 1.0);
    double g = diag_g(dp, a);
    g_trace.push_back(g);
    used_gradient_fallback = false;

    Vector grad(d);
    SymMatrix hess(d);
    for (int iter = 0; iter < max_newton_iters; ++iter) {
        diag_derivatives(dp, a, grad, hess);

        // coordinates pinned at the floor with a gradient pushing outward
        // stay fixed; Newton runs on the free coordinates only
        std::vector<std::size_t> free_idx;
        double kkt = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            if (a[k] <= floor && grad[k] > 0.0) {
                continue;  // bound active, KKT satisfied
            }
            free_idx.push_back(k);
            kkt = std::max(kkt, std::fabs(grad[k]));
        }
        if (free_idx.empty() || kkt <= 1e-10 * (1.0 + std::fabs(g))) break;

        Vector dir(d, 0.0);
        bool newton_ok = true;
        try {
            const std::size_t f = free_idx.size();
            SymMatrix h(f);
            Vector neg(f);
            for (std::size_t x = 0; x < f; ++x) {
                neg[x] = -grad[free_idx[x]];
                for (std::size_t y = x; y < f; ++y)
                    h.set(x, y, hess(free_idx[x], free_idx[y]));
                h.set(x, x, h(x, x) + 1e-10 * (1.0 + h(x, x)));
            }
            Vector reduced = solve_spd(h, neg);
            double descent = 0.0;
            for (std::size_t x = 0; x < f; ++x) {
                if (!std::isfinite(reduced[x])) newton_ok = false;
                dir[free_idx[x]] = reduced[x];
                descent += grad[free_idx[x]] * reduced[x];
            }
            if (descent >= 0.0) newton_ok = false;
        } catch (const SingularMatrix&) {
            newton_ok = false;
        }
        if (!newton_ok) {
            used_gradient_fallback = true;
            dir.assign(d, 0.0);
            for (std::size_t k : free_idx) dir[k] = -grad[k];
        }

        double step = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            Vector cand(d);
            for (std::size_t k = 0; k < d; ++k)
                cand[k] = std::max(a[k] + step * dir[k], floor);
            double g_cand;
            try {
                g_cand = diag_g(dp, cand);
            } catch (const DegenerateMetric&) {
                step *= 0.5;
                continue;
            }
            if (std::isfinite(g_cand) && g_cand <= g + 1e-14) {
                const double improvement = g - g_cand;
                a = std::move(cand);
                g = g_cand;
                g_trace.push_back(g);
                accepted = true;
                // converged only when a full (undamped) step stops helping
                if (step == 1.0 && improvement <= 1e-10 * (1.0 + std::fabs(g))) return a;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
    }
    return a;
}

SymMatrix covariance_of_units(const MatchedSample& sample) {
    const std::size_t n = sample.num_units();
    const std::size_t d = sample.covariate_dim;
    Vector mean(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        auto x = sample.covariates.row(r);
        for (std::size_t k = 0; k < d; ++k) mean[k] += x[k];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    SymMatrix cov(d);
    for (std::size_t r = 0; r < n; ++r) {
        auto x = sample.covariates.row(r);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i; j < d; ++j)
                cov.set(i, j, cov(i, j) + (x[i] - mean[i]) * (x[j] - mean[j]));
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) cov.set(i, j, cov(i, j) / static_cast<double>(n));
    return cov;
}

}  // namespace

GValue g_objective(const SymMatrix& a, const MatchedSample& sample, const Partition& partition,
                   const Vector& center1, const Vector& center2) {
    if (a.dim() != sample.covariate_dim) throw InvalidInput("g_objective: dimension mismatch");
    MetricProblem prob = build_problem(sample, partition, center1, center2);
    return g_of(prob, a);
}

MetricMatrix learn_metric_diagonal(const MatchedSample& sample, const Partition& partition,
                                   const Vector& center1, const Vector& center2,
                                   int max_newton_iters) {
    MetricProblem prob = build_problem(sample, partition, center1, center2);
    DiagProblem dp = diag_problem(prob);
    MetricMatrix out;
    out.form = MetricForm::diagonal;
    Vector a = learn_diagonal_weights(dp, max_newton_iters, out.used_gradient_fallback,
                                      out.g_trace);
    out.A = SymMatrix::diagonal(a);
    rescale_to_boundary(prob, out.A);
    return out;
}

MetricMatrix learn_metric_full(const MatchedSample& sample, const Partition& partition,
                               const Vector& center1, const Vector& center2, double step,
                               int max_iters) {
    if (!(step > 0.0)) throw InvalidInput("learn_metric_full: step must be positive");
    if (sample.covariate_dim > 50)
        throw InvalidInput("learn_metric_full: dimension above 50 not supported");
    MetricProblem prob = build_problem(sample, partition, center1, center2);
    const std::size_t d = prob.dim;

    SymMatrix a = SymMatrix::identity(d);
    GValue cur = g_of(prob, a);
    MetricMatrix out;
    out.form = MetricForm::full;
    out.g_trace.push_back(cur.value);
    double trial_step = step;
    for (int iter = 0; iter < max_iters; ++iter) {
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            SymMatrix cand(d);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = i; j < d; ++j)
                    cand.set(i, j, a(i, j) - trial_step * cur.gradient(i, j));
            cand = psd_project(cand);
            double g_cand;
            try {
                g_cand = g_value_only(prob, cand);
            } catch (const DegenerateMetric&) {
                trial_step *= 0.5;
                continue;
            }
            if (std::isfinite(g_cand) && g_cand <= cur.value + 1e-14) {
                const double improvement = cur.value - g_cand;
                a = std::move(cand);
                cur = g_of(prob, a);
                out.g_trace.push_back(cur.value);
                accepted = true;
                // converged only when an unshrunk step stops helping
                if (bt == 0 && improvement <= 1e-8 * (1.0 + std::fabs(cur.value)))
                    iter = max_iters;
                trial_step *= 1.2;
                break;
            }
            trial_step *= 0.5;
        }
        if (!accepted) break;
    }

    out.A = a;
    rescale_to_boundary(prob, out.A);
    return out;
}

MetricMatrix learn_metric_dform(const MatchedSample& sample, const Partition& partition,
                                const Vector& center1, const Vector& center2) {
    const std::size_t d = sample.covariate_dim;
    SymMatrix cov = covariance_of_units(sample);
    SymMatrix root = inv_sqrt(cov);  // symmetric S^{-1/2}

    // whiten the sample and the centers
    MatchedSample whitened = sample;
    for (std::size_t r = 0; r < sample.num_units(); ++r) {
        auto x = sample.covariates.row(r);
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += root(i, j) * x[j];
            whitened.covariates(r, i) = s;
        }
    }
    auto apply_root = [&](const Vector& v) {
        Vector out(d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) out[i] += root(i, j) * v[j];
        return out;
    };

    MetricMatrix diag = learn_metric_diagonal(whitened, partition, apply_root(center1),
                                              apply_root(center2));

    MetricMatrix out;
    out.form = MetricForm::dform;
    out.used_gradient_fallback = diag.used_gradient_fallback;
    out.g_trace = diag.g_trace;
    out.dform_weights = diag.A.diag();

    // A = S^{-1/2} D S^{-1/2}
    const Vector w = *out.dform_weights;
    out.A = SymMatrix(d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += root(i, k) * w[k] * root(k, j);
            out.A.set(i, j, s);
        }
    }
    MetricProblem prob = build_problem(sample, partition, center1, center2);
    rescale_to_boundary(prob, out.A);
    return out;
}

MetricKmeansResult run_metric_kmeans(const MatchedSample& sample, std::uint64_t seed,
                                     MetricForm form, int max_iter, int restarts) {
    if (max_iter < 1) throw InvalidInput("max_iter must be >= 1");
    if (restarts < 1) throw InvalidInput("restarts must be >= 1");

    if (form == MetricForm::euclidean) {
        auto [partition, state] = run_constrained_kmeans(sample, nullptr, seed, max_iter, restarts);
        MetricKmeansResult res;
        res.partition = std::move(partition);
        res.state = std::move(state);
        res.metric.A = SymMatrix::identity(sample.covariate_dim);
        res.metric.form = MetricForm::euclidean;
        res.g_final = res.state.objective;
        return res;
    }

    auto learn = [&](const ClusterState& st) {
        switch (form) {
            case MetricForm::diagonal:
                return learn_metric_diagonal(sample, st.partition, st.center1, st.center2);
            case MetricForm::full:
                return learn_metric_full(sample, st.partition, st.center1, st.center2);
            case MetricForm::dform:
                return learn_metric_dform(sample, st.partition, st.center1, st.center2);
            default:
                throw InvalidInput("unexpected metric form");
        }
    };

    MetricKmeansResult best;
    bool have_best = false;
    // selection key: prefer restarts that never fell back, then smaller
    // boundary-scale g (larger within-set separation)
    auto better = [&](bool fb, double g, const MetricKmeansResult& cur) {
        if (fb != cur.euclidean_fallback) return !fb;
        return g < cur.g_final;
    };

    for (int r = 0; r < restarts; ++r) {
        Rng rng(derive_stream(seed, static_cast<std::uint64_t>(r)));
        ClusterState state = init_partition(sample, rng);
        MetricMatrix metric;
        bool fallback = false;
        bool metric_ok = false;
        for (int it = 0; it < max_iter; ++it) {
            const SymMatrix* active = nullptr;
            try {
                metric = learn(state);
                metric_ok = true;
                active = &metric.A;
            } catch (const DegenerateMetric&) {
                fallback = true;
                metric_ok = false;
            }
            ClusterState next = assign_step(state, sample, active, rng);
            const bool fixed_point = next.partition == state.partition;
            state = std::move(next);
            if (fixed_point) {
                state.converged = true;
                break;
            }
        }
        double g_final;
        if (metric_ok) {
            try {
                g_final = g_objective(metric.A, sample, state.partition, state.center1,
                                      state.center2).value;
            } catch (const DegenerateMetric&) {
                fallback = true;
                g_final = std::numeric_limits<double>::infinity();
            }
        } else {
            g_final = state.objective;
        }
        if (!have_best || better(fallback, g_final, best)) {
            best.partition = state.partition;
            best.state = std::move(state);
            best.metric = metric_ok ? std::move(metric)
                                    : MetricMatrix{SymMatrix::identity(sample.covariate_dim),
                                                   MetricForm::euclidean, std::nullopt, false,
                                                   {}};
            best.euclidean_fallback = fallback;
            best.g_final = g_final;
            have_best = true;
        }
    }
    return best;
}

}  // namespace matchdiag
