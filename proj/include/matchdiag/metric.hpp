#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "matchdiag/cluster.hpp"
#include "matchdiag/model.hpp"
#include "matchdiag/numerics.hpp"

namespace matchdiag {

enum class MetricForm { euclidean, diagonal, full, dform };

std::string metric_form_name(MetricForm f);

// Learned PSD metric A and how it was obtained. For the dform variant,
// A = S^{-1/2} D S^{-1/2} and dform_weights carries diag(D), the
// per-covariate balance weights in the whitened space.
struct MetricMatrix {
    SymMatrix A;
    MetricForm form = MetricForm::euclidean;
    std::optional<Vector> dform_weights;
    bool used_gradient_fallback = false;  // diagonal Newton fell back to gradient steps
    Vector g_trace;  // g at the accepted iterates, pre-rescaling
};

// sqrt((x-y)' A (x-y)), quadratic form clamped at zero before the sqrt.
double dist_A(std::span<const double> x, std::span<const double> y, const MetricMatrix& metric);

struct GValue {
    double value = 0.0;
    SymMatrix gradient;
};

// g(A) = sum of within-cluster squared distances minus the log of the
// total within-set pair separation, with its analytic gradient. Throws
// DegenerateMetric when A annihilates every within-set difference.
GValue g_objective(const SymMatrix& a, const MatchedSample& sample, const Partition& partition,
                   const Vector& center1, const Vector& center2);

// Diagonal metric by damped Newton on g over the nonnegative orthant,
// rescaled afterwards so the within-cluster constraint sits at 1.
MetricMatrix learn_metric_diagonal(const MatchedSample& sample, const Partition& partition,
                                   const Vector& center1, const Vector& center2,
                                   int max_newton_iters = 50);

// Full metric by projected gradient descent with backtracking, PSD
// projection after every step, then the same boundary rescaling.
MetricMatrix learn_metric_full(const MatchedSample& sample, const Partition& partition,
                               const Vector& center1, const Vector& center2, double step = 1.0,
                               int max_iters = 200);

// Interpretable variant: whiten by S^{-1/2}, learn a diagonal metric
// there, map back. Throws SingularMatrix when the covariate covariance
// is singular (e.g. duplicated columns).
MetricMatrix learn_metric_dform(const MatchedSample& sample, const Partition& partition,
                                const Vector& center1, const Vector& center2);

struct MetricKmeansResult {
    Partition partition;
    ClusterState state;
    MetricMatrix metric;
    bool euclidean_fallback = false;  // some iteration had a degenerate metric
    double g_final = 0.0;             // boundary-scale g of the selected restart
};

// Constrained K-means with the assignment metric re-learned against the
// current partition and centers once per outer iteration. form ==
// euclidean reproduces run_constrained_kmeans exactly.
MetricKmeansResult run_metric_kmeans(const MatchedSample& sample, std::uint64_t seed,
                                     MetricForm form, int max_iter = 100, int restarts = 10);

}  // namespace matchdiag
