#include "matchdiag/cluster.hpp"

#include <cmath>
#include <limits>

namespace matchdiag {

namespace {

// squared distance between unit row and a center under the active metric
double sq_dist(std::span<const double> x, const Vector& center, const SymMatrix* metric) {
    const std::size_t d = center.size();
    if (metric == nullptr) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = x[k] - center[k];
            s += diff * diff;
        }
        return s;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < d; ++j) row += (*metric)(i, j) * (x[j] - center[j]);
        s += (x[i] - center[i]) * row;
    }
    return std::max(s, 0.0);
}

void compute_centers(const Partition& partition, const MatchedSample& sample, Vector& c1,
                     Vector& c2) {
    const std::size_t d = sample.covariate_dim;
    const std::size_t set_size = sample.set_size();
    c1.assign(d, 0.0);
    c2.assign(d, 0.0);
    for (std::size_t i = 0; i < sample.num_sets; ++i) {
        for (std::size_t j = 0; j < set_size; ++j) {
            auto row = sample.covariates.row(sample.unit_index(i, j));
            Vector& target = (j == partition.pi1_slot[i]) ? c1 : c2;
            for (std::size_t k = 0; k < d; ++k) target[k] += row[k];
        }
    }
    const double n1 = static_cast<double>(sample.num_sets);
    const double n2 = static_cast<double>(sample.num_sets * (set_size - 1));
    for (std::size_t k = 0; k < d; ++k) {
        c1[k] /= n1;
        c2[k] /= n2;
    }
}

double objective_of(const Partition& partition, const MatchedSample& sample, const Vector& c1,
                    const Vector& c2, const SymMatrix* metric) {
    double obj = 0.0;
    const std::size_t set_size = sample.set_size();
    for (std::size_t i = 0; i < sample.num_sets; ++i) {
        for (std::size_t j = 0; j < set_size; ++j) {
            auto row = sample.covariates.row(sample.unit_index(i, j));
            obj += sq_dist(row, j == partition.pi1_slot[i] ? c1 : c2, metric);
        }
    }
    return obj;
}

}  // namespace

double partition_objective(const Partition& partition, const MatchedSample& sample,
                           const SymMatrix* metric) {
    Vector c1, c2;
    compute_centers(partition, sample, c1, c2);
    return objective_of(partition, sample, c1, c2, metric);
}

ClusterState init_partition(const MatchedSample& sample, Rng& rng) {
    ClusterState state;
    state.partition.pi1_slot.resize(sample.num_sets);
    for (std::size_t i = 0; i < sample.num_sets; ++i)
        state.partition.pi1_slot[i] =
            static_cast<std::uint32_t>(rng.uniform_below(sample.set_size()));
    compute_centers(state.partition, sample, state.center1, state.center2);
    state.objective = objective_of(state.partition, sample, state.center1, state.center2, nullptr);
    return state;
}

ClusterState assign_step(const ClusterState& state, const MatchedSample& sample,
                         const SymMatrix* metric, Rng& rng) {
    const std::size_t set_size = sample.set_size();
    ClusterState next;
    next.partition.pi1_slot.resize(sample.num_sets);
    next.iteration = state.iteration + 1;

    for (std::size_t i = 0; i < sample.num_sets; ++i) {
        std::size_t prefer_count = 0;
        std::size_t prefer_slot = 0;
        std::size_t tied_slot = set_size;  // first exactly-equidistant slot, if any
        for (std::size_t j = 0; j < set_size; ++j) {
            auto row = sample.covariates.row(sample.unit_index(i, j));
            const double d1 = sq_dist(row, state.center1, metric);
            const double d2 = sq_dist(row, state.center2, metric);
            if (d1 < d2) {
                ++prefer_count;
                prefer_slot = j;
            } else if (d1 == d2 && tied_slot == set_size) {
                tied_slot = j;
            }
        }
        if (prefer_count == 1) {
            next.partition.pi1_slot[i] = static_cast<std::uint32_t>(prefer_slot);
        } else if (prefer_count == 0 && tied_slot < set_size) {
            next.partition.pi1_slot[i] = static_cast<std::uint32_t>(tied_slot);
        } else {
            // cannot-link constraint violated: equiprobable choice
            next.partition.pi1_slot[i] = static_cast<std::uint32_t>(rng.uniform_below(set_size));
        }
    }

    compute_centers(next.partition, sample, next.center1, next.center2);
    next.objective = objective_of(next.partition, sample, next.center1, next.center2, metric);
    return next;
}

std::pair<Partition, ClusterState> run_constrained_kmeans(const MatchedSample& sample,
                                                          const SymMatrix* metric,
                                                          std::uint64_t seed, int max_iter,
                                                          int restarts) {
    if (max_iter < 1) throw InvalidInput("max_iter must be >= 1");
    if (restarts < 1) throw InvalidInput("restarts must be >= 1");

    ClusterState best;
    double best_objective = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        Rng rng(derive_stream(seed, static_cast<std::uint64_t>(r)));
        ClusterState state = init_partition(sample, rng);
        if (metric != nullptr)
            state.objective =
                objective_of(state.partition, sample, state.center1, state.center2, metric);
        // the equiprobable violated-constraint rule makes the walk
        // stochastic, so keep the best partition this run visited
        ClusterState run_best = state;
        for (int it = 0; it < max_iter; ++it) {
            ClusterState next = assign_step(state, sample, metric, rng);
            const bool fixed_point = next.partition == state.partition;
            state = std::move(next);
            if (state.objective < run_best.objective) run_best = state;
            if (fixed_point) {
                run_best.converged = true;
                run_best.iteration = state.iteration;
                break;
            }
        }
        if (run_best.objective < best_objective) {
            best_objective = run_best.objective;
            best = std::move(run_best);
        }
    }
    return {best.partition, best};
}

long cluster_test_statistic(const Partition& partition, const MatchedSample& sample) {
    if (partition.size() != sample.num_sets)
        throw InvalidInput("partition does not match the sample");
    long t = 0;
    for (std::size_t i = 0; i < sample.num_sets; ++i)
        if (sample.treated_slot(i) == partition.pi1_slot[i]) ++t;
    return t;
}

}  // namespace matchdiag
