#pragma once

#include <cstdint>

#include "matchdiag/model.hpp"
#include "matchdiag/numerics.hpp"
#include "matchdiag/rng.hpp"

namespace matchdiag {

// State of one constrained K-means run. The partition representation
// (one Pi1 slot per set) keeps the one-per-set constraint satisfied at
// every iteration by construction.
struct ClusterState {
    Partition partition;
    Vector center1;  // mean of Pi1 under the current partition
    Vector center2;  // mean of Pi2
    int iteration = 0;
    double objective = 0.0;  // within-cluster sum of squared distances
    bool converged = false;
};

// One uniformly random Pi1 slot per set; centers set to the cluster means.
ClusterState init_partition(const MatchedSample& sample, Rng& rng);

// One batch assignment pass against frozen centers, then one center
// update. `metric` is the PSD matrix of the active distance; nullptr
// means Euclidean. Within each set: if exactly one unit is strictly
// nearer to center 1 it joins Pi1; if no unit strictly prefers center 1
// but some are exactly equidistant, the lowest tied slot joins Pi1;
// otherwise the Pi1 member is drawn uniformly at random (the violated
// cannot-link case).
ClusterState assign_step(const ClusterState& state, const MatchedSample& sample,
                         const SymMatrix* metric, Rng& rng);

// Full run: `restarts` independent random initializations, each iterated
// to a partition fixed point or max_iter steps, returning the run with
// the smallest objective (earlier restart wins ties).
std::pair<Partition, ClusterState> run_constrained_kmeans(const MatchedSample& sample,
                                                          const SymMatrix* metric,
                                                          std::uint64_t seed, int max_iter = 100,
                                                          int restarts = 10);

// t = number of sets whose Pi1 member is the treated unit.
long cluster_test_statistic(const Partition& partition, const MatchedSample& sample);

// Objective of a given partition with centers set to the cluster means.
double partition_objective(const Partition& partition, const MatchedSample& sample,
                           const SymMatrix* metric);

}  // namespace matchdiag
