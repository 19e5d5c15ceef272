#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "matchdiag/cluster.hpp"
#include "matchdiag/rng.hpp"

using namespace matchdiag;

namespace {

// builds a matched sample directly from unit coordinates; treated_slot
// picks which unit in each set carries the label
MatchedSample make_sample(const std::vector<std::vector<Vector>>& sets,
                          const std::vector<std::size_t>& treated_slots) {
    MatchedSample s;
    s.num_sets = sets.size();
    s.controls_per_set = sets.front().size() - 1;
    s.covariate_dim = sets.front().front().size();
    s.covariates = RowMatrix(s.num_units(), s.covariate_dim);
    s.treatment.assign(s.num_units(), 0);
    s.unit_ids.resize(s.num_units());
    for (std::size_t k = 0; k < s.covariate_dim; ++k)
        s.covariate_names.push_back("x" + std::to_string(k + 1));
    for (std::size_t i = 0; i < s.num_sets; ++i) {
        s.set_ids.push_back("s" + std::to_string(i));
        for (std::size_t j = 0; j < s.set_size(); ++j) {
            const std::size_t row = s.unit_index(i, j);
            for (std::size_t k = 0; k < s.covariate_dim; ++k)
                s.covariates(row, k) = sets[i][j][k];
            s.treatment[row] = (j == treated_slots[i]) ? 1 : 0;
        }
    }
    s.validate();
    return s;
}

MatchedSample random_pairs(Rng& rng, std::size_t num_sets, std::size_t d,
                           std::size_t set_size = 2) {
    std::vector<std::vector<Vector>> sets(num_sets);
    std::vector<std::size_t> treated(num_sets);
    for (std::size_t i = 0; i < num_sets; ++i) {
        for (std::size_t j = 0; j < set_size; ++j) {
            Vector x(d);
            for (auto& v : x) v = rng.normal();
            sets[i].push_back(x);
        }
        treated[i] = rng.uniform_below(set_size);
    }
    return make_sample(sets, treated);
}

// exhaustive constrained optimum over all set_size^I slot choices
double brute_force_objective(const MatchedSample& s) {
    const std::size_t set_size = s.set_size();
    double best = std::numeric_limits<double>::infinity();
    Partition p;
    p.pi1_slot.assign(s.num_sets, 0);
    while (true) {
        best = std::min(best, partition_objective(p, s, nullptr));
        std::size_t i = 0;
        while (i < s.num_sets) {
            if (++p.pi1_slot[i] < set_size) break;
            p.pi1_slot[i] = 0;
            ++i;
        }
        if (i == s.num_sets) break;
    }
    return best;
}

}  // namespace

TEST_CASE("init_partition: one pair is an even coin over seeds") {
    Rng data_rng(1);
    MatchedSample s = random_pairs(data_rng, 1, 2);
    int slot0 = 0;
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
        Rng rng(derive_stream(seed, 0));
        ClusterState st = init_partition(s, rng);
        if (st.partition.pi1_slot[0] == 0) ++slot0;
    }
    CHECK(slot0 > 860);
    CHECK(slot0 < 1140);
}

TEST_CASE("init_partition is deterministic for a fixed seed") {
    Rng data_rng(2);
    MatchedSample s = random_pairs(data_rng, 30, 3);
    Rng r1(42), r2(42);
    CHECK(init_partition(s, r1).partition == init_partition(s, r2).partition);
}

TEST_CASE("init_partition satisfies the constraint at I=100") {
    Rng data_rng(3);
    MatchedSample s = random_pairs(data_rng, 100, 2);
    Rng rng(7);
    ClusterState st = init_partition(s, rng);
    CHECK(st.partition.size() == 100);
    for (auto slot : st.partition.pi1_slot) CHECK(slot <= 1);
}

TEST_CASE("assign_step: units sitting on the centers separate cleanly") {
    MatchedSample s = make_sample({{{0.0, 0.0}, {10.0, 0.0}}}, {0});
    ClusterState st;
    st.partition.pi1_slot = {1};
    st.center1 = {0.0, 0.0};
    st.center2 = {10.0, 0.0};
    Rng rng(5);
    ClusterState next = assign_step(st, s, nullptr, rng);
    CHECK(next.partition.pi1_slot[0] == 0);
}

TEST_CASE("assign_step: both units nearer c1 resolves equiprobably") {
    MatchedSample s = make_sample({{{0.1, 0.0}, {-0.1, 0.0}}}, {0});
    ClusterState st;
    st.partition.pi1_slot = {0};
    st.center1 = {0.0, 0.0};
    st.center2 = {100.0, 0.0};
    int first = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        Rng rng(derive_stream(seed, 3));
        ClusterState next = assign_step(st, s, nullptr, rng);
        if (next.partition.pi1_slot[0] == 0) ++first;
    }
    CHECK(first > 450);
    CHECK(first < 550);
}

TEST_CASE("assign_step: K=2 set with a single c1-preferring unit") {
    MatchedSample s = make_sample({{{0.0, 0.0}, {10.0, 0.0}, {11.0, 1.0}}}, {0});
    ClusterState st;
    st.partition.pi1_slot = {2};
    st.center1 = {0.0, 0.0};
    st.center2 = {10.0, 0.0};
    Rng rng(5);
    ClusterState next = assign_step(st, s, nullptr, rng);
    CHECK(next.partition.pi1_slot[0] == 0);
}

TEST_CASE("well-separated clouds converge in a few iterations") {
    // pairs straddle two tight clouds at distance 100
    Rng rng(11);
    std::vector<std::vector<Vector>> sets;
    std::vector<std::size_t> treated;
    for (int i = 0; i < 20; ++i) {
        Vector a{0.0 + 0.01 * rng.normal(), 0.01 * rng.normal()};
        Vector b{100.0 + 0.01 * rng.normal(), 0.01 * rng.normal()};
        sets.push_back({a, b});
        treated.push_back(rng.uniform_below(2));
    }
    MatchedSample s = make_sample(sets, treated);
    auto [partition, state] = run_constrained_kmeans(s, nullptr, 99, 100, 5);
    // every set's Pi1 member on the same side
    const bool first_side_low = s.covariates(s.unit_index(0, partition.pi1_slot[0]), 0) < 50.0;
    for (std::size_t i = 0; i < s.num_sets; ++i) {
        const double x = s.covariates(s.unit_index(i, partition.pi1_slot[i]), 0);
        CHECK((x < 50.0) == first_side_low);
    }
    CHECK(state.converged);
    CHECK(state.iteration <= 3);
}

TEST_CASE("all units identical: constraint holds, result seed-determined") {
    std::vector<std::vector<Vector>> sets(8, {{1.0, 2.0}, {1.0, 2.0}});
    std::vector<std::size_t> treated(8, 0);
    MatchedSample s = make_sample(sets, treated);
    auto [p1, st1] = run_constrained_kmeans(s, nullptr, 123, 100, 4);
    auto [p2, st2] = run_constrained_kmeans(s, nullptr, 123, 100, 4);
    CHECK(p1 == p2);
    CHECK(p1.size() == 8);
    CHECK(st1.objective == st2.objective);
}

TEST_CASE("objective matches the exhaustive constrained optimum") {
    Rng rng(314159);
    int exact_hits = 0;
    const int instances = 20;
    for (int inst = 0; inst < instances; ++inst) {
        const std::size_t I = 4 + rng.uniform_below(4);  // 4..7
        MatchedSample s = random_pairs(rng, I, 2);
        auto [partition, state] = run_constrained_kmeans(s, nullptr, 1000 + inst, 100, 25);
        const double best = brute_force_objective(s);
        CHECK(state.objective >= best - 1e-9);
        CHECK(state.objective <= best * 1.05 + 1e-9);
        if (state.objective <= best + 1e-9 * (1.0 + best)) ++exact_hits;
    }
    CHECK(exact_hits >= instances - 1);
}

TEST_CASE("test statistic counts treated Pi1 members") {
    Rng rng(7);
    MatchedSample s = random_pairs(rng, 12, 2);
    Partition all_treated, all_control;
    for (std::size_t i = 0; i < s.num_sets; ++i) {
        all_treated.pi1_slot.push_back(static_cast<std::uint32_t>(s.treated_slot(i)));
        all_control.pi1_slot.push_back(static_cast<std::uint32_t>(1 - s.treated_slot(i)));
    }
    CHECK(cluster_test_statistic(all_treated, s) == 12);
    CHECK(cluster_test_statistic(all_control, s) == 0);
}

TEST_CASE("Monte-Carlo null mean of t matches Binomial(I,1/2)") {
    // fresh Assumption-1 instance per seed: both units of a pair drawn
    // from the same distribution, treated slot assigned by a fair coin
    double sum_t = 0.0;
    const int reps = 2000;
    Rng rng(271828);
    for (int rep = 0; rep < reps; ++rep) {
        MatchedSample s = random_pairs(rng, 20, 2);
        auto [partition, state] = run_constrained_kmeans(s, nullptr, derive_stream(5, rep), 100, 3);
        sum_t += static_cast<double>(cluster_test_statistic(partition, s));
    }
    const double mean_t = sum_t / reps;
    CHECK(mean_t == doctest::Approx(10.0).epsilon(0.07));
}

TEST_CASE("label-blindness: permuting treatment labels leaves the partition unchanged") {
    Rng rng(100);
    for (int rep = 0; rep < 10; ++rep) {
        MatchedSample s = random_pairs(rng, 15, 3, 3);
        auto [p1, st1] = run_constrained_kmeans(s, nullptr, 42 + rep, 100, 8);
        MatchedSample permuted = s;
        for (std::size_t i = 0; i < s.num_sets; ++i) {
            const std::size_t new_slot = rng.uniform_below(s.set_size());
            for (std::size_t j = 0; j < s.set_size(); ++j)
                permuted.treatment[permuted.unit_index(i, j)] = (j == new_slot) ? 1 : 0;
        }
        auto [p2, st2] = run_constrained_kmeans(permuted, nullptr, 42 + rep, 100, 8);
        CHECK(p1 == p2);
        CHECK(st1.objective == st2.objective);
    }
}

TEST_CASE("determinism and restart monotonicity") {
    Rng rng(2024);
    MatchedSample s = random_pairs(rng, 25, 4);
    auto [p1, st1] = run_constrained_kmeans(s, nullptr, 77, 100, 10);
    auto [p2, st2] = run_constrained_kmeans(s, nullptr, 77, 100, 10);
    CHECK(p1 == p2);
    CHECK(st1.objective == st2.objective);

    // the first r restart streams coincide, so best-of-more can only improve
    auto [p5, st5] = run_constrained_kmeans(s, nullptr, 77, 100, 5);
    auto [p1r, st1r] = run_constrained_kmeans(s, nullptr, 77, 100, 1);
    CHECK(st1.objective <= st5.objective + 1e-15);
    CHECK(st5.objective <= st1r.objective + 1e-15);
}

TEST_CASE("argument validation") {
    Rng rng(1);
    MatchedSample s = random_pairs(rng, 3, 2);
    CHECK_THROWS_AS(run_constrained_kmeans(s, nullptr, 1, 0, 1), InvalidInput);
    CHECK_THROWS_AS(run_constrained_kmeans(s, nullptr, 1, 10, 0), InvalidInput);
    Partition wrong;
    wrong.pi1_slot = {0};
    CHECK_THROWS_AS(cluster_test_statistic(wrong, s), InvalidInput);
}
