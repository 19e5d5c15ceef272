#include "matchdiag/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "matchdiag/cluster.hpp"
#include "matchdiag/infer.hpp"
#include "matchdiag/rng.hpp"

namespace matchdiag {

std::string matcher_name(MatcherKind m) {
    switch (m) {
        case MatcherKind::maha: return "maha";
        case MatcherKind::pscore: return "pscore";
        case MatcherKind::pscore_full: return "pscore-full";
        case MatcherKind::opt: return "opt";
        case MatcherKind::nn: return "nn";
    }
    return "unknown";
}

std::string clusterer_name(ClustererKind c) {
    return c == ClustererKind::vanilla ? "vanilla" : "metric";
}

Cohort generate_cohort(std::size_t n, std::size_t d, double c, std::uint64_t seed) {
    if (n < 10) throw InvalidInput("generate_cohort: n must be at least 10");
    if (d < 3) throw InvalidInput("generate_cohort: the outcome model needs d >= 3");

    Rng rng(seed);
    Cohort cohort;
    cohort.covariates = RowMatrix(n, d);
    cohort.treatment.resize(n);
    cohort.outcome = Vector(n, 0.0);
    for (std::size_t k = 0; k < d; ++k)
        cohort.covariate_names.push_back("x" + std::to_string(k + 1));

    for (std::size_t i = 0; i < n; ++i) {
        const bool treated = rng.bernoulli(1.0 / 3.0);
        cohort.treatment[i] = treated ? 1 : 0;
        for (std::size_t k = 0; k < d; ++k) {
            double x = rng.normal();
            if (k == 0 && treated) x += c;
            cohort.covariates(i, k) = x;
        }
        const double noise = rng.normal();
        const double r_control = cohort.covariates(i, 0) * cohort.covariates(i, 0) +
                                 0.5 * cohort.covariates(i, 1) - cohort.covariates(i, 2) + noise;
        (*cohort.outcome)[i] = treated ? r_control + 2.0 : r_control;
    }
    return cohort;
}

double hodges_lehmann(const MatchedSample& matched) {
    if (matched.controls_per_set != 1)
        throw InvalidInput("hodges_lehmann: requires matched pairs (K = 1)");
    if (!matched.outcomes) throw InvalidInput("hodges_lehmann: outcomes are missing");

    const std::size_t n = matched.num_sets;
    Vector diffs(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t treated = matched.unit_index(i, matched.treated_slot(i));
        const std::size_t control = matched.unit_index(i, 1 - matched.treated_slot(i));
        diffs[i] = (*matched.outcomes)[treated] - (*matched.outcomes)[control];
    }
    Vector walsh;
    walsh.reserve(n * (n + 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) walsh.push_back(0.5 * (diffs[i] + diffs[j]));
    std::sort(walsh.begin(), walsh.end());
    const std::size_t m = walsh.size();
    return (m % 2 == 1) ? walsh[m / 2] : 0.5 * (walsh[m / 2 - 1] + walsh[m / 2]);
}

namespace {

SimRepRecord run_one_rep(const SimCellConfig& config, int rep) {
    SimRepRecord rec;
    rec.rep = rep;
    rec.rep_seed = derive_stream(config.seed, static_cast<std::uint64_t>(rep));
    try {
        const std::uint64_t cohort_seed = derive_stream(rec.rep_seed, 0);
        const std::uint64_t cluster_seed = derive_stream(rec.rep_seed, 1);

        Cohort cohort = generate_cohort(config.n, config.d, config.c, cohort_seed);

        MatchOptions mopts;
        mopts.caliper_sd = config.caliper_sd;
        mopts.robust_ranks = config.robust_ranks;
        switch (config.matcher) {
            case MatcherKind::maha: mopts.distance = MatchDistance::mahalanobis; break;
            case MatcherKind::pscore:
                mopts.distance = MatchDistance::pscore;
                // the score model omits the shifted coordinate (see MatcherKind)
                for (std::size_t k = 1; k < config.d; ++k) mopts.score_columns.push_back(k);
                break;
            case MatcherKind::pscore_full: mopts.distance = MatchDistance::pscore; break;
            case MatcherKind::opt:
                mopts.distance = MatchDistance::mahalanobis_within_pscore_caliper;
                break;
            case MatcherKind::nn:
                mopts.distance = MatchDistance::mahalanobis;
                mopts.greedy = true;
                break;
        }
        MatchedSample matched = optimal_pair_match(cohort, mopts);

        BalanceSummary balance = balance_table(cohort, matched);
        rec.smd_x1 = balance.smd_x1;
        rec.smd_median = balance.smd_median;

        MatchedSample test_sample = matched;
        if (config.standardize_before_test) test_sample = standardize(matched).first;

        Partition partition;
        if (config.clusterer == ClustererKind::vanilla) {
            auto [part, state] = run_constrained_kmeans(test_sample, nullptr, cluster_seed,
                                                        config.max_iter, config.restarts);
            partition = std::move(part);
        } else {
            MetricKmeansResult res = run_metric_kmeans(test_sample, cluster_seed,
                                                       config.metric_form, config.max_iter,
                                                       config.restarts);
            partition = std::move(res.partition);
            rec.euclidean_fallback = res.euclidean_fallback;
        }

        rec.t = cluster_test_statistic(partition, matched);
        rec.num_sets = static_cast<long>(matched.num_sets);
        const long K = static_cast<long>(matched.controls_per_set);
        rec.p_exact = bounding_p_two_sided(rec.num_sets, K, rec.t, 1.0, PValueMode::exact);
        rec.p_asymptotic =
            bounding_p_two_sided(rec.num_sets, K, rec.t, 1.0, PValueMode::asymptotic);
        rec.rejected = rec.p_exact <= config.alpha;
        rec.rsv = residual_sensitivity_value(rec.num_sets, K, rec.t, config.alpha,
                                             PValueMode::exact);
        rec.hl = hodges_lehmann(matched);
        rec.ok = true;
    } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
    }
    return rec;
}

}  // namespace

SimCellResult run_cell(const SimCellConfig& config) {
    if (config.reps < 1) throw InvalidInput("run_cell: reps must be >= 1");
    SimCellResult result;
    result.config = config;
    result.records.resize(config.reps);

    const int jobs = std::max(1, config.jobs);
    if (jobs == 1) {
        for (int rep = 0; rep < config.reps; ++rep)
            result.records[rep] = run_one_rep(config, rep);
    } else {
        std::atomic<int> next{0};
        auto worker = [&]() {
            while (true) {
                const int rep = next.fetch_add(1);
                if (rep >= config.reps) break;
                result.records[rep] = run_one_rep(config, rep);
            }
        };
        std::vector<std::thread> pool;
        for (int w = 0; w < jobs; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    // aggregate in rep order, so the result is worker-count independent
    double hl_sum = 0.0, mse_sum = 0.0, rsv_sum = 0.0, smd1_sum = 0.0, smdm_sum = 0.0;
    for (const auto& rec : result.records) {
        if (!rec.ok) continue;
        ++result.reps_ok;
        if (rec.rejected) ++result.rejections;
        hl_sum += rec.hl;
        mse_sum += (rec.hl - 2.0) * (rec.hl - 2.0);
        rsv_sum += rec.rsv;
        smd1_sum += rec.smd_x1;
        smdm_sum += rec.smd_median;
    }
    if (result.reps_ok > 0) {
        const double n_ok = static_cast<double>(result.reps_ok);
        result.power = static_cast<double>(result.rejections) / n_ok;
        result.hl_mean = hl_sum / n_ok;
        result.mse = mse_sum / n_ok;
        result.rsv_mean = rsv_sum / n_ok;
        result.smd_x1_mean = smd1_sum / n_ok;
        result.smd_median_mean = smdm_sum / n_ok;
    }
    return result;
}

}  // namespace matchdiag
