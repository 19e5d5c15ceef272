#pragma once

#include <optional>
#include <string>
#include <vector>

#include "matchdiag/model.hpp"
#include "matchdiag/numerics.hpp"

namespace matchdiag {

// Unmatched study population: covariates, treatment indicator, optional
// outcome, one row per unit.
struct Cohort {
    RowMatrix covariates;  // n x d
    std::vector<std::uint8_t> treatment;
    std::optional<Vector> outcome;
    std::vector<std::string> covariate_names;

    std::size_t size() const { return treatment.size(); }
    std::size_t num_treated() const;
    void validate() const;
};

Cohort parse_cohort_csv(const std::string& path, const CsvOptions& opts = {});
Cohort parse_cohort_csv_text(const std::string& text, const CsvOptions& opts = {},
                             const std::string& origin = "<memory>");

struct PropensityFit {
    Vector coefficients;  // intercept first, then one slope per covariate
    Vector fitted;        // n fitted probabilities
    bool ridge_fallback = false;
    int iterations = 0;
    bool converged = false;
};

// Logistic regression by iteratively reweighted least squares. Detected
// separation triggers an automatic ridge (1e-4) refit, flagged in the
// result rather than failing.
PropensityFit fit_propensity(const Cohort& cohort, int max_irls_iters = 50, double ridge = 0.0);

// pscore minimizes the total |p-hat difference| by optimal assignment;
// pscore_rank pairs equal within-group quantiles of the score instead
// (rank matching).
enum class MatchDistance {
    mahalanobis,
    pscore,
    pscore_rank,
    mahalanobis_within_pscore_caliper,
};

struct MatchOptions {
    MatchDistance distance = MatchDistance::mahalanobis;
    double caliper_sd = 0.2;   // caliper width in propensity-score SDs
    bool robust_ranks = false; // rank-transform columns before the covariance
    bool greedy = false;       // greedy nearest-neighbor instead of optimal
    // covariate columns the score model uses; empty = all. Lets callers
    // study deliberately misspecified score models.
    std::vector<std::size_t> score_columns;
};

// Pairs every treated unit with a distinct control by minimizing the
// total pairwise distance (rectangular assignment). Caliper violations
// are penalized, never removed, so a solution always exists when
// N_t <= N_c.
MatchedSample optimal_pair_match(const Cohort& cohort, const MatchOptions& opts);

struct BalanceRow {
    std::string covariate;
    double mean_treated = 0.0;
    double mean_control_matched = 0.0;
    double smd_before = 0.0;  // absolute, pooled pre-matching SD denominator
    double smd_after = 0.0;
};

struct BalanceSummary {
    std::vector<BalanceRow> rows;
    double smd_x1 = 0.0;      // after-matching absolute SMD of the first covariate
    double smd_median = 0.0;  // median after-matching absolute SMD across covariates
};

BalanceSummary balance_table(const Cohort& cohort, const MatchedSample& matched);

// Exact rectangular assignment (shortest augmenting path with dual
// potentials), rows <= cols. Returns the minimal total cost and fills
// row_to_col.
double solve_assignment(const RowMatrix& cost, std::vector<int>& row_to_col);

}  // namespace matchdiag
