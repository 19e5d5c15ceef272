#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "matchdiag/numerics.hpp"

namespace matchdiag {

// I matched sets of K+1 units each, exactly one treated per set. Units are
// stored row-contiguous by set: unit (i, j) lives at row i*(K+1)+j.
struct MatchedSample {
    std::size_t num_sets = 0;         // I
    std::size_t controls_per_set = 0; // K
    std::size_t covariate_dim = 0;    // d
    RowMatrix covariates;             // (I*(K+1)) x d
    std::vector<std::uint8_t> treatment;
    std::vector<std::string> set_ids;  // one per set, input order
    std::vector<std::string> unit_ids; // per unit, may be empty strings
    std::vector<std::string> covariate_names;
    std::optional<Vector> outcomes;   // per unit, aligned with covariates

    std::size_t set_size() const { return controls_per_set + 1; }
    std::size_t num_units() const { return num_sets * set_size(); }
    std::size_t unit_index(std::size_t set, std::size_t slot) const {
        return set * set_size() + slot;
    }
    // slot of the treated unit within a set
    std::size_t treated_slot(std::size_t set) const;

    void validate() const;  // throws ParseError on any invariant violation
};

// Output partition of a constrained clustering run: the slot of the
// one Pi1 member per set. The one-per-set constraint holds by
// construction of the representation.
struct Partition {
    std::vector<std::uint32_t> pi1_slot;  // size I

    std::size_t size() const { return pi1_slot.size(); }
    bool operator==(const Partition&) const = default;
};

struct GammaCurvePoint {
    double gamma = 1.0;
    double p_exact = 1.0;
    double p_asymptotic = 1.0;
};

enum class MetricMode { vanilla, metric_diagonal, metric_full, metric_dform };

std::string metric_mode_name(MetricMode m);

struct TestReport {
    long t = 0;
    long num_sets = 0;         // I
    long controls_per_set = 0; // K
    double p_exact = 1.0;
    double p_asymptotic = 1.0;
    double rsv = 1.0;
    std::vector<GammaCurvePoint> gamma_curve;
    std::uint64_t seed = 0;
    MetricMode metric_mode = MetricMode::vanilla;
    bool euclidean_fallback = false;  // a metric run had degenerate iterations
    std::optional<Vector> dform_weights;
    std::optional<Vector> learned_metric_diag;
};

// Column contract: required `set_id` and `treated`; covariates selected
// explicitly or by glob (default "*" = every remaining numeric column);
// optional `unit_id` and `outcome`.
struct CsvOptions {
    std::vector<std::string> covariate_spec;  // names or globs; empty = all
};

MatchedSample parse_matched_csv(const std::string& path, const CsvOptions& opts = {});
MatchedSample parse_matched_csv_text(const std::string& text, const CsvOptions& opts = {},
                                     const std::string& origin = "<memory>");

void write_matched_csv(const MatchedSample& sample, const std::string& path);
std::string matched_csv_text(const MatchedSample& sample);

struct StandardizeInfo {
    std::vector<std::string> kept_columns;
    Vector means;  // per kept column
    Vector sds;    // population convention, per kept column
    std::vector<std::string> dropped_columns;  // zero variance, with warning
};

// Centers and scales every covariate column to mean 0, SD 1 across all
// units (population SD). Zero-variance columns are dropped, not fatal.
std::pair<MatchedSample, StandardizeInfo> standardize(const MatchedSample& sample);

}  // namespace matchdiag
