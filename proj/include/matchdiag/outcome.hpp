#pragma once

#include <vector>

#include "matchdiag/model.hpp"

namespace matchdiag {

// Discordant-pair summary for McNemar-style analysis of a binary
// outcome: D pairs whose outcomes differ, of which treated_positive had
// the event in the treated unit.
struct DiscordantSummary {
    long discordant = 0;        // D
    long treated_positive = 0;  // T+
};

// Requires binary outcomes and matched pairs (K = 1).
DiscordantSummary discordant_summary(const MatchedSample& matched);

enum class OutcomeSide { greater, less };

// Worst-case one-sided McNemar p-value at sensitivity level gamma:
// binomial tail over discordant pairs at success probability
// gamma/(1+gamma) (side = greater) or 1/(1+gamma) (side = less).
// gamma = 1 is the exact one-sided McNemar test. D = 0 returns 1.
double mcnemar_gamma_bound(const DiscordantSummary& summary, double gamma, OutcomeSide side);

struct OutcomeReportRow {
    double gamma = 1.0;
    double assumption_p_exact = 1.0;       // testing the biased randomization assumption
    double assumption_p_asymptotic = 1.0;
    double outcome_p = 1.0;                // bounded outcome-analysis p-value
    bool is_rsv_row = false;
};

struct OutcomeReport {
    std::vector<OutcomeReportRow> rows;
    double rsv = 1.0;
    double headline_p = 1.0;  // outcome p-value at gamma = rsv
    OutcomeSide side = OutcomeSide::greater;
    DiscordantSummary summary;
    bool no_discordant_pairs = false;
};

// Two-panel report juxtaposing assumption-test bounding p-values and
// outcome bounding p-values across gamma, with the gamma = rsv row
// highlighted. `t` is the clustering test statistic of the same matched
// sample. Throws InvalidInput for non-binary outcomes (use the
// Hodges-Lehmann path for continuous outcomes).
OutcomeReport outcome_report(const MatchedSample& matched, long t,
                             const std::vector<double>& gammas, double rsv,
                             OutcomeSide side = OutcomeSide::greater);

}  // namespace matchdiag
