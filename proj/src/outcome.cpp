#include "matchdiag/outcome.hpp"

#include <algorithm>
#include <cmath>

#include "matchdiag/infer.hpp"
#include "matchdiag/numerics.hpp"

namespace matchdiag {

DiscordantSummary discordant_summary(const MatchedSample& matched) {
    if (matched.controls_per_set != 1)
        throw InvalidInput("discordant_summary: requires matched pairs (K = 1)");
    if (!matched.outcomes) throw InvalidInput("discordant_summary: outcomes are missing");
    for (double r : *matched.outcomes)
        if (r != 0.0 && r != 1.0)
            throw InvalidInput("outcome analysis needs a binary outcome; use the "
                               "Hodges-Lehmann estimate for continuous outcomes");

    DiscordantSummary s;
    for (std::size_t i = 0; i < matched.num_sets; ++i) {
        const std::size_t treated = matched.unit_index(i, matched.treated_slot(i));
        const std::size_t control = matched.unit_index(i, 1 - matched.treated_slot(i));
        const double rt = (*matched.outcomes)[treated];
        const double rc = (*matched.outcomes)[control];
        if (rt != rc) {
            ++s.discordant;
            if (rt == 1.0) ++s.treated_positive;
        }
    }
    return s;
}

double mcnemar_gamma_bound(const DiscordantSummary& summary, double gamma, OutcomeSide side) {
    if (gamma < 1.0) throw InvalidInput("mcnemar_gamma_bound: gamma must be >= 1");
    if (summary.discordant < 0 || summary.treated_positive < 0 ||
        summary.treated_positive > summary.discordant)
        throw InvalidInput("mcnemar_gamma_bound: invalid discordant summary");
    if (summary.discordant == 0) return 1.0;  // NoDiscordantPairs
    if (side == OutcomeSide::greater)
        return binom_sf(summary.discordant, gamma / (1.0 + gamma), summary.treated_positive);
    return binom_cdf(summary.discordant, 1.0 / (1.0 + gamma), summary.treated_positive);
}

OutcomeReport outcome_report(const MatchedSample& matched, long t,
                             const std::vector<double>& gammas, double rsv, OutcomeSide side) {
    if (rsv < 1.0) throw InvalidInput("outcome_report: rsv must be >= 1");
    OutcomeReport report;
    report.side = side;
    report.rsv = rsv;
    report.summary = discordant_summary(matched);
    report.no_discordant_pairs = report.summary.discordant == 0;

    std::vector<double> grid = gammas;
    const bool rsv_present = std::any_of(grid.begin(), grid.end(), [&](double g) {
        return std::fabs(g - rsv) <= 1e-4;
    });
    if (!rsv_present) grid.push_back(rsv);
    std::sort(grid.begin(), grid.end());

    const long I = static_cast<long>(matched.num_sets);
    const long K = static_cast<long>(matched.controls_per_set);
    for (double gamma : grid) {
        OutcomeReportRow row;
        row.gamma = gamma;
        row.assumption_p_exact = bounding_p_two_sided(I, K, t, gamma, PValueMode::exact);
        row.assumption_p_asymptotic =
            bounding_p_two_sided(I, K, t, gamma, PValueMode::asymptotic);
        row.outcome_p = mcnemar_gamma_bound(report.summary, gamma, side);
        row.is_rsv_row = std::fabs(gamma - rsv) <= 1e-4;
        report.rows.push_back(row);
    }
    report.headline_p = mcnemar_gamma_bound(report.summary, rsv, side);
    return report;
}

}  // namespace matchdiag
