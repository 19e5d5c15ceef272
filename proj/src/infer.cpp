#include "matchdiag/infer.hpp"

#include <algorithm>
#include <cmath>

namespace matchdiag {

namespace {

void check_args(long num_sets, long controls_per_set, long t, double gamma) {
    if (num_sets < 1) throw InvalidInput("num_sets must be positive");
    if (controls_per_set < 1) throw InvalidInput("controls_per_set must be positive");
    if (t < 0 || t > num_sets)
        throw InvalidInput("test statistic t out of range [0, I]");
    if (gamma < 1.0) throw InvalidInput("gamma must be >= 1");
}

double center_of(long num_sets, long controls_per_set, TwoSidedCentering centering) {
    if (centering == TwoSidedCentering::paper) return static_cast<double>(num_sets) / 2.0;
    return static_cast<double>(num_sets) / static_cast<double>(controls_per_set + 1);
}

// P(X >= threshold) for real-valued threshold
double tail_upper(long n, double p, double threshold, PValueMode mode, double sd_num) {
    if (mode == PValueMode::exact)
        return binom_sf(n, p, static_cast<long>(std::ceil(threshold - 1e-9)));
    const double mean = static_cast<double>(n) * p;
    return 1.0 - normal_cdf((threshold - mean) / sd_num);
}

// P(X <= threshold) for real-valued threshold
double tail_lower(long n, double p, double threshold, PValueMode mode, double sd_num) {
    if (mode == PValueMode::exact)
        return binom_cdf(n, p, static_cast<long>(std::floor(threshold + 1e-9)));
    const double mean = static_cast<double>(n) * p;
    return normal_cdf((threshold - mean) / sd_num);
}

}  // namespace

double bounding_p_one_sided(long num_sets, long controls_per_set, long t, double gamma,
                            TailSide side, PValueMode mode) {
    check_args(num_sets, controls_per_set, t, gamma);
    const double I = static_cast<double>(num_sets);
    const double K = static_cast<double>(controls_per_set);
    if (side == TailSide::upper) {
        const double p = gamma / (K + gamma);
        const double sd = std::sqrt(I * K * gamma / ((K + gamma) * (K + gamma)));
        return std::min(tail_upper(num_sets, p, static_cast<double>(t), mode, sd), 1.0);
    }
    const double p = 1.0 / (1.0 + K * gamma);
    const double sd = std::sqrt(I * K * gamma / ((1.0 + K * gamma) * (1.0 + K * gamma)));
    return std::min(tail_lower(num_sets, p, static_cast<double>(t), mode, sd), 1.0);
}

double bounding_p_two_sided(long num_sets, long controls_per_set, long t, double gamma,
                            PValueMode mode, TwoSidedCentering centering) {
    check_args(num_sets, controls_per_set, t, gamma);
    const double I = static_cast<double>(num_sets);
    const double K = static_cast<double>(controls_per_set);
    const double center = center_of(num_sets, controls_per_set, centering);
    const double dev = std::fabs(static_cast<double>(t) - center);
    const double hi = center + dev;
    const double lo = center - dev;

    const double p_up = gamma / (K + gamma);
    const double sd_up = std::sqrt(I * K * gamma / ((K + gamma) * (K + gamma)));
    const double p_lo = 1.0 / (1.0 + K * gamma);
    const double sd_lo = std::sqrt(I * K * gamma / ((1.0 + K * gamma) * (1.0 + K * gamma)));

    const double upper = tail_upper(num_sets, p_up, hi, mode, sd_up);
    const double lower = tail_lower(num_sets, p_lo, lo, mode, sd_lo);
    return std::min(upper + lower, 1.0);
}

double null_p_two_sided(long num_sets, long controls_per_set, long t,
                        TwoSidedCentering centering) {
    return bounding_p_two_sided(num_sets, controls_per_set, t, 1.0, PValueMode::exact,
                                centering);
}

double residual_sensitivity_value(long num_sets, long controls_per_set, long t, double alpha,
                                  PValueMode mode, TwoSidedCentering centering) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must lie in (0,1)");
    check_args(num_sets, controls_per_set, t, 1.0);

    auto p_at = [&](double gamma) {
        return bounding_p_two_sided(num_sets, controls_per_set, t, gamma, mode, centering);
    };

    if (p_at(1.0) >= alpha) return 1.0;

    // find an upper bracket by doubling; p -> 1 as gamma -> infinity
    double hi = 2.0;
    while (p_at(hi) < alpha) {
        hi *= 2.0;
        if (hi > 64.0)
            throw Error("residual_sensitivity_value: bounding p-value failed to reach alpha "
                        "by gamma = 64; this should be impossible");
    }

    // bisection with a monotonicity check on evaluated points
    double lo = hi / 2.0 < 1.0 ? 1.0 : hi / 2.0;
    double p_lo = p_at(lo);
    double p_hi = p_at(hi);
    bool monotone = p_lo <= p_hi + 1e-12;
    while (hi - lo > 1e-4 && monotone) {
        const double mid = 0.5 * (lo + hi);
        const double p_mid = p_at(mid);
        if (p_mid < p_lo - 1e-12 || p_mid > p_hi + 1e-12) {
            monotone = false;
            break;
        }
        if (p_mid >= alpha) {
            hi = mid;
            p_hi = p_mid;
        } else {
            lo = mid;
            p_lo = p_mid;
        }
    }
    if (monotone) return hi;

    // non-monotone observation: fall back to a grid scan
    for (double gamma = 1.0; gamma <= 64.0; gamma += 1e-3)
        if (p_at(gamma) >= alpha) return gamma;
    throw Error("residual_sensitivity_value: grid scan failed to reach alpha");
}

std::vector<GammaCurvePoint> gamma_curve(long num_sets, long controls_per_set, long t,
                                         const std::vector<double>& gammas,
                                         TwoSidedCentering centering) {
    std::vector<GammaCurvePoint> curve;
    curve.reserve(gammas.size());
    for (double g : gammas) {
        GammaCurvePoint pt;
        pt.gamma = g;
        pt.p_exact =
            bounding_p_two_sided(num_sets, controls_per_set, t, g, PValueMode::exact, centering);
        pt.p_asymptotic = bounding_p_two_sided(num_sets, controls_per_set, t, g,
                                               PValueMode::asymptotic, centering);
        curve.push_back(pt);
    }
    return curve;
}

bool quantile_decision_reject(long num_sets, long controls_per_set, long t, double alpha) {
    check_args(num_sets, controls_per_set, t, 1.0);
    const double p = 1.0 / static_cast<double>(controls_per_set + 1);
    // c_q = smallest integer with P(X <= c_q) >= q
    auto quantile = [&](double q) {
        for (long c = 0; c <= num_sets; ++c)
            if (binom_cdf(num_sets, p, c) >= q) return c;
        return num_sets;
    };
    const long c_low = quantile(alpha / 2.0);
    const long c_high = quantile(1.0 - alpha / 2.0);
    return t < c_low || t > c_high;
}

}  // namespace matchdiag
