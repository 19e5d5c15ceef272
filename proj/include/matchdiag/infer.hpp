#pragma once

#include <vector>

#include "matchdiag/model.hpp"
#include "matchdiag/numerics.hpp"

namespace matchdiag {

enum class PValueMode { exact, asymptotic };
enum class TailSide { upper, lower };

// Centering of the two-sided statistic (t - center)^2. For pairs both
// choices coincide at I/2. For K >= 2 controls the `paper` variant keeps
// the I/2 centering of the pairs formula while `centered` uses the null
// mean I/(K+1); `centered` is the default.
enum class TwoSidedCentering { centered, paper };

// Exact two-sided p-value under the randomization null
// |Pi1 ^ T| ~ Binomial(I, 1/(K+1)).
double null_p_two_sided(long num_sets, long controls_per_set, long t,
                        TwoSidedCentering centering = TwoSidedCentering::centered);

// Worst-case one-sided p-value at sensitivity level gamma.
// Upper tail uses success probability gamma/(K+gamma), lower tail
// 1/(1+K*gamma). gamma = 1 reduces to the randomization null.
double bounding_p_one_sided(long num_sets, long controls_per_set, long t, double gamma,
                            TailSide side, PValueMode mode);

// Worst-case two-sided p-value: upper tail at center + |t-center| plus
// lower tail at center - |t-center|, capped at 1.
double bounding_p_two_sided(long num_sets, long controls_per_set, long t, double gamma,
                            PValueMode mode,
                            TwoSidedCentering centering = TwoSidedCentering::centered);

// Smallest gamma >= 1 at which the two-sided bounding p-value reaches
// alpha; exactly 1 when the randomization null is already not rejected.
double residual_sensitivity_value(long num_sets, long controls_per_set, long t, double alpha,
                                  PValueMode mode,
                                  TwoSidedCentering centering = TwoSidedCentering::centered);

std::vector<GammaCurvePoint> gamma_curve(long num_sets, long controls_per_set, long t,
                                         const std::vector<double>& gammas,
                                         TwoSidedCentering centering = TwoSidedCentering::centered);

// Quantile-form decision of the clustering test: reject when t falls
// outside [c_{alpha/2}, c_{1-alpha/2}] of Binomial(I, 1/(K+1)).
bool quantile_decision_reject(long num_sets, long controls_per_set, long t, double alpha);

}  // namespace matchdiag
