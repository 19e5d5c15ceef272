#include "matchdiag/matching.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "csv_util.hpp"

namespace matchdiag {

std::size_t Cohort::num_treated() const {
    std::size_t n = 0;
    for (auto z : treatment) n += z;
    return n;
}

void Cohort::validate() const {
    if (covariates.rows() != treatment.size())
        throw InvalidInput("cohort arrays are inconsistent");
    const std::size_t nt = num_treated();
    if (nt == 0 || nt == treatment.size())
        throw InvalidInput("cohort needs at least one treated and one control unit");
    for (double v : covariates.data())
        if (!std::isfinite(v)) throw InvalidInput("cohort has non-finite covariates");
}

Cohort parse_cohort_csv_text(const std::string& text, const CsvOptions& opts,
                             const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw ParseError(ParseError::Kind::BadFile, origin + ": empty file");
    const auto header = csv::split_line(line);
    std::map<std::string, std::size_t> col_of;
    for (std::size_t c = 0; c < header.size(); ++c) col_of[csv::trim(header[c])] = c;
    if (!col_of.count("treated"))
        throw ParseError(ParseError::Kind::MissingColumn,
                         origin + ": missing required column 'treated'");
    const std::size_t treated_col = col_of["treated"];
    const auto outcome_it = col_of.find("outcome");

    std::vector<std::pair<std::string, std::size_t>> cov_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string name = csv::trim(header[c]);
        if (name == "set_id" || name == "treated" || name == "unit_id" || name == "outcome")
            continue;
        if (opts.covariate_spec.empty()) {
            cov_cols.emplace_back(name, c);
        } else {
            for (const auto& spec : opts.covariate_spec) {
                if (csv::glob_match(spec, name)) {
                    cov_cols.emplace_back(name, c);
                    break;
                }
            }
        }
    }
    if (cov_cols.empty())
        throw ParseError(ParseError::Kind::MissingColumn, origin + ": no covariate columns");

    Cohort cohort;
    for (const auto& [name, c] : cov_cols) cohort.covariate_names.push_back(name);
    std::vector<Vector> rows;
    std::vector<double> outcomes;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        const auto fields = csv::split_line(line);
        if (fields.size() < header.size())
            throw ParseError(ParseError::Kind::BadFile,
                             origin + ": row " + std::to_string(line_no) + " is short");
        const double z = csv::parse_double(fields[treated_col], line_no, "treated");
        if (z != 0.0 && z != 1.0)
            throw ParseError(ParseError::Kind::BadFile,
                             origin + ": row " + std::to_string(line_no) +
                                 ": treated must be 0 or 1");
        cohort.treatment.push_back(static_cast<std::uint8_t>(z));
        Vector row;
        row.reserve(cov_cols.size());
        for (const auto& [name, c] : cov_cols)
            row.push_back(csv::parse_double(fields[c], line_no, name));
        rows.push_back(std::move(row));
        if (outcome_it != col_of.end())
            outcomes.push_back(csv::parse_double(fields[outcome_it->second], line_no, "outcome"));
    }
    if (rows.empty()) throw ParseError(ParseError::Kind::BadFile, origin + ": no data rows");

    cohort.covariates = RowMatrix(rows.size(), cov_cols.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t k = 0; k < cov_cols.size(); ++k) cohort.covariates(r, k) = rows[r][k];
    if (outcome_it != col_of.end()) cohort.outcome = Vector(outcomes.begin(), outcomes.end());
    cohort.validate();
    return cohort;
}

Cohort parse_cohort_csv(const std::string& path, const CsvOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(ParseError::Kind::BadFile, "cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_cohort_csv_text(buf.str(), opts, path);
}

namespace {

double logistic(double eta) {
    if (eta >= 0.0) {
        const double e = std::exp(-eta);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

PropensityFit irls(const Cohort& cohort, int max_iters, double ridge, bool detect_separation,
                   bool& diverged) {
    const std::size_t n = cohort.size();
    const std::size_t p = cohort.covariates.cols() + 1;  // intercept first
    PropensityFit fit;
    fit.coefficients.assign(p, 0.0);
    diverged = false;

    auto design = [&](std::size_t i, std::size_t k) {
        return k == 0 ? 1.0 : cohort.covariates(i, k - 1);
    };

    Vector eta(n, 0.0), mu(n, 0.5);
    for (int iter = 0; iter < max_iters; ++iter) {
        fit.iterations = iter + 1;
        SymMatrix xtwx(p);
        Vector xtr(p, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double w = mu[i] * (1.0 - mu[i]);
            const double r = static_cast<double>(cohort.treatment[i]) - mu[i];
            for (std::size_t a = 0; a < p; ++a) {
                const double xa = design(i, a);
                xtr[a] += xa * r;
                for (std::size_t b = a; b < p; ++b)
                    xtwx.set(a, b, xtwx(a, b) + w * xa * design(i, b));
            }
        }
        // the penalty also covers the intercept so the system stays SPD
        // when fitted probabilities saturate
        for (std::size_t a = 0; a < p; ++a) xtwx.set(a, a, xtwx(a, a) + ridge);
        Vector delta;
        try {
            delta = solve_spd(xtwx, xtr);
        } catch (const SingularMatrix&) {
            diverged = true;
            return fit;
        }
        double max_change = 0.0;
        for (std::size_t a = 0; a < p; ++a) {
            fit.coefficients[a] += delta[a];
            max_change = std::max(max_change, std::fabs(delta[a]));
            if (!std::isfinite(fit.coefficients[a])) diverged = true;
        }
        if (diverged) return fit;
        double max_eta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double e = 0.0;
            for (std::size_t a = 0; a < p; ++a) e += design(i, a) * fit.coefficients[a];
            eta[i] = e;
            mu[i] = logistic(e);
            max_eta = std::max(max_eta, std::fabs(e));
        }
        // saturated linear predictor with deviance heading to zero is the
        // separation signature
        if (detect_separation && max_eta > 30.0) {
            diverged = true;
            return fit;
        }
        if (max_change <= 1e-8) {
            fit.converged = true;
            break;
        }
    }
    fit.fitted = mu;
    return fit;
}

}  // namespace

PropensityFit fit_propensity(const Cohort& cohort, int max_irls_iters, double ridge) {
    cohort.validate();
    if (cohort.size() <= cohort.covariates.cols() + 1)
        throw InvalidInput("fit_propensity: need n > d + 1");
    bool diverged = false;
    PropensityFit fit = irls(cohort, max_irls_iters, ridge, /*detect_separation=*/true, diverged);
    if (diverged) {
        // separation: refit with a small ridge and flag it
        bool diverged2 = false;
        fit = irls(cohort, max_irls_iters, std::max(ridge, 1e-4), /*detect_separation=*/false,
                   diverged2);
        fit.ridge_fallback = true;
        if (diverged2)
            throw Error("fit_propensity: IRLS diverged even with ridge fallback");
    }
    return fit;
}

double solve_assignment(const RowMatrix& cost, std::vector<int>& row_to_col) {
    const int rows = static_cast<int>(cost.rows());
    const int cols = static_cast<int>(cost.cols());
    if (rows > cols) throw InvalidInput("solve_assignment: more rows than columns");
    const double inf = std::numeric_limits<double>::infinity();

    // shortest augmenting path with dual potentials, 1-based
    Vector u(rows + 1, 0.0), v(cols + 1, 0.0);
    std::vector<int> assigned_row(cols + 1, 0);
    std::vector<int> way(cols + 1, 0);
    for (int i = 1; i <= rows; ++i) {
        assigned_row[0] = i;
        int j0 = 0;
        Vector minv(cols + 1, inf);
        std::vector<char> used(cols + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = assigned_row[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= cols; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= cols; ++j) {
                if (used[j]) {
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (assigned_row[j0] != 0);
        do {
            const int j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
        } while (j0);
    }

    row_to_col.assign(rows, -1);
    double total = 0.0;
    for (int j = 1; j <= cols; ++j) {
        if (assigned_row[j] > 0) {
            row_to_col[assigned_row[j] - 1] = j - 1;
            total += cost(assigned_row[j] - 1, j - 1);
        }
    }
    return total;
}

namespace {

// within-column average ranks (ties get the mean rank)
RowMatrix rank_transform(const RowMatrix& x) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    RowMatrix out(n, d);
    std::vector<std::size_t> order(n);
    for (std::size_t k = 0; k < d; ++k) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return x(a, k) < x(b, k); });
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && x(order[j + 1], k) == x(order[i], k)) ++j;
            const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t m = i; m <= j; ++m) out(order[m], k) = avg_rank;
            i = j + 1;
        }
    }
    return out;
}

// pooled (treated + control) covariance with n_t + n_c - 2 denominator
SymMatrix pooled_covariance(const RowMatrix& x, const std::vector<std::uint8_t>& z) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    Vector mean_t(d, 0.0), mean_c(d, 0.0);
    double nt = 0.0, nc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto row = x.row(i);
        if (z[i]) {
            ++nt;
            for (std::size_t k = 0; k < d; ++k) mean_t[k] += row[k];
        } else {
            ++nc;
            for (std::size_t k = 0; k < d; ++k) mean_c[k] += row[k];
        }
    }
    for (std::size_t k = 0; k < d; ++k) {
        mean_t[k] /= nt;
        mean_c[k] /= nc;
    }
    SymMatrix cov(d);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = x.row(i);
        const Vector& m = z[i] ? mean_t : mean_c;
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = a; b < d; ++b)
                cov.set(a, b, cov(a, b) + (row[a] - m[a]) * (row[b] - m[b]));
    }
    const double denom = nt + nc - 2.0;
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) cov.set(a, b, cov(a, b) / denom);
    return cov;
}

double sample_sd(const Vector& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (n - 1.0));
}

}  // namespace

MatchedSample optimal_pair_match(const Cohort& cohort, const MatchOptions& opts) {
    cohort.validate();
    std::vector<std::size_t> treated_rows, control_rows;
    for (std::size_t i = 0; i < cohort.size(); ++i)
        (cohort.treatment[i] ? treated_rows : control_rows).push_back(i);
    const std::size_t nt = treated_rows.size();
    const std::size_t nc = control_rows.size();
    if (nt > nc)
        throw InvalidInput("optimal_pair_match: more treated than control units; swap the "
                           "roles of the two groups first");

    const bool need_pscore = opts.distance != MatchDistance::mahalanobis;
    PropensityFit pscore;
    double pscore_sd = 0.0;
    if (need_pscore) {
        if (opts.score_columns.empty()) {
            pscore = fit_propensity(cohort);
        } else {
            Cohort score_cohort;
            score_cohort.treatment = cohort.treatment;
            score_cohort.covariates = RowMatrix(cohort.size(), opts.score_columns.size());
            for (std::size_t k : opts.score_columns)
                if (k >= cohort.covariates.cols())
                    throw InvalidInput("optimal_pair_match: score column index out of range");
            for (std::size_t i = 0; i < cohort.size(); ++i)
                for (std::size_t k = 0; k < opts.score_columns.size(); ++k)
                    score_cohort.covariates(i, k) = cohort.covariates(i, opts.score_columns[k]);
            for (std::size_t k : opts.score_columns)
                score_cohort.covariate_names.push_back(cohort.covariate_names[k]);
            pscore = fit_propensity(score_cohort);
        }
        pscore_sd = sample_sd(pscore.fitted);
    }

    const bool need_maha = opts.distance == MatchDistance::mahalanobis ||
                           opts.distance == MatchDistance::mahalanobis_within_pscore_caliper;
    RowMatrix maha_data;
    SymMatrix maha_inv;
    if (need_maha) {
        maha_data = opts.robust_ranks ? rank_transform(cohort.covariates) : cohort.covariates;
        maha_inv = inv_spd(pooled_covariance(maha_data, cohort.treatment));
    }

    const std::size_t d = cohort.covariates.cols();
    Vector diff(d);
    auto pair_distance = [&](std::size_t t_row, std::size_t c_row) {
        double base = 0.0;
        if (need_maha) {
            auto xt = maha_data.row(t_row);
            auto xc = maha_data.row(c_row);
            for (std::size_t k = 0; k < d; ++k) diff[k] = xt[k] - xc[k];
            base = std::sqrt(std::max(quad_form(maha_inv, diff), 0.0));
        } else {
            base = std::fabs(pscore.fitted[t_row] - pscore.fitted[c_row]);
        }
        if (opts.distance == MatchDistance::mahalanobis_within_pscore_caliper && pscore_sd > 0.0) {
            const double gap_sds =
                std::fabs(pscore.fitted[t_row] - pscore.fitted[c_row]) / pscore_sd;
            if (gap_sds > opts.caliper_sd) base += 1e6 * (gap_sds - opts.caliper_sd);
        }
        return base;
    };

    std::vector<int> row_to_col(nt, -1);
    if (opts.distance == MatchDistance::pscore_rank) {
        // match equal within-group quantiles of the estimated score: sort
        // both groups by score and pair rank for rank
        std::vector<std::size_t> t_order(nt), c_order(nc);
        std::iota(t_order.begin(), t_order.end(), std::size_t{0});
        std::iota(c_order.begin(), c_order.end(), std::size_t{0});
        auto by_score = [&](const std::vector<std::size_t>& rows) {
            return [&, rows](std::size_t a, std::size_t b) {
                const double pa = pscore.fitted[rows[a]], pb = pscore.fitted[rows[b]];
                return pa != pb ? pa < pb : rows[a] < rows[b];
            };
        };
        std::sort(t_order.begin(), t_order.end(), by_score(treated_rows));
        std::sort(c_order.begin(), c_order.end(), by_score(control_rows));
        for (std::size_t r = 0; r < nt; ++r) {
            const double quantile = (static_cast<double>(r) + 0.5) / static_cast<double>(nt);
            const auto pos = std::min(static_cast<std::size_t>(quantile * nc),
                                      nc - 1);
            row_to_col[t_order[r]] = static_cast<int>(c_order[pos]);
        }
    } else if (opts.greedy) {
        std::vector<char> used(nc, 0);
        for (std::size_t r = 0; r < nt; ++r) {
            double best = std::numeric_limits<double>::infinity();
            int best_c = -1;
            for (std::size_t c = 0; c < nc; ++c) {
                if (used[c]) continue;
                const double dist = pair_distance(treated_rows[r], control_rows[c]);
                if (dist < best) {
                    best = dist;
                    best_c = static_cast<int>(c);
                }
            }
            used[best_c] = 1;
            row_to_col[r] = best_c;
        }
    } else {
        RowMatrix cost(nt, nc);
        for (std::size_t r = 0; r < nt; ++r)
            for (std::size_t c = 0; c < nc; ++c)
                cost(r, c) = pair_distance(treated_rows[r], control_rows[c]);
        solve_assignment(cost, row_to_col);
    }

    MatchedSample out;
    out.num_sets = nt;
    out.controls_per_set = 1;
    out.covariate_dim = d;
    out.covariates = RowMatrix(2 * nt, d);
    out.treatment.resize(2 * nt);
    out.unit_ids.resize(2 * nt);
    out.covariate_names = cohort.covariate_names;
    if (cohort.outcome) out.outcomes = Vector(2 * nt, 0.0);

    for (std::size_t i = 0; i < nt; ++i) {
        const std::size_t t_row = treated_rows[i];
        const std::size_t c_row = control_rows[row_to_col[i]];
        out.set_ids.push_back(std::to_string(t_row));
        const std::size_t slot_t = out.unit_index(i, 0);
        const std::size_t slot_c = out.unit_index(i, 1);
        out.treatment[slot_t] = 1;
        out.treatment[slot_c] = 0;
        out.unit_ids[slot_t] = std::to_string(t_row);
        out.unit_ids[slot_c] = std::to_string(c_row);
        for (std::size_t k = 0; k < d; ++k) {
            out.covariates(slot_t, k) = cohort.covariates(t_row, k);
            out.covariates(slot_c, k) = cohort.covariates(c_row, k);
        }
        if (cohort.outcome) {
            (*out.outcomes)[slot_t] = (*cohort.outcome)[t_row];
            (*out.outcomes)[slot_c] = (*cohort.outcome)[c_row];
        }
    }
    out.validate();
    return out;
}

BalanceSummary balance_table(const Cohort& cohort, const MatchedSample& matched) {
    const std::size_t d = cohort.covariates.cols();
    if (matched.covariate_dim != d)
        throw InvalidInput("balance_table: covariate dimension mismatch");

    BalanceSummary summary;
    for (std::size_t k = 0; k < d; ++k) {
        Vector treated_vals, control_vals;
        for (std::size_t i = 0; i < cohort.size(); ++i)
            (cohort.treatment[i] ? treated_vals : control_vals).push_back(cohort.covariates(i, k));
        double mean_t = 0.0, mean_c = 0.0;
        for (double v : treated_vals) mean_t += v;
        for (double v : control_vals) mean_c += v;
        mean_t /= static_cast<double>(treated_vals.size());
        mean_c /= static_cast<double>(control_vals.size());
        const double sd_t = sample_sd(treated_vals);
        const double sd_c = sample_sd(control_vals);
        const double pooled = std::sqrt((sd_t * sd_t + sd_c * sd_c) / 2.0);

        double mean_t_m = 0.0, mean_c_m = 0.0;
        for (std::size_t i = 0; i < matched.num_sets; ++i) {
            for (std::size_t j = 0; j < matched.set_size(); ++j) {
                const std::size_t row = matched.unit_index(i, j);
                if (matched.treatment[row])
                    mean_t_m += matched.covariates(row, k);
                else
                    mean_c_m += matched.covariates(row, k);
            }
        }
        mean_t_m /= static_cast<double>(matched.num_sets);
        mean_c_m /= static_cast<double>(matched.num_sets * matched.controls_per_set);

        BalanceRow row;
        row.covariate = k < cohort.covariate_names.size() ? cohort.covariate_names[k]
                                                          : "x" + std::to_string(k + 1);
        row.mean_treated = mean_t_m;
        row.mean_control_matched = mean_c_m;
        row.smd_before = pooled > 0.0 ? std::fabs(mean_t - mean_c) / pooled : 0.0;
        row.smd_after = pooled > 0.0 ? std::fabs(mean_t_m - mean_c_m) / pooled : 0.0;
        summary.rows.push_back(row);
    }
    summary.smd_x1 = summary.rows.front().smd_after;
    Vector after;
    for (const auto& r : summary.rows) after.push_back(r.smd_after);
    std::sort(after.begin(), after.end());
    const std::size_t m = after.size();
    summary.smd_median =
        (m % 2 == 1) ? after[m / 2] : 0.5 * (after[m / 2 - 1] + after[m / 2]);
    return summary;
}

}  // namespace matchdiag
