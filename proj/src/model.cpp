#include "matchdiag/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "csv_util.hpp"

namespace matchdiag {

std::string metric_mode_name(MetricMode m) {
    switch (m) {
        case MetricMode::vanilla: return "vanilla";
        case MetricMode::metric_diagonal: return "metric_diagonal";
        case MetricMode::metric_full: return "metric_full";
        case MetricMode::metric_dform: return "metric_dform";
    }
    return "unknown";
}

std::size_t MatchedSample::treated_slot(std::size_t set) const {
    const std::size_t base = set * set_size();
    for (std::size_t j = 0; j < set_size(); ++j)
        if (treatment[base + j] == 1) return j;
    throw ParseError(ParseError::Kind::TreatedCountViolation,
                     "set " + set_ids[set] + " has no treated unit");
}

void MatchedSample::validate() const {
    if (num_sets == 0)
        throw ParseError(ParseError::Kind::BadFile, "sample has no matched sets");
    if (controls_per_set == 0)
        throw ParseError(ParseError::Kind::SetSizeMismatch,
                         "sets must contain at least one control");
    if (covariates.rows() != num_units() || treatment.size() != num_units())
        throw ParseError(ParseError::Kind::BadFile, "sample arrays are inconsistent");
    for (std::size_t i = 0; i < num_sets; ++i) {
        std::size_t treated = 0;
        for (std::size_t j = 0; j < set_size(); ++j)
            treated += treatment[unit_index(i, j)];
        if (treated != 1)
            throw ParseError(ParseError::Kind::TreatedCountViolation,
                             "set " + set_ids[i] + " has " + std::to_string(treated) +
                                 " treated units, expected 1");
    }
    for (double v : covariates.data())
        if (!std::isfinite(v))
            throw ParseError(ParseError::Kind::NonFiniteCovariate,
                             "non-finite covariate value");
}

namespace {

using csv::glob_match;
using csv::parse_double;
using csv::split_line;
using csv::trim;

struct RawUnit {
    std::string unit_id;
    std::uint8_t treated;
    Vector covariates;
    std::optional<double> outcome;
    std::size_t line_no;
};

}  // namespace

MatchedSample parse_matched_csv_text(const std::string& text, const CsvOptions& opts,
                                     const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw ParseError(ParseError::Kind::BadFile, origin + ": empty file");

    const auto header = split_line(line);
    std::map<std::string, std::size_t> col_of;
    for (std::size_t c = 0; c < header.size(); ++c) col_of[trim(header[c])] = c;

    auto require = [&](const std::string& name) {
        auto it = col_of.find(name);
        if (it == col_of.end())
            throw ParseError(ParseError::Kind::MissingColumn,
                             origin + ": missing required column '" + name + "'");
        return it->second;
    };
    const std::size_t set_col = require("set_id");
    const std::size_t treated_col = require("treated");
    const auto unit_it = col_of.find("unit_id");
    const auto outcome_it = col_of.find("outcome");

    // covariate columns: explicit list / globs, or every remaining column
    std::vector<std::pair<std::string, std::size_t>> cov_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string name = trim(header[c]);
        if (name == "set_id" || name == "treated" || name == "unit_id" || name == "outcome")
            continue;
        if (opts.covariate_spec.empty()) {
            cov_cols.emplace_back(name, c);
        } else {
            for (const auto& spec : opts.covariate_spec) {
                if (glob_match(spec, name)) {
                    cov_cols.emplace_back(name, c);
                    break;
                }
            }
        }
    }
    if (!opts.covariate_spec.empty()) {
        for (const auto& spec : opts.covariate_spec) {
            if (spec.find('*') != std::string::npos) continue;
            if (!col_of.count(spec))
                throw ParseError(ParseError::Kind::MissingColumn,
                                 origin + ": missing covariate column '" + spec + "'");
        }
    }
    if (cov_cols.empty())
        throw ParseError(ParseError::Kind::MissingColumn, origin + ": no covariate columns");

    // group rows by set_id, keeping first-appearance order of sets
    std::vector<std::string> set_order;
    std::map<std::string, std::vector<RawUnit>> sets;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_line(line);
        if (fields.size() < header.size())
            throw ParseError(ParseError::Kind::BadFile,
                             origin + ": row " + std::to_string(line_no) + " has " +
                                 std::to_string(fields.size()) + " fields, expected " +
                                 std::to_string(header.size()));
        RawUnit unit;
        unit.line_no = line_no;
        const std::string set_id = trim(fields[set_col]);
        const double z = parse_double(fields[treated_col], line_no, "treated");
        if (z != 0.0 && z != 1.0)
            throw ParseError(ParseError::Kind::BadFile,
                             origin + ": row " + std::to_string(line_no) +
                                 ": treated must be 0 or 1");
        unit.treated = static_cast<std::uint8_t>(z);
        if (unit_it != col_of.end()) unit.unit_id = trim(fields[unit_it->second]);
        if (outcome_it != col_of.end())
            unit.outcome = parse_double(fields[outcome_it->second], line_no, "outcome");
        unit.covariates.reserve(cov_cols.size());
        for (const auto& [name, c] : cov_cols) {
            const double v = parse_double(fields[c], line_no, name);
            if (!std::isfinite(v))
                throw ParseError(ParseError::Kind::NonFiniteCovariate,
                                 origin + ": row " + std::to_string(line_no) +
                                     ": non-finite value in column " + name);
            unit.covariates.push_back(v);
        }
        if (!sets.count(set_id)) set_order.push_back(set_id);
        sets[set_id].push_back(std::move(unit));
    }
    if (set_order.empty())
        throw ParseError(ParseError::Kind::BadFile, origin + ": no data rows");

    // constant set size across sets
    const std::size_t set_size = sets[set_order.front()].size();
    if (set_size < 2)
        throw ParseError(ParseError::Kind::SetSizeMismatch,
                         origin + ": set " + set_order.front() + " has " +
                             std::to_string(set_size) + " units, expected at least 2");
    for (const auto& id : set_order) {
        const auto& units = sets[id];
        if (units.size() < 2)
            throw ParseError(ParseError::Kind::SetSizeMismatch,
                             origin + ": set " + id + " has " + std::to_string(units.size()) +
                                 " units, expected at least 2");
        if (units.size() != set_size)
            throw ParseError(ParseError::Kind::InconsistentK,
                             origin + ": set " + id + " has " + std::to_string(units.size()) +
                                 " units but set " + set_order.front() + " has " +
                                 std::to_string(set_size) +
                                 "; a constant number of controls per set is required");
    }

    MatchedSample sample;
    sample.num_sets = set_order.size();
    sample.controls_per_set = set_size - 1;
    sample.covariate_dim = cov_cols.size();
    sample.covariates = RowMatrix(sample.num_units(), sample.covariate_dim);
    sample.treatment.resize(sample.num_units());
    sample.set_ids = set_order;
    sample.unit_ids.resize(sample.num_units());
    for (const auto& [name, c] : cov_cols) sample.covariate_names.push_back(name);

    const bool has_outcome = outcome_it != col_of.end();
    if (has_outcome) sample.outcomes = Vector(sample.num_units(), 0.0);

    for (std::size_t i = 0; i < sample.num_sets; ++i) {
        const auto& units = sets[set_order[i]];
        std::size_t treated_count = 0;
        for (const auto& u : units) treated_count += u.treated;
        if (treated_count != 1)
            throw ParseError(ParseError::Kind::TreatedCountViolation,
                             origin + ": set " + set_order[i] + " has " +
                                 std::to_string(treated_count) + " treated units, expected 1");
        for (std::size_t j = 0; j < units.size(); ++j) {
            const std::size_t row = sample.unit_index(i, j);
            sample.treatment[row] = units[j].treated;
            sample.unit_ids[row] = units[j].unit_id;
            for (std::size_t k = 0; k < sample.covariate_dim; ++k)
                sample.covariates(row, k) = units[j].covariates[k];
            if (has_outcome) (*sample.outcomes)[row] = *units[j].outcome;
        }
    }
    sample.validate();
    return sample;
}

MatchedSample parse_matched_csv(const std::string& path, const CsvOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError(ParseError::Kind::BadFile, "cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_matched_csv_text(buf.str(), opts, path);
}

std::string matched_csv_text(const MatchedSample& sample) {
    std::ostringstream out;
    out.precision(17);
    out << "set_id,unit_id,treated";
    for (const auto& name : sample.covariate_names) out << ',' << name;
    if (sample.outcomes) out << ",outcome";
    out << '\n';
    for (std::size_t i = 0; i < sample.num_sets; ++i) {
        for (std::size_t j = 0; j < sample.set_size(); ++j) {
            const std::size_t row = sample.unit_index(i, j);
            out << sample.set_ids[i] << ',' << sample.unit_ids[row] << ','
                << int(sample.treatment[row]);
            for (std::size_t k = 0; k < sample.covariate_dim; ++k)
                out << ',' << sample.covariates(row, k);
            if (sample.outcomes) out << ',' << (*sample.outcomes)[row];
            out << '\n';
        }
    }
    return out.str();
}

void write_matched_csv(const MatchedSample& sample, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot open output file: " + path);
    out << matched_csv_text(sample);
}

std::pair<MatchedSample, StandardizeInfo> standardize(const MatchedSample& sample) {
    const std::size_t n = sample.num_units();
    const std::size_t d = sample.covariate_dim;
    StandardizeInfo info;

    Vector mean(d, 0.0), sd(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
        double m = 0.0;
        for (std::size_t r = 0; r < n; ++r) m += sample.covariates(r, k);
        m /= static_cast<double>(n);
        double v = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double c = sample.covariates(r, k) - m;
            v += c * c;
        }
        mean[k] = m;
        sd[k] = std::sqrt(v / static_cast<double>(n));  // population convention
    }

    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < d; ++k) {
        if (sd[k] <= 1e-12 * (1.0 + std::fabs(mean[k]))) {
            info.dropped_columns.push_back(sample.covariate_names[k]);
        } else {
            kept.push_back(k);
            info.kept_columns.push_back(sample.covariate_names[k]);
            info.means.push_back(mean[k]);
            info.sds.push_back(sd[k]);
        }
    }
    if (kept.empty())
        throw InvalidInput("standardize: every covariate column has zero variance");

    MatchedSample out = sample;
    out.covariate_dim = kept.size();
    out.covariate_names = info.kept_columns;
    out.covariates = RowMatrix(n, kept.size());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t kk = 0; kk < kept.size(); ++kk)
            out.covariates(r, kk) =
                (sample.covariates(r, kept[kk]) - info.means[kk]) / info.sds[kk];
    return {std::move(out), std::move(info)};
}

}  // namespace matchdiag
