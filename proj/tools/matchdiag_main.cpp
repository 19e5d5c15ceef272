// matchdiag: randomization-assumption diagnostics for matched observational
// data. Subcommands: test, rsv, match, simulate, outcome.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include "matchdiag/cluster.hpp"
#include "matchdiag/infer.hpp"
#include "matchdiag/matching.hpp"
#include "matchdiag/metric.hpp"
#include "matchdiag/model.hpp"
#include "matchdiag/outcome.hpp"
#include "matchdiag/rng.hpp"
#include "matchdiag/simulate.hpp"
#include "matchdiag/version.hpp"

using json = nlohmann::ordered_json;
using namespace matchdiag;

namespace {

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return 0;
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    char buf[8192];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 0x100000001B3ULL;
        }
        if (!in) break;
    }
    return hash;
}

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct Manifest {
    std::string subcommand;
    std::uint64_t seed = 0;
    json flags = json::object();
    std::string input_path;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    json to_json() const {
        json m = json::object();
        m["tool"] = "matchdiag";
        m["version"] = kVersion;
        m["subcommand"] = subcommand;
        m["seed"] = seed;
        if (!input_path.empty()) {
            m["input"] = input_path;
            m["input_digest_fnv1a64"] = hex64(fnv1a64_file(input_path));
        }
        m["flags"] = flags;
        m["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return m;
    }
};

void emit(const json& document, bool to_stdout, const std::string& out_path) {
    if (to_stdout) std::cout << document.dump(2) << "\n";
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw InvalidInput("cannot open output file: " + out_path);
        out << document.dump(2) << "\n";
    }
}

std::vector<double> parse_gamma_grid(const std::string& spec) {
    // "lo:hi:step" or comma list
    std::vector<double> gammas;
    if (spec.find(':') != std::string::npos) {
        double lo, hi, step;
        if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 || step <= 0.0 ||
            lo < 1.0 || hi < lo)
            throw InvalidInput("bad --gamma-grid, expected lo:hi:step with lo >= 1");
        for (double g = lo; g <= hi + 1e-12; g += step) gammas.push_back(g);
        return gammas;
    }
    std::istringstream in(spec);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        const double g = std::stod(tok);
        if (g < 1.0) throw InvalidInput("gamma values must be >= 1");
        gammas.push_back(g);
    }
    if (gammas.empty()) throw InvalidInput("empty gamma list");
    return gammas;
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) out.push_back(tok);
    return out;
}

std::uint64_t random_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

int env_jobs_default() {
    if (const char* env = std::getenv("MATCHDIAG_JOBS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    return 1;
}

// ---- shared test/rsv options ----

struct TestOptions {
    std::string input;
    std::string covariates;
    std::string metric = "none";
    double alpha = 0.05;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int restarts = 10;
    int max_iter = 100;
    bool no_standardize = false;
    std::string centering = "centered";
    std::string decision_rule = "pvalue";
    std::string mode = "exact";
    std::string out;
    bool json_stdout = false;
    int jobs = env_jobs_default();
    bool debug = false;
    long t_override = -1;
    std::string gamma_grid = "1:2:0.01";
    std::string curve_out;
};

void add_test_options(CLI::App* cmd, TestOptions& opt, bool with_rsv_extras) {
    cmd->add_option("-i,--input", opt.input, "matched-sample CSV")->required();
    cmd->add_option("--covariates", opt.covariates,
                    "comma list of covariate columns; '*' globs allowed");
    cmd->add_option("--metric", opt.metric, "clustering metric: none, diag, full, dform")
        ->check(CLI::IsMember({"none", "diag", "full", "dform"}));
    cmd->add_option("--alpha", opt.alpha, "significance level")->check(CLI::Range(1e-9, 1.0));
    cmd->add_option("--seed", opt.seed, "master seed (default: random, printed)")
        ->each([&opt](const std::string&) { opt.seed_given = true; });
    cmd->add_option("--restarts", opt.restarts)->check(CLI::PositiveNumber);
    cmd->add_option("--max-iter", opt.max_iter)->check(CLI::PositiveNumber);
    cmd->add_flag("--no-standardize", opt.no_standardize, "cluster raw covariates");
    cmd->add_option("--two-sided-centering", opt.centering, "centered (null mean) or paper (I/2)")
        ->check(CLI::IsMember({"centered", "paper"}));
    cmd->add_option("--decision", opt.decision_rule, "pvalue or quantile")
        ->check(CLI::IsMember({"pvalue", "quantile"}));
    cmd->add_option("--mode", opt.mode, "p-value mode for the decision: exact or asymptotic")
        ->check(CLI::IsMember({"exact", "asymptotic"}));
    cmd->add_option("-o,--out", opt.out, "write the JSON report here");
    cmd->add_flag("--json", opt.json_stdout, "print JSON instead of the text summary");
    cmd->add_option("--jobs", opt.jobs, "worker count (MATCHDIAG_JOBS honored)")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--debug", opt.debug, "enable debug-only flags");
    cmd->add_option("--t-override", opt.t_override,
                    "debug: skip clustering and force the test statistic");
    if (with_rsv_extras) {
        cmd->add_option("--gamma-grid", opt.gamma_grid, "lo:hi:step or comma list");
        cmd->add_option("--curve-out", opt.curve_out, "write the gamma curve CSV here");
    }
}

struct TestRun {
    TestReport report;
    std::vector<std::string> dropped_columns;
    bool standardized = false;
    bool reject = false;
};

TestRun run_test_pipeline(const TestOptions& opt) {
    if (opt.t_override >= 0 && !opt.debug)
        throw InvalidInput("--t-override requires --debug");

    CsvOptions csv;
    if (!opt.covariates.empty()) csv.covariate_spec = split_commas(opt.covariates);
    MatchedSample sample = parse_matched_csv(opt.input, csv);

    const TwoSidedCentering centering = opt.centering == "paper" ? TwoSidedCentering::paper
                                                                 : TwoSidedCentering::centered;
    const PValueMode mode =
        opt.mode == "asymptotic" ? PValueMode::asymptotic : PValueMode::exact;

    TestRun run;
    TestReport& rep = run.report;
    rep.num_sets = static_cast<long>(sample.num_sets);
    rep.controls_per_set = static_cast<long>(sample.controls_per_set);
    rep.seed = opt.seed;

    if (opt.t_override >= 0) {
        rep.t = opt.t_override;
        rep.metric_mode = MetricMode::vanilla;
    } else {
        MatchedSample test_sample = sample;
        if (!opt.no_standardize) {
            auto [std_sample, info] = standardize(sample);
            test_sample = std::move(std_sample);
            run.dropped_columns = info.dropped_columns;
            run.standardized = true;
        }
        if (opt.metric == "none") {
            auto [partition, state] = run_constrained_kmeans(test_sample, nullptr, opt.seed,
                                                             opt.max_iter, opt.restarts);
            rep.t = cluster_test_statistic(partition, sample);
            rep.metric_mode = MetricMode::vanilla;
        } else {
            MetricForm form = MetricForm::diagonal;
            if (opt.metric == "full") form = MetricForm::full;
            if (opt.metric == "dform") form = MetricForm::dform;
            MetricKmeansResult res =
                run_metric_kmeans(test_sample, opt.seed, form, opt.max_iter, opt.restarts);
            rep.t = cluster_test_statistic(res.partition, sample);
            rep.metric_mode = form == MetricForm::diagonal ? MetricMode::metric_diagonal
                              : form == MetricForm::full   ? MetricMode::metric_full
                                                           : MetricMode::metric_dform;
            rep.euclidean_fallback = res.euclidean_fallback;
            rep.learned_metric_diag = res.metric.A.diag();
            if (res.metric.dform_weights) rep.dform_weights = res.metric.dform_weights;
        }
    }

    rep.p_exact = bounding_p_two_sided(rep.num_sets, rep.controls_per_set, rep.t, 1.0,
                                       PValueMode::exact, centering);
    rep.p_asymptotic = bounding_p_two_sided(rep.num_sets, rep.controls_per_set, rep.t, 1.0,
                                            PValueMode::asymptotic, centering);
    rep.rsv = residual_sensitivity_value(rep.num_sets, rep.controls_per_set, rep.t, opt.alpha,
                                         mode, centering);
    if (opt.decision_rule == "quantile") {
        run.reject = quantile_decision_reject(rep.num_sets, rep.controls_per_set, rep.t, opt.alpha);
    } else {
        const double p = mode == PValueMode::exact ? rep.p_exact : rep.p_asymptotic;
        run.reject = p <= opt.alpha;
    }
    return run;
}

json test_report_json(const TestOptions& opt, const TestRun& run) {
    const TestReport& rep = run.report;
    json r = json::object();
    r["t"] = rep.t;
    r["num_sets"] = rep.num_sets;
    r["controls_per_set"] = rep.controls_per_set;
    r["metric_mode"] = metric_mode_name(rep.metric_mode);
    r["p_exact"] = rep.p_exact;
    r["p_asymptotic"] = rep.p_asymptotic;
    r["alpha"] = opt.alpha;
    r["mode"] = opt.mode;
    r["decision_rule"] = opt.decision_rule;
    r["decision"] = run.reject ? "reject" : "fail_to_reject";
    r["rsv"] = rep.rsv;
    r["standardized"] = run.standardized;
    r["dropped_columns"] = run.dropped_columns;
    if (rep.metric_mode != MetricMode::vanilla) {
        r["euclidean_fallback"] = rep.euclidean_fallback;
        if (rep.learned_metric_diag) r["learned_metric_diag"] = *rep.learned_metric_diag;
        if (rep.dform_weights) r["dform_weights"] = *rep.dform_weights;
    }
    if (!rep.gamma_curve.empty()) {
        json curve = json::array();
        for (const auto& pt : rep.gamma_curve) {
            curve.push_back(
                {{"gamma", pt.gamma}, {"p_exact", pt.p_exact}, {"p_asymptotic", pt.p_asymptotic}});
        }
        r["gamma_curve"] = curve;
    }
    return r;
}

void print_test_summary(const TestRun& run, const TestOptions& opt) {
    const TestReport& rep = run.report;
    std::printf("matched sets        %ld (K = %ld)\n", rep.num_sets, rep.controls_per_set);
    std::printf("test statistic t    %ld\n", rep.t);
    std::printf("p (exact)           %.6g\n", rep.p_exact);
    std::printf("p (asymptotic)      %.6g\n", rep.p_asymptotic);
    std::printf("decision at %.3g    %s\n", opt.alpha, run.reject ? "reject" : "fail to reject");
    std::printf("residual sensitivity value  %.4f\n", rep.rsv);
    if (rep.dform_weights) {
        std::printf("dform weights      ");
        for (double w : *rep.dform_weights) std::printf(" %.4g", w);
        std::printf("\n");
    }
}

int cmd_test(TestOptions& opt, const std::string& name, bool rsv_extras) {
    Manifest manifest;
    manifest.subcommand = name;
    if (!opt.seed_given) opt.seed = random_seed();
    manifest.seed = opt.seed;
    manifest.input_path = opt.input;
    manifest.flags = {{"metric", opt.metric},
                      {"alpha", opt.alpha},
                      {"restarts", opt.restarts},
                      {"max_iter", opt.max_iter},
                      {"standardize", !opt.no_standardize},
                      {"two_sided_centering", opt.centering},
                      {"decision", opt.decision_rule},
                      {"mode", opt.mode},
                      {"jobs", opt.jobs}};
    if (opt.t_override >= 0) manifest.flags["t_override"] = opt.t_override;

    TestRun run = run_test_pipeline(opt);

    if (rsv_extras) {
        const TwoSidedCentering centering = opt.centering == "paper"
                                                ? TwoSidedCentering::paper
                                                : TwoSidedCentering::centered;
        run.report.gamma_curve =
            gamma_curve(run.report.num_sets, run.report.controls_per_set, run.report.t,
                        parse_gamma_grid(opt.gamma_grid), centering);
        manifest.flags["gamma_grid"] = opt.gamma_grid;
        if (!opt.curve_out.empty()) {
            std::ofstream out(opt.curve_out, std::ios::binary);
            if (!out) throw InvalidInput("cannot open curve output: " + opt.curve_out);
            out << "gamma,p_exact,p_asymptotic\n";
            char line[128];
            for (const auto& pt : run.report.gamma_curve) {
                std::snprintf(line, sizeof line, "%.10g,%.10g,%.10g\n", pt.gamma, pt.p_exact,
                              pt.p_asymptotic);
                out << line;
            }
        }
    }

    json document = json::object();
    document["manifest"] = manifest.to_json();
    document["report"] = test_report_json(opt, run);
    if (!opt.json_stdout) {
        std::printf("seed %llu\n", static_cast<unsigned long long>(opt.seed));
        print_test_summary(run, opt);
    }
    emit(document, opt.json_stdout, opt.out);
    return 0;
}

// ---- match ----

int cmd_match(const std::string& input, const std::string& covariates,
              const std::string& matcher, double caliper, bool robust,
              const std::string& score_covariates, const std::string& out,
              const std::string& balance_out, bool json_stdout, const std::string& report_out) {
    Manifest manifest;
    manifest.subcommand = "match";
    manifest.input_path = input;
    manifest.flags = {{"matcher", matcher}, {"caliper", caliper}, {"robust", robust}};

    CsvOptions csv;
    if (!covariates.empty()) csv.covariate_spec = split_commas(covariates);
    Cohort cohort = parse_cohort_csv(input, csv);

    MatchOptions mopts;
    mopts.caliper_sd = caliper;
    mopts.robust_ranks = robust;
    if (matcher == "maha") {
        mopts.distance = MatchDistance::mahalanobis;
    } else if (matcher == "pscore") {
        mopts.distance = MatchDistance::pscore;
    } else if (matcher == "pscore-rank") {
        mopts.distance = MatchDistance::pscore_rank;
    } else if (matcher == "opt") {
        mopts.distance = MatchDistance::mahalanobis_within_pscore_caliper;
    } else if (matcher == "nn") {
        mopts.distance = MatchDistance::mahalanobis;
        mopts.greedy = true;
    } else {
        throw InvalidInput("unknown matcher: " + matcher);
    }
    if (!score_covariates.empty()) {
        for (const auto& name : split_commas(score_covariates)) {
            const auto it = std::find(cohort.covariate_names.begin(),
                                      cohort.covariate_names.end(), name);
            if (it == cohort.covariate_names.end())
                throw InvalidInput("unknown score covariate: " + name);
            mopts.score_columns.push_back(
                static_cast<std::size_t>(it - cohort.covariate_names.begin()));
        }
        manifest.flags["score_covariates"] = score_covariates;
    }

    MatchedSample matched = optimal_pair_match(cohort, mopts);
    BalanceSummary balance = balance_table(cohort, matched);

    if (!out.empty()) write_matched_csv(matched, out);
    if (!balance_out.empty()) {
        std::ofstream bout(balance_out, std::ios::binary);
        if (!bout) throw InvalidInput("cannot open balance output: " + balance_out);
        bout << "covariate,mean_treated,mean_control_matched,smd_before,smd_after\n";
        char line[256];
        for (const auto& row : balance.rows) {
            std::snprintf(line, sizeof line, "%s,%.10g,%.10g,%.10g,%.10g\n",
                          row.covariate.c_str(), row.mean_treated, row.mean_control_matched,
                          row.smd_before, row.smd_after);
            bout << line;
        }
    }

    json report = json::object();
    report["num_pairs"] = matched.num_sets;
    report["smd_x1"] = balance.smd_x1;
    report["smd_median"] = balance.smd_median;
    json rows = json::array();
    for (const auto& row : balance.rows)
        rows.push_back({{"covariate", row.covariate},
                        {"mean_treated", row.mean_treated},
                        {"mean_control_matched", row.mean_control_matched},
                        {"smd_before", row.smd_before},
                        {"smd_after", row.smd_after}});
    report["balance"] = rows;

    json document = json::object();
    document["manifest"] = manifest.to_json();
    document["report"] = report;
    if (!json_stdout) {
        std::printf("%d pairs matched (%s)\n", static_cast<int>(matched.num_sets),
                    matcher.c_str());
        std::printf("%-12s %12s %12s %12s %12s\n", "covariate", "mean_t", "mean_c", "smd_before",
                    "smd_after");
        for (const auto& row : balance.rows)
            std::printf("%-12s %12.4f %12.4f %12.4f %12.4f\n", row.covariate.c_str(),
                        row.mean_treated, row.mean_control_matched, row.smd_before,
                        row.smd_after);
        std::printf("SMD_X1 %.4f, median |SMD| %.4f\n", balance.smd_x1, balance.smd_median);
    }
    emit(document, json_stdout, report_out);
    return 0;
}

// ---- simulate ----

json cell_report_json(const SimCellResult& res, bool with_records) {
    json r = json::object();
    r["n"] = res.config.n;
    r["d"] = res.config.d;
    r["c"] = res.config.c;
    r["matcher"] = matcher_name(res.config.matcher);
    r["clusterer"] = clusterer_name(res.config.clusterer);
    r["reps"] = res.config.reps;
    r["reps_ok"] = res.reps_ok;
    r["alpha"] = res.config.alpha;
    r["rejections"] = res.rejections;
    r["power"] = res.power;
    r["hl_est"] = res.hl_mean;
    r["mse"] = res.mse;
    r["rsv_mean"] = res.rsv_mean;
    r["smd_x1"] = res.smd_x1_mean;
    r["smd_median"] = res.smd_median_mean;
    if (with_records) {
        json records = json::array();
        for (const auto& rec : res.records) {
            json jr = {{"rep", rec.rep},        {"seed", rec.rep_seed},
                       {"ok", rec.ok},          {"t", rec.t},
                       {"num_sets", rec.num_sets}, {"p_exact", rec.p_exact},
                       {"rejected", rec.rejected}, {"rsv", rec.rsv},
                       {"smd_x1", rec.smd_x1},  {"hl", rec.hl}};
            if (!rec.ok) jr["error"] = rec.error;
            records.push_back(jr);
        }
        r["records"] = records;
    }
    return r;
}

MatcherKind matcher_from_name(const std::string& name) {
    if (name == "maha") return MatcherKind::maha;
    if (name == "pscore") return MatcherKind::pscore;
    if (name == "pscore-full") return MatcherKind::pscore_full;
    if (name == "opt") return MatcherKind::opt;
    if (name == "nn") return MatcherKind::nn;
    throw InvalidInput("unknown matcher: " + name);
}

int cmd_simulate(CLI::App* cmd, std::size_t n, std::size_t d, double c,
                 const std::string& matcher, const std::string& clusterer,
                 const std::string& metric_form, int reps, double alpha, std::uint64_t seed,
                 bool seed_given, int jobs, const std::string& out, const std::string& records,
                 bool json_stdout, bool grid, const std::string& n_list,
                 const std::string& d_list, const std::string& c_list,
                 const std::string& matcher_list, const std::string& grid_out,
                 const std::string& out_dir) {
    (void)cmd;
    if (!seed_given) seed = random_seed();

    auto make_config = [&](std::size_t nn_, std::size_t dd_, double cc_, MatcherKind mk,
                           ClustererKind ck) {
        SimCellConfig cfg;
        cfg.n = nn_;
        cfg.d = dd_;
        cfg.c = cc_;
        cfg.matcher = mk;
        cfg.clusterer = ck;
        cfg.reps = reps;
        cfg.alpha = alpha;
        cfg.seed = seed;
        cfg.jobs = jobs;
        if (metric_form == "full") cfg.metric_form = MetricForm::full;
        else if (metric_form == "dform") cfg.metric_form = MetricForm::dform;
        else cfg.metric_form = MetricForm::diagonal;
        return cfg;
    };

    Manifest manifest;
    manifest.subcommand = "simulate";
    manifest.seed = seed;
    manifest.flags = {{"reps", reps},   {"alpha", alpha},   {"jobs", jobs},
                      {"grid", grid},   {"matcher", matcher}, {"clusterer", clusterer},
                      {"metric_form", metric_form}};

    if (!grid) {
        SimCellConfig cfg =
            make_config(n, d, c, matcher_from_name(matcher),
                        clusterer == "metric" ? ClustererKind::metric : ClustererKind::vanilla);
        manifest.flags["n"] = n;
        manifest.flags["d"] = d;
        manifest.flags["c"] = c;
        SimCellResult res = run_cell(cfg);
        if (!records.empty()) {
            std::ofstream rout(records, std::ios::binary);
            if (!rout) throw InvalidInput("cannot open records output: " + records);
            for (const auto& rec : res.records) {
                json jr = {{"rep", rec.rep},  {"seed", rec.rep_seed}, {"ok", rec.ok},
                           {"t", rec.t},      {"num_sets", rec.num_sets},
                           {"p_exact", rec.p_exact}, {"rejected", rec.rejected},
                           {"rsv", rec.rsv},  {"smd_x1", rec.smd_x1}, {"hl", rec.hl}};
                rout << jr.dump() << "\n";
            }
        }
        json document = json::object();
        document["manifest"] = manifest.to_json();
        document["report"] = cell_report_json(res, false);
        if (!json_stdout) {
            std::printf("n=%zu d=%zu c=%.2f matcher=%s clusterer=%s reps=%d\n", cfg.n, cfg.d,
                        cfg.c, matcher_name(cfg.matcher).c_str(),
                        clusterer_name(cfg.clusterer).c_str(), cfg.reps);
            std::printf("power=%.3f  H-L=%.3f  MSE=%.4f  RSV=%.4f  SMD_X1=%.3f  SMD_med=%.3f\n",
                        res.power, res.hl_mean, res.mse, res.rsv_mean, res.smd_x1_mean,
                        res.smd_median_mean);
        }
        emit(document, json_stdout, out);
        return 0;
    }

    // factorial sweep: vanilla and metric clusterers share each cell row
    std::vector<std::size_t> ns, ds;
    std::vector<double> cs;
    std::vector<MatcherKind> matchers;
    for (const auto& tok : split_commas(n_list)) ns.push_back(std::stoul(tok));
    for (const auto& tok : split_commas(d_list)) ds.push_back(std::stoul(tok));
    for (const auto& tok : split_commas(c_list)) cs.push_back(std::stod(tok));
    for (const auto& tok : split_commas(matcher_list)) matchers.push_back(matcher_from_name(tok));

    std::ofstream rollup;
    if (!grid_out.empty()) {
        rollup.open(grid_out, std::ios::binary);
        if (!rollup) throw InvalidInput("cannot open grid output: " + grid_out);
        rollup << "n,d,c,M,SMD_X1,SMD_0.50,power_met,power_van,H-L est,MSE,RSV_met,RSV_van\n";
    }
    int cell_index = 0;
    for (std::size_t nn_ : ns) {
        for (std::size_t dd_ : ds) {
            for (double cc_ : cs) {
                for (MatcherKind mk : matchers) {
                    SimCellResult van =
                        run_cell(make_config(nn_, dd_, cc_, mk, ClustererKind::vanilla));
                    SimCellResult met =
                        run_cell(make_config(nn_, dd_, cc_, mk, ClustererKind::metric));
                    if (rollup.is_open()) {
                        char line[320];
                        std::snprintf(line, sizeof line,
                                      "%zu,%zu,%.10g,%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,"
                                      "%.10g,%.10g\n",
                                      nn_, dd_, cc_, matcher_name(mk).c_str(), van.smd_x1_mean,
                                      van.smd_median_mean, met.power, van.power, van.hl_mean,
                                      van.mse, met.rsv_mean, van.rsv_mean);
                        rollup << line;
                    }
                    if (!out_dir.empty()) {
                        json cell = json::object();
                        cell["manifest"] = manifest.to_json();
                        cell["report_van"] = cell_report_json(van, false);
                        cell["report_met"] = cell_report_json(met, false);
                        std::ostringstream path;
                        path << out_dir << "/cell_" << cell_index << ".json";
                        std::ofstream cout_(path.str(), std::ios::binary);
                        if (!cout_) throw InvalidInput("cannot write " + path.str());
                        cout_ << cell.dump(2) << "\n";
                    }
                    if (!json_stdout)
                        std::printf("cell %d: n=%zu d=%zu c=%.2f M=%s power_van=%.3f "
                                    "power_met=%.3f\n",
                                    cell_index, nn_, dd_, cc_, matcher_name(mk).c_str(),
                                    van.power, met.power);
                    ++cell_index;
                }
            }
        }
    }
    return 0;
}

// ---- outcome ----

int cmd_outcome(const std::string& input, const std::string& covariates,
                const std::string& gammas_spec, double alpha, const std::string& side_name,
                double rsv_in, bool rsv_given, std::uint64_t seed, bool seed_given,
                const std::string& mode, bool json_stdout, const std::string& out) {
    Manifest manifest;
    manifest.subcommand = "outcome";
    manifest.input_path = input;
    if (!seed_given) seed = random_seed();
    manifest.seed = seed;
    manifest.flags = {{"gammas", gammas_spec}, {"alpha", alpha}, {"side", side_name},
                      {"mode", mode}};

    CsvOptions csv;
    if (!covariates.empty()) csv.covariate_spec = split_commas(covariates);
    MatchedSample matched = parse_matched_csv(input, csv);
    const OutcomeSide side = side_name == "less" ? OutcomeSide::less : OutcomeSide::greater;
    const PValueMode pmode =
        mode == "asymptotic" ? PValueMode::asymptotic : PValueMode::exact;

    // t from the vanilla clustering test of the same file
    auto [std_sample, info] = standardize(matched);
    auto [partition, state] = run_constrained_kmeans(std_sample, nullptr, seed, 100, 10);
    const long t = cluster_test_statistic(partition, matched);

    double rsv = rsv_in;
    if (!rsv_given)
        rsv = residual_sensitivity_value(static_cast<long>(matched.num_sets),
                                         static_cast<long>(matched.controls_per_set), t, alpha,
                                         pmode);
    OutcomeReport report =
        outcome_report(matched, t, parse_gamma_grid(gammas_spec), rsv, side);

    json rows = json::array();
    for (const auto& row : report.rows)
        rows.push_back({{"gamma", row.gamma},
                        {"assumption_p_exact", row.assumption_p_exact},
                        {"assumption_p_asymptotic", row.assumption_p_asymptotic},
                        {"outcome_p", row.outcome_p},
                        {"is_rsv_row", row.is_rsv_row}});
    json r = json::object();
    r["t"] = t;
    r["num_sets"] = matched.num_sets;
    r["discordant"] = report.summary.discordant;
    r["treated_positive"] = report.summary.treated_positive;
    r["no_discordant_pairs"] = report.no_discordant_pairs;
    r["side"] = side_name;
    r["rsv"] = report.rsv;
    r["headline_p"] = report.headline_p;
    r["rows"] = rows;

    json document = json::object();
    document["manifest"] = manifest.to_json();
    document["report"] = r;
    if (!json_stdout) {
        std::printf("discordant pairs D = %ld, treated events T+ = %ld\n",
                    report.summary.discordant, report.summary.treated_positive);
        std::printf("%-10s %22s %18s\n", "", "testing assumption", "outcome analysis");
        std::printf("%-10s %11s %10s %18s\n", "gamma", "p_exact", "p_asym", "p_bound");
        for (const auto& row : report.rows)
            std::printf("%s%-9.4g %11.4g %10.4g %18.4g%s\n", row.is_rsv_row ? "*" : " ",
                        row.gamma, row.assumption_p_exact, row.assumption_p_asymptotic,
                        row.outcome_p, row.is_rsv_row ? "  <- RSV" : "");
        std::printf("headline p at gamma = RSV (%.4f): %.4g\n", report.rsv, report.headline_p);
    }
    emit(document, json_stdout, out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"matchdiag: clustering-based diagnostics for the randomization assumption in "
                 "matched observational studies"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    app.failure_message(CLI::FailureMessage::help);  // parse errors show usage

    TestOptions test_opt, rsv_opt;
    auto* test_cmd = app.add_subcommand(
        "test", "test the randomization assumption by constrained clustering");
    add_test_options(test_cmd, test_opt, false);
    auto* rsv_cmd = app.add_subcommand(
        "rsv", "residual sensitivity value and the gamma curve");
    add_test_options(rsv_cmd, rsv_opt, true);

    // match
    std::string m_input, m_covariates, m_matcher = "opt", m_score_cov, m_out, m_balance_out,
                m_report_out;
    double m_caliper = 0.2;
    bool m_robust = false, m_json = false;
    auto* match_cmd = app.add_subcommand("match", "pair-match a cohort CSV");
    match_cmd->add_option("-i,--input", m_input, "cohort CSV")->required();
    match_cmd->add_option("--covariates", m_covariates, "covariate columns (globs allowed)");
    match_cmd->add_option("--matcher", m_matcher, "maha, pscore, pscore-rank, opt, nn")
        ->check(CLI::IsMember({"maha", "pscore", "pscore-rank", "opt", "nn"}));
    match_cmd->add_option("--caliper", m_caliper, "propensity caliper width in score SDs");
    match_cmd->add_flag("--robust", m_robust, "rank-transform before the Mahalanobis covariance");
    match_cmd->add_option("--score-covariates", m_score_cov,
                          "columns the propensity model uses (default: all)");
    match_cmd->add_option("-o,--out", m_out, "write the matched-sample CSV here");
    match_cmd->add_option("--balance-out", m_balance_out, "write the balance table CSV here");
    match_cmd->add_option("--report-out", m_report_out, "write the JSON summary here");
    match_cmd->add_flag("--json", m_json, "print JSON instead of the text table");

    // simulate
    std::size_t s_n = 1000, s_d = 10;
    double s_c = 0.5, s_alpha = 0.05;
    std::string s_matcher = "opt", s_clusterer = "vanilla", s_form = "diag";
    int s_reps = 100, s_jobs = env_jobs_default();
    std::uint64_t s_seed = 0;
    bool s_seed_given = false, s_json = false, s_grid = false;
    std::string s_out, s_records, s_n_list = "1000,3000,5000", s_d_list = "10,30,50",
                      s_c_list = "0.3,0.5,0.7", s_matcher_list = "pscore,maha,opt", s_grid_out,
                      s_out_dir;
    auto* sim_cmd = app.add_subcommand("simulate", "factorial simulation cells");
    sim_cmd->add_option("--n", s_n, "cohort size");
    sim_cmd->add_option("--d", s_d, "covariate dimension");
    sim_cmd->add_option("--c", s_c, "covariate shift of the treated group");
    sim_cmd->add_option("--matcher", s_matcher, "maha, pscore, pscore-full, opt, nn")
        ->check(CLI::IsMember({"maha", "pscore", "pscore-full", "opt", "nn"}));
    sim_cmd->add_option("--clusterer", s_clusterer, "vanilla or metric")
        ->check(CLI::IsMember({"vanilla", "metric"}));
    sim_cmd->add_option("--metric-form", s_form, "diag, full, dform")
        ->check(CLI::IsMember({"diag", "full", "dform"}));
    sim_cmd->add_option("--reps", s_reps)->check(CLI::PositiveNumber);
    sim_cmd->add_option("--alpha", s_alpha)->check(CLI::Range(1e-9, 1.0));
    sim_cmd->add_option("--seed", s_seed)->each([&](const std::string&) { s_seed_given = true; });
    sim_cmd->add_option("--jobs", s_jobs)->check(CLI::PositiveNumber);
    sim_cmd->add_option("-o,--out", s_out, "write the cell JSON here");
    sim_cmd->add_option("--records", s_records, "write per-rep JSON lines here");
    sim_cmd->add_flag("--json", s_json, "print JSON instead of the text summary");
    sim_cmd->add_flag("--grid", s_grid, "sweep the factorial grid");
    sim_cmd->add_option("--n-list", s_n_list, "grid values for n");
    sim_cmd->add_option("--d-list", s_d_list, "grid values for d");
    sim_cmd->add_option("--c-list", s_c_list, "grid values for c");
    sim_cmd->add_option("--matcher-list", s_matcher_list, "grid matchers");
    sim_cmd->add_option("--grid-out", s_grid_out, "roll-up CSV path");
    sim_cmd->add_option("--out-dir", s_out_dir, "directory for per-cell JSON files");

    // outcome
    std::string o_input, o_covariates, o_gammas = "1.0,1.02,1.04,1.06,1.08,1.10,1.20",
                o_side = "greater", o_mode = "exact", o_out;
    double o_alpha = 0.05, o_rsv = 1.0;
    bool o_rsv_given = false, o_json = false, o_seed_given = false;
    std::uint64_t o_seed = 0;
    auto* out_cmd = app.add_subcommand("outcome", "gamma-bounded McNemar outcome analysis");
    out_cmd->add_option("-i,--input", o_input, "matched CSV with a binary outcome column")
        ->required();
    out_cmd->add_option("--covariates", o_covariates, "covariate columns (globs allowed)");
    out_cmd->add_option("--gammas", o_gammas, "comma list or lo:hi:step");
    out_cmd->add_option("--alpha", o_alpha)->check(CLI::Range(1e-9, 1.0));
    out_cmd->add_option("--side", o_side, "greater or less")
        ->check(CLI::IsMember({"greater", "less"}));
    out_cmd->add_option("--rsv", o_rsv, "residual sensitivity value (default: computed)")
        ->each([&](const std::string&) { o_rsv_given = true; });
    out_cmd->add_option("--mode", o_mode, "exact or asymptotic RSV computation")
        ->check(CLI::IsMember({"exact", "asymptotic"}));
    out_cmd->add_option("--seed", o_seed)->each([&](const std::string&) { o_seed_given = true; });
    out_cmd->add_flag("--json", o_json, "print JSON instead of the text table");
    out_cmd->add_option("-o,--out", o_out, "write the JSON report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(test_cmd)) return cmd_test(test_opt, "test", false);
        if (app.got_subcommand(rsv_cmd)) return cmd_test(rsv_opt, "rsv", true);
        if (app.got_subcommand(match_cmd))
            return cmd_match(m_input, m_covariates, m_matcher, m_caliper, m_robust, m_score_cov,
                             m_out, m_balance_out, m_json, m_report_out);
        if (app.got_subcommand(sim_cmd))
            return cmd_simulate(sim_cmd, s_n, s_d, s_c, s_matcher, s_clusterer, s_form, s_reps,
                                s_alpha, s_seed, s_seed_given, s_jobs, s_out, s_records, s_json,
                                s_grid, s_n_list, s_d_list, s_c_list, s_matcher_list, s_grid_out,
                                s_out_dir);
        if (app.got_subcommand(out_cmd))
            return cmd_outcome(o_input, o_covariates, o_gammas, o_alpha, o_side, o_rsv,
                               o_rsv_given, o_seed, o_seed_given, o_mode, o_json, o_out);
    } catch (const InvalidInput& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 3;
    }
    return 2;
}
