#include "mortfit/cli.hpp"

#include "mortfit/errors.hpp"
#include "mortfit/format.hpp"
#include "mortfit/harness.hpp"
#include "mortfit/ls_estimators.hpp"
#include "mortfit/mle_estimators.hpp"
#include "mortfit/model.hpp"
#include "mortfit/mortality_data.hpp"
#include "mortfit/synthetic.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mortfit {

namespace {

struct InputOptions {
    std::string deaths;
    std::string exposures;
    std::string rates;
    std::string surface;
    std::string sex = "total";
    std::string ages;
    std::string years;
};

void add_input_options(CLI::App *cmd, InputOptions &in) {
    cmd->add_option("--deaths", in.deaths, "HMD 1x1 deaths table");
    cmd->add_option("--exposures", in.exposures, "HMD 1x1 exposures table");
    cmd->add_option("--rates", in.rates, "HMD 1x1 death-rate table (rate-only input)");
    cmd->add_option("--surface", in.surface, "surface CSV (age,year,deaths,exposure,log_rate)");
    cmd->add_option("--sex", in.sex, "HMD column: female, male or total")->capture_default_str();
    cmd->add_option("--ages", in.ages, "age window lo:hi");
    cmd->add_option("--years", in.years, "year window lo:hi");
}

std::ifstream open_input(const std::string &path) {
    std::ifstream file(path);
    if (!file) {
        throw std::runtime_error("cannot open '" + path + "'");
    }
    return file;
}

HmdTable read_hmd(const std::string &path, HmdColumn column) {
    auto file = open_input(path);
    try {
        return parse_hmd_table(file, column);
    } catch (const ParseError &e) {
        throw ParseError(e.line(), path + ": " + e.what());
    }
}

MortalitySurface window(const MortalitySurface &surface, const std::optional<IntRange> &ages,
                        const std::optional<IntRange> &years) {
    const auto locate = [](const std::vector<int> &axis, IntRange range, const char *what) {
        if (range.size() <= 0 || range.lo < axis.front() || range.hi > axis.back()) {
            throw DataError(std::string(what) + " window outside the surface");
        }
        return std::pair<Eigen::Index, Eigen::Index>(range.lo - axis.front(), range.size());
    };
    const auto [r0, rows] =
        ages ? locate(surface.ages(), *ages, "age")
             : std::pair<Eigen::Index, Eigen::Index>(0, surface.num_ages());
    const auto [c0, cols] =
        years ? locate(surface.years(), *years, "year")
              : std::pair<Eigen::Index, Eigen::Index>(0, surface.num_years());
    std::vector<int> age_axis(surface.ages().begin() + r0, surface.ages().begin() + r0 + rows);
    std::vector<int> year_axis(surface.years().begin() + c0, surface.years().begin() + c0 + cols);
    return MortalitySurface::from_columns(std::move(age_axis), std::move(year_axis),
                                          surface.deaths().block(r0, c0, rows, cols),
                                          surface.exposures().block(r0, c0, rows, cols),
                                          surface.log_rates().block(r0, c0, rows, cols),
                                          surface.rates_only());
}

MortalitySurface load_surface(const InputOptions &in) {
    const int sources = int(!in.surface.empty()) + int(!in.rates.empty()) +
                        int(!in.deaths.empty() || !in.exposures.empty());
    if (sources != 1) {
        throw std::invalid_argument(
            "give exactly one input: --surface, --rates, or --deaths with --exposures");
    }
    std::optional<IntRange> ages;
    std::optional<IntRange> years;
    if (!in.ages.empty()) {
        ages = parse_range(in.ages);
    }
    if (!in.years.empty()) {
        years = parse_range(in.years);
    }
    if (!in.surface.empty()) {
        auto file = open_input(in.surface);
        return window(read_surface_csv(file), ages, years);
    }
    if (!ages || !years) {
        throw std::invalid_argument("HMD input needs --ages and --years");
    }
    const HmdColumn column = parse_hmd_column(in.sex);
    if (!in.rates.empty()) {
        return build_rate_surface(read_hmd(in.rates, column), *ages, *years);
    }
    if (in.deaths.empty() || in.exposures.empty()) {
        throw std::invalid_argument("--deaths and --exposures must be given together");
    }
    return build_surface(read_hmd(in.deaths, column), read_hmd(in.exposures, column), *ages,
                         *years);
}

// Writes through `fallback` when path is empty.
template <typename Writer>
void emit(const std::string &path, std::ostream &fallback, Writer &&writer) {
    if (path.empty()) {
        writer(fallback);
        return;
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) {
        throw std::runtime_error("cannot write '" + path + "'");
    }
    writer(file);
    file.flush();
    if (!file) {
        throw std::runtime_error("error writing '" + path + "'");
    }
}

std::string report_json(const FitReport &report) {
    std::ostringstream out;
    out << "{\"converged\":" << (report.converged ? "true" : "false")
        << ",\"iterations\":" << report.iterations
        << ",\"wall_time_seconds\":" << fmt17(report.wall_time_seconds)
        << ",\"objective_trace\":[";
    for (std::size_t i = 0; i < report.objective_trace.size(); ++i) {
        out << (i ? "," : "") << fmt17(report.objective_trace[i]);
    }
    out << "]}\n";
    return out.str();
}

std::vector<double> parse_tols(const std::string &text) {
    std::vector<double> tols;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        std::size_t used = 0;
        const double tol = std::stod(item, &used);
        if (used != item.size()) {
            throw std::invalid_argument("bad tolerance '" + item + "'");
        }
        tols.push_back(tol);
    }
    if (tols.empty()) {
        throw std::invalid_argument("no tolerances given");
    }
    return tols;
}

struct FitOptions {
    InputOptions input;
    std::string model = "rh";
    std::string method = "ls";
    bool hv = false;
    double tol = 1e-8;
    int max_iter = 20000;
    std::string out;
    std::string format = "json";
};

int cmd_fit(const FitOptions &opt, std::ostream &out, std::ostream &err) {
    const ModelKind kind = parse_model_kind(opt.model);
    const Estimator estimator = opt.method == "ls"    ? Estimator::LeastSquares
                                : opt.method == "mle" ? Estimator::PoissonMle
                                                      : throw std::invalid_argument(
                                                            "--method must be ls or mle");
    const MortalitySurface surface = load_surface(opt.input);
    if (estimator == Estimator::PoissonMle && surface.rates_only()) {
        throw CapabilityError("--method mle needs deaths and exposures; the input has rates only "
                              "(missing exposures)");
    }

    FitResult fit;
    if (estimator == Estimator::LeastSquares) {
        ConvergenceConfig cfg;
        cfg.tol = opt.tol;
        cfg.max_outer = opt.max_iter;
        fit = fit_ls(surface, kind, cfg, opt.hv);
    } else {
        MleConfig cfg;
        cfg.tol = opt.tol;
        cfg.max_outer = opt.max_iter;
        cfg.hv = opt.hv;
        fit = fit_poisson_mle(surface, kind, cfg);
    }

    emit(opt.out, out, [&](std::ostream &os) {
        if (opt.format == "csv") {
            write_params_csv(os, fit.params);
        } else {
            os << to_json(fit.params);
        }
    });
    if (!opt.out.empty()) {
        emit(opt.out + ".report.json", out,
             [&](std::ostream &os) { os << report_json(fit.report); });
    }

    std::ostream &summary = opt.out.empty() ? err : out;
    summary << "model=" << to_string(kind) << " method=" << opt.method
            << (opt.hv ? " hv" : "") << " converged=" << (fit.report.converged ? "true" : "false")
            << " iterations=" << fit.report.iterations
            << " l2_error=" << fmt17(l2_error(surface.log_rates(), fit.params));
    if (!surface.rates_only()) {
        summary << " loglik=" << fmt17(poisson_loglik(surface, fit.params, true));
    }
    summary << " wall_time_seconds=" << fmt17(fit.report.wall_time_seconds) << '\n';
    if (!fit.report.converged) {
        err << "warning: fit did not converge within " << opt.max_iter << " iterations\n";
        return kExitNotConverged;
    }
    return kExitConverged;
}

struct CompareOptions {
    InputOptions input;
    std::string methods;
    double tol = 1e-8;
    bool no_warm_up = false;
    std::string out;
};

int cmd_compare(const CompareOptions &opt, std::ostream &out, std::ostream &err) {
    const auto methods = parse_method_list(opt.methods);
    const MortalitySurface surface = load_surface(opt.input);
    HarnessOptions harness;
    harness.warm_up = !opt.no_warm_up;
    const auto rows = run_comparison(surface, methods, opt.tol, harness);
    emit(opt.out, out, [&](std::ostream &os) { write_comparison_csv(os, rows); });
    const bool all_converged =
        std::all_of(rows.begin(), rows.end(), [](const auto &row) { return row.converged; });
    if (!all_converged) {
        err << "warning: at least one method did not converge\n";
        return kExitNotConverged;
    }
    return kExitConverged;
}

struct SweepOptions {
    InputOptions input;
    std::string method;
    std::string tols = "1e-6,1e-7,1e-8";
    bool no_warm_up = false;
    std::string out;
};

int cmd_sweep(const SweepOptions &opt, std::ostream &out, std::ostream &err) {
    const Method method = parse_method(opt.method);
    const auto tols = parse_tols(opt.tols);
    const MortalitySurface surface = load_surface(opt.input);
    HarnessOptions harness;
    harness.warm_up = !opt.no_warm_up;
    const auto result = tolerance_sweep_with_fits(surface, method, tols, harness);
    emit(opt.out, out, [&](std::ostream &os) { write_sweep_csv(os, result.rows); });
    const bool all_converged = std::all_of(result.fits.begin(), result.fits.end(),
                                           [](const auto &fit) { return fit.report.converged; });
    if (!all_converged) {
        err << "warning: at least one fit of the sweep did not converge\n";
        return kExitNotConverged;
    }
    return kExitConverged;
}

struct SimulateOptions {
    std::string params;
    std::string model = "rh";
    std::string ages = "60:89";
    std::string years = "1950:2019";
    std::uint64_t seed = 0;
    double noise = 0.0;
    bool poisson = false;
    double exposure = 1e5;
    std::string out;
};

int cmd_simulate(const SimulateOptions &opt, std::ostream &out) {
    ModelParams params;
    if (!opt.params.empty()) {
        auto file = open_input(opt.params);
        std::stringstream text;
        text << file.rdbuf();
        params = params_from_json(text.str());
    } else {
        params = default_generator(parse_model_kind(opt.model), parse_range(opt.ages).values(),
                                   parse_range(opt.years).values());
    }
    const MortalitySurface surface =
        synthesize_surface(params, opt.exposure, opt.noise, opt.seed,
                           opt.poisson ? NoiseMode::Poisson : NoiseMode::Gaussian);
    emit(opt.out, out, [&](std::ostream &os) { write_surface_csv(os, surface); });
    return kExitConverged;
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Fit age-period-cohort mortality models", "mortfit"};
    app.require_subcommand(1);

    FitOptions fit;
    auto *fit_cmd = app.add_subcommand("fit", "fit one model and write its parameters");
    add_input_options(fit_cmd, fit.input);
    fit_cmd->add_option("--model", fit.model, "lc, rh, h1 or apc")->capture_default_str();
    fit_cmd->add_option("--method", fit.method, "ls or mle")->capture_default_str();
    fit_cmd->add_flag("--hv", fit.hv, "impose the cohort-trend constraint");
    fit_cmd->add_option("--tol", fit.tol, "relative convergence tolerance")->capture_default_str();
    fit_cmd->add_option("--max-iter", fit.max_iter, "outer iteration cap")->capture_default_str();
    fit_cmd->add_option("--out", fit.out, "output path (stdout if omitted)");
    fit_cmd->add_option("--format", fit.format, "json or csv")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();

    CompareOptions compare;
    auto *compare_cmd = app.add_subcommand("compare", "compare methods on one surface");
    add_input_options(compare_cmd, compare.input);
    compare_cmd->add_option("--methods", compare.methods, "e.g. rh-mle,rh-ls,rh-mle-hv")
        ->required();
    compare_cmd->add_option("--tol", compare.tol, "common tolerance")->capture_default_str();
    compare_cmd->add_flag("--no-warm-up", compare.no_warm_up, "skip the untimed warm-up fit");
    compare_cmd->add_option("--out", compare.out, "CSV output path (stdout if omitted)");

    SweepOptions sweep;
    auto *sweep_cmd = app.add_subcommand("sweep", "refit one method over several tolerances");
    add_input_options(sweep_cmd, sweep.input);
    sweep_cmd->add_option("--method", sweep.method, "e.g. rh-ls")->required();
    sweep_cmd->add_option("--tols", sweep.tols, "comma-separated, non-increasing")
        ->capture_default_str();
    sweep_cmd->add_flag("--no-warm-up", sweep.no_warm_up, "skip the untimed warm-up fit");
    sweep_cmd->add_option("--out", sweep.out, "CSV output path (stdout if omitted)");

    SimulateOptions simulate;
    auto *simulate_cmd = app.add_subcommand("simulate", "generate a synthetic surface");
    simulate_cmd->add_option("--params", simulate.params, "parameter bundle JSON");
    simulate_cmd->add_option("--model", simulate.model, "built-in generator when no --params")
        ->capture_default_str();
    simulate_cmd->add_option("--ages", simulate.ages, "age window lo:hi")->capture_default_str();
    simulate_cmd->add_option("--years", simulate.years, "year window lo:hi")
        ->capture_default_str();
    simulate_cmd->add_option("--seed", simulate.seed, "RNG seed")->capture_default_str();
    simulate_cmd->add_option("--noise", simulate.noise, "sd of log-rate noise")
        ->capture_default_str();
    simulate_cmd->add_flag("--poisson", simulate.poisson, "draw deaths from a Poisson law");
    simulate_cmd->add_option("--exposure", simulate.exposure, "exposure of every cell")
        ->capture_default_str();
    simulate_cmd->add_option("--out", simulate.out, "CSV output path (stdout if omitted)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return kExitConverged;
    } catch (const CLI::CallForAllHelp &) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitConverged;
    } catch (const CLI::ParseError &e) {
        err << "error: " << e.what() << '\n';
        return kExitError;
    }

    try {
        if (fit_cmd->parsed()) {
            return cmd_fit(fit, out, err);
        }
        if (compare_cmd->parsed()) {
            return cmd_compare(compare, out, err);
        }
        if (sweep_cmd->parsed()) {
            return cmd_sweep(sweep, out, err);
        }
        return cmd_simulate(simulate, out);
    } catch (const ParseError &e) {
        err << "error: line " << e.line() << ": " << e.what() << '\n';
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
    }
    return kExitError;
}

} // namespace mortfit
