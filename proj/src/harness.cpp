#include "mortfit/harness.hpp"

#include "mortfit/errors.hpp"
#include "mortfit/format.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mortfit {

namespace {

std::string upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
    return out;
}

void require_capability(const MortalitySurface &surface, const Method &method) {
    if (method.estimator == Estimator::PoissonMle && surface.rates_only()) {
        throw CapabilityError("method " + method.label() +
                              " needs deaths and exposures; the surface is rate-only");
    }
}

double loglik_or_nan(const MortalitySurface &surface, const ModelParams &params) {
    if (surface.rates_only()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return poisson_loglik(surface, params, true);
}

Eigen::VectorXd stacked(const ModelParams &params) {
    const Eigen::Index size = params.a.size() + params.b.size() + params.k.size() +
                              params.c.size() + params.gamma.size();
    Eigen::VectorXd out(size);
    out << params.a, params.b, params.k, params.c, params.gamma;
    return out;
}

} // namespace

std::string Method::label() const {
    std::string out(to_string(kind));
    out += estimator == Estimator::LeastSquares ? "-LS" : "-MLE";
    if (hv) {
        out += "-HV";
    }
    return out;
}

Method parse_method(std::string_view label) {
    const std::string text = upper(label);
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, '-');) {
        parts.push_back(part);
    }
    if (parts.size() < 2 || parts.size() > 3 || (parts.size() == 3 && parts[2] != "HV")) {
        throw std::invalid_argument("unknown method '" + std::string(label) +
                                    "', expected <model>-<ls|mle>[-hv]");
    }
    Method method;
    method.kind = parse_model_kind(parts[0]);
    if (parts[1] == "LS") {
        method.estimator = Estimator::LeastSquares;
    } else if (parts[1] == "MLE") {
        method.estimator = Estimator::PoissonMle;
    } else {
        throw std::invalid_argument("unknown estimator in method '" + std::string(label) + "'");
    }
    method.hv = parts.size() == 3;
    if (method.hv && method.kind == ModelKind::LC) {
        throw std::invalid_argument("method '" + std::string(label) +
                                    "': the cohort-trend constraint needs a cohort model");
    }
    if (method.hv && method.estimator == Estimator::LeastSquares && method.kind == ModelKind::RH) {
        throw std::invalid_argument("method '" + std::string(label) +
                                    "': least-squares cohort-trend fitting covers H1 and APC");
    }
    return method;
}

std::vector<Method> parse_method_list(std::string_view comma_separated) {
    std::vector<Method> methods;
    std::stringstream ss{std::string(comma_separated)};
    for (std::string item; std::getline(ss, item, ',');) {
        const auto first = item.find_first_not_of(" \t");
        if (first != std::string::npos) {
            item = item.substr(first, item.find_last_not_of(" \t") - first + 1);
            methods.push_back(parse_method(item));
        }
    }
    if (methods.empty()) {
        throw std::invalid_argument("no methods given");
    }
    return methods;
}

FitResult run_method(const MortalitySurface &surface, const Method &method, double tol) {
    require_capability(surface, method);
    if (method.estimator == Estimator::LeastSquares) {
        ConvergenceConfig cfg;
        cfg.tol = tol;
        return fit_ls(surface, method.kind, cfg, method.hv);
    }
    MleConfig cfg;
    cfg.tol = tol;
    cfg.hv = method.hv;
    return fit_poisson_mle(surface, method.kind, cfg);
}

std::vector<ComparisonRow> run_comparison(const MortalitySurface &surface,
                                          const std::vector<Method> &methods, double tol,
                                          const HarnessOptions &options) {
    for (const auto &method : methods) {
        require_capability(surface, method);
    }
    std::vector<ComparisonRow> rows;
    rows.reserve(methods.size());
    for (const auto &method : methods) {
        if (options.warm_up) {
            (void)run_method(surface, method, tol);
        }
        const FitResult fit = run_method(surface, method, tol);
        ComparisonRow row;
        row.method = method.label();
        row.l2_error = l2_error(surface.log_rates(), fit.params);
        row.loglik = loglik_or_nan(surface, fit.params);
        row.wall_time_seconds = fit.report.wall_time_seconds;
        row.iterations = fit.report.iterations;
        row.converged = fit.report.converged;
        rows.push_back(std::move(row));
    }
    return rows;
}

SweepResult tolerance_sweep_with_fits(const MortalitySurface &surface, const Method &method,
                                      const std::vector<double> &tols,
                                      const HarnessOptions &options) {
    if (tols.empty()) {
        throw std::invalid_argument("tolerance_sweep: no tolerances given");
    }
    for (std::size_t i = 1; i < tols.size(); ++i) {
        if (tols[i] > tols[i - 1]) {
            throw std::invalid_argument("tolerance_sweep: tolerances must be non-increasing");
        }
    }
    require_capability(surface, method);
    if (options.warm_up) {
        (void)run_method(surface, method, tols.front());
    }
    SweepResult result;
    for (double tol : tols) {
        result.fits.push_back(run_method(surface, method, tol));
    }
    const ModelParams &tightest = result.fits.back().params;
    for (std::size_t i = 0; i < tols.size(); ++i) {
        const auto &fit = result.fits[i];
        SweepRow row;
        row.tol = tols[i];
        row.l2_error = l2_error(surface.log_rates(), fit.params);
        row.loglik = loglik_or_nan(surface, fit.params);
        row.wall_time_seconds = fit.report.wall_time_seconds;
        row.max_param_delta = max_param_delta(fit.params, tightest);
        result.rows.push_back(row);
    }
    return result;
}

std::vector<SweepRow> tolerance_sweep(const MortalitySurface &surface, const Method &method,
                                      const std::vector<double> &tols,
                                      const HarnessOptions &options) {
    return tolerance_sweep_with_fits(surface, method, tols, options).rows;
}

double max_param_delta(const ModelParams &lhs, const ModelParams &rhs) {
    const Eigen::VectorXd x = stacked(apply_identifiability(lhs));
    const Eigen::VectorXd y = stacked(apply_identifiability(rhs));
    if (x.size() != y.size()) {
        throw std::invalid_argument("max_param_delta: bundles have different shapes");
    }
    return x.size() == 0 ? 0.0 : (x - y).cwiseAbs().maxCoeff();
}

void write_comparison_csv(std::ostream &out, const std::vector<ComparisonRow> &rows) {
    out << "method,l2_error,loglik,wall_time_seconds,iterations,converged\n";
    for (const auto &row : rows) {
        out << row.method << ',' << fmt17(row.l2_error) << ',' << fmt17(row.loglik) << ','
            << fmt17(row.wall_time_seconds) << ',' << row.iterations << ','
            << (row.converged ? "true" : "false") << '\n';
    }
}

void write_sweep_csv(std::ostream &out, const std::vector<SweepRow> &rows) {
    out << "tol,l2_error,loglik,wall_time_seconds,max_param_delta\n";
    for (const auto &row : rows) {
        out << fmt17(row.tol) << ',' << fmt17(row.l2_error) << ',' << fmt17(row.loglik) << ','
            << fmt17(row.wall_time_seconds) << ',' << fmt17(row.max_param_delta) << '\n';
    }
}

} // namespace mortfit
