#pragma once

#include "mortfit/ls_estimators.hpp"
#include "mortfit/mle_estimators.hpp"
#include "mortfit/model.hpp"
#include "mortfit/mortality_data.hpp"

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mortfit {

enum class Estimator { LeastSquares, PoissonMle };

/// A fitting method such as RH-LS, H1-LS-HV or RH-MLE-HV.
struct Method {
    ModelKind kind = ModelKind::RH;
    Estimator estimator = Estimator::LeastSquares;
    bool hv = false;

    std::string label() const;
};

/// Case-insensitive "<kind>-<ls|mle>[-hv]". LS with HV is limited to H1 and APC.
Method parse_method(std::string_view label);
std::vector<Method> parse_method_list(std::string_view comma_separated);

/// Fit `surface` with `method` at relative tolerance `tol`; remaining settings
/// use library defaults.
FitResult run_method(const MortalitySurface &surface, const Method &method, double tol);

struct ComparisonRow {
    std::string method;
    double l2_error = 0.0;
    double loglik = 0.0; // NaN on rate-only surfaces
    double wall_time_seconds = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct SweepRow {
    double tol = 0.0;
    double l2_error = 0.0;
    double loglik = 0.0;
    double wall_time_seconds = 0.0;
    double max_param_delta = 0.0; // vs. the tightest-tolerance fit
};

struct HarnessOptions {
    bool warm_up = true; // run and discard one fit before timing
};

/// Fits each method in request order at a common tolerance. Throws
/// CapabilityError naming the method if an MLE method meets a rate-only surface.
std::vector<ComparisonRow> run_comparison(const MortalitySurface &surface,
                                          const std::vector<Method> &methods, double tol,
                                          const HarnessOptions &options = {});

/// One fit per tolerance (non-increasing order); max_param_delta compares the
/// normalized parameter vector (a, b, k, c, gamma) with the last fit's.
std::vector<SweepRow> tolerance_sweep(const MortalitySurface &surface, const Method &method,
                                      const std::vector<double> &tols,
                                      const HarnessOptions &options = {});

/// Fits of a sweep are also useful on their own (e.g. for plotting parameter
/// paths); this variant returns them alongside the rows.
struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<FitResult> fits;
};
SweepResult tolerance_sweep_with_fits(const MortalitySurface &surface, const Method &method,
                                      const std::vector<double> &tols,
                                      const HarnessOptions &options = {});

/// Max absolute difference of the concatenated normalized parameter vectors.
double max_param_delta(const ModelParams &lhs, const ModelParams &rhs);

void write_comparison_csv(std::ostream &out, const std::vector<ComparisonRow> &rows);
void write_sweep_csv(std::ostream &out, const std::vector<SweepRow> &rows);

} // namespace mortfit
