#pragma once

#include "mortfit/mortality_data.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mortfit {

/// Structural forms of log m(x,t):
///   LC   a_x + b_x k_t
///   RH   a_x + b_x k_t + c_x g_{t-x}
///   H1   RH with c_x = 1/p
///   APC  H1 with b_x = 1/p
enum class ModelKind { LC, RH, H1, APC };

std::string_view to_string(ModelKind kind) noexcept;
/// Case-insensitive ("rh", "RH", ...).
ModelKind parse_model_kind(std::string_view name);

constexpr bool has_cohort(ModelKind kind) noexcept { return kind != ModelKind::LC; }
constexpr bool fixed_cohort_loading(ModelKind kind) noexcept {
    return kind == ModelKind::H1 || kind == ModelKind::APC;
}
constexpr bool fixed_period_loading(ModelKind kind) noexcept { return kind == ModelKind::APC; }

/// Parameter bundle. `gamma` is indexed by year of birth from
/// years.front() - ages.back() to years.back() - ages.front(); `c` and `gamma`
/// are empty for LC.
struct ModelParams {
    ModelKind kind = ModelKind::LC;
    std::vector<int> ages;
    std::vector<int> years;
    Eigen::VectorXd a;
    Eigen::VectorXd b;
    Eigen::VectorXd k;
    Eigen::VectorXd c;
    Eigen::VectorXd gamma;
    bool hv_constrained = false;

    Eigen::Index num_ages() const noexcept { return static_cast<Eigen::Index>(ages.size()); }
    Eigen::Index num_years() const noexcept { return static_cast<Eigen::Index>(years.size()); }
    Eigen::Index num_cohorts() const noexcept { return num_ages() + num_years() - 1; }
    int first_cohort() const { return years.front() - ages.back(); }

    /// Throws std::invalid_argument on inconsistent dimensions.
    void validate() const;
};

/// Common starting point for every estimator: a = row means of y, b = c = 1/p,
/// k = 0, gamma = 0.
ModelParams initial_params(ModelKind kind, const std::vector<int> &ages,
                           const std::vector<int> &years, const Eigen::MatrixXd &y);

/// Year-of-birth offsets s - s_bar for s over the cohort range.
Eigen::VectorXd cohort_offsets(Eigen::Index num_ages, Eigen::Index num_years);

/// sum_s (s - s_bar) gamma_s; zero when the cohort-trend constraint holds.
double hv_moment(const ModelParams &params);

Eigen::MatrixXd fitted_log_rates(const ModelParams &params);

/// Sum of squared residuals over all cells.
double l2_error(const Eigen::MatrixXd &y, const ModelParams &params);

/// sum D*eta - N*exp(eta); with `include_constant` also sum D log N - log(D!),
/// giving the full Poisson log-likelihood. Rate-only surfaces throw CapabilityError.
double poisson_loglik(const MortalitySurface &surface, const ModelParams &params,
                      bool include_constant);

/// Equivalent bundle (same fitted rates) with sum b = 1, sum k = 0 and, for
/// cohort models, sum c = 1, sum gamma = 0. Fixed loadings of H1/APC must be
/// uniform and come back as exactly 1/p.
ModelParams apply_identifiability(const ModelParams &params);

/// Largest absolute violation among the applicable identifiability constraints
/// (the cohort-trend moment is not included).
double constraint_violation(const ModelParams &params);

/// `{kind, ages, years, a, b, k, c, gamma, hv_constrained}` with 17 significant digits.
std::string to_json(const ModelParams &params);
ModelParams params_from_json(std::string_view text);

/// Long format `series,index,value`; index is age, year or year of birth.
void write_params_csv(std::ostream &out, const ModelParams &params);

} // namespace mortfit
