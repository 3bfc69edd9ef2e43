#pragma once

#include "mortfit/model.hpp"
#include "mortfit/mortality_data.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace mortfit {

struct ConvergenceConfig {
    double tol = 1e-8;       // relative change of the outer objective
    int max_outer = 20000;
    double inner_tol = 1e-10; // relative change of the observed-cell loss
    int max_inner = 1000;
    // Extra seeded random starts of the inner solver when it has no warm start.
    int inner_restarts = 8;
    // Anderson-mix recent sweeps, keeping the mixed point only when it lowers
    // the objective. Speeds up the slow cohort-trend direction.
    bool accelerate = true;

    /// Throws std::invalid_argument unless tol, inner_tol lie in (0, 1) and the
    /// iteration caps are positive.
    void validate() const;
};

struct FitReport {
    std::vector<double> objective_trace; // one entry per iteration
    int iterations = 0;
    double wall_time_seconds = 0.0;
    bool converged = false;
};

struct FitResult {
    ModelParams params;
    FitReport report;
};

using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Residuals re-indexed by (age row, year of birth). Row i, column s holds the
/// age-period cell (i, s + i - (p - 1)) when that year lies in the data window;
/// the triangular corners are unobserved (mask false, value NaN).
struct AgeCohortMatrix {
    Eigen::MatrixXd values; // p x (n + p - 1)
    MaskMatrix mask;        // true = observed

    Eigen::Index num_ages() const noexcept { return values.rows(); }
    Eigen::Index num_cohorts() const noexcept { return values.cols(); }
    /// n_s for every column.
    Eigen::VectorXi observed_per_cohort() const;
    /// Sum of observed values in every column.
    Eigen::VectorXd observed_sums() const;
    /// sum over observed cells of (z - c_x g_s)^2.
    double observed_loss(const Eigen::VectorXd &c, const Eigen::VectorXd &gamma) const;
};

AgeCohortMatrix rearrange_to_age_cohort(const Eigen::MatrixXd &age_period);

/// Inverse of rearrange_to_age_cohort on the observed band. `num_years` is n.
Eigen::MatrixXd to_age_period(const AgeCohortMatrix &z, Eigen::Index num_years);

/// Rank-1 cohort factor c g^T.
struct CohortFactor {
    Eigen::VectorXd c;
    Eigen::VectorXd gamma;
};

struct InnerSolution {
    Eigen::VectorXd c;      // sums to one
    Eigen::VectorXd gamma;
    FitReport report;       // trace of the observed-cell loss
    Eigen::MatrixXd completed; // observed values plus final imputations c_x g_s
};

/// Rank-1 PCA with missing values by iterative SVD: impute, take the leading
/// triplet of the completed matrix, re-impute the unobserved cells from c g^T,
/// repeat until the observed-cell loss settles. The first imputation uses row
/// means of the observed values, or the reconstruction of `warm_start`.
/// Without a warm start, cfg.inner_restarts further runs begin from seeded
/// random factors and the run with the lowest loss is returned; the loss has
/// poor local valleys where some c_x shrinks to zero.
InnerSolution iterative_svd_missing(const AgeCohortMatrix &z, const ConvergenceConfig &cfg,
                                    const std::optional<CohortFactor> &warm_start = std::nullopt);

/// Closed-form cohort update with c fixed at 1/p: g_s = (p / n_s) sum_{x in O_s} z.
Eigen::VectorXd h1_gamma_update(const AgeCohortMatrix &z);

struct ConstrainedGamma {
    Eigen::VectorXd gamma;
    double lambda = 0.0;
};

/// Cohort update with c fixed at 1/p under sum_s (s - s_bar) g_s = 0, solved with
/// a Lagrange multiplier.
ConstrainedGamma h1_gamma_update_hv(const AgeCohortMatrix &z);

/// LC closed form: a = row means, (b, k) from the leading triplet of the
/// row-centred matrix.
FitResult fit_lc_ls(const Eigen::MatrixXd &y, const std::vector<int> &ages,
                    const std::vector<int> &years);

/// Alternating least squares for the RH model: a by row means,
/// (b, k) by a rank-1 fit, (c, g) by iterative_svd_missing on the age-cohort
/// residuals, then g re-centred into a. Stops on the relative change of the
/// total squared error.
FitResult fit_rh_ls(const Eigen::MatrixXd &y, const std::vector<int> &ages,
                    const std::vector<int> &years, const ConvergenceConfig &cfg = {});

/// As fit_rh_ls with c = 1/p; the cohort step is h1_gamma_update, or
/// h1_gamma_update_hv when `hv` is set.
FitResult fit_h1_ls(const Eigen::MatrixXd &y, const std::vector<int> &ages,
                    const std::vector<int> &years, const ConvergenceConfig &cfg = {},
                    bool hv = false);

/// As fit_h1_ls with b = 1/p as well; k_t = p * mean_x(y - a - g/p), centred
/// into a.
FitResult fit_apc_ls(const Eigen::MatrixXd &y, const std::vector<int> &ages,
                     const std::vector<int> &years, const ConvergenceConfig &cfg = {},
                     bool hv = false);

/// Dispatch on kind. `hv` applies to H1 and APC only.
FitResult fit_ls(const MortalitySurface &surface, ModelKind kind, const ConvergenceConfig &cfg = {},
                 bool hv = false);

} // namespace mortfit
