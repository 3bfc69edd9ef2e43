#pragma once

#include "mortfit/ls_estimators.hpp"
#include "mortfit/model.hpp"
#include "mortfit/mortality_data.hpp"

namespace mortfit {

struct MleConfig {
    double tol = 1e-8; // relative change of the full Poisson log-likelihood
    int max_outer = 20000;
    bool hv = false;

    void validate() const;
};

/// Poisson maximum likelihood by cyclic one-dimensional Newton updates over the
/// blocks a, k, b, gamma, c (blocks absent from `kind` are skipped). Each
/// parameter moves by sum(D - mu) w / sum(mu w^2), w being its multiplier in
/// eta, with step halving whenever a step would lower that parameter's own
/// likelihood contribution. The bundle is re-normalized after every sweep. The
/// trace holds the full log-likelihood (Poisson constant included).
///
/// With cfg.hv set this forwards to fit_poisson_mle_hv.
FitResult fit_poisson_mle(const MortalitySurface &surface, ModelKind kind, const MleConfig &cfg = {});

/// As fit_poisson_mle, with hv_project applied after every sweep. The trace may
/// decrease since the projection is only approximately invariant.
FitResult fit_poisson_mle_hv(const MortalitySurface &surface, ModelKind kind, MleConfig cfg = {});

/// Enforce sum_s (s - s_bar) g_s = 0 through the approximately invariant
/// transformation of the period/cohort split (exact when k is linear in t).
/// With K the slope of k on t and g = -sum (s - s_bar) g_s / sum (s - s_bar)^2:
///   a_x + g c_x (x - x_bar),  (K b_x - g c_x)/(K - g),  (K - g)/K k_t,  g_s + g (s - s_bar).
/// H1 uses this form with c = 1/p and RH with its own c. APC, where b is pinned to 1/p, uses the exactly invariant
/// shift a_x + (g/p)(x - x_bar), k_t - g (t - t_bar), g_s + g (s - s_bar).
ModelParams hv_project(const ModelParams &params);

/// Largest |sum (D - mu) w| over the parameters of each block; all vanish at a
/// stationary point of the log-likelihood.
struct BlockScores {
    double a = 0.0;
    double b = 0.0;
    double k = 0.0;
    double c = 0.0;
    double gamma = 0.0;

    double max() const noexcept;
};

BlockScores newton_scores(const MortalitySurface &surface, const ModelParams &params);

} // namespace mortfit
