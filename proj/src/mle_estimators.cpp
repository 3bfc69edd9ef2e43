#include "mortfit/mle_estimators.hpp"

#include "mortfit/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mortfit {

namespace {

constexpr double kEtaClamp = 50.0;
constexpr int kMaxHalvings = 60;

using Clock = std::chrono::steady_clock;

Eigen::VectorXd centred_index(Eigen::Index count) {
    const double mid = 0.5 * static_cast<double>(count - 1);
    Eigen::VectorXd out(count);
    for (Eigen::Index i = 0; i < count; ++i) {
        out(i) = static_cast<double>(i) - mid;
    }
    return out;
}

class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// Mutable working state of one Newton fit: parameters, linear predictor and
// expected deaths kept in sync.
class PoissonState {
public:
    PoissonState(const MortalitySurface &surface, ModelParams params)
        : surface_{surface}, params_{std::move(params)}, p_{surface.num_ages()},
          n_{surface.num_years()} {
        const auto &d = surface.deaths();
        const auto &e = surface.exposures();
        CompensatedSum constant;
        for (Eigen::Index j = 0; j < n_; ++j) {
            for (Eigen::Index i = 0; i < p_; ++i) {
                constant.add(d(i, j) * std::log(e(i, j)));
                constant.add(-std::lgamma(d(i, j) + 1.0));
            }
        }
        constant_ = constant.value();
        refresh();
    }

    const ModelParams &params() const noexcept { return params_; }

    void set_params(ModelParams params) {
        params_ = std::move(params);
        refresh();
    }

    double loglik() const {
        const auto &d = surface_.deaths();
        CompensatedSum total;
        for (Eigen::Index j = 0; j < n_; ++j) {
            for (Eigen::Index i = 0; i < p_; ++i) {
                total.add(d(i, j) * eta_(i, j));
                total.add(-mu_(i, j));
            }
        }
        return total.value() + constant_;
    }

    void sweep() {
        const auto kind = params_.kind;
        // a_x: w = 1 over the row.
        for (Eigen::Index i = 0; i < p_; ++i) {
            params_.a(i) += update([&](auto &&f) {
                for (Eigen::Index j = 0; j < n_; ++j) {
                    f(i, j, 1.0);
                }
            });
        }
        // k_t: w = b_x over the column.
        for (Eigen::Index j = 0; j < n_; ++j) {
            params_.k(j) += update([&](auto &&f) {
                for (Eigen::Index i = 0; i < p_; ++i) {
                    f(i, j, params_.b(i));
                }
            });
        }
        // b_x: w = k_t over the row.
        if (!fixed_period_loading(kind)) {
            for (Eigen::Index i = 0; i < p_; ++i) {
                params_.b(i) += update([&](auto &&f) {
                    for (Eigen::Index j = 0; j < n_; ++j) {
                        f(i, j, params_.k(j));
                    }
                });
            }
        }
        if (!has_cohort(kind)) {
            return;
        }
        // gamma_s: w = c_x over the diagonal t - x = s.
        for (Eigen::Index s = 0; s < p_ + n_ - 1; ++s) {
            const Eigen::Index i_lo = std::max<Eigen::Index>(0, p_ - 1 - s);
            const Eigen::Index i_hi = std::min<Eigen::Index>(p_ - 1, n_ + p_ - 2 - s);
            params_.gamma(s) += update([&](auto &&f) {
                for (Eigen::Index i = i_lo; i <= i_hi; ++i) {
                    f(i, s + i - (p_ - 1), params_.c(i));
                }
            });
        }
        // c_x: w = gamma_{t-x} over the row.
        if (!fixed_cohort_loading(kind)) {
            for (Eigen::Index i = 0; i < p_; ++i) {
                params_.c(i) += update([&](auto &&f) {
                    for (Eigen::Index j = 0; j < n_; ++j) {
                        f(i, j, params_.gamma(j - i + p_ - 1));
                    }
                });
            }
        }
    }

    // Per-block max |sum (D - mu) w|.
    BlockScores scores() const {
        const auto &d = surface_.deaths();
        BlockScores out;
        for (Eigen::Index i = 0; i < p_; ++i) {
            double sa = 0.0, sb = 0.0, sc = 0.0;
            for (Eigen::Index j = 0; j < n_; ++j) {
                const double r = d(i, j) - mu_(i, j);
                sa += r;
                sb += r * params_.k(j);
                if (has_cohort(params_.kind)) {
                    sc += r * params_.gamma(j - i + p_ - 1);
                }
            }
            out.a = std::max(out.a, std::abs(sa));
            if (!fixed_period_loading(params_.kind)) {
                out.b = std::max(out.b, std::abs(sb));
            }
            if (params_.kind == ModelKind::RH) {
                out.c = std::max(out.c, std::abs(sc));
            }
        }
        for (Eigen::Index j = 0; j < n_; ++j) {
            double sk = 0.0;
            for (Eigen::Index i = 0; i < p_; ++i) {
                sk += (d(i, j) - mu_(i, j)) * params_.b(i);
            }
            out.k = std::max(out.k, std::abs(sk));
        }
        if (has_cohort(params_.kind)) {
            Eigen::VectorXd sg = Eigen::VectorXd::Zero(p_ + n_ - 1);
            for (Eigen::Index j = 0; j < n_; ++j) {
                for (Eigen::Index i = 0; i < p_; ++i) {
                    sg(j - i + p_ - 1) += (d(i, j) - mu_(i, j)) * params_.c(i);
                }
            }
            out.gamma = sg.cwiseAbs().maxCoeff();
        }
        return out;
    }

    // Throws if the linear predictor left the clamp window.
    void check_clamp() const {
        for (Eigen::Index j = 0; j < n_; ++j) {
            for (Eigen::Index i = 0; i < p_; ++i) {
                if (std::abs(eta_(i, j)) > kEtaClamp) {
                    throw NumericalError("log rate left [-50, 50] at age " +
                                         std::to_string(surface_.ages()[i]) + ", year " +
                                         std::to_string(surface_.years()[j]));
                }
            }
        }
    }

private:
    void refresh() {
        eta_ = fitted_log_rates(params_);
        mu_.resize(p_, n_);
        for (Eigen::Index j = 0; j < n_; ++j) {
            for (Eigen::Index i = 0; i < p_; ++i) {
                set_mu(i, j);
            }
        }
    }

    void set_mu(Eigen::Index i, Eigen::Index j) {
        if (!std::isfinite(eta_(i, j))) {
            throw NumericalError("non-finite log rate at age " + std::to_string(surface_.ages()[i]) +
                                 ", year " + std::to_string(surface_.years()[j]));
        }
        mu_(i, j) = surface_.exposures()(i, j) * std::exp(std::clamp(eta_(i, j), -kEtaClamp, kEtaClamp));
    }

    // Safeguarded Newton step for one parameter; `cells(f)` calls f(i, j, w)
    // for every cell the parameter enters with multiplier w. Applies the step to
    // eta/mu and returns it.
    template <class Cells> double update(Cells &&cells) {
        const auto &d = surface_.deaths();
        double num = 0.0;
        double den = 0.0;
        cells([&](Eigen::Index i, Eigen::Index j, double w) {
            num += (d(i, j) - mu_(i, j)) * w;
            den += mu_(i, j) * w * w;
        });
        if (!(den > 0.0) || num == 0.0) {
            return 0.0;
        }
        double step = num / den;
        if (!std::isfinite(step)) {
            throw NumericalError("non-finite Newton step");
        }
        bool accepted = false;
        for (int h = 0; h < kMaxHalvings; ++h) {
            // Change in this parameter's log-likelihood terms:
            // num*step - sum mu (exp(w step) - 1 - w step).
            double curvature = 0.0;
            cells([&](Eigen::Index i, Eigen::Index j, double w) {
                const double ws = w * step;
                curvature += mu_(i, j) * (std::expm1(ws) - ws);
            });
            if (num * step - curvature >= 0.0) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            return 0.0;
        }
        cells([&](Eigen::Index i, Eigen::Index j, double w) {
            eta_(i, j) += w * step;
            set_mu(i, j);
        });
        return step;
    }

    const MortalitySurface &surface_;
    ModelParams params_;
    Eigen::Index p_;
    Eigen::Index n_;
    Eigen::MatrixXd eta_;
    Eigen::MatrixXd mu_;
    double constant_ = 0.0;
};

void check_surface(const MortalitySurface &surface) {
    if (surface.rates_only()) {
        throw CapabilityError("Poisson MLE needs deaths and exposures; surface is rate-only");
    }
    if (surface.num_ages() < 2 || surface.num_years() < 2) {
        throw std::invalid_argument("Poisson MLE needs at least two ages and two years");
    }
}

FitResult run_newton(const MortalitySurface &surface, ModelKind kind, const MleConfig &cfg,
                     bool hv) {
    cfg.validate();
    check_surface(surface);
    if (hv && !has_cohort(kind)) {
        throw std::invalid_argument("the cohort-trend constraint needs a cohort model");
    }
    const auto start = Clock::now();
    ModelParams init = initial_params(kind, surface.ages(), surface.years(), surface.log_rates());
    init.hv_constrained = hv;
    PoissonState state(surface, std::move(init));

    FitReport report;
    double prev = state.loglik();
    for (int it = 1; it <= cfg.max_outer; ++it) {
        state.sweep();
        ModelParams next = apply_identifiability(state.params());
        if (hv) {
            next = hv_project(next);
        }
        state.set_params(std::move(next));
        const double current = state.loglik();
        if (!std::isfinite(current)) {
            throw NumericalError("log-likelihood became non-finite");
        }
        report.objective_trace.push_back(current);
        report.iterations = it;
        if (std::abs(current - prev) < cfg.tol * std::abs(prev)) {
            report.converged = true;
            break;
        }
        prev = current;
    }
    if (report.converged) {
        state.check_clamp();
    }
    report.wall_time_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return {state.params(), std::move(report)};
}

} // namespace

void MleConfig::validate() const {
    if (!(tol > 0.0 && tol < 1.0)) {
        throw std::invalid_argument("tol must lie in (0, 1)");
    }
    if (max_outer < 1) {
        throw std::invalid_argument("max_outer must be positive");
    }
}

double BlockScores::max() const noexcept { return std::max({a, b, k, c, gamma}); }

FitResult fit_poisson_mle(const MortalitySurface &surface, ModelKind kind, const MleConfig &cfg) {
    if (cfg.hv) {
        return fit_poisson_mle_hv(surface, kind, cfg);
    }
    return run_newton(surface, kind, cfg, false);
}

FitResult fit_poisson_mle_hv(const MortalitySurface &surface, ModelKind kind, MleConfig cfg) {
    cfg.hv = true;
    return run_newton(surface, kind, cfg, true);
}

ModelParams hv_project(const ModelParams &params) {
    params.validate();
    if (!has_cohort(params.kind)) {
        throw std::invalid_argument("hv_project: the cohort-trend constraint needs a cohort model");
    }
    const Eigen::Index p = params.num_ages();
    const Eigen::Index n = params.num_years();
    const Eigen::VectorXd age_off = centred_index(p);
    const Eigen::VectorXd year_off = centred_index(n);
    const Eigen::VectorXd cohort_off = cohort_offsets(p, n);

    const double g = -cohort_off.dot(params.gamma) / cohort_off.squaredNorm();
    ModelParams out = params;
    out.hv_constrained = true;
    if (g == 0.0) {
        return out;
    }
    out.gamma += g * cohort_off;

    if (params.kind == ModelKind::APC) {
        const double inv_p = 1.0 / static_cast<double>(p);
        out.a += (g * inv_p) * age_off;
        out.k -= g * year_off;
        return out;
    }

    const double slope = year_off.dot(params.k) / year_off.squaredNorm();
    if (std::abs(slope) < 1e-12 || std::abs(slope - g) < 1e-12) {
        throw NumericalError("hv_project: degenerate transformation (period slope " +
                             std::to_string(slope) + ", shift " + std::to_string(g) + ")");
    }
    out.a += g * params.c.cwiseProduct(age_off);
    out.b = (slope * params.b - g * params.c) / (slope - g);
    out.k *= (slope - g) / slope;
    return out;
}

BlockScores newton_scores(const MortalitySurface &surface, const ModelParams &params) {
    if (surface.rates_only()) {
        throw CapabilityError("newton_scores needs deaths and exposures; surface is rate-only");
    }
    PoissonState state(surface, params);
    return state.scores();
}

} // namespace mortfit
