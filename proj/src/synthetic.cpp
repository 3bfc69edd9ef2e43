#include "mortfit/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace mortfit {

MortalitySurface synthesize_surface(const ModelParams &params, double base_exposure,
                                    double noise_sd, std::uint64_t seed, NoiseMode mode) {
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) {
        throw std::invalid_argument("noise_sd must be a non-negative finite number");
    }
    if (!(base_exposure > 0.0) || !std::isfinite(base_exposure)) {
        throw std::invalid_argument("base_exposure must be positive");
    }
    const Eigen::MatrixXd fitted = fitted_log_rates(params);
    const Eigen::Index p = fitted.rows();
    const Eigen::Index n = fitted.cols();

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd eta = fitted;
    if (noise_sd > 0.0) {
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = 0; i < p; ++i) {
                eta(i, j) += noise_sd * normal(rng);
            }
        }
    }
    Eigen::MatrixXd exposures = Eigen::MatrixXd::Constant(p, n, base_exposure);

    if (mode == NoiseMode::Poisson) {
        Eigen::MatrixXd deaths(p, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = 0; i < p; ++i) {
                std::poisson_distribution<long long> draw(base_exposure * std::exp(eta(i, j)));
                deaths(i, j) = static_cast<double>(draw(rng));
            }
        }
        return MortalitySurface(params.ages, params.years, std::move(deaths), std::move(exposures));
    }

    Eigen::MatrixXd deaths = (exposures.array() * eta.array().exp()).matrix();
    return MortalitySurface::from_columns(params.ages, params.years, std::move(deaths),
                                          std::move(exposures), std::move(eta), false);
}

ModelParams default_generator(ModelKind kind, const std::vector<int> &ages,
                              const std::vector<int> &years) {
    using std::numbers::pi;
    ModelParams params;
    params.kind = kind;
    params.ages = ages;
    params.years = years;
    const Eigen::Index p = params.num_ages();
    const Eigen::Index n = params.num_years();
    const Eigen::Index m = params.num_cohorts();
    const auto rel = [](Eigen::Index i, Eigen::Index count) {
        return count > 1 ? static_cast<double>(i) / static_cast<double>(count - 1) : 0.0;
    };

    params.a.resize(p);
    params.b.resize(p);
    for (Eigen::Index i = 0; i < p; ++i) {
        params.a(i) = -4.6 + 0.095 * static_cast<double>(ages[i] - ages.front());
        params.b(i) = 1.5 - rel(i, p);
    }
    if (kind == ModelKind::APC) {
        params.b.setConstant(1.0);
    }
    params.k.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double u = rel(j, n);
        params.k(j) = -1.5 * (u - 0.5) + 0.2 * std::sin(3.0 * pi * u) + 0.15 * u * u;
    }
    if (has_cohort(kind)) {
        params.c.resize(p);
        params.gamma.resize(m);
        for (Eigen::Index i = 0; i < p; ++i) {
            params.c(i) = kind == ModelKind::RH ? 1.0 + 0.8 * std::cos(pi * rel(i, p)) : 1.0;
        }
        for (Eigen::Index s = 0; s < m; ++s) {
            const double u = rel(s, m);
            params.gamma(s) = 0.08 * std::sin(3.0 * pi * u) + 0.04 * std::cos(5.0 * pi * u);
        }
        // Remove the linear trend so the generator satisfies the cohort-trend moment.
        const Eigen::VectorXd offsets = cohort_offsets(p, n);
        params.gamma -= (offsets.dot(params.gamma) / offsets.squaredNorm()) * offsets;
    }
    return apply_identifiability(params);
}

} // namespace mortfit
