#pragma once

#include "mortfit/model.hpp"
#include "mortfit/mortality_data.hpp"

#include <cstdint>

namespace mortfit {

enum class NoiseMode {
    Gaussian, // log rates = fitted + N(0, sd); deaths = exposure * exp(log rate)
    Poisson,  // deaths ~ Poisson(exposure * exp(fitted + N(0, sd)))
};

/// Deterministic for a fixed seed. Exposures equal `base_exposure` everywhere.
/// In Gaussian mode with noise_sd = 0 the log rates are bit-identical to
/// fitted_log_rates(params).
MortalitySurface synthesize_surface(const ModelParams &params, double base_exposure,
                                    double noise_sd, std::uint64_t seed,
                                    NoiseMode mode = NoiseMode::Gaussian);

/// A smooth, realistic-looking identifiability-normalized bundle (Gompertz-like
/// a, declining b, curved k, oscillating trendless gamma).
ModelParams default_generator(ModelKind kind, const std::vector<int> &ages,
                              const std::vector<int> &years);

} // namespace mortfit
