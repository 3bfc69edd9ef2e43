#include "mortfit/ls_estimators.hpp"

#include "mortfit/errors.hpp"
#include "mortfit/linalg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace mortfit {

namespace {

// Losses below floor * (1 + sum of squared data) are treated as exact fits;
// relative changes are meaningless once the loss is at rounding level.
constexpr double kLossFloor = 1e-26;
constexpr double kTripletTol = 1e-12;
constexpr int kTripletMaxIter = 5000;
constexpr std::uint64_t kRestartSeed = 0x5eed1e55;
constexpr int kScreenIterations = 1000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

bool settled(double prev, double current, double tol, double floor) {
    if (current <= floor || prev == 0.0) {
        return true;
    }
    return std::abs(prev - current) < tol * std::abs(prev);
}

// c_x * gamma_{t-x} laid out on the p x n age-period grid.
Eigen::MatrixXd cohort_surface(const Eigen::VectorXd &c, const Eigen::VectorXd &gamma,
                               Eigen::Index n) {
    const Eigen::Index p = c.size();
    Eigen::MatrixXd out(p, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < p; ++i) {
            out(i, j) = c(i) * gamma(j - i + p - 1);
        }
    }
    return out;
}

void check_grid(const Eigen::MatrixXd &y, const std::vector<int> &ages,
                const std::vector<int> &years, Eigen::Index min_dim) {
    if (y.rows() != static_cast<Eigen::Index>(ages.size()) ||
        y.cols() != static_cast<Eigen::Index>(years.size())) {
        throw std::invalid_argument("log-rate matrix dimensions do not match ages x years");
    }
    if (y.rows() < min_dim || y.cols() < min_dim) {
        throw std::invalid_argument("need at least " + std::to_string(min_dim) +
                                    " ages and years to fit this model");
    }
    if (!y.allFinite()) {
        throw std::invalid_argument("log-rate matrix has non-finite entries");
    }
}

void check_band(const AgeCohortMatrix &z) {
    if (z.mask.rows() != z.values.rows() || z.mask.cols() != z.values.cols()) {
        throw std::invalid_argument("age-cohort mask and values differ in shape");
    }
    if (z.values.rows() < 1 || z.values.cols() < 1) {
        throw std::invalid_argument("empty age-cohort matrix");
    }
    if ((z.mask.rowwise().count().array() == 0).any() ||
        (z.mask.colwise().count().array() == 0).any()) {
        throw std::invalid_argument("every age row and cohort column needs an observed cell");
    }
}

Eigen::VectorXd pack(const ModelParams &params) {
    Eigen::VectorXd out(params.a.size() + params.b.size() + params.k.size() + params.c.size() +
                        params.gamma.size());
    out << params.a, params.b, params.k, params.c, params.gamma;
    return out;
}

Eigen::VectorXd stack(const Eigen::VectorXd &head, const Eigen::VectorXd &tail) {
    Eigen::VectorXd out(head.size() + tail.size());
    out << head, tail;
    return out;
}

void unpack(const Eigen::VectorXd &theta, ModelParams &params) {
    Eigen::Index at = 0;
    for (Eigen::VectorXd *block : {&params.a, &params.b, &params.k, &params.c, &params.gamma}) {
        block->noalias() = theta.segment(at, block->size());
        at += block->size();
    }
}

// Anderson mixing of a fixed-point map x -> G(x) over a short window of past
// iterates. propose() returns the extrapolated point; the caller decides
// whether to accept it.
class AndersonMixer {
public:
    explicit AndersonMixer(int depth) : depth_(depth) {}

    void push(const Eigen::VectorXd &x, const Eigen::VectorXd &gx) {
        inputs_.push_back(x);
        outputs_.push_back(gx);
        if (static_cast<int>(inputs_.size()) > depth_ + 1) {
            inputs_.erase(inputs_.begin());
            outputs_.erase(outputs_.begin());
        }
    }

    void restart() {
        if (!inputs_.empty()) {
            inputs_.erase(inputs_.begin(), inputs_.end() - 1);
            outputs_.erase(outputs_.begin(), outputs_.end() - 1);
        }
    }

    std::optional<Eigen::VectorXd> propose() const {
        const auto cols = static_cast<Eigen::Index>(inputs_.size()) - 1;
        if (cols < 1) {
            return std::nullopt;
        }
        const Eigen::Index dim = inputs_.back().size();
        Eigen::MatrixXd dr(dim, cols);
        Eigen::MatrixXd dg(dim, cols);
        for (Eigen::Index j = 0; j < cols; ++j) {
            const auto i = static_cast<std::size_t>(j);
            dr.col(j) = (outputs_[i + 1] - inputs_[i + 1]) - (outputs_[i] - inputs_[i]);
            dg.col(j) = outputs_[i + 1] - outputs_[i];
        }
        const Eigen::VectorXd r = outputs_.back() - inputs_.back();
        const Eigen::VectorXd w = dr.completeOrthogonalDecomposition().solve(r);
        if (!w.allFinite()) {
            return std::nullopt;
        }
        return Eigen::VectorXd(outputs_.back() - dg * w);
    }

private:
    int depth_;
    std::vector<Eigen::VectorXd> inputs_;
    std::vector<Eigen::VectorXd> outputs_;
};

constexpr int kAndersonDepth = 10;

} // namespace

void ConvergenceConfig::validate() const {
    if (!(tol > 0.0 && tol < 1.0)) {
        throw std::invalid_argument("tol must lie in (0, 1)");
    }
    if (!(inner_tol > 0.0 && inner_tol < 1.0)) {
        throw std::invalid_argument("inner_tol must lie in (0, 1)");
    }
    if (max_outer < 1 || max_inner < 1) {
        throw std::invalid_argument("iteration caps must be positive");
    }
    if (inner_restarts < 0) {
        throw std::invalid_argument("inner_restarts must be non-negative");
    }
}

Eigen::VectorXi AgeCohortMatrix::observed_per_cohort() const {
    return mask.colwise().count().transpose().cast<int>();
}

Eigen::VectorXd AgeCohortMatrix::observed_sums() const {
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(values.cols());
    for (Eigen::Index s = 0; s < values.cols(); ++s) {
        for (Eigen::Index i = 0; i < values.rows(); ++i) {
            if (mask(i, s)) {
                sums(s) += values(i, s);
            }
        }
    }
    return sums;
}

double AgeCohortMatrix::observed_loss(const Eigen::VectorXd &c, const Eigen::VectorXd &gamma) const {
    double loss = 0.0;
    for (Eigen::Index s = 0; s < values.cols(); ++s) {
        for (Eigen::Index i = 0; i < values.rows(); ++i) {
            if (mask(i, s)) {
                const double r = values(i, s) - c(i) * gamma(s);
                loss += r * r;
            }
        }
    }
    return loss;
}

AgeCohortMatrix rearrange_to_age_cohort(const Eigen::MatrixXd &age_period) {
    const Eigen::Index p = age_period.rows();
    const Eigen::Index n = age_period.cols();
    if (p < 1 || n < 1) {
        throw std::invalid_argument("rearrange_to_age_cohort: empty matrix");
    }
    AgeCohortMatrix z;
    z.values = Eigen::MatrixXd::Constant(p, n + p - 1, std::numeric_limits<double>::quiet_NaN());
    z.mask = MaskMatrix::Constant(p, n + p - 1, false);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < p; ++i) {
            z.values(i, j - i + p - 1) = age_period(i, j);
            z.mask(i, j - i + p - 1) = true;
        }
    }
    return z;
}

Eigen::MatrixXd to_age_period(const AgeCohortMatrix &z, Eigen::Index num_years) {
    const Eigen::Index p = z.num_ages();
    if (num_years < 1 || z.num_cohorts() != num_years + p - 1) {
        throw std::invalid_argument("to_age_period: cohort count does not match n + p - 1");
    }
    Eigen::MatrixXd out(p, num_years);
    for (Eigen::Index j = 0; j < num_years; ++j) {
        for (Eigen::Index i = 0; i < p; ++i) {
            out(i, j) = z.values(i, j - i + p - 1);
        }
    }
    return out;
}

namespace {

// One run of the impute / rank-1 refit iteration from a given start.
InnerSolution iterate_from(const AgeCohortMatrix &z, const ConvergenceConfig &cfg,
                           const std::optional<CohortFactor> &start_factor, double floor) {
    const Eigen::Index p = z.num_ages();
    const Eigen::Index m = z.num_cohorts();
    InnerSolution sol;
    sol.completed = z.values;
    double prev = std::numeric_limits<double>::infinity();
    Eigen::VectorXd u;
    if (start_factor) {
        for (Eigen::Index s = 0; s < m; ++s) {
            for (Eigen::Index i = 0; i < p; ++i) {
                if (!z.mask(i, s)) {
                    sol.completed(i, s) = start_factor->c(i) * start_factor->gamma(s);
                }
            }
        }
        prev = z.observed_loss(start_factor->c, start_factor->gamma);
        u = start_factor->c;
    } else {
        for (Eigen::Index i = 0; i < p; ++i) {
            double sum = 0.0;
            int count = 0;
            for (Eigen::Index s = 0; s < m; ++s) {
                if (z.mask(i, s)) {
                    sum += z.values(i, s);
                    ++count;
                }
            }
            const double mean = sum / count;
            for (Eigen::Index s = 0; s < m; ++s) {
                if (!z.mask(i, s)) {
                    sol.completed(i, s) = mean;
                }
            }
        }
    }

    // Imputation then rank-1 refit is a fixed-point map on (c, gamma).
    AndersonMixer mixer(kAndersonDepth);
    std::optional<Eigen::VectorXd> factor_in;
    if (start_factor) {
        factor_in = stack(start_factor->c, start_factor->gamma);
    }

    for (int it = 1; it <= cfg.max_inner; ++it) {
        Rank1Fit fit = rank1_ls_fit(sol.completed, u, kTripletTol, kTripletMaxIter);
        sol.c = std::move(fit.b);
        sol.gamma = std::move(fit.k);
        u = std::move(fit.triplet.u);
        double loss = z.observed_loss(sol.c, sol.gamma);

        if (cfg.accelerate && factor_in) {
            mixer.push(*factor_in, stack(sol.c, sol.gamma));
            if (auto mixed = mixer.propose()) {
                const Eigen::VectorXd c_mix = mixed->head(p);
                const Eigen::VectorXd g_mix = mixed->tail(m);
                const double mixed_loss = z.observed_loss(c_mix, g_mix);
                if (mixed_loss < loss) {
                    sol.c = c_mix;
                    sol.gamma = g_mix;
                    loss = mixed_loss;
                } else {
                    mixer.restart();
                }
            }
        }
        factor_in = stack(sol.c, sol.gamma);

        for (Eigen::Index s = 0; s < m; ++s) {
            for (Eigen::Index i = 0; i < p; ++i) {
                if (!z.mask(i, s)) {
                    sol.completed(i, s) = sol.c(i) * sol.gamma(s);
                }
            }
        }
        sol.report.objective_trace.push_back(loss);
        sol.report.iterations = it;
        if (settled(prev, loss, cfg.inner_tol, floor)) {
            sol.report.converged = true;
            break;
        }
        prev = loss;
    }
    return sol;
}

// Random loading with the cohort index that best fits it.
CohortFactor random_start(const AgeCohortMatrix &z, std::mt19937_64 &rng) {
    std::normal_distribution<double> dist;
    CohortFactor f;
    f.c.resize(z.num_ages());
    for (auto &x : f.c) {
        x = dist(rng);
    }
    f.gamma.resize(z.num_cohorts());
    for (Eigen::Index s = 0; s < z.num_cohorts(); ++s) {
        double num = 0.0;
        double den = 0.0;
        for (Eigen::Index i = 0; i < z.num_ages(); ++i) {
            if (z.mask(i, s)) {
                num += f.c(i) * z.values(i, s);
                den += f.c(i) * f.c(i);
            }
        }
        f.gamma(s) = den > 0.0 ? num / den : 0.0;
    }
    return f;
}

} // namespace

InnerSolution iterative_svd_missing(const AgeCohortMatrix &z, const ConvergenceConfig &cfg,
                                    const std::optional<CohortFactor> &warm_start) {
    cfg.validate();
    check_band(z);
    const auto start = Clock::now();
    if (warm_start &&
        (warm_start->c.size() != z.num_ages() || warm_start->gamma.size() != z.num_cohorts())) {
        throw std::invalid_argument("iterative_svd_missing: warm start has wrong dimensions");
    }

    double observed_energy = 0.0;
    for (Eigen::Index s = 0; s < z.num_cohorts(); ++s) {
        for (Eigen::Index i = 0; i < z.num_ages(); ++i) {
            if (z.mask(i, s)) {
                observed_energy += z.values(i, s) * z.values(i, s);
            }
        }
    }
    const double floor = kLossFloor * (1.0 + observed_energy);

    if (warm_start || cfg.inner_restarts == 0) {
        InnerSolution sol = iterate_from(z, cfg, warm_start, floor);
        sol.report.wall_time_seconds = seconds_since(start);
        return sol;
    }

    // The loss is not convex. From a cold start, screen the row-mean start and
    // cfg.inner_restarts seeded random factors on a short budget, then continue
    // the lowest run.
    ConvergenceConfig screen = cfg;
    screen.max_inner = std::min(cfg.max_inner, kScreenIterations);
    InnerSolution best = iterate_from(z, screen, std::nullopt, floor);
    std::mt19937_64 rng(kRestartSeed);
    for (int r = 0; r < cfg.inner_restarts; ++r) {
        InnerSolution trial = iterate_from(z, screen, random_start(z, rng), floor);
        if (trial.report.objective_trace.back() <
            best.report.objective_trace.back() * (1.0 - 1e-12) - floor) {
            best = std::move(trial);
        }
    }
    if (!best.report.converged && best.report.iterations < cfg.max_inner) {
        ConvergenceConfig rest = cfg;
        rest.max_inner = cfg.max_inner - best.report.iterations;
        InnerSolution more = iterate_from(z, rest, CohortFactor{best.c, best.gamma}, floor);
        auto &trace = best.report.objective_trace;
        trace.insert(trace.end(), more.report.objective_trace.begin(),
                     more.report.objective_trace.end());
        best.c = std::move(more.c);
        best.gamma = std::move(more.gamma);
        best.completed = std::move(more.completed);
        best.report.iterations += more.report.iterations;
        best.report.converged = more.report.converged;
    }
    best.report.wall_time_seconds = seconds_since(start);
    return best;
}

Eigen::VectorXd h1_gamma_update(const AgeCohortMatrix &z) {
    check_band(z);
    const double p = static_cast<double>(z.num_ages());
    const Eigen::VectorXd ns = z.observed_per_cohort().cast<double>();
    return (p * z.observed_sums().array() / ns.array()).matrix();
}

ConstrainedGamma h1_gamma_update_hv(const AgeCohortMatrix &z) {
    check_band(z);
    const Eigen::Index m = z.num_cohorts();
    if (m < 2) {
        throw std::invalid_argument("h1_gamma_update_hv: needs at least two cohorts");
    }
    const double p = static_cast<double>(z.num_ages());
    const Eigen::VectorXd ns = z.observed_per_cohort().cast<double>();
    const Eigen::VectorXd sums = z.observed_sums();
    const Eigen::VectorXd offsets = cohort_offsets(z.num_ages(), m - z.num_ages() + 1);

    const double spread = (offsets.array().square() / ns.array()).sum();
    if (!(spread > 0.0)) {
        throw std::invalid_argument("h1_gamma_update_hv: cohort offsets are degenerate");
    }
    const double moment = (offsets.array() / ns.array() * sums.array()).sum();

    ConstrainedGamma out;
    out.lambda = moment / (p * spread);
    out.gamma = (p / ns.array() * (sums.array() - p * out.lambda * offsets.array())).matrix();
    return out;
}

FitResult fit_lc_ls(const Eigen::MatrixXd &y, const std::vector<int> &ages,
                    const std::vector<int> &years) {
    check_grid(y, ages, years, 2);
    const auto start = Clock::now();
    ModelParams params = initial_params(ModelKind::LC, ages, years, y);
    Eigen::MatrixXd centred = y;
    centred.colwise() -= params.a;
    Rank1Fit fit = rank1_ls_fit(centred);
    params.b = std::move(fit.b);
    params.k = std::move(fit.k);
    params = apply_identifiability(params);

    FitResult result{std::move(params), {}};
    result.report.objective_trace.push_back(l2_error(y, result.params));
    result.report.iterations = 1;
    result.report.converged = true;
    result.report.wall_time_seconds = seconds_since(start);
    return result;
}

namespace {



FitResult fit_alternating(const Eigen::MatrixXd &y, const std::vector<int> &ages,
                          const std::vector<int> &years, ModelKind kind,
                          const ConvergenceConfig &cfg, bool hv) {
    cfg.validate();
    check_grid(y, ages, years, 2);
    const auto start = Clock::now();
    const Eigen::Index p = y.rows();
    const Eigen::Index n = y.cols();

    ModelParams params = initial_params(kind, ages, years, y);
    params.hv_constrained = hv;
    Eigen::MatrixXd cohort = cohort_surface(params.c, params.gamma, n);
    const auto objective = [&] {
        Eigen::MatrixXd r = y - params.b * params.k.transpose() - cohort;
        r.colwise() -= params.a;
        return r.squaredNorm();
    };

    const double floor = kLossFloor * (1.0 + y.squaredNorm());
    double prev = objective();
    FitReport report;
    Eigen::VectorXd u_period;
    std::optional<CohortFactor> warm;
    AndersonMixer mixer(kAndersonDepth);

    for (int it = 1; it <= cfg.max_outer; ++it) {
        const Eigen::VectorXd theta_in = pack(params);

        // a given (b, k, c, gamma)
        params.a = (y - params.b * params.k.transpose() - cohort).rowwise().mean();

        // (b, k) given (a, c, gamma)
        Eigen::MatrixXd r = y - cohort;
        r.colwise() -= params.a;
        if (kind == ModelKind::APC) {
            params.k = static_cast<double>(p) * r.colwise().mean().transpose();
        } else {
            Rank1Fit fit = rank1_ls_fit(r, u_period, kTripletTol, kTripletMaxIter);
            params.b = std::move(fit.b);
            params.k = std::move(fit.k);
            u_period = std::move(fit.triplet.u);
        }
        // sum k = 0, compensated in a (b sums to one)
        const double kbar = params.k.mean();
        params.k.array() -= kbar;
        params.a += params.b * kbar;

        // (c, gamma) given (a, b, k)
        Eigen::MatrixXd z = y - params.b * params.k.transpose();
        z.colwise() -= params.a;
        const AgeCohortMatrix zac = rearrange_to_age_cohort(z);
        if (kind == ModelKind::RH) {
            InnerSolution inner = iterative_svd_missing(zac, cfg, warm);
            params.c = std::move(inner.c);
            params.gamma = std::move(inner.gamma);
        } else if (hv) {
            params.gamma = h1_gamma_update_hv(zac).gamma;
        } else {
            params.gamma = h1_gamma_update(zac);
        }
        const double gbar = params.gamma.mean();
        params.gamma.array() -= gbar;
        params.a += params.c * gbar;
        cohort = cohort_surface(params.c, params.gamma, n);
        double current = objective();

        if (cfg.accelerate) {
            // The sweep is a fixed-point map on the normalized bundle; mix it
            // over recent sweeps and keep the mix only when it fits better.
            // Affine constraints shared by the mixed points carry over.
            mixer.push(theta_in, pack(params));
            if (auto mixed = mixer.propose()) {
                ModelParams trial = params;
                unpack(*mixed, trial);
                const Eigen::MatrixXd trial_cohort = cohort_surface(trial.c, trial.gamma, n);
                Eigen::MatrixXd rt = y - trial.b * trial.k.transpose() - trial_cohort;
                rt.colwise() -= trial.a;
                const double trial_loss = rt.squaredNorm();
                if (trial_loss < current) {
                    params = std::move(trial);
                    cohort = trial_cohort;
                    current = trial_loss;
                } else {
                    mixer.restart();
                }
            }
        }
        warm = CohortFactor{params.c, params.gamma};

        report.objective_trace.push_back(current);
        report.iterations = it;
        if (settled(prev, current, cfg.tol, floor)) {
            report.converged = true;
            break;
        }
        prev = current;
    }

    FitResult result{apply_identifiability(params), std::move(report)};
    result.report.wall_time_seconds = seconds_since(start);
    return result;
}

} // namespace

FitResult fit_rh_ls(const Eigen::MatrixXd &y, const std::vector<int> &ages,
                    const std::vector<int> &years, const ConvergenceConfig &cfg) {
    return fit_alternating(y, ages, years, ModelKind::RH, cfg, false);
}

FitResult fit_h1_ls(const Eigen::MatrixXd &y, const std::vector<int> &ages,
                    const std::vector<int> &years, const ConvergenceConfig &cfg, bool hv) {
    return fit_alternating(y, ages, years, ModelKind::H1, cfg, hv);
}

FitResult fit_apc_ls(const Eigen::MatrixXd &y, const std::vector<int> &ages,
                     const std::vector<int> &years, const ConvergenceConfig &cfg, bool hv) {
    return fit_alternating(y, ages, years, ModelKind::APC, cfg, hv);
}

FitResult fit_ls(const MortalitySurface &surface, ModelKind kind, const ConvergenceConfig &cfg,
                 bool hv) {
    const auto &y = surface.log_rates();
    switch (kind) {
    case ModelKind::LC:
        if (hv) {
            throw std::invalid_argument("the cohort-trend constraint needs a cohort model");
        }
        return fit_lc_ls(y, surface.ages(), surface.years());
    case ModelKind::RH:
        if (hv) {
            throw std::invalid_argument(
                "least-squares cohort-trend fitting is available for H1 and APC only");
        }
        return fit_rh_ls(y, surface.ages(), surface.years(), cfg);
    case ModelKind::H1:
        return fit_h1_ls(y, surface.ages(), surface.years(), cfg, hv);
    case ModelKind::APC:
        return fit_apc_ls(y, surface.ages(), surface.years(), cfg, hv);
    }
    throw std::invalid_argument("unknown model kind");
}

} // namespace mortfit
