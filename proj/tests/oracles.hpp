#pragma once

// Reference solvers used only by the tests. They share no code with the
// library's estimators and favour obviousness over speed.

#include "mortfit/ls_estimators.hpp"
#include "mortfit/model.hpp"
#include "mortfit/synthetic.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace oracle {

inline Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64 &rng,
                                     double sd = 1.0) {
    std::normal_distribution<double> dist(0.0, sd);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            m(i, j) = dist(rng);
        }
    }
    return m;
}

/// Random age-cohort band: values of a p x n age-period matrix drawn around a
/// rank-1 pattern with positive loadings, rearranged.
inline mortfit::AgeCohortMatrix random_band(Eigen::Index p, Eigen::Index n, std::uint64_t seed,
                                            double noise = 0.3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.5, 1.5);
    Eigen::VectorXd c(p);
    for (auto &x : c) {
        x = unit(rng);
    }
    const Eigen::MatrixXd g = normal_matrix(1, p + n - 1, rng);
    Eigen::MatrixXd ac = c * g + normal_matrix(p, p + n - 1, rng, noise);
    Eigen::MatrixXd ap(p, n);
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            ap(i, j) = ac(i, j - i + p - 1);
        }
    }
    return mortfit::rearrange_to_age_cohort(ap);
}

inline double observed_loss(const mortfit::AgeCohortMatrix &z, const Eigen::VectorXd &c,
                            const Eigen::VectorXd &g) {
    double loss = 0.0;
    for (Eigen::Index s = 0; s < z.values.cols(); ++s) {
        for (Eigen::Index i = 0; i < z.values.rows(); ++i) {
            if (z.mask(i, s)) {
                const double r = z.values(i, s) - c(i) * g(s);
                loss += r * r;
            }
        }
    }
    return loss;
}

namespace detail {

// Exact coordinate-wise minimization sweeps; returns the final loss.
inline double coordinate_descent(const mortfit::AgeCohortMatrix &z, Eigen::VectorXd &c,
                                 Eigen::VectorXd &g, int max_sweeps, double rel_tol) {
    const Eigen::Index p = z.values.rows();
    const Eigen::Index m = z.values.cols();
    double prev = std::numeric_limits<double>::infinity();
    double loss = prev;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        for (Eigen::Index s = 0; s < m; ++s) {
            double num = 0.0;
            double den = 0.0;
            for (Eigen::Index i = 0; i < p; ++i) {
                if (z.mask(i, s)) {
                    num += c(i) * z.values(i, s);
                    den += c(i) * c(i);
                }
            }
            g(s) = den > 0.0 ? num / den : 0.0;
        }
        for (Eigen::Index i = 0; i < p; ++i) {
            double num = 0.0;
            double den = 0.0;
            for (Eigen::Index s = 0; s < m; ++s) {
                if (z.mask(i, s)) {
                    num += g(s) * z.values(i, s);
                    den += g(s) * g(s);
                }
            }
            c(i) = den > 0.0 ? num / den : 0.0;
        }
        // keep the scale balanced so neither factor drifts to 0 or inf
        const double scale = std::sqrt(g.norm() / std::max(c.norm(), 1e-300));
        if (std::isfinite(scale) && scale > 0.0) {
            c *= scale;
            g /= scale;
        }
        loss = observed_loss(z, c, g);
        if (prev - loss <= rel_tol * loss) {
            break;
        }
        prev = loss;
    }
    return loss;
}

} // namespace detail

/// min over (c, g) of the observed-cell loss by exact coordinate-wise
/// minimization (each g_s, then each c_x, in closed form) from many random
/// starts; the few best runs are then continued to full convergence. The loss
/// is invariant to c -> t c, g -> g / t, so no normalization is needed.
inline double rank1_missing_min(const mortfit::AgeCohortMatrix &z, int restarts,
                                std::uint64_t seed) {
    const Eigen::Index p = z.values.rows();
    const Eigen::Index m = z.values.cols();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist;
    struct Run {
        double loss;
        Eigen::VectorXd c;
        Eigen::VectorXd g;
    };
    std::vector<Run> runs;
    for (int r = 0; r < restarts; ++r) {
        Run run{0.0, Eigen::VectorXd(p), Eigen::VectorXd(m)};
        for (auto &x : run.c) {
            x = dist(rng);
        }
        run.loss = detail::coordinate_descent(z, run.c, run.g, 3000, 1e-14);
        runs.push_back(std::move(run));
    }
    std::sort(runs.begin(), runs.end(),
              [](const Run &x, const Run &y) { return x.loss < y.loss; });
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < std::min<std::size_t>(5, runs.size()); ++r) {
        best = std::min(best, detail::coordinate_descent(z, runs[r].c, runs[r].g, 2000000, 0.0));
    }
    return best;
}

/// Golden-section minimizer of a unimodal function on [lo, hi].
template <typename F>
double golden_min(F &&f, double lo, double hi, double tol = 1e-13) {
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - ratio * (hi - lo);
    double x2 = lo + ratio * (hi - lo);
    double f1 = f(x1);
    double f2 = f(x2);
    while (hi - lo > tol * (1.0 + std::abs(lo) + std::abs(hi))) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    return 0.5 * (lo + hi);
}

/// Equality-constrained least squares: minimize the observed-cell loss of
/// z_{x,s} - g_s / p subject to w^T g = 0, by solving the full KKT system
/// with a dense LU factorization.
inline Eigen::VectorXd constrained_cohort_qp(const mortfit::AgeCohortMatrix &z,
                                             const Eigen::VectorXd &w) {
    const Eigen::Index p = z.values.rows();
    const Eigen::Index m = z.values.cols();
    const double inv_p = 1.0 / static_cast<double>(p);
    // Design matrix: one row per observed cell, column s has 1/p.
    std::vector<std::pair<Eigen::Index, double>> rows;
    for (Eigen::Index s = 0; s < m; ++s) {
        for (Eigen::Index i = 0; i < p; ++i) {
            if (z.mask(i, s)) {
                rows.emplace_back(s, z.values(i, s));
            }
        }
    }
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), m);
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        x(static_cast<Eigen::Index>(r), rows[r].first) = inv_p;
        y(static_cast<Eigen::Index>(r)) = rows[r].second;
    }
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(m + 1, m + 1);
    kkt.topLeftCorner(m, m) = 2.0 * x.transpose() * x;
    kkt.topRightCorner(m, 1) = w;
    kkt.bottomLeftCorner(1, m) = w.transpose();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
    rhs.head(m) = 2.0 * x.transpose() * y;
    return kkt.fullPivLu().solve(rhs).head(m);
}

inline double cohort_loss(const mortfit::AgeCohortMatrix &z, const Eigen::VectorXd &g) {
    const Eigen::VectorXd c =
        Eigen::VectorXd::Constant(z.values.rows(), 1.0 / static_cast<double>(z.values.rows()));
    return observed_loss(z, c, g);
}

/// Oracle LS fit for the LC model: row means, then the leading pair of a dense
/// decomposition of the centred matrix.
inline double lc_oracle_loss(const Eigen::MatrixXd &y) {
    Eigen::MatrixXd centred = y;
    centred.colwise() -= y.rowwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::MatrixXd approx = svd.singularValues()(0) * svd.matrixU().col(0) *
                                   svd.matrixV().col(0).transpose();
    return (centred - approx).squaredNorm();
}

/// Max absolute difference of two bundles after normalization.
inline double param_distance(const mortfit::ModelParams &x, const mortfit::ModelParams &y) {
    const auto nx = mortfit::apply_identifiability(x);
    const auto ny = mortfit::apply_identifiability(y);
    double d = std::max({(nx.a - ny.a).cwiseAbs().maxCoeff(), (nx.b - ny.b).cwiseAbs().maxCoeff(),
                         (nx.k - ny.k).cwiseAbs().maxCoeff()});
    if (nx.c.size() > 0) {
        d = std::max({d, (nx.c - ny.c).cwiseAbs().maxCoeff(),
                      (nx.gamma - ny.gamma).cwiseAbs().maxCoeff()});
    }
    return d;
}

} // namespace oracle
