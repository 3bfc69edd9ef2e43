#include "mortfit/linalg.hpp"

#include <cmath>
#include <string>

namespace mortfit {

namespace {

// Plain power steps tried before switching to the squared Gram operator.
constexpr int kDirectSteps = 32;
// Gram squarings happen every kStepsPerSquaring steps after that.
constexpr int kStepsPerSquaring = 4;
constexpr int kMaxSquarings = 48;

void orient(SingularTriplet &t) {
    Eigen::Index imax = 0;
    t.u.cwiseAbs().maxCoeff(&imax);
    if (t.u(imax) < 0.0) {
        t.u = -t.u;
        t.v = -t.v;
    }
}

Eigen::VectorXd largest_column(const Eigen::Ref<const Eigen::MatrixXd> &m) {
    Eigen::Index jmax = 0;
    m.colwise().squaredNorm().maxCoeff(&jmax);
    Eigen::VectorXd u = m.col(jmax);
    return u / u.norm();
}

} // namespace

SingularTriplet first_singular_triplet(const Eigen::Ref<const Eigen::MatrixXd> &m, double tol,
                                       int max_iter, const Eigen::VectorXd &warm_start) {
    const Eigen::Index p = m.rows();
    const Eigen::Index q = m.cols();
    if (p < 1 || q < 1) {
        throw std::invalid_argument("first_singular_triplet: empty matrix");
    }
    if (!(tol > 0.0) || max_iter < 1) {
        throw std::invalid_argument("first_singular_triplet: tol and max_iter must be positive");
    }
    if (!m.allFinite()) {
        throw std::invalid_argument("first_singular_triplet: matrix has non-finite entries");
    }
    if (m.isZero(0.0)) {
        SingularTriplet t;
        t.u = Eigen::VectorXd::Constant(p, 1.0 / std::sqrt(static_cast<double>(p)));
        t.v = Eigen::VectorXd::Constant(q, 1.0 / std::sqrt(static_cast<double>(q)));
        return t;
    }

    Eigen::VectorXd u;
    if (warm_start.size() == p && warm_start.allFinite() && warm_start.norm() > 0.0) {
        u = warm_start / warm_start.norm();
    } else {
        u = largest_column(m);
    }

    SingularTriplet t;
    double residual = 0.0;
    Eigen::MatrixXd gram;   // M M^T, built lazily
    Eigen::MatrixXd op;     // normalized power of gram
    int squarings = 0;
    for (int iter = 0; iter < max_iter; ++iter) {
        Eigen::VectorXd w = m.transpose() * u;
        double sigma = w.norm();
        if (sigma == 0.0) {
            // u is orthogonal to range(M); restart from a column of M.
            u = largest_column(m);
            w = m.transpose() * u;
            sigma = w.norm();
        }
        t.u = u;
        t.sigma = sigma;
        t.v = w / sigma;
        Eigen::VectorXd z = m * t.v;
        residual = (z - sigma * u).norm();
        if (residual <= tol * sigma) {
            orient(t);
            return t;
        }
        if (iter < kDirectSteps) {
            u = z / z.norm();
            continue;
        }
        if (gram.size() == 0) {
            gram = m * m.transpose();
            op = gram / gram.cwiseAbs().maxCoeff();
        } else if ((iter - kDirectSteps) % kStepsPerSquaring == 0 && squarings < kMaxSquarings) {
            op = op * op;
            const double scale = op.cwiseAbs().maxCoeff();
            if (scale > 0.0 && std::isfinite(scale)) {
                op /= scale;
                ++squarings;
            } else {
                op = gram / gram.cwiseAbs().maxCoeff();
            }
        }
        Eigen::VectorXd next = op * u;
        const double norm = next.norm();
        u = norm > 0.0 ? Eigen::VectorXd(next / norm) : largest_column(m);
    }
    orient(t);
    throw SingularTripletError("first_singular_triplet: no convergence in " +
                                   std::to_string(max_iter) + " iterations (residual " +
                                   std::to_string(residual) + ")",
                               t, residual);
}

Rank1Fit rank1_ls_fit(const Eigen::Ref<const Eigen::MatrixXd> &m, const Eigen::VectorXd &warm_start,
                      double tol, int max_iter) {
    Rank1Fit fit;
    fit.triplet = first_singular_triplet(m, tol, max_iter, warm_start);
    const Eigen::Index p = m.rows();
    if (fit.triplet.sigma == 0.0) {
        fit.b = Eigen::VectorXd::Constant(p, 1.0 / static_cast<double>(p));
        fit.k = Eigen::VectorXd::Zero(m.cols());
        return fit;
    }
    const double total = fit.triplet.u.sum();
    if (std::abs(total) < 1e-10) {
        throw DegenerateNormalizationError(
            "rank1_ls_fit: leading singular vector sums to ~0; cannot impose sum(b) = 1");
    }
    fit.b = fit.triplet.u / total;
    fit.k = (total * fit.triplet.sigma) * fit.triplet.v;
    return fit;
}

} // namespace mortfit
