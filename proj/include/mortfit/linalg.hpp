#pragma once

#include "mortfit/errors.hpp"

#include <Eigen/Dense>

namespace mortfit {

/// Leading singular triplet (u, sigma, v) of a matrix. ||u|| = ||v|| = 1 and the
/// entry of u with the largest magnitude is positive.
struct SingularTriplet {
    Eigen::VectorXd u;
    double sigma = 0.0;
    Eigen::VectorXd v;
};

/// Thrown when power iteration exhausts its budget. Holds the last iterate.
class SingularTripletError : public NumericalError {
public:
    SingularTripletError(const std::string &what, SingularTriplet last, double residual)
        : NumericalError(what), last_{std::move(last)}, residual_{residual} {}

    const SingularTriplet &last_iterate() const noexcept { return last_; }
    double residual() const noexcept { return residual_; }

private:
    SingularTriplet last_;
    double residual_;
};

inline constexpr double kDefaultTripletTol = 1e-12;
inline constexpr int kDefaultTripletMaxIter = 1000;

/// Dominant singular triplet by alternating power iteration on M M^T.
///
/// Converged when ||M v - sigma u|| <= tol * sigma (M^T u = sigma v holds by
/// construction). Slow progress switches to repeated squaring of the normalized
/// Gram matrix, so near-degenerate leading pairs still resolve within a few
/// dozen iterations; when the two leading singular values coincide any unit
/// vector of the dominant subspace is returned. A zero matrix yields sigma = 0
/// with uniform u and v.
///
/// `warm_start`, when non-empty, seeds the left vector.
SingularTriplet first_singular_triplet(const Eigen::Ref<const Eigen::MatrixXd> &m,
                                       double tol = kDefaultTripletTol,
                                       int max_iter = kDefaultTripletMaxIter,
                                       const Eigen::VectorXd &warm_start = Eigen::VectorXd());

struct Rank1Fit {
    Eigen::VectorXd b; // sums to one
    Eigen::VectorXd k;
    SingularTriplet triplet;
};

/// Best rank-1 approximation b k^T of M in Frobenius norm, scaled so sum(b) = 1:
/// b = u / (1'u), k = (1'u) sigma v. The zero matrix maps to b = 1/p, k = 0.
/// Throws DegenerateNormalizationError when |1'u| < 1e-10.
Rank1Fit rank1_ls_fit(const Eigen::Ref<const Eigen::MatrixXd> &m,
                      const Eigen::VectorXd &warm_start = Eigen::VectorXd(),
                      double tol = kDefaultTripletTol, int max_iter = kDefaultTripletMaxIter);

} // namespace mortfit
