#pragma once
// Small dense linear algebra: cubic roots, 3x3 eigendecomposition, and exact
// propagation of constant-coefficient linear systems.

#include <Eigen/Dense>

#include <array>
#include <complex>

namespace spm {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using cplx = std::complex<double>;

// Roots of lambda^3 + c1 lambda^2 + c2 lambda + c3, sorted by ascending modulus.
std::array<cplx, 3> cubic_roots(double c1, double c2, double c3);

struct Eig3 {
    Eigen::Vector3cd values;
    Eigen::Matrix3cd vectors;
    double condition = 0.0;  // 2-norm condition number of `vectors`
};

Eig3 eig3(const Mat3& a);

// exp(a t).
Mat3 expm3(const Mat3& a, double t);

// Exact flow x(t) = exp(a t) x0 for a fixed matrix, reusing one
// decomposition across many t. Falls back to the scaling-and-squaring
// exponential when the eigenvector basis is ill-conditioned.
class LinearFlow3 {
public:
    explicit LinearFlow3(const Mat3& a, double condition_limit = 1e8);
    Vec3 apply(double t, const Vec3& x0) const;
    bool used_fallback() const { return fallback_; }
    double condition() const { return eig_.condition; }
    const Eig3& eigen() const { return eig_; }

private:
    Mat3 a_;
    Eig3 eig_;
    Eigen::Matrix3cd inv_;
    bool fallback_ = false;
};

}  // namespace spm
