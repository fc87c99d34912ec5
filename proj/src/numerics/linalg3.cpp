#include "spm/numerics/linalg3.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace spm {

namespace {

cplx cubic_eval(double c1, double c2, double c3, cplx x) { return ((x + c1) * x + c2) * x + c3; }
cplx cubic_deriv(double c1, double c2, cplx x) { return (3.0 * x + 2.0 * c1) * x + c2; }

cplx polish(double c1, double c2, double c3, cplx x) {
    for (int it = 0; it < 6; ++it) {
        const cplx f = cubic_eval(c1, c2, c3, x);
        const cplx df = cubic_deriv(c1, c2, x);
        if (df == 0.0) break;
        const cplx nx = x - f / df;
        if (std::abs(cubic_eval(c1, c2, c3, nx)) >= std::abs(f)) break;
        x = nx;
    }
    return x;
}

// Roots of x^2 - s x + q without cancellation.
std::array<cplx, 2> quadratic_roots(double s, double q) {
    const double disc = s * s - 4.0 * q;
    if (disc >= 0.0) {
        const double big = 0.5 * (s + std::copysign(std::sqrt(disc), s));
        if (big == 0.0) return {cplx(0.0), cplx(0.0)};
        return {cplx(big), cplx(q / big)};
    }
    const double im = 0.5 * std::sqrt(-disc);
    return {cplx(0.5 * s, im), cplx(0.5 * s, -im)};
}

double real_cubic_root(double c1, double c2, double c3) {
    const double p = c2 - c1 * c1 / 3.0;
    const double q = 2.0 * c1 * c1 * c1 / 27.0 - c1 * c2 / 3.0 + c3;
    const double disc = 0.25 * q * q + p * p * p / 27.0;
    double t;
    if (disc > 0.0) {
        const double a = -std::copysign(std::cbrt(0.5 * std::fabs(q) + std::sqrt(disc)), q);
        t = a == 0.0 ? 0.0 : a - p / (3.0 * a);
    } else if (p < 0.0) {
        const double m = 2.0 * std::sqrt(-p / 3.0);
        const double arg = std::clamp(3.0 * q / (p * m), -1.0, 1.0);
        t = m * std::cos(std::acos(arg) / 3.0);
    } else {
        t = 0.0;
    }
    return t - c1 / 3.0;
}

// Parlett-Reinsch balancing with power-of-two scalings: returns d with
// d^{-1} a d better conditioned.
Vec3 balance(const Mat3& a) {
    Vec3 d = Vec3::Ones();
    Mat3 b = a;
    for (int sweep = 0; sweep < 64; ++sweep) {
        bool changed = false;
        for (int i = 0; i < 3; ++i) {
            double c = 0.0, r = 0.0;
            for (int j = 0; j < 3; ++j) {
                if (j == i) continue;
                c += std::fabs(b(j, i));
                r += std::fabs(b(i, j));
            }
            if (c == 0.0 || r == 0.0) continue;
            double f = 1.0;
            const double s = c + r;
            while (c < r / 2.0) {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while (c >= r * 2.0) {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if ((c + r) < 0.95 * s) {
                changed = true;
                d(i) *= f;
                b.col(i) *= f;
                b.row(i) /= f;
            }
        }
        if (!changed) break;
    }
    return d;
}

}  // namespace

std::array<cplx, 3> cubic_roots(double c1, double c2, double c3) {
    std::array<cplx, 3> roots;
    if (c3 == 0.0) {
        const auto qr = quadratic_roots(-c1, c2);
        roots = {cplx(0.0), qr[0], qr[1]};
    } else {
        double r = real_cubic_root(c1, c2, c3);
        r = polish(c1, c2, c3, cplx(r)).real();
        const auto qr = r != 0.0 ? quadratic_roots(-c1 - r, -c3 / r) : quadratic_roots(-c1, c2);
        roots = {cplx(r), qr[0], qr[1]};
        for (auto& z : roots) {
            const cplx pz = polish(c1, c2, c3, z);
            z = (z.imag() == 0.0) ? cplx(pz.real(), 0.0) : pz;
        }
        if (roots[1].imag() != 0.0) roots[2] = std::conj(roots[1]);
    }
    std::sort(roots.begin(), roots.end(), [](const cplx& x, const cplx& y) {
        if (std::abs(x) != std::abs(y)) return std::abs(x) < std::abs(y);
        return x.imag() > y.imag();
    });
    return roots;
}

Eig3 eig3(const Mat3& a) {
    Eigen::EigenSolver<Mat3> es(a, true);
    Eig3 out;
    out.values = es.eigenvalues();
    out.vectors = es.eigenvectors();
    for (int j = 0; j < 3; ++j) {
        const double n = out.vectors.col(j).norm();
        if (n > 0.0) out.vectors.col(j) /= n;
    }
    const Eigen::Vector3d s = Eigen::JacobiSVD<Eigen::Matrix3cd>(out.vectors).singularValues();
    out.condition = s(2) > 0.0 ? s(0) / s(2) : std::numeric_limits<double>::infinity();
    return out;
}

Mat3 expm3(const Mat3& a, double t) {
    LinearFlow3 flow(a);
    Mat3 out;
    for (int j = 0; j < 3; ++j) out.col(j) = flow.apply(t, Vec3::Unit(j));
    return out;
}

LinearFlow3::LinearFlow3(const Mat3& a, double condition_limit) : a_(a) {
    if (!a.allFinite()) throw std::invalid_argument("LinearFlow3: non-finite matrix");
    const Vec3 d = balance(a);
    const Mat3 b = d.cwiseInverse().asDiagonal() * a * d.asDiagonal();
    eig_ = eig3(b);
    fallback_ = !(eig_.condition <= condition_limit);
    if (!fallback_) {
        // Undo the balancing: eigenvectors of a are d * eigenvectors of b.
        inv_ = eig_.vectors.inverse() * d.cwiseInverse().cast<cplx>().asDiagonal();
        eig_.vectors = d.cast<cplx>().asDiagonal() * eig_.vectors;
    }
}

Vec3 LinearFlow3::apply(double t, const Vec3& x0) const {
    if (t == 0.0) return x0;
    if (fallback_) {
        const Mat3 at = a_ * t;
        return at.exp() * x0;
    }
    Eigen::Vector3cd coef = inv_ * x0.cast<cplx>();
    for (int i = 0; i < 3; ++i) coef(i) *= std::exp(eig_.values(i) * t);
    return (eig_.vectors * coef).real();
}

}  // namespace spm
