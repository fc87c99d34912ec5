#pragma once
// Exact second-moment drift for gated least squares with momentum, its
// characteristic polynomial, scaled coordinates, and exact LTI evolution.

#include "spm/closed_forms.hpp"
#include "spm/numerics/linalg3.hpp"
#include "spm/scaling.hpp"
#include "spm/trajectory.hpp"

#include <vector>

namespace spm {

struct MomentState {
    double R = 1.0;  // E|theta - theta*|^2
    double V = 0.0;  // E|m|^2
    double C = 0.0;  // E<theta - theta*, m>

    Vec3 vec() const { return {R, V, C}; }
    static MomentState from(const Vec3& x) { return {x(0), x(1), x(2)}; }
    // Cauchy-Schwarz with slack.
    bool valid() const;
};

struct DriftMatrix {
    std::array<double, 9> entries{};  // indexed by closed_forms Entry
    EtaPolys<double> polys{};         // the same entries as polynomials in eta
    InstanceParams params;
    BatchFactors batch;
    RetentionDrift retention;

    double operator[](Entry e) const { return entries[e]; }
    Mat3 matrix() const;
};

DriftMatrix build_main_matrix(const InstanceParams& params);

struct CharPoly {
    double c1, c2, c3;
};

// lambda^3 + c1 lambda^2 + c2 lambda + c3 = det(lambda I - A).
CharPoly char_poly(const Mat3& a);
CharPoly char_poly(const DriftMatrix& m);

// Coefficients of c1, c2, c3 as polynomials in eta (index = power).
struct CharPolyEta {
    std::vector<double> c1, c2, c3;
};
CharPolyEta char_poly_eta(const DriftMatrix& m);

struct ScaledTransform {
    double Lambda_W = 1.0;  // eps^2 B2
    double Lambda_Z = 1.0;  // P_batch + eps
};

ScaledTransform scaled_transform(const DriftMatrix& m);
// Drift in (R, W, Z) = (R, V / Lambda_W, C / Lambda_Z).
Mat3 to_scaled(const DriftMatrix& m);
Vec3 to_scaled(const ScaledTransform& t, const MomentState& s);
MomentState from_scaled(const ScaledTransform& t, const Vec3& rwz);

// Exact solution of x' = A x at each grid time (active-update clock).
Trajectory evolve_linear(const Mat3& a, const MomentState& initial, const std::vector<double>& times);
Trajectory evolve_linear(const DriftMatrix& m, const MomentState& initial, const std::vector<double>& times);

// Default grid: n log-spaced points from 1e-3/rho to 10 * tau_learn.
std::vector<double> default_time_grid(const DriftMatrix& m, std::size_t n = 512);

// Converts between the active-update, minibatch, and slow clocks. `d` and
// `power` define tau = t / d^power for the slow clock.
Trajectory clock_convert(const Trajectory& traj, Clock target, double P_batch, double d = 1.0,
                         double power = 0.0);

}  // namespace spm
