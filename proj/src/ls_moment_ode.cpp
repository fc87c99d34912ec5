#include "spm/ls_moment_ode.hpp"

#include <cmath>
#include <stdexcept>

namespace spm {

namespace {

using Poly = std::vector<double>;

Poly to_poly(const std::array<double, 5>& c) { return Poly(c.begin(), c.end()); }

Poly add(const Poly& a, const Poly& b, double sb = 1.0) {
    Poly out(std::max(a.size(), b.size()), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i) out[i] += sb * b[i];
    return out;
}

Poly mul(const Poly& a, const Poly& b) {
    Poly out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

Poly scale(Poly a, double s) {
    for (auto& v : a) v *= s;
    return a;
}

}  // namespace

bool MomentState::valid() const {
    if (!(R >= 0.0 && V >= 0.0) || !std::isfinite(C)) return false;
    return C * C <= R * V + 1e-9 * std::max(1.0, R * V);
}

Mat3 DriftMatrix::matrix() const {
    Mat3 a;
    a << entries[aR], entries[aV], entries[aC], entries[bR], entries[bV], entries[bC], entries[cR], entries[cV],
        entries[cC];
    return a;
}

DriftMatrix build_main_matrix(const InstanceParams& params) {
    const InstanceParams& ip = make_params(params.d, params.p, params.B, params.eps, params.eta);
    DriftMatrix m;
    m.params = params;
    m.batch = batch_factors(ip.p, ip.B, ip.d);
    m.retention = retention_drift_eps(ip.eps, m.batch.P_batch, m.batch.Q_batch);
    m.polys = main_matrix_polys<double>(ip.eps, m.batch.P_batch, m.batch.Q_batch, m.batch.B1, m.batch.B2);
    for (int i = 0; i < 9; ++i) m.entries[i] = eval_poly(m.polys[i], ip.eta);
    return m;
}

CharPoly char_poly(const Mat3& a) {
    const double c1 = -a.trace();
    const double c2 = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) + (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) +
                      (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1));
    const double c3 = -a.determinant();
    return {c1, c2, c3};
}

CharPoly char_poly(const DriftMatrix& m) {
    // Evaluate the exact eta-polynomials; avoids cancellation in the determinant at small eta.
    const CharPolyEta ce = char_poly_eta(m);
    auto ev = [&](const Poly& c) {
        double acc = 0.0;
        for (std::size_t i = c.size(); i-- > 0;) acc = acc * m.params.eta + c[i];
        return acc;
    };
    return {ev(ce.c1), ev(ce.c2), ev(ce.c3)};
}

CharPolyEta char_poly_eta(const DriftMatrix& m) {
    const Poly ar = to_poly(m.polys[aR]), av = to_poly(m.polys[aV]), ac = to_poly(m.polys[aC]);
    const Poly br = to_poly(m.polys[bR]), bv = to_poly(m.polys[bV]), bc = to_poly(m.polys[bC]);
    const Poly cr = to_poly(m.polys[cR]), cv = to_poly(m.polys[cV]), cc = to_poly(m.polys[cC]);
    CharPolyEta out;
    out.c1 = scale(add(add(ar, bv), cc), -1.0);
    out.c2 = add(add(add(mul(ar, bv), mul(av, br), -1.0), add(mul(ar, cc), mul(ac, cr), -1.0)),
                 add(mul(bv, cc), mul(bc, cv), -1.0));
    const Poly m1 = add(mul(bv, cc), mul(bc, cv), -1.0);
    const Poly m2 = add(mul(br, cc), mul(bc, cr), -1.0);
    const Poly m3 = add(mul(br, cv), mul(bv, cr), -1.0);
    const Poly det = add(add(mul(ar, m1), mul(av, m2), -1.0), mul(ac, m3));
    out.c3 = scale(det, -1.0);
    return out;
}

ScaledTransform scaled_transform(const DriftMatrix& m) {
    ScaledTransform t;
    t.Lambda_W = m.params.eps * m.params.eps * m.batch.B2;
    t.Lambda_Z = m.batch.P_batch + m.params.eps;
    if (!(t.Lambda_W > 0.0) || !(t.Lambda_Z > 0.0)) throw std::domain_error("scaled transform: zero scale");
    return t;
}

Mat3 to_scaled(const DriftMatrix& m) {
    const ScaledTransform t = scaled_transform(m);
    const Vec3 d(1.0, t.Lambda_W, t.Lambda_Z);
    Mat3 s = d.cwiseInverse().asDiagonal() * m.matrix() * d.asDiagonal();
    s(1, 0) = 1.0;  // b_R / Lambda_W, exact by construction
    for (int i = 0; i < 3; ++i) s(i, i) = m.matrix()(i, i);
    return s;
}

Vec3 to_scaled(const ScaledTransform& t, const MomentState& s) { return {s.R, s.V / t.Lambda_W, s.C / t.Lambda_Z}; }

MomentState from_scaled(const ScaledTransform& t, const Vec3& rwz) {
    return {rwz(0), rwz(1) * t.Lambda_W, rwz(2) * t.Lambda_Z};
}

Trajectory evolve_linear(const Mat3& a, const MomentState& initial, const std::vector<double>& times) {
    for (std::size_t i = 1; i < times.size(); ++i)
        if (times[i] < times[i - 1]) throw std::invalid_argument("evolve_linear: times must be ascending");
    const LinearFlow3 flow(a);
    Trajectory tr;
    tr.clock = Clock::ActiveUpdate;
    tr.columns = {"R", "V", "C"};
    tr.times = times;
    tr.states.reserve(times.size());
    const Vec3 x0 = initial.vec();
    const double scale = std::max(1.0, std::fabs(initial.R) + std::fabs(initial.V));
    bool diverged = false;
    for (double t : times) {
        Vec3 x = flow.apply(t, x0);
        if (!diverged && (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e12)) {
            diverged = true;
            tr.metadata["diverged"] = true;
            tr.metadata["divergence_time"] = t;
        }
        for (int k = 0; k < 2; ++k)
            if (x(k) < 0.0 && x(k) > -1e-12 * scale) x(k) = 0.0;
        tr.states.push_back({x(0), x(1), x(2)});
    }
    tr.metadata["solver"] = flow.used_fallback() ? "expm_scaling_squaring" : "eigendecomposition";
    tr.metadata["eigenvector_condition"] = flow.condition();
    if (!diverged) tr.metadata["diverged"] = false;
    return tr;
}

Trajectory evolve_linear(const DriftMatrix& m, const MomentState& initial, const std::vector<double>& times) {
    Trajectory tr = evolve_linear(m.matrix(), initial, times);
    tr.metadata["d"] = m.params.d;
    tr.metadata["p"] = m.params.p;
    tr.metadata["B"] = m.params.B;
    tr.metadata["eps"] = m.params.eps;
    tr.metadata["eta"] = m.params.eta;
    tr.metadata["P_batch"] = m.batch.P_batch;
    const ScaledTransform st = scaled_transform(m);
    tr.metadata["Lambda_W"] = st.Lambda_W;
    tr.metadata["Lambda_Z"] = st.Lambda_Z;
    return tr;
}

std::vector<double> default_time_grid(const DriftMatrix& m, std::size_t n) {
    const double rho = m.retention.rho;
    const double lo = 1e-3 / rho;
    const double rate = m.params.eta * m.batch.B1;
    double hi = rate > 0.0 ? 10.0 / rate : 10.0 / rho;
    hi = std::max(hi, 10.0 * lo);
    return logspace(lo, hi, n);
}

Trajectory clock_convert(const Trajectory& traj, Clock target, double P_batch, double d, double power) {
    if (!(P_batch > 0.0 && P_batch <= 1.0)) throw std::invalid_argument("clock_convert: P_batch must lie in (0,1]");
    double to_active = 1.0;
    switch (traj.clock) {
        case Clock::ActiveUpdate: to_active = 1.0; break;
        case Clock::Minibatch: to_active = P_batch; break;
        case Clock::Slow: to_active = std::pow(d, traj.clock_power); break;
    }
    double from_active = 1.0;
    switch (target) {
        case Clock::ActiveUpdate: from_active = 1.0; break;
        case Clock::Minibatch: from_active = 1.0 / P_batch; break;
        case Clock::Slow: from_active = std::pow(d, -power); break;
    }
    Trajectory out = traj;
    out.clock = target;
    out.clock_power = target == Clock::Slow ? power : 0.0;
    for (auto& t : out.times) t *= to_active * from_active;
    return out;
}

}  // namespace spm
