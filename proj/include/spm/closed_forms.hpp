#pragma once
// Scalar-generic closed forms shared by the double-precision production path
// and the extended-precision test oracles.

#include <array>

namespace spm {

template <class T>
struct RetentionTerms {
    T bb1, bb2;    // E beta^K, E beta^{2K}
    T om1, om2;    // 1 - bb1, 1 - bb2
    T dth, dg;     // E S_K, E S_{K-1}
    T dth2, dg2;   // E S_K^2, E S_{K-1}^2
    T dm1th, dm1g; // E beta^K S_K, E beta^K S_{K-1}
    T dthg;        // E S_K S_{K-1}
};

template <class T>
RetentionTerms<T> retention_terms(const T& eps, const T& P, const T& Q) {
    const T b = T(1) - eps;
    const T den1 = eps + P * b;
    const T den2 = eps * (T(1) + b) + P * b * b;
    const T den12 = den1 * den2;
    RetentionTerms<T> r;
    r.bb1 = P * b / den1;
    r.bb2 = P * b * b / den2;
    r.om1 = eps / den1;
    r.om2 = eps * (T(1) + b) / den2;
    r.dth = b / den1;
    r.dg = Q * b / den1;
    r.dth2 = b * b * (T(1) + Q * b) / den12;
    r.dg2 = Q * r.dth2;
    r.dthg = Q * b * b * (T(1) + b) / den12;
    r.dm1th = P * b * b / den12;
    r.dm1g = P * Q * b * b * b / den12;
    return r;
}

// Entry order of the 3x3 drift: rows (R, V, C), columns (R, V, C).
enum Entry { aR = 0, aV, aC, bR, bV, bC, cR, cV, cC };

// Each drift entry as a polynomial in the learning rate, coefficients of
// eta^0 .. eta^4.
template <class T>
using EtaPolys = std::array<std::array<T, 5>, 9>;

template <class T>
EtaPolys<T> main_matrix_polys(const T& eps, const T& P, const T& Q, const T& B1, const T& B2) {
    const RetentionTerms<T> r = retention_terms(eps, P, Q);
    const T z(0);
    const T e1 = eps * B1;          // eps B1
    const T e2 = eps * eps * B2;    // eps^2 B2
    EtaPolys<T> m;
    for (auto& row : m) row.fill(z);
    m[aR] = {z, T(-2) * e1, e2, z, z};
    m[aV] = {z, z, r.dth2, T(-2) * e1 * r.dthg, e2 * r.dg2};
    m[aC] = {z, T(-2) * r.dth, T(2) * e1 * (r.dth + r.dg), T(-2) * e2 * r.dg, z};
    m[bR] = {e2, z, z, z, z};
    m[bV] = {-r.om2, T(-2) * e1 * r.dm1g, e2 * r.dg2, z, z};
    m[bC] = {T(2) * e1 * r.bb1, T(-2) * e2 * r.dg, z, z, z};
    m[cR] = {e1, -e2, z, z, z};
    m[cV] = {z, -r.dm1th, e1 * (r.dm1g + r.dthg), -e2 * r.dg2, z};
    m[cC] = {-r.om1, -e1 * (r.bb1 + r.dg + r.dth), T(2) * e2 * r.dg, z, z};
    return m;
}

template <class T>
T eval_poly(const std::array<T, 5>& c, const T& x) {
    T acc = c[4];
    for (int i = 3; i >= 0; --i) acc = acc * x + c[i];
    return acc;
}

}  // namespace spm
