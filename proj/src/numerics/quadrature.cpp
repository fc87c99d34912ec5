#include "spm/numerics/quadrature.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace spm {

namespace {

// Orthonormal Hermite values phi_{n-1}(x), phi_n(x) and sum_{k<n} phi_k(x)^2.
void hermite_orthonormal(int n, double x, double& phi_nm1, double& phi_n, double& christoffel) {
    double prev = 0.0;
    double cur = std::pow(std::numbers::pi, -0.25);
    christoffel = 0.0;
    for (int k = 0; k < n; ++k) {
        christoffel += cur * cur;
        const double next = x * std::sqrt(2.0 / (k + 1)) * cur - std::sqrt(static_cast<double>(k) / (k + 1)) * prev;
        prev = cur;
        cur = next;
    }
    phi_nm1 = prev;
    phi_n = cur;
}

QuadratureRule build_rule(int n) {
    // Golub-Welsch for starting nodes, then Newton polish and Christoffel weights.
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double off = std::sqrt(0.5 * k);
        jacobi(k - 1, k) = off;
        jacobi(k, k - 1) = off;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi, Eigen::EigenvaluesOnly);
    QuadratureRule rule;
    rule.order = n;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = es.eigenvalues()(i);
        double pm1, pn, chr;
        for (int it = 0; it < 8; ++it) {
            hermite_orthonormal(n, x, pm1, pn, chr);
            const double dpn = std::sqrt(2.0 * n) * pm1;
            const double step = pn / dpn;
            x -= step;
            if (std::fabs(step) < 1e-16 * (1.0 + std::fabs(x))) break;
        }
        hermite_orthonormal(n, x, pm1, pn, chr);
        rule.nodes[i] = x;
        rule.weights[i] = 1.0 / chr;
    }
    // Enforce exact symmetry.
    for (int i = 0; i < n / 2; ++i) {
        const int j = n - 1 - i;
        const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.nodes[i] = -x;
        rule.nodes[j] = x;
        rule.weights[i] = w;
        rule.weights[j] = w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    return rule;
}

}  // namespace

const QuadratureRule& gauss_hermite(int order) {
    if (order < 2 || order > 256) throw std::invalid_argument("gauss_hermite: order must be in [2, 256]");
    static std::mutex mu;
    static std::map<int, std::unique_ptr<QuadratureRule>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[order];
    if (!slot) slot = std::make_unique<QuadratureRule>(build_rule(order));
    return *slot;
}

double gaussian_expectation(const std::function<double(double)>& h, double mean, double var, int order) {
    if (var < 0.0) throw std::invalid_argument("gaussian_expectation: negative variance");
    const QuadratureRule& rule = gauss_hermite(order);
    const double scale = std::sqrt(2.0 * var);
    double acc = 0.0;
    for (int i = 0; i < rule.order; ++i) acc += rule.weights[i] * h(mean + scale * rule.nodes[i]);
    return acc / std::sqrt(std::numbers::pi);
}

double gaussian_expectation_2d(const std::function<double(double, double)>& h, int order) {
    const QuadratureRule& rule = gauss_hermite(order);
    double acc = 0.0;
    for (int i = 0; i < rule.order; ++i) {
        const double xi = std::numbers::sqrt2 * rule.nodes[i];
        double row = 0.0;
        for (int j = 0; j < rule.order; ++j) row += rule.weights[j] * h(xi, std::numbers::sqrt2 * rule.nodes[j]);
        acc += rule.weights[i] * row;
    }
    return acc / std::numbers::pi;
}

}  // namespace spm
