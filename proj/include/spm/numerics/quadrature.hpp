#pragma once
// Gauss-Hermite rules for the weight exp(-x^2).

#include <functional>
#include <vector>

namespace spm {

struct QuadratureRule {
    int order = 0;
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Rule of the given order (2..256). Rules are built once and cached; the
// returned reference stays valid for the life of the process.
const QuadratureRule& gauss_hermite(int order);

// E[h(G)] for G ~ N(mean, var), via z = mean + sqrt(2 var) x.
double gaussian_expectation(const std::function<double(double)>& h, double mean, double var,
                            int order = 64);

// E[h(X, Y)] for independent standard normals, tensor rule of order n x n.
double gaussian_expectation_2d(const std::function<double(double, double)>& h, int order = 40);

}  // namespace spm
