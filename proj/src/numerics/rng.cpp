#include "spm/numerics/rng.hpp"

#include <boost/math/distributions/binomial.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace spm {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t prod = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(prod >> 32);
    lo = static_cast<std::uint32_t>(prod);
}

double horner(const double* c, int n, double x) {
    double acc = c[n - 1];
    for (int i = n - 2; i >= 0; --i) acc = acc * x + c[i];
    return acc;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kPhiloxW0;
            key[1] += kPhiloxW1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
        mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

double normal_quantile(double u) {
    static const double a[8] = {3.3871328727963666080e0,  1.3314166789178437745e+2,
                                1.9715909503065514427e+3, 1.3731693765509461125e+4,
                                4.5921953931549871457e+4, 6.7265770927008700853e+4,
                                3.3430575583588128105e+4, 2.5090809287301226727e+3};
    static const double b[8] = {1.0,
                                4.2313330701600911252e+1, 6.8718700749205790830e+2,
                                5.3941960214247511077e+3, 2.1213794301586595867e+4,
                                3.9307895800092710610e+4, 2.8729085735721942674e+4,
                                5.2264952788528545610e+3};
    static const double c[8] = {1.42343711074968357734e0,  4.63033784615654529590e0,
                                5.76949722146069140550e0,  3.64784832476320460504e0,
                                1.27045825245236838258e0,  2.41780725177450611770e-1,
                                2.27238449892691845833e-2, 7.74545014278341407640e-4};
    static const double d[8] = {1.0,
                                2.05319162663775882187e0,  1.67638483018380384940e0,
                                6.89767334985100004550e-1, 1.48103976427480074590e-1,
                                1.51986665636164571966e-2, 5.47593808499534494600e-4,
                                1.05075007164441684324e-9};
    static const double e[8] = {6.65790464350110377720e0,  5.46378491116411436990e0,
                                1.78482653991729133580e0,  2.96560571828504891230e-1,
                                2.65321895265761230930e-2, 1.24266094738807843860e-3,
                                2.71155556874348757815e-5, 2.01033439929228813265e-7};
    static const double f[8] = {1.0,
                                5.99832206555887937690e-1, 1.36929880922735805310e-1,
                                1.48753612908506148525e-2, 7.86869131145613259100e-4,
                                1.84631831751005468180e-5, 1.42151175831644588870e-7,
                                2.04426310338993978564e-15};
    if (!(u > 0.0 && u < 1.0)) {
        if (u == 0.0) return -std::numeric_limits<double>::infinity();
        if (u == 1.0) return std::numeric_limits<double>::infinity();
        throw std::invalid_argument("normal_quantile: argument outside [0,1]");
    }
    const double q = u - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q * horner(a, 8, r) / horner(b, 8, r);
    }
    double r = q < 0.0 ? u : 1.0 - u;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = horner(c, 8, r) / horner(d, 8, r);
    } else {
        r -= 5.0;
        val = horner(e, 8, r) / horner(f, 8, r);
    }
    return q < 0.0 ? -val : val;
}

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
    : master_(master_seed), stream_(stream_id) {}

RngStream RngStream::derive(std::uint64_t master_seed, std::uint64_t index) {
    return RngStream(master_seed, splitmix64(master_seed ^ splitmix64(index + 0x632BE59BD9B4E019ull)));
}

void RngStream::refill() {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(master_),
                                              static_cast<std::uint32_t>(master_ >> 32)};
    buf_ = philox4x32(ctr, key);
    ++block_;
    pos_ = 0;
}

std::uint64_t RngStream::next_u64() {
    if (pos_ > 2) refill();
    const std::uint64_t v = (static_cast<std::uint64_t>(buf_[pos_]) << 32) | buf_[pos_ + 1];
    pos_ += 2;
    return v;
}

double RngStream::uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() { return normal_quantile(uniform()); }

double RngStream::gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be positive");
    if (shape < 1.0) {
        const double g = gamma(shape + 1.0);
        return g * std::pow(uniform(), 1.0 / shape);
    }
    // Marsaglia-Tsang squeeze.
    const double dd = shape - 1.0 / 3.0;
    const double cc = 1.0 / std::sqrt(9.0 * dd);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + cc * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return dd * v;
        if (std::log(u) < 0.5 * x * x + dd * (1.0 - v + std::log(v))) return dd * v;
    }
}

double RngStream::chi_square(std::uint64_t k) {
    if (k == 0) return 0.0;
    if (k <= 16) {
        double s = 0.0;
        for (std::uint64_t i = 0; i < k; ++i) {
            const double z = normal();
            s += z * z;
        }
        return s;
    }
    return 2.0 * gamma(0.5 * static_cast<double>(k));
}

std::uint64_t RngStream::binomial_from_uniform(std::uint64_t n, double p, double u) {
    if (n == 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    if (p > 0.5) return n - binomial_from_uniform(n, 1.0 - p, 1.0 - u);
    const double nd = static_cast<double>(n);
    const double ratio = p / (1.0 - p);
    if (nd * p <= 30.0) {
        double pmf = std::exp(nd * std::log1p(-p));
        double cdf = pmf;
        std::uint64_t k = 0;
        while (cdf < u && k < n) {
            pmf *= ratio * static_cast<double>(n - k) / static_cast<double>(k + 1);
            ++k;
            cdf += pmf;
            if (pmf == 0.0 && k > nd * p) break;
        }
        return k;
    }
    // Search outward from the mode; CDF at the mode from the incomplete beta.
    const std::uint64_t mode = std::min<std::uint64_t>(n, static_cast<std::uint64_t>((nd + 1.0) * p));
    const double md = static_cast<double>(mode);
    double pmf = std::exp(std::lgamma(nd + 1.0) - std::lgamma(md + 1.0) - std::lgamma(nd - md + 1.0) +
                          md * std::log(p) + (nd - md) * std::log1p(-p));
    double cdf = boost::math::cdf(boost::math::binomial_distribution<double>(nd, p), md);
    std::uint64_t k = mode;
    if (u <= cdf) {
        while (k > 0 && cdf - pmf >= u) {
            cdf -= pmf;
            pmf *= static_cast<double>(k) / (static_cast<double>(n - k + 1) * ratio);
            --k;
            if (pmf == 0.0) break;
        }
        return k;
    }
    while (cdf < u && k < n) {
        pmf *= ratio * static_cast<double>(n - k) / static_cast<double>(k + 1);
        ++k;
        cdf += pmf;
        if (pmf == 0.0) break;
    }
    return k;
}

std::uint64_t RngStream::binomial(std::uint64_t n, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binomial: p outside [0,1]");
    return binomial_from_uniform(n, p, uniform());
}

std::uint64_t RngStream::binomial_nonzero(std::uint64_t n, double p) {
    if (!(p > 0.0 && p <= 1.0) || n == 0)
        throw std::invalid_argument("binomial_nonzero: need n >= 1 and p in (0,1]");
    if (p == 1.0) return n;
    const double nd = static_cast<double>(n);
    if (nd * p > 30.0 || p > 0.5) {
        for (;;) {
            const std::uint64_t k = binomial(n, p);
            if (k > 0) return k;
        }
    }
    // Inversion directly on the zero-truncated law.
    const double log_q = nd * std::log1p(-p);
    const double P = -std::expm1(log_q);
    const double ratio = p / (1.0 - p);
    double pmf = nd * p * std::exp((nd - 1.0) * std::log1p(-p)) / P;
    double cdf = pmf;
    const double u = uniform();
    std::uint64_t k = 1;
    while (cdf < u && k < n) {
        pmf *= ratio * static_cast<double>(n - k) / static_cast<double>(k + 1);
        ++k;
        cdf += pmf;
        if (pmf == 0.0) break;
    }
    return k;
}

std::uint64_t RngStream::geometric_log_q(double log_q) {
    if (log_q > 0.0 || std::isnan(log_q)) throw std::invalid_argument("geometric: log(1-P) must be <= 0");
    if (std::isinf(log_q)) return 1;
    if (log_q == 0.0) throw std::invalid_argument("geometric: P must be positive");
    const double k = std::floor(std::log(uniform()) / log_q);
    constexpr double cap = 4.0e18;
    return 1 + static_cast<std::uint64_t>(std::min(k, cap));
}

std::uint64_t RngStream::geometric(double P) {
    if (!(P > 0.0 && P <= 1.0)) throw std::invalid_argument("geometric: P outside (0,1]");
    return geometric_log_q(P == 1.0 ? -std::numeric_limits<double>::infinity() : std::log1p(-P));
}

}  // namespace spm
