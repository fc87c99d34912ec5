#pragma once
// Counter-based random streams (Philox4x32-10) and the samplers built on them.

#include <array>
#include <cstdint>

namespace spm {

// Philox4x32-10 block function: 128-bit counter, 64-bit key.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key);

// SplitMix64 finalizer; used to derive stream ids.
std::uint64_t splitmix64(std::uint64_t x);

// Inverse standard-normal CDF (Wichura AS241, ~1e-16 relative).
double normal_quantile(double u);

class RngStream {
public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

    // Independent stream for replicate `index` under `master_seed`.
    static RngStream derive(std::uint64_t master_seed, std::uint64_t index);

    std::uint64_t master_seed() const { return master_; }
    std::uint64_t stream_id() const { return stream_; }
    std::uint64_t blocks_used() const { return block_; }

    std::uint64_t next_u64();
    // Uniform on the open interval (0,1), 53-bit resolution.
    double uniform();
    double normal();
    // Sum of `k` squared standard normals for small k, gamma sampler otherwise.
    double chi_square(std::uint64_t k);
    double gamma(double shape);

    // Binomial(n,p) by exact inversion.
    std::uint64_t binomial(std::uint64_t n, double p);
    // Binomial(n,p) conditioned on >= 1.
    std::uint64_t binomial_nonzero(std::uint64_t n, double p);
    // K ~ Geom(P) on {1,2,...}; takes log(1-P) for accuracy when P is tiny.
    std::uint64_t geometric_log_q(double log_q);
    std::uint64_t geometric(double P);

    bool bernoulli(double p) { return uniform() < p; }

private:
    void refill();
    std::uint64_t binomial_from_uniform(std::uint64_t n, double p, double u);

    std::uint64_t master_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
};

}  // namespace spm
