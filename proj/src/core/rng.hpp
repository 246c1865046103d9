// SPDX-License-Identifier: Apache-2.0
//
// Deterministic random source. std::mt19937_64 has a portable, fully
// specified output sequence; the std distributions do not, so the
// transformations below are written out explicitly and results are
// reproducible across platforms and standard library versions.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "core/error.hpp"

namespace csr {

// splitmix64 finalizer, used to derive well-separated sub-seeds.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t h = mix64(seed);
    h = mix64(h ^ a);
    h = mix64(h ^ b);
    h = mix64(h ^ c);
    return h;
}

class Rng {
  public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // [0, 1), 53 usable bits
    double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n), unbiased
    int64_t uniform_int(int64_t n) {
        CSR_REQUIRE(n > 0, ErrorCode::InvalidArgument, "uniform_int: n must be positive");
        uint64_t un = uint64_t(n);
        uint64_t reject = (UINT64_MAX % un + 1) % un; // 2^64 mod n
        for (;;) {
            uint64_t x = eng_();
            if (reject == 0 || x <= UINT64_MAX - reject) return int64_t(x % un);
        }
    }

    // Box-Muller; consumes two uniforms per pair, caches the second value
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    Eigen::VectorXd normal_vector(int dim) {
        Eigen::VectorXd v(dim);
        for (int i = 0; i < dim; ++i) v[i] = normal();
        return v;
    }

    Eigen::VectorXd unit_vector(int dim) {
        for (;;) {
            Eigen::VectorXd v = normal_vector(dim);
            double n = v.norm();
            if (n > 1e-12) return v / n;
        }
    }

    // k distinct indices from [0, n), returned ascending
    std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k) {
        CSR_REQUIRE(k >= 0 && k <= n, ErrorCode::InvalidArgument,
                    "sample_without_replacement: need 0 <= k <= n");
        std::vector<int64_t> pool(n);
        for (int64_t i = 0; i < n; ++i) pool[i] = i;
        for (int64_t i = 0; i < k; ++i) {
            int64_t j = i + uniform_int(n - i);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        std::sort(pool.begin(), pool.end());
        return pool;
    }

  private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace csr
