#ifndef IVSEL_RNG_HPP
#define IVSEL_RNG_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "ivsel/common.hpp"
#include "ivsel/special.hpp"

namespace ivsel {

namespace detail {

// splitmix64 finalizer; the avalanche step that decorrelates nearby keys.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace detail

/// Deterministic random stream keyed by (base_seed, stream_index).
/// Distinct stream indices give statistically independent sequences; the
/// index is folded into the generator state through an avalanche mix, so
/// replication workers can derive their streams independently of execution
/// order. Single-owner: not safe to share one instance across threads.
class RngStream {
public:
    RngStream(std::uint64_t base_seed, std::uint64_t stream_index)
        : base_seed_(base_seed), stream_index_(stream_index) {
        std::uint64_t key = detail::mix64(base_seed ^ detail::mix64(stream_index + 0x632be59bd9b4e019ULL));
        for (auto& word : state_) {
            key = detail::mix64(key);
            word = key;
        }
    }

    std::uint64_t base_seed() const { return base_seed_; }
    std::uint64_t stream_index() const { return stream_index_; }

    /// Child stream for nested randomness (bootstrap replicates, calibration
    /// draws, two-sample designs). Deterministic function of the parent key.
    RngStream substream(std::uint64_t child_index) const {
        return RngStream(detail::mix64(base_seed_ ^ detail::mix64(stream_index_ + 0x9e3779b97f4a7c15ULL)),
                         child_index);
    }

    // xoshiro256++
    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl64(state_[3], 45);
        return result;
    }

    /// Uniform on the open interval (0, 1); never returns an endpoint, so
    /// inverse-CDF transforms stay finite.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        if (!(lo <= hi)) throw ConfigError("uniform: lo must be <= hi");
        return lo + uniform() * (hi - lo);
    }

    /// Inverse-CDF normal draw; everything reduces to the one uniform source.
    double normal() { return normal_quantile(uniform()); }

    int bernoulli(double p) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("bernoulli: p must lie in [0, 1]");
        return uniform() < p ? 1 : 0;
    }

    /// Binomial(2, f) allele count from a single uniform.
    int binomial2(double f) {
        if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("binomial2: f must lie in [0, 1]");
        const double u = uniform();
        const double p0 = (1.0 - f) * (1.0 - f);
        const double p01 = p0 + 2.0 * f * (1.0 - f);
        if (u < p0) return 0;
        if (u < p01) return 1;
        return 2;
    }

    /// Student t with integer df: normal over the root of a scaled chi-square,
    /// both built from uniforms.
    double t(int df) {
        if (df < 1) throw ConfigError("t: df must be a positive integer");
        const double z = normal();
        double chisq = 0.0;
        for (int k = 0; k < df / 2; ++k) chisq += -2.0 * std::log(uniform());
        if (df % 2 == 1) {
            const double w = normal();
            chisq += w * w;
        }
        return z / std::sqrt(chisq / df);
    }

    double lognormal(double mu, double sigma2) {
        if (!(sigma2 > 0.0)) throw ConfigError("lognormal: sigma2 must be > 0");
        return std::exp(mu + std::sqrt(sigma2) * normal());
    }

    struct MixtureComponent {
        double mean;
        double sd;
        double weight;
    };

    double normal_mixture(const std::vector<MixtureComponent>& components) {
        if (components.empty()) throw ConfigError("normal_mixture: needs at least one component");
        double total = 0.0;
        for (const auto& c : components) {
            if (!(c.weight >= 0.0) || !(c.sd > 0.0)) {
                throw ConfigError("normal_mixture: weights must be >= 0 and sds > 0");
            }
            total += c.weight;
        }
        if (std::abs(total - 1.0) > 1e-9) throw ConfigError("normal_mixture: weights must sum to 1");
        const double u = uniform();
        double cum = 0.0;
        for (const auto& c : components) {
            cum += c.weight;
            if (u < cum) return c.mean + c.sd * normal();
        }
        const auto& last = components.back();
        return last.mean + last.sd * normal();
    }

    /// Inverse-CDF Poisson by sequential search; fine for the moderate rates
    /// used in the simulation designs.
    int poisson(double lambda) {
        if (!(lambda >= 0.0)) throw ConfigError("poisson: lambda must be >= 0");
        if (lambda == 0.0) return 0;
        if (lambda > 1e4) throw ConfigError("poisson: lambda too large for sequential inversion");
        const double u = uniform();
        double p = std::exp(-lambda);
        double cum = p;
        int k = 0;
        while (u > cum && k < 1000000) {
            ++k;
            p *= lambda / k;
            cum += p;
        }
        return k;
    }

private:
    std::uint64_t base_seed_;
    std::uint64_t stream_index_;
    std::uint64_t state_[4];
};

inline VectorXd sample_normal(RngStream& stream, int n) {
    VectorXd out(n);
    for (int i = 0; i < n; ++i) out[i] = stream.normal();
    return out;
}

inline VectorXi sample_bernoulli(RngStream& stream, const VectorXd& p) {
    VectorXi out(p.size());
    for (int i = 0; i < p.size(); ++i) out[i] = stream.bernoulli(p[i]);
    return out;
}

inline VectorXd sample_uniform(RngStream& stream, int n, double lo, double hi) {
    VectorXd out(n);
    for (int i = 0; i < n; ++i) out[i] = stream.uniform(lo, hi);
    return out;
}

}  // namespace ivsel

#endif
