#pragma once

#include <cstdint>
#include <vector>

#include "specdec/errors.hpp"
#include "specdec/rng.hpp"

namespace specdec {

using TokenId = int32_t;

struct Vocab {
    int32_t size = 0;
    TokenId eos = 0;

    // sentinel used as left padding for contexts shorter than a model's order;
    // never a real token
    TokenId bos_sentinel() const { return size; }
};

// Immutable probability vector over token ids 0..V-1.
// Invariants: entries >= 0, sum within 1e-9 of 1.
class Dist {
  public:
    static constexpr double kSumTol = 1e-9;

    explicit Dist(std::vector<double> mass);

    double operator[](TokenId y) const { return mass_[static_cast<size_t>(y)]; }
    int32_t size() const { return static_cast<int32_t>(mass_.size()); }
    const std::vector<double>& mass() const { return mass_; }

    bool operator==(const Dist& other) const { return mass_ == other.mass_; }

  private:
    std::vector<double> mass_;
};

// weights / sum(weights); throws ZeroMassError when all weights vanish,
// DomainError on a negative weight
Dist normalize(const std::vector<double>& weights);

// norm[(p - q)_+], the correction distribution of rejection sampling;
// ZeroMassError iff p == q entrywise
Dist residual(const Dist& p, const Dist& q);

// min(1, p[y]/q[y]); DomainError when y is out of range or q[y] == 0
double accept_prob(const Dist& p, const Dist& q, TokenId y);

// inverse-CDF draw consuming exactly one uniform
TokenId sample(const Dist& d, Rng& rng);

// keep the k most probable tokens (ties toward lower id), renormalize
Dist top_k_truncate(const Dist& d, int k);

// Shannon entropy in nats, 0 log 0 := 0
double entropy(const Dist& d);

// norm[d^(1/tau)]; tau > 0, tau = 1 is the identity
Dist apply_temperature(const Dist& d, double tau);

// greatest-mass token, ties toward lower id
TokenId argmax_token(const Dist& d);

}  // namespace specdec
