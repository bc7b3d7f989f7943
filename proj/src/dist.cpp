#include "specdec/dist.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace specdec {

Dist::Dist(std::vector<double> mass) : mass_(std::move(mass)) {
    if (mass_.empty()) throw DomainError("Dist: empty mass vector");
    double sum = 0.0;
    for (double m : mass_) {
        if (!(m >= 0.0)) throw DomainError("Dist: negative or NaN entry");
        sum += m;
    }
    if (std::abs(sum - 1.0) > kSumTol) throw DomainError("Dist: mass does not sum to 1");
}

Dist normalize(const std::vector<double>& weights) {
    if (weights.empty()) throw DomainError("normalize: empty weight vector");
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw DomainError("normalize: negative or NaN weight");
        sum += w;
    }
    if (sum <= 0.0) throw ZeroMassError("normalize: all weights are zero");
    std::vector<double> mass(weights.size());
    for (size_t i = 0; i < weights.size(); ++i) mass[i] = weights[i] / sum;
    return Dist(std::move(mass));
}

Dist residual(const Dist& p, const Dist& q) {
    if (p.size() != q.size()) throw DomainError("residual: size mismatch");
    std::vector<double> w(static_cast<size_t>(p.size()));
    for (TokenId y = 0; y < p.size(); ++y) w[static_cast<size_t>(y)] = std::max(p[y] - q[y], 0.0);
    double sum = std::accumulate(w.begin(), w.end(), 0.0);
    if (sum <= 0.0) throw ZeroMassError("residual: p == q, nothing to correct");
    for (double& x : w) x /= sum;
    return Dist(std::move(w));
}

double accept_prob(const Dist& p, const Dist& q, TokenId y) {
    if (p.size() != q.size()) throw DomainError("accept_prob: size mismatch");
    if (y < 0 || y >= q.size()) throw DomainError("accept_prob: token out of range");
    double qy = q[y];
    if (qy <= 0.0) throw DomainError("accept_prob: q(y) == 0, token not drawable");
    return std::min(1.0, p[y] / qy);
}

TokenId sample(const Dist& d, Rng& rng) {
    double u = rng.uniform();
    double acc = 0.0;
    TokenId last_positive = -1;
    for (TokenId y = 0; y < d.size(); ++y) {
        double m = d[y];
        if (m <= 0.0) continue;
        last_positive = y;
        acc += m;
        if (u < acc) return y;
    }
    // u landed in the rounding slack past the accumulated sum
    return last_positive;
}

Dist top_k_truncate(const Dist& d, int k) {
    if (k <= 0) throw DomainError("top_k_truncate: k must be positive");
    if (k >= d.size()) return d;
    std::vector<TokenId> ids(static_cast<size_t>(d.size()));
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(),
                     [&](TokenId a, TokenId b) { return d[a] > d[b]; });
    std::vector<double> w(static_cast<size_t>(d.size()), 0.0);
    for (int i = 0; i < k; ++i) w[static_cast<size_t>(ids[static_cast<size_t>(i)])] = d[ids[static_cast<size_t>(i)]];
    return normalize(w);
}

double entropy(const Dist& d) {
    double h = 0.0;
    for (TokenId y = 0; y < d.size(); ++y) {
        double m = d[y];
        if (m > 0.0) h -= m * std::log(m);
    }
    return h;
}

Dist apply_temperature(const Dist& d, double tau) {
    if (!(tau > 0.0)) throw DomainError("apply_temperature: tau must be positive");
    if (tau == 1.0) return d;
    std::vector<double> w(static_cast<size_t>(d.size()));
    for (TokenId y = 0; y < d.size(); ++y) w[static_cast<size_t>(y)] = std::pow(d[y], 1.0 / tau);
    return normalize(w);
}

TokenId argmax_token(const Dist& d) {
    TokenId best = 0;
    for (TokenId y = 1; y < d.size(); ++y)
        if (d[y] > d[best]) best = y;
    return best;
}

}  // namespace specdec
