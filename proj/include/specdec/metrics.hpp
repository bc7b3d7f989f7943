#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "specdec/engine.hpp"

namespace specdec {

// Per-forward-pass wall times. c1/c2 are the per-step MDP costs: a wasted
// draft forward and the extra cost of one target forward.
struct CostModel {
    double t_draft = 0.0;
    double t_target = 0.0;

    double c1() const { return t_draft; }
    double c2() const { return t_target - t_draft; }
    void validate() const;  // requires 0 < t_draft < t_target
};

// T = t_draft * N_draft + t_target * N_target
double total_time(const GenerationTrace& t, const CostModel& cm);
// per-token latency T / N; EmptyGenerationError when the trace has no rounds
double latency(const GenerationTrace& t, const CostModel& cm);
double throughput(const GenerationTrace& t, const CostModel& cm);
double discard_rate(const GenerationTrace& t);       // N_discarded / N
double verification_rate(const GenerationTrace& t);  // N_target / N

// latency written in rates: t_draft + t_draft * dr + (t_target - t_draft) * vr
double latency_from_rates(double discard_rate, double verification_rate, const CostModel& cm);

struct ForwardFit {
    double t_draft = 0.0;
    double t_target = 0.0;
    double intercept = 0.0;  // only when fitted with one
    double r2 = 0.0;         // uncentered without intercept, centered with
};

// Least-squares recovery of per-pass times from (n_draft, n_target, total_time)
// rows; RankDeficientError when the design matrix is singular.
ForwardFit fit_forward_times(std::span<const std::array<double, 3>> rows,
                             bool with_intercept = false);

struct BenchPoint {
    std::string policy;
    std::string params;
    double discard_rate = 0.0;
    double verification_rate = 0.0;
    double latency = 0.0;
    double throughput = 0.0;
    double speedup = 0.0;
};

// Non-dominated subset under (verification_rate, discard_rate), both minimized.
// Ties/duplicates are kept: a point is dropped only if some other point is at
// least as good in both coordinates and strictly better in one.
std::vector<size_t> pareto_indices(std::span<const BenchPoint> pts);
std::vector<BenchPoint> pareto_frontier(std::span<const BenchPoint> pts);

// deterministic CSV (fixed column order, %.12g floats)
std::string bench_csv(std::span<const BenchPoint> pts);
std::vector<BenchPoint> bench_from_csv(const std::string& text);

}  // namespace specdec
