#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "specdec/engine.hpp"
#include "specdec/metrics.hpp"

namespace specdec {

// A speculative-decoding instance small enough for exact enumeration:
// tiny vocab, short horizon, full-support models (after decode transforms).
struct MicroMdp {
    LmPtr target;
    LmPtr draft;
    std::vector<TokenId> prompt;
    DecodeConfig cfg;
    CostModel cost{0.1, 1.0};
    int64_t branch_budget = 5'000'000;

    void validate() const;
};

// exact law over generated suffixes (truncated at eos / max_len)
using OutputDist = std::map<std::vector<TokenId>, double>;

// Law of the engine's emitted output under the given stopping policy,
// by exhaustive branching over candidate draws, accept/reject outcomes and
// correction draws. StateSpaceError once branch_budget is exhausted.
OutputDist exact_output_dist(const MicroMdp& mdp, const StoppingPolicy& policy);

// Law of plain ancestral sampling from the (transformed) target.
OutputDist target_output_dist(const MicroMdp& mdp);

double total_variation(const OutputDist& a, const OutputDist& b);
double max_abs_diff(const OutputDist& a, const OutputDist& b);

// Decision state of the candidate-length MDP: a verified prefix plus the
// candidates drafted so far this round.
struct MdpState {
    std::vector<TokenId> prefix;
    std::vector<TokenId> candidates;
};

struct QValues {
    double stop = 0.0;
    double cont = 0.0;
};

// Expected remaining cost of each action at state s, following the induced
// policy afterwards. Conventions follow the draw-then-act MDP: the transition
// from s draws candidate k+1 first, then the action applies — stop verifies
// all k+1 candidates; continue pays c1 * P(any of the k+1 rejected) and moves
// on; eos / k_cap / max_len force a stop after the draw. The stopping policy
// induces the MDP policy via decide() on the state's candidates (one draw
// earlier than the engine's decide-after-draw loop; both are valid bounded
// policies and the theorem quantifies over any of them).
QValues q_values(const MicroMdp& mdp, const StoppingPolicy& policy, const MdpState& s);

// P(at least one of the state's candidates would be rejected)
double rejection_prob(const MicroMdp& mdp, const MdpState& s);

// Upper bound on the cost-to-go gap used by the stop/continue threshold:
//   Delta = max_len * t_target + max_len * k_cap * t_draft
double naive_delta_bound(const MicroMdp& mdp);

// (c2 + Delta) / (c1 + c2 + Delta)
double stop_threshold(const MicroMdp& mdp);

struct ThresholdRow {
    MdpState state;
    double rejection_prob = 0.0;
    double threshold = 0.0;
    double q_stop = 0.0;
    double q_continue = 0.0;
    bool fires = false;     // rejection_prob >= threshold
    bool violated = false;  // fires but q_stop > q_continue
};

struct ThresholdReport {
    double delta = 0.0;
    double threshold = 0.0;
    std::vector<ThresholdRow> rows;  // every reachable decision state with k >= 1
    bool any_fired = false;
    bool any_violation = false;
};

// Enumerates every decision state reachable from the prompt under the induced
// policy and checks the stop-dominance guarantee wherever the threshold
// condition fires.
ThresholdReport check_threshold_condition(const MicroMdp& mdp, const StoppingPolicy& policy);

std::string threshold_report_csv(const ThresholdReport& rep);

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    int64_t rollouts = 0;
};

// Monte-Carlo estimate of Q(s, a): simulates the same draw-then-act process
// with per-candidate acceptance coins, charging c1 whenever a step's partial
// verification indicator fires and c2 at each stop.
McEstimate mc_q_estimate(const MicroMdp& mdp, const StoppingPolicy& policy, const MdpState& s,
                         bool stop_first, int64_t n_rollouts, uint64_t seed);

}  // namespace specdec
