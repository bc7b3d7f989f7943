#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "specdec/lm.hpp"
#include "specdec/predictor.hpp"

namespace specdec {

enum class Decision { kContinue, kStop };

// Snapshot of the current drafting run, queried after each drafted candidate.
// The engine guarantees `candidates` directly follows `prefix` in one
// contiguous buffer, so full_context() is a real span.
struct PolicyState {
    std::span<const TokenId> prefix;
    std::span<const TokenId> candidates;
    std::span<const FeatureVec> features;  // one per candidate
    // product of accept_score over this round's candidates (1 at round start)
    double cumulative_accept = 1.0;
    // draft distribution for the *next* position; filled only for policies
    // with wants_draft_lookahead()
    const Dist* next_draft_dist = nullptr;

    std::span<const TokenId> full_context() const {
        return {prefix.data(), prefix.size() + candidates.size()};
    }
};

// Decides when a drafting run should stop and be verified. decide() is pure:
// same state, same answer.
class StoppingPolicy {
  public:
    virtual ~StoppingPolicy() = default;

    virtual Decision decide(const PolicyState& s) const = 0;

    // per-candidate acceptance estimate folded into state.cumulative_accept;
    // called once per drafted candidate, before decide()
    virtual double accept_score(const PolicyState&) const { return 1.0; }

    // true if the policy peeks at the target model (unfair in a real system)
    virtual bool oracle_only() const { return false; }
    // true if the policy only makes sense under greedy decoding
    virtual bool requires_greedy() const { return false; }
    // true if decide() needs next_draft_dist
    virtual bool wants_draft_lookahead() const { return false; }

    virtual std::string name() const = 0;    // family, e.g. "fixed"
    virtual std::string params() const = 0;  // e.g. "k=4"

    std::string spec_string() const {
        return params().empty() ? name() : name() + ":" + params();
    }
};

using PolicyPtr = std::shared_ptr<const StoppingPolicy>;

// transformed next-token distribution of some model (used by oracle policies)
using DistFn = std::function<Dist(std::span<const TokenId>)>;

// stop after exactly k candidates (forced stops may end a round earlier)
PolicyPtr fixed_k(int k);

// predicted-rejection threshold: stop as soon as 1 - prod(predicted accept
// probs) > h, including the just-drawn candidate. h in [0, 1).
PolicyPtr adaptive_threshold(PredictorHead head, double h, std::string head_label = "inline");

// stop when the draft probability of the last candidate drops below c
PolicyPtr draft_confidence(double c);

// stop when the running product of draft probabilities drops below c
PolicyPtr confidence_product(double c);

// Greedy-mode oracle: stop right before the first position where the draft's
// greedy token disagrees with the target's. Holds a target handle and needs
// the engine's one-step draft lookahead.
PolicyPtr oracle_greedy(LmPtr target);

// Adaptive-threshold rule fed the *true* acceptance probability
// min(1, p(y)/q(y)) instead of a learned head. target_view must apply the
// same decode transforms the engine verifies with.
PolicyPtr oracle_adaptive(DistFn target_view, double h);

// handles oracle policies need at parse time
struct PolicyContext {
    LmPtr target;              // for oracle-greedy
    DistFn target_view;        // for oracle-adaptive
};

// Parse a policy spec string:
//   "fixed:4"
//   "adaptive:h=0.7:head=heads/d3w6.json"
//   "draftconf:c=0.5"
//   "confprod:c=0.5"
//   "oracle-greedy"
//   "oracle-adaptive:h=0.5"
PolicyPtr parse_policy_spec(const std::string& spec, const PolicyContext& ctx = {});

}  // namespace specdec
