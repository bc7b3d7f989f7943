#pragma once

#include <span>
#include <string>
#include <vector>

#include "specdec/lm.hpp"
#include "specdec/policy.hpp"

namespace specdec {

// Decode-time transforms, applied identically to the draft (before sampling)
// and to the target (before verification) — the verified reference law is the
// transformed target.
struct DecodeConfig {
    int max_len = 0;           // cap on |prompt| + generated tokens
    int k_cap = 20;            // max candidates per round
    double temperature = 1.0;  // tau > 0
    int top_k = 0;             // 0 = disabled
    bool greedy = false;       // argmax decoding for both models

    void validate(size_t prompt_len) const;
};

// model distribution with the decode transforms applied
Dist decode_dist(const LanguageModel& m, std::span<const TokenId> context,
                 const DecodeConfig& cfg);

// transformed view of a model, e.g. for oracle_adaptive
DistFn make_dist_view(LmPtr m, DecodeConfig cfg);

enum class CorrectionKind { kReplaced, kBonus };

struct VerifyResult {
    int n_accepted = 0;
    TokenId correction = -1;
    CorrectionKind kind = CorrectionKind::kBonus;
};

// Rejection-sampling verification of K drafted candidates against K+1 target
// distributions. Consumes K uniforms r_1..r_K (candidate i is accepted iff
// r_i < min(1, p_i(y_i)/q_i(y_i))) and then exactly one draw for the
// correction: a residual-distribution token replacing the first rejected
// candidate, or a bonus token from p_{K+1} when all K are accepted.
VerifyResult verify(std::span<const TokenId> candidates, std::span<const Dist> draft_dists,
                    std::span<const Dist> target_dists, Rng& rng);

struct RoundRecord {
    std::vector<TokenId> candidates;
    std::vector<Dist> draft_dists;     // K, transform-applied
    std::vector<Dist> target_dists;    // K+1, transform-applied
    std::vector<double> accept_probs;  // min(1, p_i(y_i)/q_i(y_i))
    std::vector<FeatureVec> features;  // per candidate
    int n_accepted = 0;
    TokenId correction = -1;
    CorrectionKind kind = CorrectionKind::kBonus;
    bool correction_in_output = true;  // false when truncation dropped the trailing token
};

// One speculative round: draft candidates autoregressively until the policy
// (or a forced condition: candidate == eos, K == k_cap,
// |prefix| + K == max_len) stops the run, then verify.
// RNG stream order: per candidate one token draw then one acceptance uniform;
// after the stop, exactly one correction/bonus draw — 2K+1 uniforms total.
RoundRecord run_round(const LanguageModel& target, const LanguageModel& draft,
                      std::span<const TokenId> prefix, const StoppingPolicy& policy,
                      const DecodeConfig& cfg, Rng& rng);

struct GenerationTrace {
    std::vector<TokenId> prompt;
    std::vector<TokenId> output;  // generated tokens only, truncated at eos / max_len
    std::vector<RoundRecord> rounds;
    // Round counters. Every round contributes its correction/bonus token to
    // n_generated even when truncation keeps it out of `output`, so
    //   n_draft + n_target == n_generated + n_discarded
    // holds exactly on every trace.
    int64_t n_generated = 0;  // sum of (n_accepted + 1)
    int64_t n_draft = 0;      // sum of K
    int64_t n_target = 0;     // number of rounds
    int64_t n_discarded = 0;  // sum of (K - n_accepted)
};

// Run rounds until eos is emitted or max_len is reached. The emitted token
// stream is distributed exactly as ancestral sampling from the (transformed)
// target for any stopping policy.
GenerationTrace generate(const LanguageModel& target, const LanguageModel& draft,
                         std::span<const TokenId> prompt, const StoppingPolicy& policy,
                         const DecodeConfig& cfg, Rng& rng);

std::string trace_to_json(const GenerationTrace& t, bool include_dists = false);
GenerationTrace trace_from_json(const std::string& text);

}  // namespace specdec
