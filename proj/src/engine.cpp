#include "specdec/engine.hpp"

#include <optional>

#include "json.hpp"

namespace specdec {

using nlohmann::json;

void DecodeConfig::validate(size_t prompt_len) const {
    if (max_len <= static_cast<int>(prompt_len))
        throw DomainError("decode: max_len leaves no room to generate");
    if (k_cap < 1) throw DomainError("decode: k_cap must be >= 1");
    if (!(temperature > 0.0)) throw DomainError("decode: temperature must be positive");
    if (top_k < 0) throw DomainError("decode: top_k must be >= 0");
}

Dist decode_dist(const LanguageModel& m, std::span<const TokenId> context,
                 const DecodeConfig& cfg) {
    Dist d = m.next_dist(context);
    if (cfg.greedy) {
        std::vector<double> w(static_cast<size_t>(d.size()), 0.0);
        w[static_cast<size_t>(argmax_token(d))] = 1.0;
        return Dist(std::move(w));
    }
    if (cfg.temperature != 1.0) d = apply_temperature(d, cfg.temperature);
    if (cfg.top_k > 0) d = top_k_truncate(d, cfg.top_k);
    return d;
}

DistFn make_dist_view(LmPtr m, DecodeConfig cfg) {
    if (!m) throw DomainError("make_dist_view: null model");
    return [m = std::move(m), cfg](std::span<const TokenId> ctx) {
        return decode_dist(*m, ctx, cfg);
    };
}

namespace {

// shared by verify() and run_round(): acceptance uniforms already drawn
VerifyResult verify_with_uniforms(std::span<const TokenId> candidates,
                                  std::span<const Dist> draft_dists,
                                  std::span<const Dist> target_dists,
                                  std::span<const double> rs,
                                  std::span<const double> accept_probs, Rng& rng) {
    const int k = static_cast<int>(candidates.size());
    int n = k;
    for (int i = 0; i < k; ++i) {
        if (rs[static_cast<size_t>(i)] >= accept_probs[static_cast<size_t>(i)]) {
            n = i;
            break;
        }
    }
    VerifyResult res;
    res.n_accepted = n;
    if (n < k) {
        res.kind = CorrectionKind::kReplaced;
        res.correction = sample(residual(target_dists[static_cast<size_t>(n)],
                                         draft_dists[static_cast<size_t>(n)]),
                                rng);
    } else {
        res.kind = CorrectionKind::kBonus;
        res.correction = sample(target_dists[static_cast<size_t>(k)], rng);
    }
    return res;
}

std::vector<double> compute_accept_probs(std::span<const TokenId> candidates,
                                         std::span<const Dist> draft_dists,
                                         std::span<const Dist> target_dists) {
    std::vector<double> probs(candidates.size());
    for (size_t i = 0; i < candidates.size(); ++i)
        probs[i] = accept_prob(target_dists[i], draft_dists[i], candidates[i]);
    return probs;
}

}  // namespace

VerifyResult verify(std::span<const TokenId> candidates, std::span<const Dist> draft_dists,
                    std::span<const Dist> target_dists, Rng& rng) {
    if (candidates.empty()) throw DomainError("verify: need at least one candidate");
    if (draft_dists.size() != candidates.size() || target_dists.size() != candidates.size() + 1)
        throw DomainError("verify: distribution/candidate count mismatch");
    auto probs = compute_accept_probs(candidates, draft_dists, target_dists);
    std::vector<double> rs(candidates.size());
    for (double& r : rs) r = rng.uniform();
    return verify_with_uniforms(candidates, draft_dists, target_dists, rs, probs, rng);
}

RoundRecord run_round(const LanguageModel& target, const LanguageModel& draft,
                      std::span<const TokenId> prefix, const StoppingPolicy& policy,
                      const DecodeConfig& cfg, Rng& rng) {
    cfg.validate(prefix.size());
    if (policy.requires_greedy() && !cfg.greedy)
        throw MisuseError("run_round: policy '" + policy.name() + "' needs greedy decoding");
    const TokenId eos = draft.vocab().eos;
    const bool lookahead = policy.wants_draft_lookahead();

    RoundRecord rec;
    std::vector<TokenId> ctx(prefix.begin(), prefix.end());  // prefix ++ candidates, contiguous
    std::vector<double> rs;
    double run_prod = 1.0;
    double cum = 1.0;
    std::optional<Dist> pending_q;  // lookahead dist reused for the next draw

    while (true) {
        Dist q = pending_q ? std::move(*pending_q) : decode_dist(draft, ctx, cfg);
        pending_q.reset();
        TokenId y = sample(q, rng);
        double r = rng.uniform();
        ctx.push_back(y);
        run_prod *= q[y];
        const int k = static_cast<int>(rec.candidates.size()) + 1;
        rec.features.push_back(candidate_features(q, y, k, cfg.k_cap, run_prod));
        rec.candidates.push_back(y);
        rec.draft_dists.push_back(std::move(q));
        rs.push_back(r);

        PolicyState st;
        st.prefix = std::span<const TokenId>(ctx.data(), prefix.size());
        st.candidates = std::span<const TokenId>(ctx.data() + prefix.size(),
                                                 rec.candidates.size());
        st.features = rec.features;
        st.cumulative_accept = cum;
        cum *= policy.accept_score(st);
        st.cumulative_accept = cum;

        bool forced = (y == eos) || (k >= cfg.k_cap) ||
                      (static_cast<int>(ctx.size()) >= cfg.max_len);
        if (forced) break;
        if (lookahead) {
            pending_q = decode_dist(draft, ctx, cfg);
            st.next_draft_dist = &*pending_q;
        }
        if (policy.decide(st) == Decision::kStop) break;
    }

    const size_t np = prefix.size();
    for (size_t i = 0; i <= rec.candidates.size(); ++i)
        rec.target_dists.push_back(
            decode_dist(target, std::span<const TokenId>(ctx.data(), np + i), cfg));
    rec.accept_probs = compute_accept_probs(rec.candidates, rec.draft_dists, rec.target_dists);
    VerifyResult v = verify_with_uniforms(rec.candidates, rec.draft_dists, rec.target_dists, rs,
                                          rec.accept_probs, rng);
    rec.n_accepted = v.n_accepted;
    rec.correction = v.correction;
    rec.kind = v.kind;
    return rec;
}

GenerationTrace generate(const LanguageModel& target, const LanguageModel& draft,
                         std::span<const TokenId> prompt, const StoppingPolicy& policy,
                         const DecodeConfig& cfg, Rng& rng) {
    cfg.validate(prompt.size());
    if (target.vocab().size != draft.vocab().size || target.vocab().eos != draft.vocab().eos)
        throw DomainError("generate: target/draft vocab mismatch");
    const TokenId eos = target.vocab().eos;

    GenerationTrace trace;
    trace.prompt.assign(prompt.begin(), prompt.end());
    std::vector<TokenId> cur(prompt.begin(), prompt.end());

    while (true) {
        RoundRecord rec = run_round(target, draft, cur, policy, cfg, rng);
        const int k = static_cast<int>(rec.candidates.size());
        const int n = rec.n_accepted;
        trace.n_generated += n + 1;
        trace.n_draft += k;
        trace.n_target += 1;
        trace.n_discarded += k - n;

        bool hit_eos = false;
        for (int j = 0; j < n; ++j) {
            cur.push_back(rec.candidates[static_cast<size_t>(j)]);
            if (rec.candidates[static_cast<size_t>(j)] == eos) {
                hit_eos = true;
                break;
            }
        }
        if (!hit_eos && static_cast<int>(cur.size()) < cfg.max_len) {
            cur.push_back(rec.correction);
            if (rec.correction == eos) hit_eos = true;
        } else {
            rec.correction_in_output = false;
        }
        trace.rounds.push_back(std::move(rec));
        if (hit_eos || static_cast<int>(cur.size()) >= cfg.max_len) break;
    }
    trace.output.assign(cur.begin() + static_cast<long>(prompt.size()), cur.end());
    return trace;
}

namespace {

json dist_to_json(const Dist& d) { return json(d.mass()); }

json round_to_json(const RoundRecord& r, bool include_dists) {
    json j;
    j["candidates"] = r.candidates;
    j["n_accepted"] = r.n_accepted;
    j["correction"] = r.correction;
    j["kind"] = r.kind == CorrectionKind::kReplaced ? "replaced" : "bonus";
    j["accept_probs"] = r.accept_probs;
    j["correction_in_output"] = r.correction_in_output;
    if (include_dists) {
        json dd = json::array(), td = json::array(), ff = json::array();
        for (const auto& d : r.draft_dists) dd.push_back(dist_to_json(d));
        for (const auto& d : r.target_dists) td.push_back(dist_to_json(d));
        for (const auto& f : r.features) ff.push_back(f.v);
        j["draft_dists"] = std::move(dd);
        j["target_dists"] = std::move(td);
        j["features"] = std::move(ff);
    }
    return j;
}

}  // namespace

std::string trace_to_json(const GenerationTrace& t, bool include_dists) {
    json j;
    j["prompt"] = t.prompt;
    j["output"] = t.output;
    j["counters"] = {{"n_generated", t.n_generated},
                     {"n_draft", t.n_draft},
                     {"n_target", t.n_target},
                     {"n_discarded", t.n_discarded}};
    json rounds = json::array();
    for (const auto& r : t.rounds) rounds.push_back(round_to_json(r, include_dists));
    j["rounds"] = std::move(rounds);
    return j.dump(2);
}

GenerationTrace trace_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FormatError("trace: invalid JSON");
    try {
        GenerationTrace t;
        t.prompt = j.at("prompt").get<std::vector<TokenId>>();
        t.output = j.at("output").get<std::vector<TokenId>>();
        t.n_generated = j.at("counters").at("n_generated").get<int64_t>();
        t.n_draft = j.at("counters").at("n_draft").get<int64_t>();
        t.n_target = j.at("counters").at("n_target").get<int64_t>();
        t.n_discarded = j.at("counters").at("n_discarded").get<int64_t>();
        for (const auto& rj : j.at("rounds")) {
            RoundRecord r;
            r.candidates = rj.at("candidates").get<std::vector<TokenId>>();
            r.n_accepted = rj.at("n_accepted").get<int>();
            r.correction = rj.at("correction").get<TokenId>();
            r.kind = rj.at("kind").get<std::string>() == "replaced" ? CorrectionKind::kReplaced
                                                                    : CorrectionKind::kBonus;
            r.accept_probs = rj.at("accept_probs").get<std::vector<double>>();
            r.correction_in_output = rj.at("correction_in_output").get<bool>();
            if (rj.contains("draft_dists"))
                for (const auto& dj : rj.at("draft_dists"))
                    r.draft_dists.emplace_back(dj.get<std::vector<double>>());
            if (rj.contains("target_dists"))
                for (const auto& dj : rj.at("target_dists"))
                    r.target_dists.emplace_back(dj.get<std::vector<double>>());
            if (rj.contains("features"))
                for (const auto& fj : rj.at("features")) {
                    FeatureVec f;
                    auto vals = fj.get<std::vector<double>>();
                    if (vals.size() != FeatureVec::kDim) throw FormatError("trace: bad feature row");
                    std::copy(vals.begin(), vals.end(), f.v.begin());
                    r.features.push_back(f);
                }
            t.rounds.push_back(std::move(r));
        }
        return t;
    } catch (const json::exception& e) {
        throw FormatError(std::string("trace: ") + e.what());
    }
}

}  // namespace specdec
