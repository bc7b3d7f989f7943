#include "specdec/mdp_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace specdec {

void MicroMdp::validate() const {
    if (!target || !draft) throw DomainError("micro mdp: null model");
    if (target->vocab().size != draft->vocab().size || target->vocab().eos != draft->vocab().eos)
        throw DomainError("micro mdp: vocab mismatch");
    cfg.validate(prompt.size());
    cost.validate();
    if (branch_budget < 1) throw DomainError("micro mdp: branch budget must be positive");
}

namespace {

// Incrementally maintained drafting run: context buffer, per-candidate draft
// dists/features and the policy's cumulative accept product — the exact state
// the engine would show the policy.
struct Walk {
    const MicroMdp* mdp = nullptr;
    const StoppingPolicy* policy = nullptr;
    std::vector<TokenId> ctx;  // prefix ++ candidates, contiguous
    size_t np = 0;
    std::vector<Dist> qdists;
    std::vector<FeatureVec> feats;
    std::vector<double> saved_cum;   // cum before each candidate
    std::vector<double> saved_prod;  // run_prod before each candidate
    double cum = 1.0;
    double run_prod = 1.0;

    Walk(const MicroMdp& m, const StoppingPolicy& p, std::span<const TokenId> prefix)
        : mdp(&m), policy(&p), ctx(prefix.begin(), prefix.end()), np(prefix.size()) {}

    size_t k() const { return ctx.size() - np; }

    PolicyState state() const {
        PolicyState st;
        st.prefix = std::span<const TokenId>(ctx.data(), np);
        st.candidates = std::span<const TokenId>(ctx.data() + np, k());
        st.features = feats;
        st.cumulative_accept = cum;
        return st;
    }

    void push(TokenId y, Dist q) {
        saved_cum.push_back(cum);
        saved_prod.push_back(run_prod);
        ctx.push_back(y);
        run_prod *= q[y];
        feats.push_back(candidate_features(q, y, static_cast<int>(k()), mdp->cfg.k_cap,
                                           run_prod));
        qdists.push_back(std::move(q));
        PolicyState st = state();
        st.cumulative_accept = saved_cum.back();
        cum = saved_cum.back() * policy->accept_score(st);
    }

    void pop() {
        ctx.pop_back();
        qdists.pop_back();
        feats.pop_back();
        cum = saved_cum.back();
        run_prod = saved_prod.back();
        saved_cum.pop_back();
        saved_prod.pop_back();
    }

    Decision decide() const {
        if (k() == 0) return Decision::kContinue;
        PolicyState st = state();
        if (policy->wants_draft_lookahead()) {
            Dist next_q = decode_dist(*mdp->draft, ctx, mdp->cfg);
            st.next_draft_dist = &next_q;
            return policy->decide(st);
        }
        return policy->decide(st);
    }

    bool forced_stop() const {
        return ctx.back() == mdp->target->vocab().eos ||
               static_cast<int>(k()) >= mdp->cfg.k_cap ||
               static_cast<int>(ctx.size()) >= mdp->cfg.max_len;
    }
};

Walk make_walk(const MicroMdp& mdp, const StoppingPolicy& policy,
               std::span<const TokenId> prefix, std::span<const TokenId> cands) {
    Walk w(mdp, policy, prefix);
    for (TokenId y : cands) {
        Dist q = decode_dist(*mdp.draft, w.ctx, mdp.cfg);
        if (q[y] <= 0.0) throw DomainError("mdp state: candidate outside draft support");
        w.push(y, std::move(q));
    }
    return w;
}

bool is_terminal(const MicroMdp& mdp, std::span<const TokenId> cur) {
    if (static_cast<int>(cur.size()) >= mdp.cfg.max_len) return true;
    return cur.size() > mdp.prompt.size() && cur.back() == mdp.target->vocab().eos;
}

// target dists and acceptance probs along a finished drafting run, plus the
// bonus-position dist
struct RoundEval {
    std::vector<Dist> tdists;  // K+1
    std::vector<double> betas;
};

RoundEval eval_round(const MicroMdp& mdp, const Walk& w) {
    RoundEval ev;
    const size_t kk = w.k();
    for (size_t i = 0; i <= kk; ++i) {
        ev.tdists.push_back(
            decode_dist(*mdp.target, std::span<const TokenId>(w.ctx.data(), w.np + i), mdp.cfg));
        if (i < kk)
            ev.betas.push_back(
                accept_prob(ev.tdists.back(), w.qdists[i], w.ctx[w.np + i]));
    }
    return ev;
}

struct Budget {
    int64_t left;
    void charge() {
        if (--left < 0) throw StateSpaceError("exact enumeration exceeded branch budget");
    }
};

// Exhaustive enumeration of the engine's output law.
class Enumerator {
  public:
    Enumerator(const MicroMdp& mdp, const StoppingPolicy& policy)
        : mdp_(mdp), policy_(policy), budget_{mdp.branch_budget} {}

    OutputDist run() {
        std::vector<TokenId> cur = mdp_.prompt;
        gen_from(cur, 1.0);
        return std::move(out_);
    }

  private:
    void gen_from(std::vector<TokenId>& cur, double prob) {
        budget_.charge();
        if (is_terminal(mdp_, cur)) {
            std::vector<TokenId> suffix(cur.begin() + static_cast<long>(mdp_.prompt.size()),
                                        cur.end());
            out_[suffix] += prob;
            return;
        }
        Walk w = make_walk(mdp_, policy_, cur, {});
        round_step(w, prob);
    }

    void round_step(Walk& w, double prob) {
        Dist q = decode_dist(*mdp_.draft, w.ctx, mdp_.cfg);
        for (TokenId y = 0; y < q.size(); ++y) {
            double qy = q[y];
            if (qy <= 0.0) continue;
            budget_.charge();
            w.push(y, q);
            bool stop = w.forced_stop() || w.decide() == Decision::kStop;
            if (stop)
                verify_branches(w, prob * qy);
            else
                round_step(w, prob * qy);
            w.pop();
        }
    }

    void verify_branches(const Walk& w, double p_in) {
        RoundEval ev = eval_round(mdp_, w);
        const size_t kk = w.k();
        double pref = 1.0;
        for (size_t j = 0; j < kk; ++j) {
            double rej = pref * (1.0 - ev.betas[j]);
            if (rej > 0.0) {
                Dist res = residual(ev.tdists[j], w.qdists[j]);
                for (TokenId t = 0; t < res.size(); ++t) {
                    if (res[t] <= 0.0) continue;
                    std::vector<TokenId> cur(w.ctx.begin(),
                                             w.ctx.begin() + static_cast<long>(w.np + j));
                    cur.push_back(t);
                    gen_from(cur, p_in * rej * res[t]);
                }
            }
            pref *= ev.betas[j];
        }
        if (pref > 0.0) {
            bool boundary = w.ctx.back() == mdp_.target->vocab().eos ||
                            static_cast<int>(w.ctx.size()) >= mdp_.cfg.max_len;
            if (boundary) {
                std::vector<TokenId> cur = w.ctx;
                gen_from(cur, p_in * pref);
            } else {
                const Dist& bonus = ev.tdists[kk];
                for (TokenId b = 0; b < bonus.size(); ++b) {
                    if (bonus[b] <= 0.0) continue;
                    std::vector<TokenId> cur = w.ctx;
                    cur.push_back(b);
                    gen_from(cur, p_in * pref * bonus[b]);
                }
            }
        }
    }

    const MicroMdp& mdp_;
    const StoppingPolicy& policy_;
    Budget budget_;
    OutputDist out_;
};

}  // namespace

OutputDist exact_output_dist(const MicroMdp& mdp, const StoppingPolicy& policy) {
    mdp.validate();
    if (policy.requires_greedy() && !mdp.cfg.greedy)
        throw MisuseError("exact_output_dist: policy needs greedy decoding");
    return Enumerator(mdp, policy).run();
}

OutputDist target_output_dist(const MicroMdp& mdp) {
    mdp.validate();
    OutputDist out;
    Budget budget{mdp.branch_budget};
    std::vector<TokenId> cur = mdp.prompt;
    auto rec = [&](auto&& self, double prob) -> void {
        budget.charge();
        if (is_terminal(mdp, cur)) {
            std::vector<TokenId> suffix(cur.begin() + static_cast<long>(mdp.prompt.size()),
                                        cur.end());
            out[suffix] += prob;
            return;
        }
        Dist p = decode_dist(*mdp.target, cur, mdp.cfg);
        for (TokenId y = 0; y < p.size(); ++y) {
            if (p[y] <= 0.0) continue;
            cur.push_back(y);
            self(self, prob * p[y]);
            cur.pop_back();
        }
    };
    rec(rec, 1.0);
    return out;
}

double total_variation(const OutputDist& a, const OutputDist& b) {
    double tv = 0.0;
    for (const auto& [key, pa] : a) {
        auto it = b.find(key);
        tv += std::abs(pa - (it == b.end() ? 0.0 : it->second));
    }
    for (const auto& [key, pb] : b)
        if (!a.count(key)) tv += pb;
    return 0.5 * tv;
}

double max_abs_diff(const OutputDist& a, const OutputDist& b) {
    double m = 0.0;
    for (const auto& [key, pa] : a) {
        auto it = b.find(key);
        m = std::max(m, std::abs(pa - (it == b.end() ? 0.0 : it->second)));
    }
    for (const auto& [key, pb] : b)
        if (!a.count(key)) m = std::max(m, pb);
    return m;
}

namespace {

// Bounded dynamic program over the draw-then-act MDP (see header for the
// conventions). Values are memoized per decision state.
class MdpEvaluator {
  public:
    MdpEvaluator(const MicroMdp& mdp, const StoppingPolicy& policy)
        : mdp_(mdp), policy_(policy), budget_{mdp.branch_budget} {}

    QValues q_state(std::span<const TokenId> prefix, std::span<const TokenId> cands) {
        Walk w = make_walk(mdp_, policy_, prefix, cands);
        return {q_action(w, true), q_action(w, false)};
    }

    double prefix_value(std::span<const TokenId> prefix) {
        if (is_terminal(mdp_, prefix)) return 0.0;
        return state_value(prefix, {});
    }

  private:
    static std::vector<TokenId> state_key(std::span<const TokenId> prefix,
                                          std::span<const TokenId> cands) {
        std::vector<TokenId> key(prefix.begin(), prefix.end());
        key.push_back(-1);
        key.insert(key.end(), cands.begin(), cands.end());
        return key;
    }

    double state_value(std::span<const TokenId> prefix, std::span<const TokenId> cands) {
        auto key = state_key(prefix, cands);
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;
        Walk w = make_walk(mdp_, policy_, prefix, cands);
        bool stop = w.k() > 0 && w.decide() == Decision::kStop;
        double v = q_action(w, stop);
        memo_.emplace(std::move(key), v);
        return v;
    }

    // expected remaining cost taking `stop_action` now, then the policy
    double q_action(Walk& w, bool stop_action) {
        budget_.charge();
        const double c1 = mdp_.cost.c1();
        const double c2 = mdp_.cost.c2();
        // acceptance product over the existing candidates
        RoundEval base = eval_round(mdp_, w);
        double prod_k = 1.0;
        for (double b : base.betas) prod_k *= b;
        const Dist q = decode_dist(*mdp_.draft, w.ctx, mdp_.cfg);
        const Dist& p_next = base.tdists.back();

        double expected = 0.0;
        for (TokenId y = 0; y < q.size(); ++y) {
            double qy = q[y];
            if (qy <= 0.0) continue;
            w.push(y, q);
            double beta_y = std::min(1.0, p_next[y] / qy);
            double prod_k1 = prod_k * beta_y;
            bool forced = w.forced_stop();
            if (stop_action || forced) {
                expected += qy * stop_value(w, c1, c2);
            } else {
                double cont = c1 * (1.0 - prod_k1) +
                              state_value(std::span<const TokenId>(w.ctx.data(), w.np),
                                          std::span<const TokenId>(w.ctx.data() + w.np, w.k()));
                expected += qy * cont;
            }
            w.pop();
        }
        return expected;
    }

    // verify all of the walk's candidates, pay the per-round costs and recurse
    // into the next round
    double stop_value(const Walk& w, double c1, double c2) {
        RoundEval ev = eval_round(mdp_, w);
        const size_t kk = w.k();
        double prod = 1.0;
        for (double b : ev.betas) prod *= b;
        double val = c1 * (1.0 - prod) + c2;
        double pref = 1.0;
        for (size_t j = 0; j < kk; ++j) {
            double rej = pref * (1.0 - ev.betas[j]);
            if (rej > 0.0) {
                Dist res = residual(ev.tdists[j], w.qdists[j]);
                for (TokenId t = 0; t < res.size(); ++t) {
                    if (res[t] <= 0.0) continue;
                    std::vector<TokenId> nxt(w.ctx.begin(),
                                             w.ctx.begin() + static_cast<long>(w.np + j));
                    nxt.push_back(t);
                    val += rej * res[t] * prefix_value(nxt);
                }
            }
            pref *= ev.betas[j];
        }
        if (pref > 0.0) {
            bool boundary = w.ctx.back() == mdp_.target->vocab().eos ||
                            static_cast<int>(w.ctx.size()) >= mdp_.cfg.max_len;
            if (!boundary) {
                const Dist& bonus = ev.tdists[kk];
                for (TokenId b = 0; b < bonus.size(); ++b) {
                    if (bonus[b] <= 0.0) continue;
                    std::vector<TokenId> nxt = w.ctx;
                    nxt.push_back(b);
                    val += pref * bonus[b] * prefix_value(nxt);
                }
            }
        }
        return val;
    }

    const MicroMdp& mdp_;
    const StoppingPolicy& policy_;
    Budget budget_;
    std::map<std::vector<TokenId>, double> memo_;
};

}  // namespace

QValues q_values(const MicroMdp& mdp, const StoppingPolicy& policy, const MdpState& s) {
    mdp.validate();
    if (static_cast<int>(s.prefix.size() + s.candidates.size()) >= mdp.cfg.max_len)
        throw DomainError("q_values: state already at max_len");
    if (static_cast<int>(s.candidates.size()) >= mdp.cfg.k_cap)
        throw DomainError("q_values: state already at k_cap");
    MdpEvaluator ev(mdp, policy);
    return ev.q_state(s.prefix, s.candidates);
}

double rejection_prob(const MicroMdp& mdp, const MdpState& s) {
    mdp.validate();
    // features/cum are irrelevant here, but make_walk validates the state
    auto dummy = fixed_k(1);
    Walk w = make_walk(mdp, *dummy, s.prefix, s.candidates);
    RoundEval ev = eval_round(mdp, w);
    double prod = 1.0;
    for (double b : ev.betas) prod *= b;
    return 1.0 - prod;
}

double naive_delta_bound(const MicroMdp& mdp) {
    return static_cast<double>(mdp.cfg.max_len) * mdp.cost.t_target +
           static_cast<double>(mdp.cfg.max_len) * static_cast<double>(mdp.cfg.k_cap) *
               mdp.cost.t_draft;
}

double stop_threshold(const MicroMdp& mdp) {
    double delta = naive_delta_bound(mdp);
    return (mdp.cost.c2() + delta) / (mdp.cost.c1() + mdp.cost.c2() + delta);
}

ThresholdReport check_threshold_condition(const MicroMdp& mdp, const StoppingPolicy& policy) {
    mdp.validate();
    ThresholdReport rep;
    rep.delta = naive_delta_bound(mdp);
    rep.threshold = stop_threshold(mdp);

    MdpEvaluator ev(mdp, policy);
    Budget budget{mdp.branch_budget};
    std::set<std::vector<TokenId>> seen_states;
    std::set<std::vector<TokenId>> seen_prefixes;

    auto state_key = [](std::span<const TokenId> prefix, std::span<const TokenId> cands) {
        std::vector<TokenId> key(prefix.begin(), prefix.end());
        key.push_back(-1);
        key.insert(key.end(), cands.begin(), cands.end());
        return key;
    };

    std::function<void(const std::vector<TokenId>&)> visit_prefix;
    std::function<void(const std::vector<TokenId>&, const std::vector<TokenId>&)> visit_state;

    visit_state = [&](const std::vector<TokenId>& prefix, const std::vector<TokenId>& cands) {
        auto key = state_key(prefix, cands);
        if (!seen_states.insert(key).second) return;
        budget.charge();

        Walk w = make_walk(mdp, policy, prefix, cands);
        if (w.k() >= 1) {
            ThresholdRow row;
            row.state = {prefix, cands};
            row.rejection_prob = rejection_prob(mdp, row.state);
            row.threshold = rep.threshold;
            QValues qv = ev.q_state(prefix, cands);
            row.q_stop = qv.stop;
            row.q_continue = qv.cont;
            row.fires = row.rejection_prob >= row.threshold;
            row.violated = row.fires && row.q_stop > row.q_continue + 1e-9;
            rep.any_fired |= row.fires;
            rep.any_violation |= row.violated;
            rep.rows.push_back(std::move(row));
        }

        bool stop_action = w.k() > 0 && w.decide() == Decision::kStop;
        Dist q = decode_dist(*mdp.draft, w.ctx, mdp.cfg);
        for (TokenId y = 0; y < q.size(); ++y) {
            if (q[y] <= 0.0) continue;
            w.push(y, q);
            bool forced = w.forced_stop();
            if (stop_action || forced) {
                RoundEval rev = eval_round(mdp, w);
                double pref = 1.0;
                for (size_t j = 0; j < w.k(); ++j) {
                    double rej = pref * (1.0 - rev.betas[j]);
                    if (rej > 0.0) {
                        Dist res = residual(rev.tdists[j], w.qdists[j]);
                        for (TokenId t = 0; t < res.size(); ++t) {
                            if (res[t] <= 0.0) continue;
                            std::vector<TokenId> nxt(
                                w.ctx.begin(), w.ctx.begin() + static_cast<long>(w.np + j));
                            nxt.push_back(t);
                            visit_prefix(nxt);
                        }
                    }
                    pref *= rev.betas[j];
                }
                if (pref > 0.0) {
                    bool boundary = w.ctx.back() == mdp.target->vocab().eos ||
                                    static_cast<int>(w.ctx.size()) >= mdp.cfg.max_len;
                    if (boundary) {
                        visit_prefix(w.ctx);
                    } else {
                        const Dist& bonus = rev.tdists[w.k()];
                        for (TokenId b = 0; b < bonus.size(); ++b) {
                            if (bonus[b] <= 0.0) continue;
                            std::vector<TokenId> nxt = w.ctx;
                            nxt.push_back(b);
                            visit_prefix(nxt);
                        }
                    }
                }
            } else {
                std::vector<TokenId> next_cands = cands;
                next_cands.push_back(y);
                visit_state(prefix, next_cands);
            }
            w.pop();
        }
    };

    visit_prefix = [&](const std::vector<TokenId>& prefix) {
        if (is_terminal(mdp, prefix)) return;
        if (!seen_prefixes.insert(prefix).second) return;
        visit_state(prefix, {});
    };

    visit_prefix(mdp.prompt);
    return rep;
}

std::string threshold_report_csv(const ThresholdReport& rep) {
    auto fmt = [](double x) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.12g", x);
        return std::string(buf);
    };
    auto join = [](const std::vector<TokenId>& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) {
            if (i) s += '-';
            s += std::to_string(v[i]);
        }
        return s;
    };
    std::string out =
        "prefix,candidates,k,rejection_prob,threshold,q_stop,q_continue,fires,violated\n";
    for (const auto& r : rep.rows) {
        out += join(r.state.prefix) + "," + join(r.state.candidates) + "," +
               std::to_string(r.state.candidates.size()) + "," + fmt(r.rejection_prob) + "," +
               fmt(r.threshold) + "," + fmt(r.q_stop) + "," + fmt(r.q_continue) + "," +
               (r.fires ? "1" : "0") + "," + (r.violated ? "1" : "0") + "\n";
    }
    return out;
}

McEstimate mc_q_estimate(const MicroMdp& mdp, const StoppingPolicy& policy, const MdpState& s,
                         bool stop_first, int64_t n_rollouts, uint64_t seed) {
    mdp.validate();
    if (n_rollouts < 1) throw DomainError("mc_q_estimate: need at least one rollout");
    const double c1 = mdp.cost.c1();
    const double c2 = mdp.cost.c2();
    const TokenId eos = mdp.target->vocab().eos;
    Rng rng(seed);

    double sum = 0.0, sumsq = 0.0;
    for (int64_t t = 0; t < n_rollouts; ++t) {
        double total = 0.0;
        std::vector<TokenId> prefix = s.prefix;
        std::vector<TokenId> cands = s.candidates;
        bool first_decision = true;

        while (!is_terminal(mdp, prefix)) {
            Walk w = make_walk(mdp, policy, prefix, cands);
            // acceptance coins for candidates already on the table
            RoundEval base = eval_round(mdp, w);
            bool any_rej = false;
            std::vector<double> coins;
            for (double beta : base.betas) {
                double r = rng.uniform();
                coins.push_back(r);
                any_rej |= (r >= beta);
            }
            std::vector<double> betas = base.betas;

            bool round_done = false;
            while (!round_done) {
                bool stop_action;
                if (first_decision) {
                    stop_action = stop_first;
                    first_decision = false;
                } else {
                    stop_action = w.k() > 0 && w.decide() == Decision::kStop;
                }
                Dist q = decode_dist(*mdp.draft, w.ctx, mdp.cfg);
                Dist p_next = decode_dist(*mdp.target, w.ctx, mdp.cfg);
                TokenId y = sample(q, rng);
                double r = rng.uniform();
                double beta = std::min(1.0, p_next[y] / q[y]);
                w.push(y, q);
                coins.push_back(r);
                betas.push_back(beta);
                any_rej |= (r >= beta);

                bool forced = w.forced_stop();
                if (stop_action || forced) {
                    total += c1 * (any_rej ? 1.0 : 0.0) + c2;
                    // verification outcome from the recorded coins
                    size_t kk = w.k();
                    size_t nacc = kk;
                    for (size_t i = 0; i < kk; ++i) {
                        if (coins[i] >= betas[i]) {
                            nacc = i;
                            break;
                        }
                    }
                    if (nacc < kk) {
                        Dist td = decode_dist(
                            *mdp.target,
                            std::span<const TokenId>(w.ctx.data(), w.np + nacc), mdp.cfg);
                        Dist res = residual(td, w.qdists[nacc]);
                        std::vector<TokenId> nxt(
                            w.ctx.begin(), w.ctx.begin() + static_cast<long>(w.np + nacc));
                        nxt.push_back(sample(res, rng));
                        prefix = std::move(nxt);
                    } else {
                        bool boundary = w.ctx.back() == eos ||
                                        static_cast<int>(w.ctx.size()) >= mdp.cfg.max_len;
                        if (boundary) {
                            prefix = w.ctx;
                        } else {
                            Dist bonus = decode_dist(*mdp.target, w.ctx, mdp.cfg);
                            prefix = w.ctx;
                            prefix.push_back(sample(bonus, rng));
                        }
                    }
                    cands.clear();
                    round_done = true;
                } else {
                    total += c1 * (any_rej ? 1.0 : 0.0);
                }
            }
        }
        sum += total;
        sumsq += total * total;
    }
    McEstimate est;
    est.rollouts = n_rollouts;
    est.mean = sum / static_cast<double>(n_rollouts);
    double var = sumsq / static_cast<double>(n_rollouts) - est.mean * est.mean;
    var = std::max(var, 0.0);
    est.std_error = std::sqrt(var / static_cast<double>(n_rollouts));
    return est;
}

}  // namespace specdec
