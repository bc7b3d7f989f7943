#include "specdec/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <set>
#include <thread>

#include "json.hpp"

namespace specdec {

using nlohmann::json;

std::string RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["target_model"] = target_model;
    j["draft_model"] = draft_model;
    j["prompts"] = prompts_path;
    j["prompt_mode"] = prompt_mode;
    j["generations"] = generations;
    j["policy"] = policy;
    j["max_len"] = decode.max_len;
    j["k_cap"] = decode.k_cap;
    j["temperature"] = decode.temperature;
    j["top_k"] = decode.top_k;
    j["greedy"] = decode.greedy;
    j["cost_model"] = {{"t_draft", cost.t_draft}, {"t_target", cost.t_target}};
    j["standalone_cost_model"] = {{"t_draft", standalone.t_draft},
                                  {"t_target", standalone.t_target}};
    j["sweep"] = {{"k_grid", k_grid},
                  {"h_grid", h_grid},
                  {"heads", heads},
                  {"policies", extra_policies},
                  {"w_rej_grid", w_rej_grid},
                  {"depth_grid", depth_grid}};
    return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FormatError("run config: invalid JSON");
    static const std::set<std::string> known{
        "seed",       "target_model", "draft_model", "prompts",    "prompt_mode",
        "generations", "policy",      "max_len",     "k_cap",      "temperature",
        "top_k",      "greedy",       "cost_model",  "standalone_cost_model", "sweep"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw FormatError("run config: unknown key '" + key + "'");
    RunConfig rc;
    try {
        rc.seed = j.value("seed", rc.seed);
        rc.target_model = j.value("target_model", rc.target_model);
        rc.draft_model = j.value("draft_model", rc.draft_model);
        rc.prompts_path = j.value("prompts", rc.prompts_path);
        rc.prompt_mode = j.value("prompt_mode", rc.prompt_mode);
        rc.generations = j.value("generations", rc.generations);
        rc.policy = j.value("policy", rc.policy);
        rc.decode.max_len = j.value("max_len", rc.decode.max_len);
        rc.decode.k_cap = j.value("k_cap", rc.decode.k_cap);
        rc.decode.temperature = j.value("temperature", rc.decode.temperature);
        rc.decode.top_k = j.value("top_k", rc.decode.top_k);
        rc.decode.greedy = j.value("greedy", rc.decode.greedy);
        if (j.contains("cost_model")) {
            rc.cost.t_draft = j["cost_model"].value("t_draft", rc.cost.t_draft);
            rc.cost.t_target = j["cost_model"].value("t_target", rc.cost.t_target);
        }
        if (j.contains("standalone_cost_model")) {
            rc.standalone.t_draft =
                j["standalone_cost_model"].value("t_draft", rc.standalone.t_draft);
            rc.standalone.t_target =
                j["standalone_cost_model"].value("t_target", rc.standalone.t_target);
        }
        if (j.contains("sweep")) {
            const auto& s = j["sweep"];
            rc.k_grid = s.value("k_grid", rc.k_grid);
            rc.h_grid = s.value("h_grid", rc.h_grid);
            rc.heads = s.value("heads", rc.heads);
            rc.extra_policies = s.value("policies", rc.extra_policies);
            rc.w_rej_grid = s.value("w_rej_grid", rc.w_rej_grid);
            rc.depth_grid = s.value("depth_grid", rc.depth_grid);
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("run config: ") + e.what());
    }
    return rc;
}

namespace {

int resolve_threads(int threads) {
    if (threads > 0) return threads;
    if (const char* env = std::getenv("SPECDEC_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

struct GenStats {
    double discard = 0.0;
    double verification = 0.0;
    double tput = 0.0;
    double total = 0.0;
    int64_t tokens = 0;
};

}  // namespace

PolicyBenchResult run_bench(const LanguageModel& target, const LanguageModel& draft,
                            const std::vector<std::vector<TokenId>>& prompts, PolicyPtr policy,
                            const DecodeConfig& cfg, const CostModel& cost,
                            const CostModel& standalone, int generations, uint64_t master_seed,
                            int threads) {
    if (prompts.empty()) throw EmptyCorpusError("run_bench: no prompts");
    if (generations < 1) throw DomainError("run_bench: generations must be >= 1");
    cost.validate();
    standalone.validate();

    std::vector<GenStats> stats(static_cast<size_t>(generations));
    const int nthreads = std::min(resolve_threads(threads), generations);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(nthreads));

    auto worker = [&](int w) {
        try {
            for (int g = w; g < generations; g += nthreads) {
                Rng rng(split_seed(master_seed, static_cast<uint64_t>(g)));
                const auto& prompt = prompts[static_cast<size_t>(g) % prompts.size()];
                GenerationTrace tr = generate(target, draft, prompt, *policy, cfg, rng);
                GenStats& s = stats[static_cast<size_t>(g)];
                s.discard = discard_rate(tr);
                s.verification = verification_rate(tr);
                s.tput = throughput(tr, cost);
                s.total = total_time(tr, cost);
                s.tokens = tr.n_generated;
            }
        } catch (...) {
            errors[static_cast<size_t>(w)] = std::current_exception();
        }
    };
    if (nthreads == 1) {
        worker(0);
    } else {
        for (int w = 0; w < nthreads; ++w) pool.emplace_back(worker, w);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    auto mean_of = [&](auto get) {
        double m = 0.0;
        for (const auto& s : stats) m += get(s);
        return m / static_cast<double>(stats.size());
    };
    auto std_of = [&](auto get, double mean) {
        if (stats.size() < 2) return 0.0;
        double acc = 0.0;
        for (const auto& s : stats) acc += (get(s) - mean) * (get(s) - mean);
        return std::sqrt(acc / static_cast<double>(stats.size() - 1));
    };

    PolicyBenchResult res;
    res.generations = generations;
    double dr = mean_of([](const GenStats& s) { return s.discard; });
    double vr = mean_of([](const GenStats& s) { return s.verification; });
    double tput = mean_of([](const GenStats& s) { return s.tput; });
    res.point.policy = policy->name();
    res.point.params = policy->params();
    res.point.discard_rate = dr;
    res.point.verification_rate = vr;
    res.point.latency = latency_from_rates(dr, vr, cost);
    res.point.throughput = 1.0 / res.point.latency;
    res.point.speedup = res.point.throughput * standalone.t_target;
    res.discard_std = std_of([](const GenStats& s) { return s.discard; }, dr);
    res.verification_std = std_of([](const GenStats& s) { return s.verification; }, vr);
    res.throughput_std = std_of([](const GenStats& s) { return s.tput; }, tput);
    res.mean_total_time = mean_of([](const GenStats& s) { return s.total; });
    for (const auto& s : stats) res.total_tokens += s.tokens;
    return res;
}

std::vector<PolicyBenchResult> run_sweep(const LanguageModel& target, const LanguageModel& draft,
                                         const std::vector<std::vector<TokenId>>& prompts,
                                         const RunConfig& rc, LmPtr target_handle) {
    std::vector<PolicyPtr> policies;
    for (int k : rc.k_grid) policies.push_back(fixed_k(k));
    for (const auto& head_path : rc.heads) {
        PredictorHead head = PredictorHead::load(head_path);
        std::string label = head_path;
        if (auto slash = label.find_last_of('/'); slash != std::string::npos)
            label = label.substr(slash + 1);
        if (auto dot = label.find_last_of('.'); dot != std::string::npos)
            label = label.substr(0, dot);
        for (double h : rc.h_grid) policies.push_back(adaptive_threshold(head, h, label));
    }
    PolicyContext pctx;
    pctx.target = target_handle;
    if (target_handle) pctx.target_view = make_dist_view(target_handle, rc.decode);
    for (const auto& spec : rc.extra_policies) policies.push_back(parse_policy_spec(spec, pctx));

    std::vector<PolicyBenchResult> out;
    for (const auto& p : policies)
        out.push_back(run_bench(target, draft, prompts, p, rc.decode, rc.cost, rc.standalone,
                                rc.generations, rc.seed));
    return out;
}

std::string bench_summary_json(const RunConfig& rc, std::span<const PolicyBenchResult> results) {
    json j;
    j["config"] = json::parse(rc.to_json());
    json rows = json::array();
    for (const auto& r : results) {
        json row;
        row["policy"] = r.point.policy;
        row["params"] = r.point.params;
        row["discard_rate"] = {{"mean", r.point.discard_rate}, {"std", r.discard_std}};
        row["verification_rate"] = {{"mean", r.point.verification_rate},
                                    {"std", r.verification_std}};
        row["latency"] = r.point.latency;
        row["throughput"] = {{"mean", r.point.throughput}, {"std", r.throughput_std}};
        row["speedup"] = r.point.speedup;
        row["mean_total_time"] = r.mean_total_time;
        row["generations"] = r.generations;
        row["total_tokens"] = r.total_tokens;
        rows.push_back(std::move(row));
    }
    j["results"] = std::move(rows);
    return j.dump(2);
}

// ---- batteries -------------------------------------------------------------

LmPtr random_matrix_model(Vocab vocab, Rng& rng) {
    auto random_row = [&]() {
        std::vector<double> w(static_cast<size_t>(vocab.size));
        for (double& x : w) x = 0.05 - std::log(1.0 - rng.uniform());
        return normalize(w);
    };
    std::vector<Dist> rows;
    for (int i = 0; i < vocab.size; ++i) rows.push_back(random_row());
    return std::make_shared<MatrixModel>(vocab, random_row(), std::move(rows));
}

namespace {

PolicyPtr battery_adaptive_policy(uint64_t seed, double h) {
    PredictorHead head(/*depth=*/1, /*width=*/4, seed);
    return adaptive_threshold(std::move(head), h, "battery");
}

MicroMdp random_micro_mdp(uint64_t seed, int index) {
    Rng rng(split_seed(seed, static_cast<uint64_t>(index)));
    const int v = 2 + index % 4;
    Vocab vocab{v, /*eos=*/0};
    MicroMdp mdp;
    mdp.target = random_matrix_model(vocab, rng);
    if (index % 2 == 0) {
        mdp.draft = random_matrix_model(vocab, rng);
    } else {
        mdp.draft = std::make_shared<PerturbedModel>(mdp.target, 0.2 + 0.1 * (index % 4),
                                                     0.8 + 0.15 * (index % 3));
    }
    mdp.prompt = {static_cast<TokenId>(1 + index % (v - 1))};  // avoid starting on eos
    mdp.cfg.max_len = static_cast<int>(mdp.prompt.size()) + 2 + index % 3;
    mdp.cfg.k_cap = 2 + index % 3;
    if (index % 8 == 7) {
        mdp.cfg.temperature = 1.3;
        mdp.cfg.top_k = v - 1;
    }
    mdp.cost = CostModel{0.1 + 0.05 * (index % 5), 1.0};
    return mdp;
}

}  // namespace

std::vector<OracleCase> make_unbiasedness_battery(uint64_t seed) {
    std::vector<OracleCase> cases;
    for (int i = 0; i < 24; ++i) {
        MicroMdp mdp = random_micro_mdp(seed, i);
        std::string base = "mdp" + std::to_string(i);
        cases.push_back({base + "/fixed", mdp, fixed_k(1 + i % 3)});
        cases.push_back({base + "/adaptive", mdp,
                         battery_adaptive_policy(split_seed(seed, 1000 + static_cast<uint64_t>(i)),
                                                 0.2 + 0.15 * (i % 5))});
        cases.push_back({base + "/draftconf", mdp, draft_confidence(0.3 + 0.1 * (i % 5))});
        cases.push_back({base + "/confprod", mdp, confidence_product(0.2 + 0.12 * (i % 5))});
    }
    return cases;
}

std::vector<OracleCase> make_theorem_battery(uint64_t seed) {
    std::vector<OracleCase> cases;
    for (int i = 0; i < 10; ++i) {
        MicroMdp mdp = random_micro_mdp(seed ^ 0xabcdef, i);
        mdp.cfg.max_len = static_cast<int>(mdp.prompt.size()) + 2 + i % 2;  // keep the DP small
        std::string base = "thm" + std::to_string(i);
        cases.push_back({base + "/fixed", mdp, fixed_k(2)});
        cases.push_back({base + "/adaptive", mdp,
                         battery_adaptive_policy(split_seed(seed, 2000 + static_cast<uint64_t>(i)),
                                                 0.3 + 0.1 * (i % 4))});
        cases.push_back({base + "/confprod", mdp, confidence_product(0.3 + 0.1 * (i % 4))});
    }
    // Near-disjoint models: min(1, p/q) ~ 0.005 on the draft's favourite token,
    // so the rejection probability beats the threshold. Cost models are picked
    // so the threshold stays below it (a cheap verification pass keeps Delta,
    // and with it the threshold, small).
    auto make_disjoint = [](CostModel cost, int max_len, int k_cap) {
        Vocab vocab{3, /*eos=*/0};
        auto mk = [&](double a, double b, double c) {
            return Dist(std::vector<double>{a, b, c});
        };
        std::vector<Dist> trows{mk(0.005, 0.99, 0.005), mk(0.005, 0.99, 0.005),
                                mk(0.005, 0.99, 0.005)};
        std::vector<Dist> drows{mk(0.005, 0.005, 0.99), mk(0.005, 0.005, 0.99),
                                mk(0.005, 0.005, 0.99)};
        MicroMdp mdp;
        mdp.target = std::make_shared<MatrixModel>(vocab, mk(0.005, 0.99, 0.005), trows);
        mdp.draft = std::make_shared<MatrixModel>(vocab, mk(0.005, 0.005, 0.99), drows);
        mdp.prompt = {1};
        mdp.cfg.max_len = max_len;
        mdp.cfg.k_cap = k_cap;
        mdp.cost = cost;
        return mdp;
    };
    // k=1 states here still have a real continue option (k_cap 3, room to
    // max_len), so the dominance check compares genuinely different actions.
    cases.push_back(
        {"thm-disjoint-open", make_disjoint(CostModel{1.0, 1.05}, /*max_len=*/5, /*k_cap=*/3),
         fixed_k(2)});
    // boundary variants: every continue is forced, stop/continue coincide
    cases.push_back(
        {"thm-disjoint-even", make_disjoint(CostModel{0.5, 1.0}, /*max_len=*/3, /*k_cap=*/2),
         fixed_k(2)});
    cases.push_back(
        {"thm-disjoint-timed", make_disjoint(CostModel{0.02, 0.1}, /*max_len=*/4, /*k_cap=*/2),
         fixed_k(2)});
    return cases;
}

OracleCheckReport run_oracle_check(uint64_t seed, double unbiasedness_tol) {
    OracleCheckReport rep;
    std::string csv = "case,kind,value,ok\n";
    auto fmt = [](double x) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.12g", x);
        return std::string(buf);
    };

    for (const auto& c : make_unbiasedness_battery(seed)) {
        OutputDist engine_law = exact_output_dist(c.mdp, *c.policy);
        OutputDist target_law = target_output_dist(c.mdp);
        double gap = max_abs_diff(engine_law, target_law);
        rep.worst_unbiasedness_gap = std::max(rep.worst_unbiasedness_gap, gap);
        bool ok = gap <= unbiasedness_tol;
        rep.ok &= ok;
        csv += c.name + ",unbiasedness," + fmt(gap) + "," + (ok ? "1" : "0") + "\n";
    }

    for (const auto& c : make_theorem_battery(seed)) {
        ThresholdReport tr = check_threshold_condition(c.mdp, *c.policy);
        int64_t fired = 0, violated = 0;
        for (const auto& row : tr.rows) {
            fired += row.fires ? 1 : 0;
            violated += row.violated ? 1 : 0;
            if (row.fires && row.q_continue > row.q_stop + 1e-9) rep.theorem_strict_fire = true;
        }
        rep.theorem_states_checked += static_cast<int64_t>(tr.rows.size());
        rep.theorem_violations += violated;
        rep.theorem_fired_somewhere |= tr.any_fired;
        bool ok = violated == 0;
        rep.ok &= ok;
        csv += c.name + ",theorem_fired," + std::to_string(fired) + "," + (ok ? "1" : "0") + "\n";
    }
    rep.ok &= rep.theorem_fired_somewhere && rep.theorem_strict_fire;
    rep.csv = std::move(csv);
    return rep;
}

}  // namespace specdec
