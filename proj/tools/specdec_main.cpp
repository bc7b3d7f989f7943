#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "specdec/bench.hpp"

namespace sd = specdec;
using nlohmann::json;

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw sd::FormatError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// path "-" (or empty) means stdout
void write_text(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        if (!content.empty() && content.back() != '\n') std::cout << '\n';
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw sd::FormatError("cannot write " + path);
    out << content;
}

sd::Corpus load_corpus(const std::string& path, const std::string& mode) {
    if (mode == "tokens") return sd::load_token_corpus(path);
    if (mode == "bytes") return sd::load_byte_corpus(path);
    throw sd::DomainError("prompt mode must be tokens|bytes, got " + mode);
}

struct LoadedRun {
    sd::LmPtr target;
    sd::LmPtr draft;
    std::vector<std::vector<sd::TokenId>> prompts;
};

LoadedRun load_run_inputs(const sd::RunConfig& rc) {
    if (rc.target_model.empty()) throw sd::MisuseError("no target model given");
    if (rc.draft_model.empty()) throw sd::MisuseError("no draft model given");
    if (rc.prompts_path.empty()) throw sd::MisuseError("no prompts file given");
    LoadedRun lr;
    lr.target = sd::load_model(rc.target_model);
    lr.draft = sd::load_model(rc.draft_model);
    lr.prompts = load_corpus(rc.prompts_path, rc.prompt_mode).seqs;
    if (lr.prompts.empty()) throw sd::EmptyCorpusError("prompts file has no sequences");
    return lr;
}

// shared --config + override flags for bench/sweep
struct RunFlags {
    std::string config_path;
    sd::RunConfig rc;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run config JSON; flags override fields");
        cmd->add_option("--target", rc.target_model, "target model file");
        cmd->add_option("--draft", rc.draft_model, "draft model file");
        cmd->add_option("--prompts", rc.prompts_path, "prompts file");
        cmd->add_option("--prompt-mode", rc.prompt_mode)
            ->check(CLI::IsMember({"tokens", "bytes"}));
        cmd->add_option("--generations", rc.generations);
        cmd->add_option("--seed", rc.seed);
        cmd->add_option("--policy", rc.policy, "policy spec, e.g. fixed:4 or adaptive:h=0.5:head=f");
        cmd->add_option("--max-len", rc.decode.max_len);
        cmd->add_option("--k-cap", rc.decode.k_cap);
        cmd->add_option("--temperature", rc.decode.temperature);
        cmd->add_option("--top-k", rc.decode.top_k);
        cmd->add_flag("--greedy", rc.decode.greedy);
        cmd->add_option("--t-draft", rc.cost.t_draft);
        cmd->add_option("--t-target", rc.cost.t_target);
        cmd->add_option("--standalone-t-draft", rc.standalone.t_draft);
        cmd->add_option("--standalone-t-target", rc.standalone.t_target);
        cmd->add_option("--k-grid", rc.k_grid)->delimiter(',');
        cmd->add_option("--h-grid", rc.h_grid)->delimiter(',');
        cmd->add_option("--head", rc.heads, "head file(s) for the adaptive sweep")
            ->delimiter(',');
        cmd->add_option("--extra-policy", rc.extra_policies, "additional policy spec(s)")
            ->delimiter(',');
    }

    // config file first, then whatever flags the user actually passed
    sd::RunConfig resolve(CLI::App* cmd) const {
        sd::RunConfig out = rc;
        if (!config_path.empty()) {
            out = sd::RunConfig::from_json(read_text_file(config_path));
            auto take = [&](const std::string& flag, auto member) {
                if (cmd->count(flag)) member();
            };
            take("--target", [&] { out.target_model = rc.target_model; });
            take("--draft", [&] { out.draft_model = rc.draft_model; });
            take("--prompts", [&] { out.prompts_path = rc.prompts_path; });
            take("--prompt-mode", [&] { out.prompt_mode = rc.prompt_mode; });
            take("--generations", [&] { out.generations = rc.generations; });
            take("--seed", [&] { out.seed = rc.seed; });
            take("--policy", [&] { out.policy = rc.policy; });
            take("--max-len", [&] { out.decode.max_len = rc.decode.max_len; });
            take("--k-cap", [&] { out.decode.k_cap = rc.decode.k_cap; });
            take("--temperature", [&] { out.decode.temperature = rc.decode.temperature; });
            take("--top-k", [&] { out.decode.top_k = rc.decode.top_k; });
            take("--greedy", [&] { out.decode.greedy = rc.decode.greedy; });
            take("--t-draft", [&] { out.cost.t_draft = rc.cost.t_draft; });
            take("--t-target", [&] { out.cost.t_target = rc.cost.t_target; });
            take("--standalone-t-draft", [&] { out.standalone.t_draft = rc.standalone.t_draft; });
            take("--standalone-t-target",
                 [&] { out.standalone.t_target = rc.standalone.t_target; });
            take("--k-grid", [&] { out.k_grid = rc.k_grid; });
            take("--h-grid", [&] { out.h_grid = rc.h_grid; });
            take("--head", [&] { out.heads = rc.heads; });
            take("--extra-policy", [&] { out.extra_policies = rc.extra_policies; });
        }
        return out;
    }
};

int cmd_fit_lm(const std::string& corpus_path, const std::string& mode, int order, double alpha,
               int vocab_size, int eos, bool append_eos, const std::string& out) {
    sd::Corpus corpus = load_corpus(corpus_path, mode);
    if (mode == "bytes" && vocab_size == 0) vocab_size = 256;
    if (vocab_size <= 0) throw sd::DomainError("--vocab-size required for token corpora");
    sd::Vocab vocab{vocab_size, static_cast<sd::TokenId>(eos)};
    sd::KGramModel model = sd::KGramModel::fit(corpus, order, alpha, vocab, append_eos);
    sd::save_model(model, out);
    json j{{"type", "kgram"},
           {"order", order},
           {"alpha", alpha},
           {"vocab_size", vocab_size},
           {"eos", eos},
           {"sequences", corpus.seqs.size()},
           {"out", out}};
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_gen_data(const std::string& target_path, const std::string& draft_path,
                 const std::string& prompts_path, const std::string& mode,
                 const sd::DatasetOptions& opt, const std::string& out) {
    sd::LmPtr target = sd::load_model(target_path);
    sd::LmPtr draft = sd::load_model(draft_path);
    auto prompts = load_corpus(prompts_path, mode).seqs;
    auto ds = sd::gen_dataset(*target, *draft, prompts, opt);
    sd::save_dataset(ds, out);
    size_t included = 0;
    double mean_label = 0.0;
    for (const auto& ex : ds)
        if (ex.include_in_loss) {
            ++included;
            mean_label += ex.label;
        }
    if (included) mean_label /= static_cast<double>(included);
    json j{{"examples", ds.size()},
           {"included", included},
           {"mean_label", mean_label},
           {"out", out}};
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_train_head(const std::string& data_path, const sd::TrainOptions& opt,
                   const std::string& out) {
    auto ds = sd::load_dataset(data_path);
    sd::TrainResult tr = sd::train_head(ds, opt);
    tr.head.save(out);
    json j{{"examples", ds.size()},
           {"train_loss", tr.train_loss},
           {"holdout_loss", tr.holdout_loss},
           {"binary_kl", sd::eval_binary_kl(tr.head, ds)},
           {"num_params", tr.head.num_params()},
           {"depth", opt.depth},
           {"width", opt.width},
           {"w_rej", opt.w_rej},
           {"out", out}};
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_bench(const sd::RunConfig& rc, const std::string& out, const std::string& csv_out) {
    LoadedRun lr = load_run_inputs(rc);
    sd::PolicyContext pctx{lr.target, sd::make_dist_view(lr.target, rc.decode)};
    sd::PolicyPtr policy = sd::parse_policy_spec(rc.policy, pctx);
    sd::PolicyBenchResult res = sd::run_bench(*lr.target, *lr.draft, lr.prompts, policy, rc.decode,
                                              rc.cost, rc.standalone, rc.generations, rc.seed);
    write_text(out, sd::bench_summary_json(rc, {&res, 1}));
    if (!csv_out.empty()) write_text(csv_out, sd::bench_csv({&res.point, 1}));
    return 0;
}

int cmd_sweep(const sd::RunConfig& rc, const std::string& out, const std::string& csv_out,
              const std::string& pareto_out) {
    LoadedRun lr = load_run_inputs(rc);
    auto results = sd::run_sweep(*lr.target, *lr.draft, lr.prompts, rc, lr.target);
    write_text(out, sd::bench_summary_json(rc, results));
    std::vector<sd::BenchPoint> pts;
    for (const auto& r : results) pts.push_back(r.point);
    if (!csv_out.empty()) write_text(csv_out, sd::bench_csv(pts));
    if (!pareto_out.empty()) write_text(pareto_out, sd::bench_csv(sd::pareto_frontier(pts)));
    return 0;
}

int cmd_oracle_check(uint64_t seed, double tol, const std::string& out,
                     const std::string& csv_out) {
    sd::OracleCheckReport rep = sd::run_oracle_check(seed, tol);
    json j{{"ok", rep.ok},
           {"worst_unbiasedness_gap", rep.worst_unbiasedness_gap},
           {"theorem_fired_somewhere", rep.theorem_fired_somewhere},
           {"theorem_strict_fire", rep.theorem_strict_fire},
           {"theorem_states_checked", rep.theorem_states_checked},
           {"theorem_violations", rep.theorem_violations}};
    write_text(out, j.dump(2));
    if (!csv_out.empty()) write_text(csv_out, rep.csv);
    return rep.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"speculative decoding workbench: table LMs, adaptive stopping, desk-scale oracles"};
    app.require_subcommand(1);

    // fit-lm
    auto* fit = app.add_subcommand("fit-lm", "fit a smoothed k-gram model on a corpus");
    std::string fit_corpus, fit_mode = "tokens", fit_out = "model.json";
    int fit_order = 2, fit_vocab = 0, fit_eos = 0;
    double fit_alpha = 1.0;
    bool fit_append_eos = false;
    fit->add_option("--corpus", fit_corpus, "one sequence per line")->required();
    fit->add_option("--mode", fit_mode)->check(CLI::IsMember({"tokens", "bytes"}));
    fit->add_option("--order", fit_order, "context length m");
    fit->add_option("--alpha", fit_alpha, "additive smoothing");
    fit->add_option("--vocab-size", fit_vocab, "token count (default 256 for bytes)");
    fit->add_option("--eos", fit_eos, "end-of-sequence token id");
    fit->add_flag("--append-eos", fit_append_eos, "append eos to every training sequence");
    fit->add_option("--out", fit_out, "model file to write");

    // gen-data
    auto* gd = app.add_subcommand("gen-data", "sample acceptance-prediction training data");
    std::string gd_target, gd_draft, gd_prompts, gd_mode = "tokens", gd_out = "data.jsonl";
    sd::DatasetOptions gd_opt;
    gd->add_option("--target", gd_target)->required();
    gd->add_option("--draft", gd_draft)->required();
    gd->add_option("--prompts", gd_prompts)->required();
    gd->add_option("--prompt-mode", gd_mode)->check(CLI::IsMember({"tokens", "bytes"}));
    gd->add_option("--max-response-len", gd_opt.max_response_len);
    gd->add_option("--k-cap", gd_opt.k_cap);
    gd->add_option("--mix-percent", gd_opt.mix_percent, "% of mixed positions from the response");
    gd->add_flag("--labels-on-mixed-prefix", gd_opt.labels_on_mixed_prefix);
    gd->add_option("--responses-per-prompt", gd_opt.responses_per_prompt);
    gd->add_option("--seed", gd_opt.seed);
    gd->add_option("--out", gd_out);

    // train-head
    auto* th = app.add_subcommand("train-head", "train the acceptance-probability head");
    std::string th_data, th_out = "head.json";
    sd::TrainOptions th_opt;
    th->add_option("--data", th_data)->required();
    th->add_option("--depth", th_opt.depth, "residual blocks (0 = linear)");
    th->add_option("--width", th_opt.width);
    th->add_option("--w-acc", th_opt.w_acc);
    th->add_option("--w-rej", th_opt.w_rej);
    th->add_option("--epochs", th_opt.epochs);
    th->add_option("--batch-size", th_opt.batch_size);
    th->add_option("--lr", th_opt.lr);
    th->add_option("--holdout-frac", th_opt.holdout_frac);
    th->add_option("--seed", th_opt.seed);
    th->add_option("--out", th_out);

    // bench
    auto* bench = app.add_subcommand("bench", "run one policy over seeded generations");
    RunFlags bench_flags;
    bench_flags.attach(bench);
    std::string bench_out = "-", bench_csv;
    bench->add_option("--out", bench_out, "summary JSON (- for stdout)");
    bench->add_option("--csv", bench_csv, "also write the bench point as CSV");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "bench a policy grid and tabulate the frontier");
    RunFlags sweep_flags;
    sweep_flags.attach(sweep);
    std::string sweep_out = "-", sweep_csv, sweep_pareto;
    sweep->add_option("--out", sweep_out, "summary JSON (- for stdout)");
    sweep->add_option("--csv", sweep_csv, "bench points as CSV");
    sweep->add_option("--pareto-csv", sweep_pareto, "pareto-frontier rows only");

    // oracle-check
    auto* oc = app.add_subcommand("oracle-check", "exact-enumeration law and threshold checks");
    uint64_t oc_seed = 1;
    double oc_tol = 1e-9;
    std::string oc_out = "-", oc_csv;
    oc->add_option("--seed", oc_seed);
    oc->add_option("--tol", oc_tol, "max allowed |engine law - target law| per sequence");
    oc->add_option("--out", oc_out, "summary JSON (- for stdout)");
    oc->add_option("--csv", oc_csv, "per-case rows");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit->parsed())
            return cmd_fit_lm(fit_corpus, fit_mode, fit_order, fit_alpha, fit_vocab, fit_eos,
                              fit_append_eos, fit_out);
        if (gd->parsed())
            return cmd_gen_data(gd_target, gd_draft, gd_prompts, gd_mode, gd_opt, gd_out);
        if (th->parsed()) return cmd_train_head(th_data, th_opt, th_out);
        if (bench->parsed()) return cmd_bench(bench_flags.resolve(bench), bench_out, bench_csv);
        if (sweep->parsed())
            return cmd_sweep(sweep_flags.resolve(sweep), sweep_out, sweep_csv, sweep_pareto);
        if (oc->parsed()) return cmd_oracle_check(oc_seed, oc_tol, oc_out, oc_csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
