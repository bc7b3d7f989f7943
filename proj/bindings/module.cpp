#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <array>
#include <optional>
#include <tuple>

#include "specdec/bench.hpp"

namespace py = pybind11;
namespace sd = specdec;

namespace {

// LmPtr / PolicyPtr are shared_ptr-to-const; wrap them so pybind11 gets a
// plain copyable value type.
struct PyModel {
    sd::LmPtr ptr;
};
struct PyPolicy {
    sd::PolicyPtr ptr;
};

sd::FeatureVec to_features(const std::vector<double>& v) {
    if (v.size() != sd::FeatureVec::kDim)
        throw sd::DomainError("feature vector must have " +
                              std::to_string(sd::FeatureVec::kDim) + " entries");
    sd::FeatureVec f;
    std::copy(v.begin(), v.end(), f.v.begin());
    return f;
}

using PyExample = std::tuple<std::vector<double>, double, bool>;

std::vector<sd::TrainingExample> to_examples(const std::vector<PyExample>& rows) {
    std::vector<sd::TrainingExample> out;
    out.reserve(rows.size());
    for (const auto& [f, label, mask] : rows) out.push_back({to_features(f), label, mask});
    return out;
}

std::vector<PyExample> from_examples(const std::vector<sd::TrainingExample>& ds) {
    std::vector<PyExample> out;
    out.reserve(ds.size());
    for (const auto& ex : ds)
        out.emplace_back(std::vector<double>(ex.features.v.begin(), ex.features.v.end()),
                         ex.label, ex.include_in_loss);
    return out;
}

py::dict output_dist_to_dict(const sd::OutputDist& law) {
    py::dict d;
    for (const auto& [seq, prob] : law) d[py::tuple(py::cast(seq))] = prob;
    return d;
}

const char* kind_name(sd::CorrectionKind k) {
    return k == sd::CorrectionKind::kReplaced ? "replaced" : "bonus";
}

}  // namespace

PYBIND11_MODULE(_specdec, m) {
    m.doc() = "speculative decoding core";
    m.attr("__version__") = "0.1.0";

    py::register_exception<sd::Error>(m, "SpecdecError");

    // ---- distributions -----------------------------------------------------
    py::class_<sd::Dist>(m, "Dist")
        .def(py::init<std::vector<double>>(), py::arg("mass"))
        .def("__len__", &sd::Dist::size)
        .def("__getitem__",
             [](const sd::Dist& d, sd::TokenId y) {
                 if (y < 0 || y >= d.size()) throw py::index_error();
                 return d[y];
             })
        .def("mass", &sd::Dist::mass)
        .def("__eq__", [](const sd::Dist& a, const sd::Dist& b) { return a == b; })
        .def("__repr__", [](const sd::Dist& d) {
            std::string s = "Dist([";
            for (int i = 0; i < d.size(); ++i) s += (i ? ", " : "") + std::to_string(d[i]);
            return s + "])";
        });
    m.def("normalize", &sd::normalize, py::arg("weights"));
    m.def("residual", &sd::residual, py::arg("p"), py::arg("q"));
    m.def("accept_prob", &sd::accept_prob, py::arg("p"), py::arg("q"), py::arg("y"));
    m.def("top_k_truncate", &sd::top_k_truncate, py::arg("d"), py::arg("k"));
    m.def("entropy", &sd::entropy, py::arg("d"));
    m.def("apply_temperature", &sd::apply_temperature, py::arg("d"), py::arg("tau"));
    m.def("argmax_token", &sd::argmax_token, py::arg("d"));

    py::class_<sd::Rng>(m, "Rng")
        .def(py::init<uint64_t>(), py::arg("seed"))
        .def("uniform", &sd::Rng::uniform)
        .def("next_u64", &sd::Rng::next_u64);
    m.def("split_seed", &sd::split_seed, py::arg("master"), py::arg("index"));
    m.def("sample", &sd::sample, py::arg("d"), py::arg("rng"));

    // ---- models -------------------------------------------------------------
    py::class_<PyModel>(m, "Model")
        .def_property_readonly("vocab_size", [](const PyModel& s) { return s.ptr->vocab().size; })
        .def_property_readonly("eos", [](const PyModel& s) { return s.ptr->vocab().eos; })
        .def("next_dist",
             [](const PyModel& s, const std::vector<sd::TokenId>& ctx) {
                 return s.ptr->next_dist(ctx);
             },
             py::arg("context"))
        .def("save", [](const PyModel& s, const std::string& path) { sd::save_model(*s.ptr, path); },
             py::arg("path"));
    m.def("load_model", [](const std::string& path) { return PyModel{sd::load_model(path)}; },
          py::arg("path"));
    m.def(
        "fit_kgram",
        [](const std::vector<std::vector<sd::TokenId>>& seqs, int order, double alpha,
           int32_t vocab_size, sd::TokenId eos, bool append_eos) {
            sd::Corpus corpus{seqs};
            auto model = std::make_shared<sd::KGramModel>(
                sd::KGramModel::fit(corpus, order, alpha, sd::Vocab{vocab_size, eos}, append_eos));
            return PyModel{model};
        },
        py::arg("sequences"), py::arg("order"), py::arg("alpha"), py::arg("vocab_size"),
        py::arg("eos") = 0, py::arg("append_eos") = false);
    m.def(
        "perturbed_model",
        [](const PyModel& base, double lam, double tau) {
            return PyModel{std::make_shared<sd::PerturbedModel>(base.ptr, lam, tau)};
        },
        py::arg("base"), py::arg("lam"), py::arg("tau") = 1.0);
    m.def(
        "matrix_model",
        [](int32_t vocab_size, sd::TokenId eos, const sd::Dist& initial,
           const std::vector<sd::Dist>& rows) {
            return PyModel{
                std::make_shared<sd::MatrixModel>(sd::Vocab{vocab_size, eos}, initial, rows)};
        },
        py::arg("vocab_size"), py::arg("eos"), py::arg("initial"), py::arg("rows"));
    m.def(
        "argmax_model",
        [](const PyModel& base) { return PyModel{std::make_shared<sd::ArgmaxModel>(base.ptr)}; },
        py::arg("base"));

    // ---- decode config / policies -------------------------------------------
    py::class_<sd::DecodeConfig>(m, "DecodeConfig")
        .def(py::init([](int max_len, int k_cap, double temperature, int top_k, bool greedy) {
                 return sd::DecodeConfig{max_len, k_cap, temperature, top_k, greedy};
             }),
             py::arg("max_len"), py::arg("k_cap") = 20, py::arg("temperature") = 1.0,
             py::arg("top_k") = 0, py::arg("greedy") = false)
        .def_readwrite("max_len", &sd::DecodeConfig::max_len)
        .def_readwrite("k_cap", &sd::DecodeConfig::k_cap)
        .def_readwrite("temperature", &sd::DecodeConfig::temperature)
        .def_readwrite("top_k", &sd::DecodeConfig::top_k)
        .def_readwrite("greedy", &sd::DecodeConfig::greedy);

    py::class_<PyPolicy>(m, "Policy")
        .def_property_readonly("name", [](const PyPolicy& p) { return p.ptr->name(); })
        .def_property_readonly("params", [](const PyPolicy& p) { return p.ptr->params(); })
        .def("__repr__", [](const PyPolicy& p) { return "Policy(" + p.ptr->spec_string() + ")"; });
    m.def(
        "parse_policy",
        [](const std::string& spec, std::optional<PyModel> target,
           std::optional<sd::DecodeConfig> decode) {
            sd::PolicyContext ctx;
            if (target) {
                ctx.target = target->ptr;
                ctx.target_view =
                    sd::make_dist_view(target->ptr, decode.value_or(sd::DecodeConfig{1 << 20}));
            }
            return PyPolicy{sd::parse_policy_spec(spec, ctx)};
        },
        py::arg("spec"), py::arg("target") = std::nullopt, py::arg("decode") = std::nullopt);
    m.def(
        "adaptive_policy",
        [](const sd::PredictorHead& head, double h, const std::string& label) {
            return PyPolicy{sd::adaptive_threshold(head, h, label)};
        },
        py::arg("head"), py::arg("h"), py::arg("label") = "inline");

    // ---- engine --------------------------------------------------------------
    py::class_<sd::RoundRecord>(m, "RoundRecord")
        .def_readonly("candidates", &sd::RoundRecord::candidates)
        .def_readonly("accept_probs", &sd::RoundRecord::accept_probs)
        .def_readonly("n_accepted", &sd::RoundRecord::n_accepted)
        .def_readonly("correction", &sd::RoundRecord::correction)
        .def_readonly("correction_in_output", &sd::RoundRecord::correction_in_output)
        .def_property_readonly("kind",
                               [](const sd::RoundRecord& r) { return kind_name(r.kind); });
    py::class_<sd::GenerationTrace>(m, "GenerationTrace")
        .def_readonly("prompt", &sd::GenerationTrace::prompt)
        .def_readonly("output", &sd::GenerationTrace::output)
        .def_readonly("rounds", &sd::GenerationTrace::rounds)
        .def_readonly("n_generated", &sd::GenerationTrace::n_generated)
        .def_readonly("n_draft", &sd::GenerationTrace::n_draft)
        .def_readonly("n_target", &sd::GenerationTrace::n_target)
        .def_readonly("n_discarded", &sd::GenerationTrace::n_discarded)
        .def("to_json", [](const sd::GenerationTrace& t, bool dists) {
            return sd::trace_to_json(t, dists);
        }, py::arg("include_dists") = false);
    m.def("trace_from_json", &sd::trace_from_json, py::arg("text"));
    m.def(
        "generate",
        [](const PyModel& target, const PyModel& draft, const std::vector<sd::TokenId>& prompt,
           const PyPolicy& policy, const sd::DecodeConfig& cfg, uint64_t seed) {
            sd::Rng rng(seed);
            return sd::generate(*target.ptr, *draft.ptr, prompt, *policy.ptr, cfg, rng);
        },
        py::arg("target"), py::arg("draft"), py::arg("prompt"), py::arg("policy"), py::arg("cfg"),
        py::arg("seed"));
    m.def(
        "verify",
        [](const std::vector<sd::TokenId>& candidates, const std::vector<sd::Dist>& draft_dists,
           const std::vector<sd::Dist>& target_dists, uint64_t seed) {
            sd::Rng rng(seed);
            sd::VerifyResult r = sd::verify(candidates, draft_dists, target_dists, rng);
            return py::make_tuple(r.n_accepted, r.correction, kind_name(r.kind));
        },
        py::arg("candidates"), py::arg("draft_dists"), py::arg("target_dists"), py::arg("seed"));

    // ---- predictor -------------------------------------------------------------
    py::class_<sd::PredictorHead>(m, "PredictorHead")
        .def(py::init<int, int, uint64_t>(), py::arg("depth"), py::arg("width"),
             py::arg("init_seed"))
        .def("predict",
             [](const sd::PredictorHead& h, const std::vector<double>& f) {
                 return h.predict(to_features(f));
             },
             py::arg("features"))
        .def("logit",
             [](const sd::PredictorHead& h, const std::vector<double>& f) {
                 return h.logit(to_features(f));
             },
             py::arg("features"))
        .def("num_params", &sd::PredictorHead::num_params)
        .def("get_params", &sd::PredictorHead::get_params)
        .def("set_params", &sd::PredictorHead::set_params, py::arg("params"))
        .def("save", &sd::PredictorHead::save, py::arg("path"))
        .def_static("load", &sd::PredictorHead::load, py::arg("path"));
    m.def(
        "gen_dataset",
        [](const PyModel& target, const PyModel& draft,
           const std::vector<std::vector<sd::TokenId>>& prompts, int max_response_len, int k_cap,
           double mix_percent, bool labels_on_mixed_prefix, int responses_per_prompt,
           uint64_t seed) {
            sd::DatasetOptions opt{max_response_len, k_cap, mix_percent, labels_on_mixed_prefix,
                                   responses_per_prompt, seed};
            return from_examples(sd::gen_dataset(*target.ptr, *draft.ptr, prompts, opt));
        },
        py::arg("target"), py::arg("draft"), py::arg("prompts"), py::arg("max_response_len") = 64,
        py::arg("k_cap") = 20, py::arg("mix_percent") = 15.0,
        py::arg("labels_on_mixed_prefix") = false, py::arg("responses_per_prompt") = 1,
        py::arg("seed") = 1);
    m.def(
        "train_head",
        [](const std::vector<PyExample>& rows, int depth, int width, double w_acc, double w_rej,
           int epochs, int batch_size, double lr, double holdout_frac, uint64_t seed) {
            sd::TrainOptions opt{depth, width, w_acc, w_rej, epochs,
                                 batch_size, lr, holdout_frac, seed};
            sd::TrainResult tr = sd::train_head(to_examples(rows), opt);
            return py::make_tuple(tr.head, tr.train_loss, tr.holdout_loss);
        },
        py::arg("examples"), py::arg("depth") = 3, py::arg("width") = 32, py::arg("w_acc") = 1.0,
        py::arg("w_rej") = 1.0, py::arg("epochs") = 3, py::arg("batch_size") = 256,
        py::arg("lr") = 5e-3, py::arg("holdout_frac") = 0.1, py::arg("seed") = 1);
    m.def(
        "eval_binary_kl",
        [](const sd::PredictorHead& head, const std::vector<PyExample>& rows) {
            return sd::eval_binary_kl(head, to_examples(rows));
        },
        py::arg("head"), py::arg("examples"));
    m.def("save_dataset",
          [](const std::vector<PyExample>& rows, const std::string& path) {
              sd::save_dataset(to_examples(rows), path);
          },
          py::arg("examples"), py::arg("path"));
    m.def("load_dataset",
          [](const std::string& path) { return from_examples(sd::load_dataset(path)); },
          py::arg("path"));

    // ---- metrics ---------------------------------------------------------------
    py::class_<sd::CostModel>(m, "CostModel")
        .def(py::init([](double t_draft, double t_target) {
                 sd::CostModel cm{t_draft, t_target};
                 cm.validate();
                 return cm;
             }),
             py::arg("t_draft"), py::arg("t_target"))
        .def_readonly("t_draft", &sd::CostModel::t_draft)
        .def_readonly("t_target", &sd::CostModel::t_target);
    m.def("total_time", &sd::total_time, py::arg("trace"), py::arg("cost"));
    m.def("latency", &sd::latency, py::arg("trace"), py::arg("cost"));
    m.def("throughput", &sd::throughput, py::arg("trace"), py::arg("cost"));
    m.def("discard_rate", &sd::discard_rate, py::arg("trace"));
    m.def("verification_rate", &sd::verification_rate, py::arg("trace"));
    m.def("latency_from_rates", &sd::latency_from_rates, py::arg("discard_rate"),
          py::arg("verification_rate"), py::arg("cost"));
    m.def(
        "fit_forward_times",
        [](const std::vector<std::array<double, 3>>& rows, bool with_intercept) {
            sd::ForwardFit f = sd::fit_forward_times(rows, with_intercept);
            py::dict d;
            d["t_draft"] = f.t_draft;
            d["t_target"] = f.t_target;
            d["intercept"] = f.intercept;
            d["r2"] = f.r2;
            return d;
        },
        py::arg("rows"), py::arg("with_intercept") = false);

    py::class_<sd::BenchPoint>(m, "BenchPoint")
        .def_readonly("policy", &sd::BenchPoint::policy)
        .def_readonly("params", &sd::BenchPoint::params)
        .def_readonly("discard_rate", &sd::BenchPoint::discard_rate)
        .def_readonly("verification_rate", &sd::BenchPoint::verification_rate)
        .def_readonly("latency", &sd::BenchPoint::latency)
        .def_readonly("throughput", &sd::BenchPoint::throughput)
        .def_readonly("speedup", &sd::BenchPoint::speedup);
    m.def("pareto_frontier", [](const std::vector<sd::BenchPoint>& pts) {
        return sd::pareto_frontier(pts);
    });
    m.def("bench_csv",
          [](const std::vector<sd::BenchPoint>& pts) { return sd::bench_csv(pts); });

    m.def(
        "run_bench",
        [](const PyModel& target, const PyModel& draft,
           const std::vector<std::vector<sd::TokenId>>& prompts, const PyPolicy& policy,
           const sd::DecodeConfig& cfg, const sd::CostModel& cost, const sd::CostModel& standalone,
           int generations, uint64_t seed, int threads) {
            sd::PolicyBenchResult r = sd::run_bench(*target.ptr, *draft.ptr, prompts, policy.ptr,
                                                    cfg, cost, standalone, generations, seed,
                                                    threads);
            py::dict d;
            d["point"] = r.point;
            d["discard_std"] = r.discard_std;
            d["verification_std"] = r.verification_std;
            d["throughput_std"] = r.throughput_std;
            d["mean_total_time"] = r.mean_total_time;
            d["generations"] = r.generations;
            d["total_tokens"] = r.total_tokens;
            return d;
        },
        py::arg("target"), py::arg("draft"), py::arg("prompts"), py::arg("policy"), py::arg("cfg"),
        py::arg("cost"), py::arg("standalone"), py::arg("generations") = 100, py::arg("seed") = 1,
        py::arg("threads") = 0);

    // ---- exact oracles -----------------------------------------------------------
    py::class_<sd::MicroMdp>(m, "MicroMdp")
        .def(py::init([](const PyModel& target, const PyModel& draft,
                         const std::vector<sd::TokenId>& prompt, const sd::DecodeConfig& cfg,
                         const sd::CostModel& cost, int64_t branch_budget) {
                 sd::MicroMdp mdp;
                 mdp.target = target.ptr;
                 mdp.draft = draft.ptr;
                 mdp.prompt = prompt;
                 mdp.cfg = cfg;
                 mdp.cost = cost;
                 mdp.branch_budget = branch_budget;
                 mdp.validate();
                 return mdp;
             }),
             py::arg("target"), py::arg("draft"), py::arg("prompt"), py::arg("cfg"),
             py::arg("cost"), py::arg("branch_budget") = 5'000'000);
    m.def("exact_output_dist",
          [](const sd::MicroMdp& mdp, const PyPolicy& policy) {
              return output_dist_to_dict(sd::exact_output_dist(mdp, *policy.ptr));
          },
          py::arg("mdp"), py::arg("policy"));
    m.def("target_output_dist",
          [](const sd::MicroMdp& mdp) { return output_dist_to_dict(sd::target_output_dist(mdp)); },
          py::arg("mdp"));
    m.def(
        "unbiasedness_gap",
        [](const sd::MicroMdp& mdp, const PyPolicy& policy) {
            sd::OutputDist a = sd::exact_output_dist(mdp, *policy.ptr);
            sd::OutputDist b = sd::target_output_dist(mdp);
            py::dict d;
            d["tv"] = sd::total_variation(a, b);
            d["max_abs"] = sd::max_abs_diff(a, b);
            return d;
        },
        py::arg("mdp"), py::arg("policy"));
    m.def(
        "q_values",
        [](const sd::MicroMdp& mdp, const PyPolicy& policy, const std::vector<sd::TokenId>& prefix,
           const std::vector<sd::TokenId>& candidates) {
            sd::QValues q = sd::q_values(mdp, *policy.ptr, sd::MdpState{prefix, candidates});
            return py::make_tuple(q.stop, q.cont);
        },
        py::arg("mdp"), py::arg("policy"), py::arg("prefix"), py::arg("candidates"));
    m.def("rejection_prob",
          [](const sd::MicroMdp& mdp, const std::vector<sd::TokenId>& prefix,
             const std::vector<sd::TokenId>& candidates) {
              return sd::rejection_prob(mdp, sd::MdpState{prefix, candidates});
          },
          py::arg("mdp"), py::arg("prefix"), py::arg("candidates"));
    m.def("naive_delta_bound", &sd::naive_delta_bound, py::arg("mdp"));
    m.def("stop_threshold", &sd::stop_threshold, py::arg("mdp"));
    m.def(
        "check_threshold_condition",
        [](const sd::MicroMdp& mdp, const PyPolicy& policy) {
            sd::ThresholdReport rep = sd::check_threshold_condition(mdp, *policy.ptr);
            py::list rows;
            for (const auto& r : rep.rows) {
                py::dict row;
                row["prefix"] = r.state.prefix;
                row["candidates"] = r.state.candidates;
                row["rejection_prob"] = r.rejection_prob;
                row["threshold"] = r.threshold;
                row["q_stop"] = r.q_stop;
                row["q_continue"] = r.q_continue;
                row["fires"] = r.fires;
                row["violated"] = r.violated;
                rows.append(std::move(row));
            }
            py::dict d;
            d["delta"] = rep.delta;
            d["threshold"] = rep.threshold;
            d["any_fired"] = rep.any_fired;
            d["any_violation"] = rep.any_violation;
            d["rows"] = std::move(rows);
            return d;
        },
        py::arg("mdp"), py::arg("policy"));
    m.def(
        "mc_q_estimate",
        [](const sd::MicroMdp& mdp, const PyPolicy& policy, const std::vector<sd::TokenId>& prefix,
           const std::vector<sd::TokenId>& candidates, bool stop_first, int64_t n_rollouts,
           uint64_t seed) {
            sd::McEstimate e = sd::mc_q_estimate(mdp, *policy.ptr,
                                                 sd::MdpState{prefix, candidates}, stop_first,
                                                 n_rollouts, seed);
            return py::make_tuple(e.mean, e.std_error, e.rollouts);
        },
        py::arg("mdp"), py::arg("policy"), py::arg("prefix"), py::arg("candidates"),
        py::arg("stop_first"), py::arg("n_rollouts"), py::arg("seed"));
    m.def(
        "run_oracle_check",
        [](uint64_t seed, double tol) {
            sd::OracleCheckReport rep = sd::run_oracle_check(seed, tol);
            py::dict d;
            d["ok"] = rep.ok;
            d["worst_unbiasedness_gap"] = rep.worst_unbiasedness_gap;
            d["theorem_fired_somewhere"] = rep.theorem_fired_somewhere;
            d["theorem_strict_fire"] = rep.theorem_strict_fire;
            d["theorem_states_checked"] = rep.theorem_states_checked;
            d["theorem_violations"] = rep.theorem_violations;
            d["csv"] = rep.csv;
            return d;
        },
        py::arg("seed") = 1, py::arg("tol") = 1e-9);
}
