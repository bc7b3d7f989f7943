#include "specdec/lm.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace specdec {

using nlohmann::json;

TokenId greedy_token(const LanguageModel& m, std::span<const TokenId> context) {
    return argmax_token(m.next_dist(context));
}

Corpus load_token_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open corpus file: " + path);
    Corpus c;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<TokenId> seq;
        long long tok;
        while (ls >> tok) seq.push_back(static_cast<TokenId>(tok));
        if (!seq.empty()) c.seqs.push_back(std::move(seq));
    }
    return c;
}

Corpus load_byte_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open corpus file: " + path);
    Corpus c;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<TokenId> seq;
        seq.reserve(line.size());
        for (unsigned char b : line) seq.push_back(static_cast<TokenId>(b));
        c.seqs.push_back(std::move(seq));
    }
    return c;
}

KGramModel::KGramModel(int order, double alpha, Vocab vocab)
    : order_(order), alpha_(alpha), vocab_(vocab) {
    if (order < 0) throw DomainError("kgram: order must be >= 0");
    if (!(alpha > 0.0)) throw DomainError("kgram: alpha must be positive");
    if (vocab.size <= 0) throw DomainError("kgram: empty vocab");
    if (vocab.eos < 0 || vocab.eos >= vocab.size) throw DomainError("kgram: eos outside vocab");
}

std::string KGramModel::context_key(std::span<const TokenId> padded_ctx) {
    std::string key;
    for (size_t i = 0; i < padded_ctx.size(); ++i) {
        if (i) key += '-';
        key += std::to_string(padded_ctx[i]);
    }
    return key;
}

KGramModel KGramModel::fit(const Corpus& corpus, int order, double alpha, Vocab vocab,
                           bool append_eos) {
    if (corpus.seqs.empty()) throw EmptyCorpusError("kgram fit: corpus has no sequences");
    KGramModel m(order, alpha, vocab);
    const size_t mlen = static_cast<size_t>(order);
    for (const auto& seq : corpus.seqs) {
        for (TokenId t : seq)
            if (t < 0 || t >= vocab.size) throw DomainError("kgram fit: token outside vocab");
        std::vector<TokenId> toks = seq;
        if (append_eos) toks.push_back(vocab.eos);
        std::vector<TokenId> padded(mlen, vocab.bos_sentinel());
        padded.insert(padded.end(), toks.begin(), toks.end());
        for (size_t t = 0; t < toks.size(); ++t) {
            std::span<const TokenId> ctx(padded.data() + t, mlen);
            auto& row = m.counts_[context_key(ctx)];
            if (row.empty()) row.assign(static_cast<size_t>(vocab.size), 0.0);
            row[static_cast<size_t>(toks[t])] += 1.0;
        }
    }
    return m;
}

Dist KGramModel::next_dist(std::span<const TokenId> context) const {
    const size_t mlen = static_cast<size_t>(order_);
    std::vector<TokenId> ctx(mlen, vocab_.bos_sentinel());
    size_t take = std::min(context.size(), mlen);
    for (size_t i = 0; i < take; ++i) ctx[mlen - take + i] = context[context.size() - take + i];
    for (TokenId t : ctx)
        if ((t < 0 || t >= vocab_.size) && t != vocab_.bos_sentinel())
            throw DomainError("kgram: context token outside vocab");
    std::vector<double> w(static_cast<size_t>(vocab_.size), alpha_);
    auto it = counts_.find(context_key(ctx));
    if (it != counts_.end())
        for (size_t y = 0; y < w.size(); ++y) w[y] += it->second[y];
    return normalize(w);
}

std::string KGramModel::to_json() const {
    json j;
    j["type"] = "kgram";
    j["order"] = order_;
    j["alpha"] = alpha_;
    j["vocab"] = {{"size", vocab_.size}, {"eos", vocab_.eos}};
    json counts = json::object();
    for (const auto& [key, row] : counts_) counts[key] = row;
    j["counts"] = std::move(counts);
    return j.dump(2);
}

KGramModel KGramModel::from_json(const std::string& text) {
    json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw FormatError("kgram: invalid JSON");
    try {
        if (j.at("type").get<std::string>() != "kgram") throw FormatError("kgram: wrong type tag");
        Vocab v{j.at("vocab").at("size").get<int32_t>(), j.at("vocab").at("eos").get<TokenId>()};
        KGramModel m(j.at("order").get<int>(), j.at("alpha").get<double>(), v);
        for (const auto& [key, row] : j.at("counts").items()) {
            auto r = row.get<std::vector<double>>();
            if (r.size() != static_cast<size_t>(v.size))
                throw FormatError("kgram: count row has wrong width");
            m.counts_[key] = std::move(r);
        }
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("kgram: ") + e.what());
    }
}

PerturbedModel::PerturbedModel(LmPtr base, double lambda, double tau)
    : base_(std::move(base)), lambda_(lambda), tau_(tau) {
    if (!base_) throw DomainError("perturbed: null base model");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("perturbed: lambda outside [0,1]");
    if (!(tau > 0.0)) throw DomainError("perturbed: tau must be positive");
}

Dist PerturbedModel::next_dist(std::span<const TokenId> context) const {
    Dist flattened = apply_temperature(base_->next_dist(context), tau_);
    const double v = static_cast<double>(flattened.size());
    std::vector<double> w(static_cast<size_t>(flattened.size()));
    for (TokenId y = 0; y < flattened.size(); ++y)
        w[static_cast<size_t>(y)] = (1.0 - lambda_) * flattened[y] + lambda_ / v;
    return normalize(w);
}

MatrixModel::MatrixModel(Vocab vocab, Dist initial, std::vector<Dist> rows)
    : vocab_(vocab), initial_(std::move(initial)), rows_(std::move(rows)) {
    if (initial_.size() != vocab_.size) throw DomainError("matrix: initial row width != vocab");
    if (rows_.size() != static_cast<size_t>(vocab_.size))
        throw DomainError("matrix: need one row per token");
    for (const auto& r : rows_)
        if (r.size() != vocab_.size) throw DomainError("matrix: row width != vocab");
}

Dist MatrixModel::next_dist(std::span<const TokenId> context) const {
    if (context.empty()) return initial_;
    TokenId last = context.back();
    if (last < 0 || last >= vocab_.size) throw DomainError("matrix: context token outside vocab");
    return rows_[static_cast<size_t>(last)];
}

Dist ArgmaxModel::next_dist(std::span<const TokenId> context) const {
    Dist base = base_->next_dist(context);
    std::vector<double> w(static_cast<size_t>(base.size()), 0.0);
    w[static_cast<size_t>(argmax_token(base))] = 1.0;
    return Dist(std::move(w));
}

namespace {

json model_to_json_obj(const LanguageModel& m) {
    if (auto* kg = dynamic_cast<const KGramModel*>(&m)) return json::parse(kg->to_json());
    if (auto* pm = dynamic_cast<const PerturbedModel*>(&m)) {
        json j;
        j["type"] = "perturbed";
        j["lambda"] = pm->lambda();
        j["tau"] = pm->tau();
        j["base"] = model_to_json_obj(*pm->base());
        return j;
    }
    if (auto* mm = dynamic_cast<const MatrixModel*>(&m)) {
        json j;
        j["type"] = "matrix";
        j["vocab"] = {{"size", mm->vocab().size}, {"eos", mm->vocab().eos}};
        j["initial"] = mm->initial().mass();
        json rows = json::array();
        for (const auto& r : mm->rows()) rows.push_back(r.mass());
        j["rows"] = std::move(rows);
        return j;
    }
    if (auto* am = dynamic_cast<const ArgmaxModel*>(&m)) {
        json j;
        j["type"] = "argmax";
        j["base"] = model_to_json_obj(*am->base());
        return j;
    }
    throw FormatError("model_to_json: unknown model type");
}

LmPtr model_from_json_obj(const json& j) {
    try {
        auto type = j.at("type").get<std::string>();
        if (type == "kgram") return std::make_shared<KGramModel>(KGramModel::from_json(j.dump()));
        if (type == "perturbed")
            return std::make_shared<PerturbedModel>(model_from_json_obj(j.at("base")),
                                                    j.at("lambda").get<double>(),
                                                    j.at("tau").get<double>());
        if (type == "matrix") {
            Vocab v{j.at("vocab").at("size").get<int32_t>(), j.at("vocab").at("eos").get<TokenId>()};
            Dist initial(j.at("initial").get<std::vector<double>>());
            std::vector<Dist> rows;
            for (const auto& r : j.at("rows")) rows.emplace_back(r.get<std::vector<double>>());
            return std::make_shared<MatrixModel>(v, std::move(initial), std::move(rows));
        }
        if (type == "argmax") return std::make_shared<ArgmaxModel>(model_from_json_obj(j.at("base")));
        throw FormatError("model_from_json: unknown type tag '" + type + "'");
    } catch (const json::exception& e) {
        throw FormatError(std::string("model_from_json: ") + e.what());
    }
}

}  // namespace

std::string model_to_json(const LanguageModel& m) { return model_to_json_obj(m).dump(2); }

LmPtr model_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw FormatError("model_from_json: invalid JSON");
    return model_from_json_obj(j);
}

void save_model(const LanguageModel& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for write: " + path);
    out << model_to_json(m) << "\n";
}

LmPtr load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open model file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

}  // namespace specdec
