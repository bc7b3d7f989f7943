#pragma once

#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "specdec/dist.hpp"

namespace specdec {

// A language model is anything that maps a context to a next-token
// distribution. Models here are exact lookup tables, so the same query always
// returns bitwise-identical probabilities.
class LanguageModel {
  public:
    virtual ~LanguageModel() = default;
    virtual const Vocab& vocab() const = 0;
    virtual Dist next_dist(std::span<const TokenId> context) const = 0;
};

using LmPtr = std::shared_ptr<const LanguageModel>;

// argmax of next_dist, ties toward the lower token id
TokenId greedy_token(const LanguageModel& m, std::span<const TokenId> context);

struct Corpus {
    std::vector<std::vector<TokenId>> seqs;
};

// one sequence per line, whitespace-separated token ids
Corpus load_token_corpus(const std::string& path);
// one sequence per line, each byte one token (vocab size 256)
Corpus load_byte_corpus(const std::string& path);

// Additively smoothed m-gram counts. Contexts shorter than m are left-padded
// with the BOS sentinel (= vocab.size); order 0 is a unigram model.
class KGramModel : public LanguageModel {
  public:
    KGramModel(int order, double alpha, Vocab vocab);

    // exact m-gram counts of the corpus; append_eos additionally counts an
    // eos transition at the end of every sequence
    static KGramModel fit(const Corpus& corpus, int order, double alpha, Vocab vocab,
                          bool append_eos = false);

    const Vocab& vocab() const override { return vocab_; }
    Dist next_dist(std::span<const TokenId> context) const override;

    int order() const { return order_; }
    double alpha() const { return alpha_; }
    const std::unordered_map<std::string, std::vector<double>>& counts() const { return counts_; }

    std::string to_json() const;
    static KGramModel from_json(const std::string& text);

  private:
    static std::string context_key(std::span<const TokenId> padded_ctx);

    int order_;
    double alpha_;
    Vocab vocab_;
    std::unordered_map<std::string, std::vector<double>> counts_;
};

// Smoothed, temperature-flattened view of a base model:
//   norm[(1 - lambda) * base^(1/tau) + lambda * uniform]
class PerturbedModel : public LanguageModel {
  public:
    PerturbedModel(LmPtr base, double lambda, double tau);

    const Vocab& vocab() const override { return base_->vocab(); }
    Dist next_dist(std::span<const TokenId> context) const override;

    double lambda() const { return lambda_; }
    double tau() const { return tau_; }
    const LmPtr& base() const { return base_; }

  private:
    LmPtr base_;
    double lambda_;
    double tau_;
};

// Order-1 model given by an explicit initial row and a transition row per
// token. The workhorse for hand-built desk instances.
class MatrixModel : public LanguageModel {
  public:
    MatrixModel(Vocab vocab, Dist initial, std::vector<Dist> rows);

    const Vocab& vocab() const override { return vocab_; }
    Dist next_dist(std::span<const TokenId> context) const override;

    const Dist& initial() const { return initial_; }
    const std::vector<Dist>& rows() const { return rows_; }

  private:
    Vocab vocab_;
    Dist initial_;
    std::vector<Dist> rows_;
};

// Point mass at the base model's greedy token; turns any sampler into greedy
// decoding without touching the engine.
class ArgmaxModel : public LanguageModel {
  public:
    explicit ArgmaxModel(LmPtr base) : base_(std::move(base)) {}

    const Vocab& vocab() const override { return base_->vocab(); }
    Dist next_dist(std::span<const TokenId> context) const override;

    const LmPtr& base() const { return base_; }

  private:
    LmPtr base_;
};

// polymorphic (de)serialization; dispatches on a "type" tag
std::string model_to_json(const LanguageModel& m);
LmPtr model_from_json(const std::string& text);
void save_model(const LanguageModel& m, const std::string& path);
LmPtr load_model(const std::string& path);

}  // namespace specdec
