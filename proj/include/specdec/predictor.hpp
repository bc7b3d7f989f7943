#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "specdec/lm.hpp"

namespace specdec {

// Per-candidate feature vector seen by the acceptance head. All entries are
// computed from the *drafting* distribution actually sampled from (i.e. after
// any decode transforms):
//   0: q(y)                  draft probability of the candidate
//   1: H(q)                  entropy of the draft distribution
//   2: max_y q(y)            top-1 draft probability
//   3: max_y q(y) - q(y)     confidence gap
//   4: i / k_cap             1-based candidate index, normalized
//   5: prod_{j<=i} q(y_j)    running draft probability of the whole run
struct FeatureVec {
    static constexpr int kDim = 6;
    std::array<double, kDim> v{};

    double operator[](int i) const { return v[static_cast<size_t>(i)]; }
};

FeatureVec candidate_features(const Dist& q, TokenId y, int index1, int k_cap,
                              double running_q_prod);

struct TrainingExample {
    FeatureVec features;
    double label = 0.0;           // true conditional acceptance probability
    bool include_in_loss = true;  // false for positions whose mixed token came from X
};

// (depth+1)-layer residual MLP with SiLU activations producing one logit.
//   depth 0:  z = w.x + b                       (plain logistic regression)
//   depth D:  h0 = silu(W_in x + b_in)          [width x dim]
//             h_l = h_{l-1} + silu(W_l h_{l-1} + b_l),  l = 1..D-1
//             z = w_out . h_{D-1} + b_out
// predict() returns sigmoid(z) with z clamped to [-30, 30], so outputs are
// always strictly inside (0, 1).
class PredictorHead {
  public:
    static constexpr double kLogitClamp = 30.0;
    static constexpr int kSchemaVersion = 1;

    struct Layer {
        int rows = 0, cols = 0;
        std::vector<double> w;  // row-major rows x cols
        std::vector<double> b;  // rows
    };

    PredictorHead(int depth, int width, uint64_t init_seed);
    PredictorHead(int depth, int width, std::vector<Layer> layers);

    int depth() const { return depth_; }
    int width() const { return width_; }
    const std::vector<Layer>& layers() const { return layers_; }

    double logit(const FeatureVec& x) const;
    double predict(const FeatureVec& x) const;

    // flat parameter view (layer order, row-major w then b) for optimizers and
    // finite-difference checks
    size_t num_params() const;
    std::vector<double> get_params() const;
    void set_params(std::span<const double> p);

    std::string to_json() const;
    static PredictorHead from_json(const std::string& text);
    void save(const std::string& path) const;
    static PredictorHead load(const std::string& path);

  private:
    friend struct HeadGrad;
    int depth_;
    int width_;
    std::vector<Layer> layers_;
};

// Weighted binary cross-entropy against soft labels,
//   L = -w_acc * P * log(b) - w_rej * (1 - P) * log(1 - b),
// averaged over the included examples. grad (optional) receives dL/dparams in
// get_params() order.
double head_loss(const PredictorHead& head, std::span<const TrainingExample> batch, double w_acc,
                 double w_rej, std::vector<double>* grad = nullptr);

struct DatasetOptions {
    int max_response_len = 64;  // response token cap (eos may end it earlier)
    int k_cap = 20;
    double mix_percent = 15.0;  // r: % of mixed-sequence positions taken from the response
    bool labels_on_mixed_prefix = false;  // ablation: condition labels on Z instead of X
    int responses_per_prompt = 1;
    uint64_t seed = 1;
};

// Offline dataset walk. Per response: sample X ~ target; at each position i
// draw the draft's counterfactual token Y_i ~ q(.|x, X_<i) and label it with
// min(1, p(Y_i|x,X_<i) / q(Y_i|x,X_<i)); features are computed along the mixed
// prefix Z with Y_i appended; positions whose mixed token came from X are
// excluded from the loss. Index/running-product features use pseudo-rounds of
// seeded Uniform{1..k_cap} length so they cover their inference-time range.
// RNG order per response: X draws; then per position (segment-length draw when
// a pseudo-round starts, Y draw, mix coin).
std::vector<TrainingExample> gen_dataset(const LanguageModel& target, const LanguageModel& draft,
                                         const std::vector<std::vector<TokenId>>& prompts,
                                         const DatasetOptions& opt);

void save_dataset(std::span<const TrainingExample> ds, const std::string& path);
std::vector<TrainingExample> load_dataset(const std::string& path);

struct TrainOptions {
    int depth = 3;
    int width = 32;
    double w_acc = 1.0;
    double w_rej = 1.0;
    int epochs = 3;
    int batch_size = 256;
    double lr = 5e-3;  // cosine-decayed to 0 over all steps
    double holdout_frac = 0.1;
    uint64_t seed = 1;
};

struct TrainResult {
    PredictorHead head;
    double train_loss = 0.0;    // final weighted BCE over the training split
    double holdout_loss = 0.0;  // same on the held-out split (NaN if empty)
};

// Plain minibatch gradient descent on the weighted BCE. Only examples with
// include_in_loss participate; EmptyDatasetError if none survive the filter.
TrainResult train_head(std::span<const TrainingExample> ds, const TrainOptions& opt);

// Mean binary KL divergence KL(P || predict(x)) over included examples.
double eval_binary_kl(const PredictorHead& head, std::span<const TrainingExample> ds);

}  // namespace specdec
