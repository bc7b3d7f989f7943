#include "specdec/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace specdec {

using nlohmann::json;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double silu(double x) { return x * sigmoid(x); }

double silu_grad(double x) {
    double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

// log(1 + e^t) without overflow
double softplus(double t) { return std::log1p(std::exp(-std::abs(t))) + std::max(t, 0.0); }

void matvec(const PredictorHead::Layer& L, std::span<const double> x, std::vector<double>& out) {
    out.assign(static_cast<size_t>(L.rows), 0.0);
    for (int r = 0; r < L.rows; ++r) {
        double acc = L.b[static_cast<size_t>(r)];
        const double* wrow = L.w.data() + static_cast<size_t>(r) * static_cast<size_t>(L.cols);
        for (int c = 0; c < L.cols; ++c) acc += wrow[c] * x[static_cast<size_t>(c)];
        out[static_cast<size_t>(r)] = acc;
    }
}

void shuffle_indices(std::vector<size_t>& idx, Rng& rng) {
    for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.next_u64() % i]);
}

}  // namespace

FeatureVec candidate_features(const Dist& q, TokenId y, int index1, int k_cap,
                              double running_q_prod) {
    if (y < 0 || y >= q.size()) throw DomainError("candidate_features: token out of range");
    if (index1 < 1 || k_cap < 1) throw DomainError("candidate_features: bad index/k_cap");
    double top1 = q[argmax_token(q)];
    FeatureVec f;
    f.v = {q[y], entropy(q), top1, top1 - q[y], static_cast<double>(index1) / k_cap,
           running_q_prod};
    return f;
}

PredictorHead::PredictorHead(int depth, int width, uint64_t init_seed)
    : depth_(depth), width_(width) {
    if (depth < 0) throw DomainError("head: depth must be >= 0");
    if (depth > 0 && width < 1) throw DomainError("head: width must be >= 1");
    Rng rng(init_seed);
    auto make_layer = [&](int rows, int cols) {
        Layer L;
        L.rows = rows;
        L.cols = cols;
        double limit = std::sqrt(6.0 / (rows + cols));
        L.w.resize(static_cast<size_t>(rows) * static_cast<size_t>(cols));
        for (double& w : L.w) w = (2.0 * rng.uniform() - 1.0) * limit;
        L.b.assign(static_cast<size_t>(rows), 0.0);
        return L;
    };
    if (depth == 0) {
        layers_.push_back(make_layer(1, FeatureVec::kDim));
    } else {
        layers_.push_back(make_layer(width, FeatureVec::kDim));
        for (int l = 1; l < depth; ++l) layers_.push_back(make_layer(width, width));
        layers_.push_back(make_layer(1, width));
    }
}

PredictorHead::PredictorHead(int depth, int width, std::vector<Layer> layers)
    : depth_(depth), width_(width), layers_(std::move(layers)) {
    size_t expect = depth_ == 0 ? 1 : static_cast<size_t>(depth_) + 1;
    if (layers_.size() != expect) throw FormatError("head: wrong layer count for depth");
    for (const auto& L : layers_) {
        if (L.w.size() != static_cast<size_t>(L.rows) * static_cast<size_t>(L.cols) ||
            L.b.size() != static_cast<size_t>(L.rows))
            throw FormatError("head: layer shape mismatch");
    }
    if (depth_ == 0) {
        if (layers_[0].rows != 1 || layers_[0].cols != FeatureVec::kDim)
            throw FormatError("head: depth-0 layer must be 1 x feature_dim");
    } else {
        if (layers_.front().cols != FeatureVec::kDim || layers_.front().rows != width_)
            throw FormatError("head: input layer shape mismatch");
        for (int l = 1; l < depth_; ++l)
            if (layers_[static_cast<size_t>(l)].rows != width_ ||
                layers_[static_cast<size_t>(l)].cols != width_)
                throw FormatError("head: block shape mismatch");
        if (layers_.back().rows != 1 || layers_.back().cols != width_)
            throw FormatError("head: output layer shape mismatch");
    }
}

double PredictorHead::logit(const FeatureVec& x) const {
    if (depth_ == 0) {
        const Layer& L = layers_[0];
        double acc = L.b[0];
        for (int c = 0; c < FeatureVec::kDim; ++c) acc += L.w[static_cast<size_t>(c)] * x[c];
        return acc;
    }
    std::vector<double> h, a;
    matvec(layers_[0], std::span<const double>(x.v.data(), x.v.size()), a);
    h.resize(a.size());
    for (size_t i = 0; i < a.size(); ++i) h[i] = silu(a[i]);
    for (int l = 1; l < depth_; ++l) {
        matvec(layers_[static_cast<size_t>(l)], h, a);
        for (size_t i = 0; i < h.size(); ++i) h[i] += silu(a[i]);
    }
    const Layer& out = layers_.back();
    double z = out.b[0];
    for (int c = 0; c < out.cols; ++c) z += out.w[static_cast<size_t>(c)] * h[static_cast<size_t>(c)];
    return z;
}

double PredictorHead::predict(const FeatureVec& x) const {
    double z = std::clamp(logit(x), -kLogitClamp, kLogitClamp);
    return sigmoid(z);
}

size_t PredictorHead::num_params() const {
    size_t n = 0;
    for (const auto& L : layers_) n += L.w.size() + L.b.size();
    return n;
}

std::vector<double> PredictorHead::get_params() const {
    std::vector<double> p;
    p.reserve(num_params());
    for (const auto& L : layers_) {
        p.insert(p.end(), L.w.begin(), L.w.end());
        p.insert(p.end(), L.b.begin(), L.b.end());
    }
    return p;
}

void PredictorHead::set_params(std::span<const double> p) {
    if (p.size() != num_params()) throw DomainError("head: parameter vector has wrong length");
    size_t off = 0;
    for (auto& L : layers_) {
        std::copy(p.begin() + static_cast<long>(off), p.begin() + static_cast<long>(off + L.w.size()), L.w.begin());
        off += L.w.size();
        std::copy(p.begin() + static_cast<long>(off), p.begin() + static_cast<long>(off + L.b.size()), L.b.begin());
        off += L.b.size();
    }
}

// Forward/backward for one example; accumulates dL/dparams into grad.
struct HeadGrad {
    static double example_loss(const PredictorHead& head, const TrainingExample& ex, double w_acc,
                               double w_rej, std::vector<double>* grad) {
        const double P = ex.label;
        // forward, keeping activations
        const int depth = head.depth_;
        std::vector<std::vector<double>> as;   // pre-activations per silu layer
        std::vector<std::vector<double>> hs;   // h after input layer and each block
        double z;
        if (depth == 0) {
            const auto& L = head.layers_[0];
            z = L.b[0];
            for (int c = 0; c < FeatureVec::kDim; ++c) z += L.w[static_cast<size_t>(c)] * ex.features[c];
        } else {
            std::vector<double> a;
            matvec(head.layers_[0], std::span<const double>(ex.features.v.data(), FeatureVec::kDim), a);
            std::vector<double> h(a.size());
            for (size_t i = 0; i < a.size(); ++i) h[i] = silu(a[i]);
            as.push_back(a);
            hs.push_back(h);
            for (int l = 1; l < depth; ++l) {
                matvec(head.layers_[static_cast<size_t>(l)], h, a);
                for (size_t i = 0; i < h.size(); ++i) h[i] += silu(a[i]);
                as.push_back(a);
                hs.push_back(h);
            }
            const auto& out = head.layers_.back();
            z = out.b[0];
            for (int c = 0; c < out.cols; ++c) z += out.w[static_cast<size_t>(c)] * h[static_cast<size_t>(c)];
        }

        double zc = std::clamp(z, -PredictorHead::kLogitClamp, PredictorHead::kLogitClamp);
        double b = sigmoid(zc);
        double loss = w_acc * P * softplus(-zc) + w_rej * (1.0 - P) * softplus(zc);
        if (!grad) return loss;

        double dz = -w_acc * P * (1.0 - b) + w_rej * (1.0 - P) * b;
        if (z != zc) dz = 0.0;  // clamped region: flat

        size_t off_out = 0;
        for (size_t li = 0; li + 1 < head.layers_.size(); ++li)
            off_out += head.layers_[li].w.size() + head.layers_[li].b.size();

        if (depth == 0) {
            const auto& L = head.layers_[0];
            for (int c = 0; c < L.cols; ++c) (*grad)[static_cast<size_t>(c)] += dz * ex.features[c];
            (*grad)[L.w.size()] += dz;
            return loss;
        }

        const auto& out = head.layers_.back();
        const auto& h_last = hs.back();
        std::vector<double> dh(h_last.size());
        for (size_t c = 0; c < dh.size(); ++c) {
            (*grad)[off_out + c] += dz * h_last[c];
            dh[c] = dz * out.w[c];
        }
        (*grad)[off_out + out.w.size()] += dz;

        for (int l = depth - 1; l >= 1; --l) {
            const auto& L = head.layers_[static_cast<size_t>(l)];
            const auto& a = as[static_cast<size_t>(l)];
            const auto& h_in = hs[static_cast<size_t>(l) - 1];
            size_t off = 0;
            for (int li = 0; li < l; ++li)
                off += head.layers_[static_cast<size_t>(li)].w.size() + head.layers_[static_cast<size_t>(li)].b.size();
            std::vector<double> dh_in(h_in.size(), 0.0);
            for (int r = 0; r < L.rows; ++r) {
                double d = dh[static_cast<size_t>(r)] * silu_grad(a[static_cast<size_t>(r)]);
                const size_t row_off = off + static_cast<size_t>(r) * static_cast<size_t>(L.cols);
                for (int c = 0; c < L.cols; ++c) {
                    (*grad)[row_off + static_cast<size_t>(c)] += d * h_in[static_cast<size_t>(c)];
                    dh_in[static_cast<size_t>(c)] += d * L.w[static_cast<size_t>(r) * static_cast<size_t>(L.cols) + static_cast<size_t>(c)];
                }
                (*grad)[off + L.w.size() + static_cast<size_t>(r)] += d;
            }
            // residual connection passes dh through unchanged
            for (size_t c = 0; c < dh_in.size(); ++c) dh_in[c] += dh[c];
            dh = std::move(dh_in);
        }

        const auto& L0 = head.layers_[0];
        const auto& a0 = as[0];
        for (int r = 0; r < L0.rows; ++r) {
            double d = dh[static_cast<size_t>(r)] * silu_grad(a0[static_cast<size_t>(r)]);
            const size_t row_off = static_cast<size_t>(r) * static_cast<size_t>(L0.cols);
            for (int c = 0; c < L0.cols; ++c) (*grad)[row_off + static_cast<size_t>(c)] += d * ex.features[c];
            (*grad)[L0.w.size() + static_cast<size_t>(r)] += d;
        }
        return loss;
    }
};

double head_loss(const PredictorHead& head, std::span<const TrainingExample> batch, double w_acc,
                 double w_rej, std::vector<double>* grad) {
    if (grad) grad->assign(head.num_params(), 0.0);
    double total = 0.0;
    size_t n = 0;
    for (const auto& ex : batch) {
        if (!ex.include_in_loss) continue;
        if (!(ex.label >= 0.0 && ex.label <= 1.0)) throw DomainError("head_loss: label outside [0,1]");
        total += HeadGrad::example_loss(head, ex, w_acc, w_rej, grad);
        ++n;
    }
    if (n == 0) throw EmptyDatasetError("head_loss: no examples included in loss");
    if (grad)
        for (double& g : *grad) g /= static_cast<double>(n);
    return total / static_cast<double>(n);
}

std::vector<TrainingExample> gen_dataset(const LanguageModel& target, const LanguageModel& draft,
                                         const std::vector<std::vector<TokenId>>& prompts,
                                         const DatasetOptions& opt) {
    if (prompts.empty()) throw EmptyCorpusError("gen_dataset: no prompts");
    if (opt.max_response_len < 1) throw DomainError("gen_dataset: max_response_len must be >= 1");
    if (opt.k_cap < 1) throw DomainError("gen_dataset: k_cap must be >= 1");
    if (!(opt.mix_percent >= 0.0 && opt.mix_percent <= 100.0))
        throw DomainError("gen_dataset: mix_percent outside [0,100]");
    if (target.vocab().size != draft.vocab().size)
        throw DomainError("gen_dataset: vocab size mismatch");
    const TokenId eos = target.vocab().eos;

    std::vector<TrainingExample> out;
    for (size_t pi = 0; pi < prompts.size(); ++pi) {
        for (int rep = 0; rep < opt.responses_per_prompt; ++rep) {
            Rng rng(split_seed(opt.seed, pi * static_cast<size_t>(opt.responses_per_prompt) +
                                             static_cast<size_t>(rep)));
            const auto& prompt = prompts[pi];
            // response X ~ target
            std::vector<TokenId> x = prompt;
            std::vector<Dist> p_at;  // target dist at each response position
            for (int t = 0; t < opt.max_response_len; ++t) {
                Dist p = target.next_dist(x);
                TokenId xt = sample(p, rng);
                p_at.push_back(std::move(p));
                x.push_back(xt);
                if (xt == eos) break;
            }
            const size_t n = x.size() - prompt.size();

            std::vector<TokenId> z = prompt;  // mixed prefix
            int seg_left = 0, idx1 = 0;
            double run_prod = 1.0;
            for (size_t i = 0; i < n; ++i) {
                if (seg_left == 0) {
                    seg_left = 1 + static_cast<int>(rng.next_u64() % static_cast<uint64_t>(opt.k_cap));
                    idx1 = 0;
                    run_prod = 1.0;
                }
                std::span<const TokenId> x_prefix(x.data(), prompt.size() + i);
                Dist q_x = draft.next_dist(x_prefix);
                TokenId y = sample(q_x, rng);
                bool z_from_x = rng.uniform() < opt.mix_percent / 100.0;

                Dist q_feat = draft.next_dist(z);
                double label;
                if (opt.labels_on_mixed_prefix) {
                    Dist p_z = target.next_dist(z);
                    label = accept_prob(p_z, q_feat, y);
                } else {
                    label = accept_prob(p_at[i], q_x, y);
                }
                ++idx1;
                --seg_left;
                run_prod *= q_feat[y];
                out.push_back({candidate_features(q_feat, y, idx1, opt.k_cap, run_prod), label,
                               !z_from_x});
                z.push_back(z_from_x ? x[prompt.size() + i] : y);
            }
        }
    }
    return out;
}

void save_dataset(std::span<const TrainingExample> ds, const std::string& path) {
    std::ofstream outf(path);
    if (!outf) throw FormatError("cannot open for write: " + path);
    for (const auto& ex : ds) {
        json j;
        j["features"] = ex.features.v;
        j["label"] = ex.label;
        j["mask"] = ex.include_in_loss;
        outf << j.dump() << "\n";
    }
}

std::vector<TrainingExample> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open dataset file: " + path);
    std::vector<TrainingExample> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw FormatError("dataset: invalid JSON at line " + std::to_string(lineno));
        try {
            TrainingExample ex;
            auto f = j.at("features").get<std::vector<double>>();
            if (f.size() != FeatureVec::kDim) throw FormatError("dataset: feature width mismatch");
            std::copy(f.begin(), f.end(), ex.features.v.begin());
            ex.label = j.at("label").get<double>();
            ex.include_in_loss = j.at("mask").get<bool>();
            out.push_back(ex);
        } catch (const json::exception& e) {
            throw FormatError(std::string("dataset: ") + e.what());
        }
    }
    return out;
}

TrainResult train_head(std::span<const TrainingExample> ds, const TrainOptions& opt) {
    if (opt.epochs < 1 || opt.batch_size < 1) throw DomainError("train_head: bad epochs/batch");
    if (!(opt.holdout_frac >= 0.0 && opt.holdout_frac < 1.0))
        throw DomainError("train_head: holdout_frac outside [0,1)");
    std::vector<TrainingExample> pool;
    for (const auto& ex : ds)
        if (ex.include_in_loss) pool.push_back(ex);
    if (pool.empty()) throw EmptyDatasetError("train_head: no examples included in loss");

    Rng rng(split_seed(opt.seed, 0xd5));
    std::vector<size_t> order(pool.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_indices(order, rng);
    size_t n_hold = static_cast<size_t>(std::llround(opt.holdout_frac * static_cast<double>(pool.size())));
    if (n_hold >= pool.size()) n_hold = pool.size() - 1;
    std::vector<TrainingExample> hold, train;
    for (size_t i = 0; i < n_hold; ++i) hold.push_back(pool[order[i]]);
    for (size_t i = n_hold; i < pool.size(); ++i) train.push_back(pool[order[i]]);

    PredictorHead head(opt.depth, opt.width, split_seed(opt.seed, 0x1d));
    std::vector<double> params = head.get_params();
    const size_t batches_per_epoch = (train.size() + static_cast<size_t>(opt.batch_size) - 1) /
                                     static_cast<size_t>(opt.batch_size);
    const size_t total_steps = batches_per_epoch * static_cast<size_t>(opt.epochs);
    size_t step = 0;
    std::vector<size_t> perm(train.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::vector<TrainingExample> batch;
    std::vector<double> grad;
    for (int ep = 0; ep < opt.epochs; ++ep) {
        shuffle_indices(perm, rng);
        for (size_t b0 = 0; b0 < train.size(); b0 += static_cast<size_t>(opt.batch_size)) {
            batch.clear();
            for (size_t i = b0; i < std::min(train.size(), b0 + static_cast<size_t>(opt.batch_size)); ++i)
                batch.push_back(train[perm[i]]);
            head_loss(head, batch, opt.w_acc, opt.w_rej, &grad);
            double lr = opt.lr * 0.5 *
                        (1.0 + std::cos(M_PI * static_cast<double>(step) /
                                        static_cast<double>(std::max<size_t>(total_steps, 1))));
            for (size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
            head.set_params(params);
            ++step;
        }
    }
    TrainResult res{std::move(head), 0.0, std::numeric_limits<double>::quiet_NaN()};
    res.train_loss = head_loss(res.head, train, opt.w_acc, opt.w_rej);
    if (!hold.empty()) res.holdout_loss = head_loss(res.head, hold, opt.w_acc, opt.w_rej);
    return res;
}

double eval_binary_kl(const PredictorHead& head, std::span<const TrainingExample> ds) {
    double total = 0.0;
    size_t n = 0;
    for (const auto& ex : ds) {
        if (!ex.include_in_loss) continue;
        double p = ex.label;
        double b = head.predict(ex.features);
        double kl = 0.0;
        if (p > 0.0) kl += p * std::log(p / b);
        if (p < 1.0) kl += (1.0 - p) * std::log((1.0 - p) / (1.0 - b));
        total += kl;
        ++n;
    }
    if (n == 0) throw EmptyDatasetError("eval_binary_kl: no examples included");
    return total / static_cast<double>(n);
}

std::string PredictorHead::to_json() const {
    json j;
    j["schema"] = kSchemaVersion;
    j["feature_dim"] = FeatureVec::kDim;
    j["depth"] = depth_;
    j["width"] = width_;
    json layers = json::array();
    for (const auto& L : layers_) {
        json rows = json::array();
        for (int r = 0; r < L.rows; ++r) {
            json row = json::array();
            for (int c = 0; c < L.cols; ++c)
                row.push_back(L.w[static_cast<size_t>(r) * static_cast<size_t>(L.cols) + static_cast<size_t>(c)]);
            rows.push_back(std::move(row));
        }
        layers.push_back({{"w", std::move(rows)}, {"b", L.b}});
    }
    j["layers"] = std::move(layers);
    return j.dump(2);
}

PredictorHead PredictorHead::from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FormatError("head: invalid JSON");
    try {
        if (j.at("schema").get<int>() != kSchemaVersion)
            throw FormatError("head: unsupported schema version");
        if (j.at("feature_dim").get<int>() != FeatureVec::kDim)
            throw FormatError("head: feature_dim mismatch");
        int depth = j.at("depth").get<int>();
        int width = j.at("width").get<int>();
        std::vector<Layer> layers;
        for (const auto& lj : j.at("layers")) {
            Layer L;
            const auto& rows = lj.at("w");
            L.rows = static_cast<int>(rows.size());
            L.cols = L.rows ? static_cast<int>(rows[0].size()) : 0;
            for (const auto& row : rows) {
                if (static_cast<int>(row.size()) != L.cols)
                    throw FormatError("head: ragged weight matrix");
                for (const auto& x : row) L.w.push_back(x.get<double>());
            }
            L.b = lj.at("b").get<std::vector<double>>();
            layers.push_back(std::move(L));
        }
        return PredictorHead(depth, width, std::move(layers));
    } catch (const json::exception& e) {
        throw FormatError(std::string("head: ") + e.what());
    }
}

void PredictorHead::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for write: " + path);
    out << to_json() << "\n";
}

PredictorHead PredictorHead::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open head file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

}  // namespace specdec
