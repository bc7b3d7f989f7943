#include "specdec/policy.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

namespace specdec {

namespace {

std::string fmt_num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

class FixedK final : public StoppingPolicy {
  public:
    explicit FixedK(int k) : k_(k) {
        if (k < 1) throw DomainError("fixed_k: k must be >= 1");
    }
    Decision decide(const PolicyState& s) const override {
        return s.candidates.size() >= static_cast<size_t>(k_) ? Decision::kStop
                                                              : Decision::kContinue;
    }
    std::string name() const override { return "fixed"; }
    std::string params() const override { return "k=" + std::to_string(k_); }

  private:
    int k_;
};

class AdaptiveThreshold final : public StoppingPolicy {
  public:
    AdaptiveThreshold(PredictorHead head, double h, std::string label)
        : head_(std::move(head)), h_(h), label_(std::move(label)) {
        if (!(h >= 0.0 && h < 1.0)) throw DomainError("adaptive_threshold: h outside [0,1)");
    }
    double accept_score(const PolicyState& s) const override {
        return head_.predict(s.features.back());
    }
    Decision decide(const PolicyState& s) const override {
        return (1.0 - s.cumulative_accept > h_) ? Decision::kStop : Decision::kContinue;
    }
    std::string name() const override { return "adaptive"; }
    std::string params() const override { return "h=" + fmt_num(h_) + ":head=" + label_; }

  private:
    PredictorHead head_;
    double h_;
    std::string label_;
};

class DraftConfidence final : public StoppingPolicy {
  public:
    explicit DraftConfidence(double c) : c_(c) {
        if (!(c > 0.0 && c <= 1.0)) throw DomainError("draft_confidence: c outside (0,1]");
    }
    Decision decide(const PolicyState& s) const override {
        return s.features.back()[0] < c_ ? Decision::kStop : Decision::kContinue;
    }
    std::string name() const override { return "draftconf"; }
    std::string params() const override { return "c=" + fmt_num(c_); }

  private:
    double c_;
};

class ConfidenceProduct final : public StoppingPolicy {
  public:
    explicit ConfidenceProduct(double c) : c_(c) {
        if (!(c > 0.0 && c <= 1.0)) throw DomainError("confidence_product: c outside (0,1]");
    }
    Decision decide(const PolicyState& s) const override {
        return s.features.back()[5] < c_ ? Decision::kStop : Decision::kContinue;
    }
    std::string name() const override { return "confprod"; }
    std::string params() const override { return "c=" + fmt_num(c_); }

  private:
    double c_;
};

class OracleGreedy final : public StoppingPolicy {
  public:
    explicit OracleGreedy(LmPtr target) : target_(std::move(target)) {
        if (!target_) throw DomainError("oracle_greedy: null target");
    }
    Decision decide(const PolicyState& s) const override {
        if (!s.next_draft_dist) throw MisuseError("oracle_greedy: missing draft lookahead");
        TokenId draft_next = argmax_token(*s.next_draft_dist);
        TokenId target_next = greedy_token(*target_, s.full_context());
        return draft_next == target_next ? Decision::kContinue : Decision::kStop;
    }
    bool oracle_only() const override { return true; }
    bool requires_greedy() const override { return true; }
    bool wants_draft_lookahead() const override { return true; }
    std::string name() const override { return "oracle-greedy"; }
    std::string params() const override { return ""; }

  private:
    LmPtr target_;
};

class OracleAdaptive final : public StoppingPolicy {
  public:
    OracleAdaptive(DistFn target_view, double h) : view_(std::move(target_view)), h_(h) {
        if (!view_) throw DomainError("oracle_adaptive: null target view");
        if (!(h >= 0.0 && h < 1.0)) throw DomainError("oracle_adaptive: h outside [0,1)");
    }
    double accept_score(const PolicyState& s) const override {
        // true acceptance probability of the just-drawn candidate
        auto ctx = s.full_context();
        Dist p = view_(ctx.subspan(0, ctx.size() - 1));
        double q_y = s.features.back()[0];
        if (q_y <= 0.0) throw DomainError("oracle_adaptive: q(y) == 0");
        return std::min(1.0, p[s.candidates.back()] / q_y);
    }
    Decision decide(const PolicyState& s) const override {
        return (1.0 - s.cumulative_accept > h_) ? Decision::kStop : Decision::kContinue;
    }
    bool oracle_only() const override { return true; }
    std::string name() const override { return "oracle-adaptive"; }
    std::string params() const override { return "h=" + fmt_num(h_); }

  private:
    DistFn view_;
    double h_;
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    while (start <= s.size()) {
        size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

double parse_double(const std::string& s, const std::string& what) {
    try {
        size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError("policy spec: bad " + what + " value '" + s + "'");
    }
}

}  // namespace

PolicyPtr fixed_k(int k) { return std::make_shared<FixedK>(k); }

PolicyPtr adaptive_threshold(PredictorHead head, double h, std::string head_label) {
    return std::make_shared<AdaptiveThreshold>(std::move(head), h, std::move(head_label));
}

PolicyPtr draft_confidence(double c) { return std::make_shared<DraftConfidence>(c); }

PolicyPtr confidence_product(double c) { return std::make_shared<ConfidenceProduct>(c); }

PolicyPtr oracle_greedy(LmPtr target) { return std::make_shared<OracleGreedy>(std::move(target)); }

PolicyPtr oracle_adaptive(DistFn target_view, double h) {
    return std::make_shared<OracleAdaptive>(std::move(target_view), h);
}

PolicyPtr parse_policy_spec(const std::string& spec, const PolicyContext& ctx) {
    auto parts = split(spec, ':');
    if (parts.empty() || parts[0].empty()) throw FormatError("policy spec: empty");
    const std::string& family = parts[0];

    auto kv = [&](const std::string& key) -> std::optional<std::string> {
        for (size_t i = 1; i < parts.size(); ++i) {
            auto eq = parts[i].find('=');
            if (eq != std::string::npos && parts[i].substr(0, eq) == key)
                return parts[i].substr(eq + 1);
        }
        return std::nullopt;
    };

    if (family == "fixed") {
        if (parts.size() != 2) throw FormatError("policy spec: expected fixed:<k>");
        try {
            return fixed_k(std::stoi(parts[1]));
        } catch (const std::exception&) {
            throw FormatError("policy spec: bad k value '" + parts[1] + "'");
        }
    }
    if (family == "adaptive") {
        auto h = kv("h");
        auto head_path = kv("head");
        if (!h || !head_path) throw FormatError("policy spec: adaptive needs h= and head=");
        PredictorHead head = PredictorHead::load(*head_path);
        // label heads by file stem
        std::string label = *head_path;
        if (auto slash = label.find_last_of('/'); slash != std::string::npos)
            label = label.substr(slash + 1);
        if (auto dot = label.find_last_of('.'); dot != std::string::npos) label = label.substr(0, dot);
        return adaptive_threshold(std::move(head), parse_double(*h, "h"), label);
    }
    if (family == "draftconf") {
        auto c = kv("c");
        if (!c) throw FormatError("policy spec: draftconf needs c=");
        return draft_confidence(parse_double(*c, "c"));
    }
    if (family == "confprod") {
        auto c = kv("c");
        if (!c) throw FormatError("policy spec: confprod needs c=");
        return confidence_product(parse_double(*c, "c"));
    }
    if (family == "oracle-greedy") {
        if (!ctx.target) throw MisuseError("policy spec: oracle-greedy needs a target model");
        return oracle_greedy(ctx.target);
    }
    if (family == "oracle-adaptive") {
        auto h = kv("h");
        if (!h) throw FormatError("policy spec: oracle-adaptive needs h=");
        if (!ctx.target_view) throw MisuseError("policy spec: oracle-adaptive needs a target view");
        return oracle_adaptive(ctx.target_view, parse_double(*h, "h"));
    }
    throw FormatError("policy spec: unknown family '" + family + "'");
}

}  // namespace specdec
