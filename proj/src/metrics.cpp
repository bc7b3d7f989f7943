#include "specdec/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace specdec {

void CostModel::validate() const {
    if (!(t_draft > 0.0) || !(t_target > t_draft))
        throw DomainError("cost model: need 0 < t_draft < t_target");
}

double total_time(const GenerationTrace& t, const CostModel& cm) {
    cm.validate();
    return cm.t_draft * static_cast<double>(t.n_draft) +
           cm.t_target * static_cast<double>(t.n_target);
}

double latency(const GenerationTrace& t, const CostModel& cm) {
    if (t.n_generated == 0) throw EmptyGenerationError("latency: trace emitted no tokens");
    return total_time(t, cm) / static_cast<double>(t.n_generated);
}

double throughput(const GenerationTrace& t, const CostModel& cm) {
    return 1.0 / latency(t, cm);
}

double discard_rate(const GenerationTrace& t) {
    if (t.n_generated == 0) throw EmptyGenerationError("discard_rate: trace emitted no tokens");
    return static_cast<double>(t.n_discarded) / static_cast<double>(t.n_generated);
}

double verification_rate(const GenerationTrace& t) {
    if (t.n_generated == 0)
        throw EmptyGenerationError("verification_rate: trace emitted no tokens");
    return static_cast<double>(t.n_target) / static_cast<double>(t.n_generated);
}

double latency_from_rates(double dr, double vr, const CostModel& cm) {
    cm.validate();
    return cm.t_draft + cm.t_draft * dr + (cm.t_target - cm.t_draft) * vr;
}

namespace {

// solve A x = b for small n via Gaussian elimination with partial pivoting
bool solve_linear(std::vector<std::vector<double>> a, std::vector<double> b,
                  std::vector<double>& x) {
    const size_t n = b.size();
    for (size_t col = 0; col < n; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (std::abs(a[piv][col]) < 1e-12) return false;
        std::swap(a[piv], a[col]);
        std::swap(b[piv], b[col]);
        for (size_t r = col + 1; r < n; ++r) {
            double f = a[r][col] / a[col][col];
            for (size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    x.assign(n, 0.0);
    for (size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
        x[i] = acc / a[i][i];
    }
    return true;
}

}  // namespace

ForwardFit fit_forward_times(std::span<const std::array<double, 3>> rows, bool with_intercept) {
    const size_t dim = with_intercept ? 3 : 2;
    if (rows.size() < dim) throw DomainError("fit_forward_times: not enough samples");
    // design columns: n_draft, n_target, (1)
    std::vector<std::vector<double>> ata(dim, std::vector<double>(dim, 0.0));
    std::vector<double> atb(dim, 0.0);
    for (const auto& r : rows) {
        std::array<double, 3> x{r[0], r[1], 1.0};
        for (size_t i = 0; i < dim; ++i) {
            for (size_t j = 0; j < dim; ++j) ata[i][j] += x[i] * x[j];
            atb[i] += x[i] * r[2];
        }
    }
    // scale-aware singularity check via the normal-equation determinant
    std::vector<double> coef;
    if (!solve_linear(ata, atb, coef))
        throw RankDeficientError("fit_forward_times: design matrix is rank deficient");

    double ss_res = 0.0, ss_tot = 0.0, mean_t = 0.0;
    for (const auto& r : rows) mean_t += r[2];
    mean_t /= static_cast<double>(rows.size());
    for (const auto& r : rows) {
        double pred = coef[0] * r[0] + coef[1] * r[1] + (with_intercept ? coef[2] : 0.0);
        ss_res += (r[2] - pred) * (r[2] - pred);
        ss_tot += with_intercept ? (r[2] - mean_t) * (r[2] - mean_t) : r[2] * r[2];
    }
    ForwardFit fit;
    fit.t_draft = coef[0];
    fit.t_target = coef[1];
    fit.intercept = with_intercept ? coef[2] : 0.0;
    fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

std::vector<size_t> pareto_indices(std::span<const BenchPoint> pts) {
    std::vector<size_t> keep;
    for (size_t i = 0; i < pts.size(); ++i) {
        bool dominated = false;
        for (size_t j = 0; j < pts.size() && !dominated; ++j) {
            if (j == i) continue;
            bool leq = pts[j].verification_rate <= pts[i].verification_rate &&
                       pts[j].discard_rate <= pts[i].discard_rate;
            bool strict = pts[j].verification_rate < pts[i].verification_rate ||
                          pts[j].discard_rate < pts[i].discard_rate;
            dominated = leq && strict;
        }
        if (!dominated) keep.push_back(i);
    }
    return keep;
}

std::vector<BenchPoint> pareto_frontier(std::span<const BenchPoint> pts) {
    std::vector<BenchPoint> out;
    for (size_t i : pareto_indices(pts)) out.push_back(pts[i]);
    return out;
}

namespace {

std::string fmt_g(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

}  // namespace

std::string bench_csv(std::span<const BenchPoint> pts) {
    std::string out = "policy,params,discard_rate,verification_rate,latency,throughput,speedup\n";
    for (const auto& p : pts) {
        out += p.policy;
        out += ',';
        out += p.params;
        out += ',';
        out += fmt_g(p.discard_rate);
        out += ',';
        out += fmt_g(p.verification_rate);
        out += ',';
        out += fmt_g(p.latency);
        out += ',';
        out += fmt_g(p.throughput);
        out += ',';
        out += fmt_g(p.speedup);
        out += '\n';
    }
    return out;
}

std::vector<BenchPoint> bench_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<BenchPoint> out;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line != "policy,params,discard_rate,verification_rate,latency,throughput,speedup")
                throw FormatError("bench csv: unrecognized header");
            continue;
        }
        std::vector<std::string> cols;
        size_t start = 0;
        while (true) {
            size_t pos = line.find(',', start);
            if (pos == std::string::npos) {
                cols.push_back(line.substr(start));
                break;
            }
            cols.push_back(line.substr(start, pos - start));
            start = pos + 1;
        }
        if (cols.size() != 7) throw FormatError("bench csv: wrong column count");
        BenchPoint p;
        p.policy = cols[0];
        p.params = cols[1];
        try {
            p.discard_rate = std::stod(cols[2]);
            p.verification_rate = std::stod(cols[3]);
            p.latency = std::stod(cols[4]);
            p.throughput = std::stod(cols[5]);
            p.speedup = std::stod(cols[6]);
        } catch (const std::exception&) {
            throw FormatError("bench csv: bad numeric field");
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace specdec
