#include "stresskit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>

#include "stresskit/csv.hpp"
#include "stresskit/errors.hpp"
#include "stresskit/linalg.hpp"

namespace stresskit::stats {

std::string SmoothingOperator::describe() const {
    switch (kind) {
        case SmoothingKind::none: return "none";
        case SmoothingKind::triangular: return "triangular(k=" + std::to_string(width) + ")";
        case SmoothingKind::spline:
            return lambda >= 0.0 ? "spline(lambda=" + csv::format_double(lambda) + ")"
                                 : "spline(edof~T*" + csv::format_double(target_edof_ratio) + ")";
    }
    return "?";
}

SmoothingOperator parse_smoothing(const std::string& kind, double param) {
    if (kind == "none") return SmoothingOperator::none_op();
    if (kind == "triangular") {
        int k = param > 0 ? static_cast<int>(param) : 3;
        return SmoothingOperator::triangular(k);
    }
    if (kind == "spline")
        return param >= 0.0 ? SmoothingOperator::spline(param) : SmoothingOperator::spline_auto();
    throw ConfigError("unknown smoothing kind '" + kind + "'");
}

std::vector<double> triangular_weights(int width) {
    if (width < 1 || width % 2 == 0) throw ConfigError("triangular width must be odd and >= 1");
    int half = (width - 1) / 2;
    std::vector<double> w(width);
    double sum = 0.0;
    for (int i = 0; i < width; ++i) {
        w[i] = static_cast<double>(half + 1 - std::abs(i - half));
        sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
}

namespace {

// reflect (mirror-about-edge, edge not duplicated): x[-1] -> x[1]
int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

std::vector<double> convolve_triangular(const std::vector<double>& x, int width) {
    if (width == 1) return x;
    const int n = static_cast<int>(x.size());
    const int half = (width - 1) / 2;
    auto w = triangular_weights(width);
    std::vector<double> out(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < width; ++j) s += w[j] * x[reflect_index(i + j - half, n)];
        out[i] = s;
    }
    return out;
}

std::vector<double> central_derivative(const std::vector<double>& y, double fs) {
    const int n = static_cast<int>(y.size());
    std::vector<double> d(n, 0.0);
    if (n < 2) return d;
    d[0] = (y[1] - y[0]) * fs;
    d[n - 1] = (y[n - 1] - y[n - 2]) * fs;
    for (int i = 1; i < n - 1; ++i) d[i] = 0.5 * (y[i + 1] - y[i - 1]) * fs;
    return d;
}

// Band system (R + lambda Q'Q) for a natural smoothing spline on a uniform
// grid with spacing h; bandwidth 2.
linalg::BandedSpd spline_system(int t_len, double lambda, double h) {
    const int m = t_len - 2;
    linalg::BandedSpd a(m, 2);
    const double inv_h2 = 1.0 / (h * h);
    for (int i = 0; i < m; ++i) {
        a.at(i, i) = 2.0 * h / 3.0 + lambda * 6.0 * inv_h2;
        if (i >= 1) a.at(i, i - 1) = h / 6.0 + lambda * (-4.0) * inv_h2;
        if (i >= 2) a.at(i, i - 2) = lambda * inv_h2;
    }
    return a;
}

std::vector<double> second_diff_rhs(const std::vector<double>& y, double h) {
    const int m = static_cast<int>(y.size()) - 2;
    std::vector<double> q(m);
    for (int j = 0; j < m; ++j) q[j] = (y[j] - 2.0 * y[j + 1] + y[j + 2]) / h;
    return q;
}

}  // namespace

std::vector<double> spline_fit(const std::vector<double>& y, double lambda, double sample_rate_hz) {
    if (lambda < 0.0 || !std::isfinite(lambda)) throw ConfigError("spline lambda must be finite and >= 0");
    if (y.size() < 4) throw InsufficientDataError("spline smoothing needs T >= 4");
    if (!(sample_rate_hz > 0.0)) throw ConfigError("sample rate must be positive");
    const int n = static_cast<int>(y.size());
    const double h = 1.0 / sample_rate_hz;

    auto a = spline_system(n, lambda, h);
    std::vector<double> gamma = second_diff_rhs(y, h);
    a.factorize();
    a.solve(gamma);

    std::vector<double> f = y;
    const double lam_over_h = lambda / h;
    for (int i = 0; i < n; ++i) {
        double qg = 0.0;
        if (i < n - 2) qg += gamma[i];
        if (i >= 1 && i - 1 < n - 2) qg += -2.0 * gamma[i - 1];
        if (i >= 2) qg += gamma[i - 2];
        f[i] = y[i] - lam_over_h * qg;
    }
    return f;
}

double spline_edof(int t_len, double lambda, double sample_rate_hz) {
    if (t_len < 4) throw InsufficientDataError("spline edof needs T >= 4");
    const int m = t_len - 2;
    const double h = 1.0 / sample_rate_hz;
    const double inv_h2 = 1.0 / (h * h);
    auto a = spline_system(t_len, lambda, h);
    a.factorize();
    // tr[(R + lambda Q'Q)^-1 Q'Q] column by column; Q'Q is 5-banded.
    double tr = 0.0;
    std::vector<double> col(m);
    for (int j = 0; j < m; ++j) {
        std::fill(col.begin(), col.end(), 0.0);
        col[j] = 6.0 * inv_h2;
        if (j >= 1) col[j - 1] = -4.0 * inv_h2;
        if (j + 1 < m) col[j + 1] = -4.0 * inv_h2;
        if (j >= 2) col[j - 2] = inv_h2;
        if (j + 2 < m) col[j + 2] = inv_h2;
        a.solve(col);
        tr += col[j];
    }
    return static_cast<double>(t_len) - lambda * tr;
}

namespace {
struct EdofKey {
    int t_len;
    double fs;
    double target;
    bool operator<(const EdofKey& o) const {
        if (t_len != o.t_len) return t_len < o.t_len;
        if (fs != o.fs) return fs < o.fs;
        return target < o.target;
    }
};
std::map<EdofKey, double> g_lambda_cache;
std::mutex g_lambda_mutex;
}  // namespace

double spline_lambda_for_edof(int t_len, double target_edof, double sample_rate_hz) {
    target_edof = std::min(std::max(target_edof, 2.0), static_cast<double>(t_len));
    EdofKey key{t_len, sample_rate_hz, target_edof};
    {
        std::lock_guard<std::mutex> lock(g_lambda_mutex);
        auto it = g_lambda_cache.find(key);
        if (it != g_lambda_cache.end()) return it->second;
    }
    // edof is monotone decreasing in lambda: bisect in log space
    double lo = 1e-14, hi = 1e14;
    for (int iter = 0; iter < 200; ++iter) {
        double mid = std::sqrt(lo * hi);
        double e = spline_edof(t_len, mid, sample_rate_hz);
        if (e > target_edof)
            lo = mid;
        else
            hi = mid;
        if (hi / lo < 1.0 + 1e-6) break;
    }
    double lambda = std::sqrt(lo * hi);
    {
        std::lock_guard<std::mutex> lock(g_lambda_mutex);
        g_lambda_cache[key] = lambda;
    }
    return lambda;
}

Smoothed smooth(const std::vector<double>& signal, const SmoothingOperator& op, double sample_rate_hz) {
    if (signal.size() < 2) throw InsufficientDataError("smooth needs T >= 2");
    Smoothed out;
    switch (op.kind) {
        case SmoothingKind::none:
            out.values = signal;
            break;
        case SmoothingKind::triangular:
            out.values = convolve_triangular(signal, op.width);
            break;
        case SmoothingKind::spline: {
            double lam = op.lambda;
            if (lam < 0.0)
                lam = spline_lambda_for_edof(static_cast<int>(signal.size()),
                                             op.target_edof_ratio * static_cast<double>(signal.size()),
                                             sample_rate_hz);
            out.values = spline_fit(signal, lam, sample_rate_hz);
            break;
        }
    }
    out.derivative = central_derivative(out.values, sample_rate_hz);
    return out;
}

double velocity_summary(const std::vector<double>& derivative) {
    if (derivative.empty()) throw InsufficientDataError("velocity_summary on empty input");
    double s = 0.0;
    for (double v : derivative) s += std::abs(v);
    return s / static_cast<double>(derivative.size());
}

namespace {

// Continued-fraction evaluation of the regularized incomplete beta.
double betacf(double a, double b, double x) {
    const int kMaxIter = 300;
    const double kEps = 3e-16, kFpMin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

double betai(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                         b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_two_sided_p(double t, int df) {
    if (df < 1) throw ConfigError("t distribution needs df >= 1");
    if (!std::isfinite(t)) throw ConfigError("non-finite t statistic");
    double nu = static_cast<double>(df);
    double x = nu / (nu + t * t);
    double p = betai(0.5 * nu, 0.5, x);
    return std::min(std::max(p, 0.0), 1.0);
}

TTestResult one_sample_ttest(const std::vector<double>& diffs) {
    const int n = static_cast<int>(diffs.size());
    if (n < 2) throw InsufficientDataError("t-test needs n >= 2");
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= n;
    double ss = 0.0;
    for (double d : diffs) ss += (d - mean) * (d - mean);
    double var = ss / (n - 1);  // sample variance inside the test
    if (var <= 0.0) throw ZeroVarianceError("all differences identical; t statistic undefined");
    double t = mean / std::sqrt(var / n);
    return {t, student_t_two_sided_p(t, n - 1)};
}

const char* to_string(SummaryKind k) { return k == SummaryKind::mean_level ? "mean_level" : "velocity"; }

const char* to_string(SigCategory c) {
    switch (c) {
        case SigCategory::ns: return "ns";
        case SigCategory::p05: return "p<0.05";
        case SigCategory::p001: return "p<0.001";
        case SigCategory::invalid: return "invalid";
    }
    return "?";
}

namespace {

struct SubjectSummaries {
    bool usable = false;
    double mean_level = 0.0;
    double velocity = 0.0;
};

SubjectSummaries phase_summaries(const data::FeatureSequence& seq, int channel,
                                 data::PhaseLabel phase, const SmoothingOperator& op) {
    std::vector<double> sig;
    for (int t = 0; t < seq.frames(); ++t)
        if (seq.phase_of_frame[t] && *seq.phase_of_frame[t] == phase)
            sig.push_back(seq.values.at(t, channel));
    SubjectSummaries s;
    std::size_t min_len = op.kind == SmoothingKind::spline ? 4 : 2;
    if (sig.size() < min_len) return s;
    Smoothed sm = smooth(sig, op, seq.sample_rate_hz);
    double m = 0.0;
    for (double v : sm.values) m += v;
    s.mean_level = m / static_cast<double>(sm.values.size());
    s.velocity = velocity_summary(sm.derivative);
    s.usable = true;
    return s;
}

}  // namespace

std::vector<PhaseEffect> phase_effects(const std::vector<SubjectPairedSequences>& subjects,
                                       const SmoothingOperator& op) {
    if (subjects.empty()) throw InsufficientDataError("phase_effects with no subjects");
    const auto& names = subjects.front().md.channel_names;
    for (const auto& s : subjects) {
        if (s.md.channel_names != names || s.nd.channel_names != names)
            throw SchemaError("phase_effects: inconsistent channel layout across subjects");
    }
    const int n_ch = static_cast<int>(names.size());
    const data::PhaseLabel phases[] = {data::PhaseLabel::P1, data::PhaseLabel::P2,
                                       data::PhaseLabel::P3, data::PhaseLabel::P4,
                                       data::PhaseLabel::P5};

    std::vector<PhaseEffect> out;
    out.reserve(static_cast<std::size_t>(n_ch) * 5 * 2);
    for (int c = 0; c < n_ch; ++c) {
        for (data::PhaseLabel phase : phases) {
            std::vector<double> diff_mean, diff_vel;
            for (const auto& subj : subjects) {
                auto md = phase_summaries(subj.md, c, phase, op);
                auto nd = phase_summaries(subj.nd, c, phase, op);
                if (!md.usable || !nd.usable) continue;  // excluded from this cell
                diff_mean.push_back(md.mean_level - nd.mean_level);
                diff_vel.push_back(md.velocity - nd.velocity);
            }
            for (SummaryKind kind : {SummaryKind::mean_level, SummaryKind::velocity}) {
                PhaseEffect e;
                e.feature = names[c];
                e.phase = phase;
                e.kind = kind;
                e.diffs = kind == SummaryKind::mean_level ? diff_mean : diff_vel;
                e.n = static_cast<int>(e.diffs.size());
                if (e.n >= 1) {
                    double m = 0.0;
                    for (double d : e.diffs) m += d;
                    e.mean_diff = m / e.n;
                }
                if (e.n < 2) {
                    e.invalid_reason = "fewer than 2 paired subjects";
                } else {
                    try {
                        auto r = one_sample_ttest(e.diffs);
                        e.t_stat = r.t;
                        e.p_value = r.p;
                        e.valid = true;
                    } catch (const ZeroVarianceError&) {
                        e.invalid_reason = "zero variance";
                    }
                }
                out.push_back(std::move(e));
            }
        }
    }
    return out;
}

SigCategory SignificanceMap::category(const PhaseEffect& e) const {
    if (!e.valid) return SigCategory::invalid;
    if (e.p_value < threshold_strong) return SigCategory::p001;
    if (e.p_value < threshold_mid) return SigCategory::p05;
    return SigCategory::ns;
}

std::set<std::string> SignificanceMap::significant_in_both_stressors(SummaryKind kind,
                                                                     double alpha) const {
    std::map<std::string, int> hits;
    for (const auto& e : effects) {
        if (e.kind != kind || !e.valid) continue;
        if (!data::is_stressor(e.phase)) continue;
        if (e.p_value < alpha) ++hits[e.feature];
    }
    std::set<std::string> out;
    for (const auto& [f, c] : hits)
        if (c >= 2) out.insert(f);
    return out;
}

std::map<std::string, int> SignificanceMap::summary_counts() const {
    std::map<std::string, int> counts;
    for (SummaryKind kind : {SummaryKind::mean_level, SummaryKind::velocity}) {
        for (double alpha : {threshold_mid, threshold_strong}) {
            std::string key = std::string("both_stressors_") + to_string(kind) + "_p<" +
                              csv::format_double(alpha);
            counts[key] = static_cast<int>(significant_in_both_stressors(kind, alpha).size());
        }
    }
    int invalid = 0, total = 0;
    for (const auto& e : effects) {
        ++total;
        if (!e.valid) ++invalid;
    }
    counts["cells_total"] = total;
    counts["cells_invalid"] = invalid;
    return counts;
}

SignificanceMap significance_map(std::vector<PhaseEffect> effects, double mid, double strong) {
    SignificanceMap m;
    m.effects = std::move(effects);
    m.threshold_mid = mid;
    m.threshold_strong = strong;
    return m;
}

void write_report_csv(const std::string& path, const SignificanceMap& map,
                      const SmoothingOperator& op) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(map.effects.size());
    const std::string smoothing = op.describe();
    for (const auto& e : map.effects) {
        rows.push_back({e.feature, data::to_string(e.phase), to_string(e.kind), smoothing,
                        std::to_string(e.n), csv::format_double(e.mean_diff),
                        csv::format_double(e.t_stat), csv::format_double(e.p_value),
                        to_string(map.category(e))});
    }
    csv::write_rows(path, {"feature", "phase", "summary_kind", "smoothing", "n", "mean_diff", "t",
                           "p", "category"},
                    rows);
}

std::vector<ReportRow> read_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path + ": empty report");
    auto header = csv::split_line(line);
    if (header.size() != 9) throw SchemaError(path + ": expected 9 report columns");
    std::vector<ReportRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = csv::split_line(line);
        if (cells.size() != 9) throw SchemaError(path + ": malformed report row");
        ReportRow r;
        r.feature = cells[0];
        r.phase = cells[1];
        r.summary_kind = cells[2];
        r.smoothing = cells[3];
        r.n = std::stoi(cells[4]);
        r.mean_diff = std::stod(cells[5]);
        r.t = std::stod(cells[6]);
        r.p = std::stod(cells[7]);
        r.category = cells[8];
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace stresskit::stats
