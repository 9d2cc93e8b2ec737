#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "stresskit/data_model.hpp"

namespace stresskit::stats {

enum class SmoothingKind { none, triangular, spline };

struct SmoothingOperator {
    SmoothingKind kind = SmoothingKind::none;
    int width = 1;          // triangular: odd, >= 1
    double lambda = -1.0;   // spline: >= 0; negative selects lambda from target_edof
    double target_edof_ratio = 0.1;  // default effective dof ~ T/10

    static SmoothingOperator none_op() { return {}; }
    static SmoothingOperator triangular(int k) { return {SmoothingKind::triangular, k, -1.0, 0.1}; }
    static SmoothingOperator spline(double lam) { return {SmoothingKind::spline, 1, lam, 0.1}; }
    static SmoothingOperator spline_auto(double edof_ratio = 0.1) {
        return {SmoothingKind::spline, 1, -1.0, edof_ratio};
    }
    std::string describe() const;
};

SmoothingOperator parse_smoothing(const std::string& kind, double param);

struct Smoothed {
    std::vector<double> values;
    std::vector<double> derivative;  // central differences of values, scaled by sample rate
};

// `none` is the identity; `triangular` convolves with the normalized symmetric
// triangle of the given width under reflect padding; `spline` fits a natural
// cubic smoothing spline (residual + lambda * integrated squared curvature)
// evaluated at the sample points.
Smoothed smooth(const std::vector<double>& signal, const SmoothingOperator& op, double sample_rate_hz);

std::vector<double> triangular_weights(int width);

// Natural smoothing spline fit at uniformly spaced samples (spacing 1/fs).
std::vector<double> spline_fit(const std::vector<double>& y, double lambda, double sample_rate_hz);

// Effective degrees of freedom (trace of the smoother matrix) and the lambda
// that achieves a target edof; results are cached per (T, fs) internally.
double spline_edof(int t_len, double lambda, double sample_rate_hz);
double spline_lambda_for_edof(int t_len, double target_edof, double sample_rate_hz);

double velocity_summary(const std::vector<double>& derivative);

struct TTestResult {
    double t;
    double p;  // two-sided
};

// Two-sided one-sample t-test against zero; sample (n-1) standard deviation.
TTestResult one_sample_ttest(const std::vector<double>& diffs);

// Two-sided p for a Student-t statistic via the regularized incomplete beta.
double student_t_two_sided_p(double t, int df);

enum class SummaryKind { mean_level, velocity };
const char* to_string(SummaryKind k);

struct PhaseEffect {
    std::string feature;
    data::PhaseLabel phase;
    SummaryKind kind = SummaryKind::mean_level;
    std::vector<double> diffs;  // per-subject MD-ND differences
    int n = 0;
    double mean_diff = 0.0;
    double t_stat = 0.0;
    double p_value = 1.0;
    bool valid = false;
    std::string invalid_reason;
};

struct SubjectPairedSequences {
    std::string subject_id;
    data::FeatureSequence md;
    data::FeatureSequence nd;
};

// Per (feature, phase, summary kind): per-subject phase summaries on smoothed
// signals, paired MD-ND differences, one-sample t-test. Subjects lacking
// usable frames for a cell are excluded from it; cells with n < 2 or zero
// variance are marked invalid.
std::vector<PhaseEffect> phase_effects(const std::vector<SubjectPairedSequences>& subjects,
                                       const SmoothingOperator& op);

enum class SigCategory { ns, p05, p001, invalid };
const char* to_string(SigCategory c);

struct SignificanceMap {
    std::vector<PhaseEffect> effects;  // with categories derivable from p
    double threshold_mid = 0.05;
    double threshold_strong = 0.001;

    SigCategory category(const PhaseEffect& e) const;
    // Features whose cells are significant (p < alpha) in BOTH stressor phases
    // for the given summary kind.
    std::set<std::string> significant_in_both_stressors(SummaryKind kind, double alpha) const;
    std::map<std::string, int> summary_counts() const;
};

SignificanceMap significance_map(std::vector<PhaseEffect> effects, double mid = 0.05,
                                 double strong = 0.001);

void write_report_csv(const std::string& path, const SignificanceMap& map,
                      const SmoothingOperator& op);
struct ReportRow {
    std::string feature, phase, summary_kind, smoothing, category;
    int n;
    double mean_diff, t, p;
};
std::vector<ReportRow> read_report_csv(const std::string& path);

}  // namespace stresskit::stats
