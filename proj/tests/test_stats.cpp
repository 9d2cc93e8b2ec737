#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "stresskit/errors.hpp"
#include "stresskit/linalg.hpp"
#include "stresskit/rng.hpp"
#include "stresskit/stats.hpp"
#include "test_util.hpp"

using namespace stresskit;
using namespace stresskit::stats;

namespace {

data::FeatureSequence make_seq(const std::vector<std::vector<double>>& channels, double fs,
                               const std::vector<std::optional<data::PhaseLabel>>& phases,
                               std::vector<std::string> names) {
    data::FeatureSequence s;
    const int t = static_cast<int>(channels.front().size());
    const int c = static_cast<int>(channels.size());
    s.values = Matrix({t, c});
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < c; ++j) s.values.at(i, j) = channels[j][i];
    s.channel_names = std::move(names);
    s.sample_rate_hz = fs;
    s.phase_of_frame = phases;
    return s;
}

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("triangular weights and smoothing examples") {
    CHECK(triangular_weights(1) == std::vector<double>{1.0});
    CHECK(triangular_weights(3) == std::vector<double>{0.25, 0.5, 0.25});
    CHECK_THROWS_AS(triangular_weights(4), ConfigError);

    // k=1 is the identity
    std::vector<double> sig = {1.0, -2.0, 3.5, 0.25};
    auto sm = smooth(sig, SmoothingOperator::triangular(1), 10.0);
    CHECK(sm.values == sig);

    // impulse response for k=3
    auto imp = smooth({0, 0, 1, 0, 0}, SmoothingOperator::triangular(3), 1.0);
    CHECK(imp.values[0] == doctest::Approx(0.0));
    CHECK(imp.values[1] == doctest::Approx(0.25));
    CHECK(imp.values[2] == doctest::Approx(0.5));
    CHECK(imp.values[3] == doctest::Approx(0.25));
    CHECK(imp.values[4] == doctest::Approx(0.0));
}

TEST_CASE("constant signal is unchanged by every operator; derivative zero") {
    std::vector<double> sig(24, 3.25);
    for (auto op : {SmoothingOperator::none_op(), SmoothingOperator::triangular(5),
                    SmoothingOperator::spline(1.0), SmoothingOperator::spline(0.0)}) {
        auto sm = smooth(sig, op, 8.0);
        for (double v : sm.values) CHECK(v == doctest::Approx(3.25).epsilon(1e-10));
        for (double d : sm.derivative) CHECK(std::abs(d) < 1e-9);
    }
}

TEST_CASE("triangular smoothing never increases max abs value") {
    Rng rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> sig(50);
        for (auto& v : sig) v = rng.normal();
        auto sm = smooth(sig, SmoothingOperator::triangular(7), 10.0);
        double in_max = 0, out_max = 0;
        for (double v : sig) in_max = std::max(in_max, std::abs(v));
        for (double v : sm.values) out_max = std::max(out_max, std::abs(v));
        CHECK(out_max <= in_max + 1e-12);
    }
}

TEST_CASE("spline lambda=0 interpolates; lambda->inf converges to the line fit") {
    Rng rng(17);
    std::vector<double> y(40);
    for (auto& v : y) v = rng.normal();
    auto f0 = spline_fit(y, 0.0, 5.0);
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(std::abs(f0[i] - y[i]) < 1e-8);

    std::vector<double> x(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i) / 5.0;
    auto line = linalg::fit_line(x, y);
    auto finf = spline_fit(y, 1e12, 5.0);
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(std::abs(finf[i] - (line.intercept + line.slope * x[i])) < 1e-4);
}

TEST_CASE("spline edof is monotone and the auto lambda hits its target") {
    const int t = 120;
    const double fs = 10.0;
    double e_small = spline_edof(t, 1e-6, fs);
    double e_big = spline_edof(t, 1e2, fs);
    CHECK(e_small > e_big);
    CHECK(e_small <= t + 1e-6);
    CHECK(e_big >= 2.0 - 1e-6);
    double lam = spline_lambda_for_edof(t, 12.0, fs);
    CHECK(spline_edof(t, lam, fs) == doctest::Approx(12.0).epsilon(1e-2));
}

TEST_CASE("velocity summary") {
    CHECK(velocity_summary({0, 0, 0}) == 0.0);
    CHECK(velocity_summary({1, -1, 1}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(velocity_summary({}), InsufficientDataError);
    // unit-slope ramp at dt=1: derivative 1 everywhere
    std::vector<double> ramp(10);
    for (int i = 0; i < 10; ++i) ramp[i] = i;
    auto sm = smooth(ramp, SmoothingOperator::none_op(), 1.0);
    CHECK(velocity_summary(sm.derivative) == doctest::Approx(1.0));
}

TEST_CASE("smoothing with k>1 does not increase velocity summary of white noise") {
    Rng rng(53);
    int higher = 0, total = 0;
    for (int rep = 0; rep < 25; ++rep) {
        std::vector<double> sig(100);
        for (auto& v : sig) v = rng.normal();
        auto raw = smooth(sig, SmoothingOperator::none_op(), 10.0);
        auto tri = smooth(sig, SmoothingOperator::triangular(5), 10.0);
        ++total;
        if (velocity_summary(tri.derivative) > velocity_summary(raw.derivative)) ++higher;
    }
    CHECK(higher == 0);  // holds with margin for white noise
}

TEST_CASE("one sample t-test: spec examples and oracle agreement") {
    auto r = one_sample_ttest({-1.0, 1.0});
    CHECK(r.t == doctest::Approx(0.0));
    CHECK(r.p == doctest::Approx(1.0));

    CHECK_THROWS_AS(one_sample_ttest({1, 1, 1, 1}), ZeroVarianceError);
    CHECK_THROWS_AS(one_sample_ttest({3.0}), InsufficientDataError);

    auto r2 = one_sample_ttest({1, 2, 3, 4, 5});
    CHECK(r2.t == doctest::Approx(4.242640687).epsilon(1e-8));
    CHECK(r2.p == doctest::Approx(testutil::t_two_sided_p_oracle(r2.t, 4)).epsilon(1e-9));
    CHECK(r2.p == doctest::Approx(0.01324).epsilon(1e-3));
}

TEST_CASE("t CDF matches the quadrature oracle over a grid") {
    for (int df : {1, 2, 3, 5, 10, 30}) {
        for (double t = -8.0; t <= 8.01; t += 1.0) {
            double fast = student_t_two_sided_p(t, df);
            double slow = testutil::t_two_sided_p_oracle(t, df);
            CHECK_MESSAGE(std::abs(fast - slow) < 1e-10, "df ", df, " t ", t);
        }
    }
}

TEST_CASE("t-test p is scale invariant") {
    Rng rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> d(12);
        for (auto& v : d) v = rng.normal() + 0.3;
        auto r1 = one_sample_ttest(d);
        for (auto& v : d) v *= 37.5;
        auto r2 = one_sample_ttest(d);
        CHECK(std::abs(r1.t - r2.t) < 1e-9);
        CHECK(std::abs(r1.p - r2.p) < 1e-9);
    }
}

TEST_CASE("phase_effects: injected effect detected in stressor phases only") {
    // 12 subjects, 2 channels; channel 0 carries a +2 shift in P2/P4 of MD
    Rng rng(61);
    const double fs = 10.0;
    const int frames_per_phase = 80;
    std::vector<std::optional<data::PhaseLabel>> phases;
    for (int p = 0; p < 5; ++p)
        for (int i = 0; i < frames_per_phase; ++i)
            phases.push_back(static_cast<data::PhaseLabel>(p));

    std::vector<SubjectPairedSequences> subjects;
    for (int s = 0; s < 12; ++s) {
        auto gen_channel = [&](bool effect) {
            std::vector<double> v(phases.size());
            for (std::size_t i = 0; i < v.size(); ++i) {
                v[i] = rng.normal();
                if (effect && phases[i] && data::is_stressor(*phases[i])) v[i] += 2.0;
            }
            return v;
        };
        SubjectPairedSequences p;
        p.subject_id = "S" + std::to_string(s);
        p.md = make_seq({gen_channel(true), gen_channel(false)}, fs, phases, {"c_eff", "c_null"});
        p.nd = make_seq({gen_channel(false), gen_channel(false)}, fs, phases, {"c_eff", "c_null"});
        subjects.push_back(std::move(p));
    }
    auto effects = phase_effects(subjects, SmoothingOperator::none_op());
    CHECK(effects.size() == 2 * 5 * 2);
    auto find = [&](const std::string& f, data::PhaseLabel ph, SummaryKind k) {
        for (const auto& e : effects)
            if (e.feature == f && e.phase == ph && e.kind == k) return e;
        FAIL("cell not found");
        return effects.front();
    };
    auto eff_p2 = find("c_eff", data::PhaseLabel::P2, SummaryKind::mean_level);
    auto eff_p3 = find("c_eff", data::PhaseLabel::P3, SummaryKind::mean_level);
    auto null_p2 = find("c_null", data::PhaseLabel::P2, SummaryKind::mean_level);
    CHECK(eff_p2.valid);
    CHECK(eff_p2.p_value < 1e-4);
    CHECK(eff_p2.n == 12);
    CHECK(eff_p3.p_value > 1e-4);
    CHECK(null_p2.p_value > 1e-4);
}

TEST_CASE("phase_effects: single subject yields all-invalid cells") {
    std::vector<std::optional<data::PhaseLabel>> phases(20, data::PhaseLabel::P1);
    std::vector<double> v(20, 1.0);
    SubjectPairedSequences p;
    p.subject_id = "only";
    p.md = make_seq({v}, 10.0, phases, {"c"});
    p.nd = make_seq({v}, 10.0, phases, {"c"});
    auto effects = phase_effects({p}, SmoothingOperator::none_op());
    for (const auto& e : effects) CHECK(!e.valid);
}

TEST_CASE("null p-values look uniform (small-scale KS)") {
    Rng rng(71);
    const int n_subjects = 10, frames = 60;
    std::vector<std::optional<data::PhaseLabel>> phases;
    for (int p = 0; p < 5; ++p)
        for (int i = 0; i < frames; ++i) phases.push_back(static_cast<data::PhaseLabel>(p));
    std::vector<double> pvals;
    for (int run = 0; run < 12; ++run) {
        std::vector<SubjectPairedSequences> subjects;
        for (int s = 0; s < n_subjects; ++s) {
            auto gen = [&] {
                std::vector<double> v(phases.size());
                for (auto& x : v) x = rng.normal();
                return v;
            };
            SubjectPairedSequences p;
            p.subject_id = std::to_string(s);
            p.md = make_seq({gen(), gen()}, 10.0, phases, {"a", "b"});
            p.nd = make_seq({gen(), gen()}, 10.0, phases, {"a", "b"});
            subjects.push_back(std::move(p));
        }
        for (const auto& e : phase_effects(subjects, SmoothingOperator::none_op()))
            if (e.valid && e.kind == SummaryKind::mean_level) pvals.push_back(e.p_value);
    }
    REQUIRE(pvals.size() >= 100);
    double d = testutil::ks_uniform(pvals);
    CHECK(d < 1.63 / std::sqrt(static_cast<double>(pvals.size())));
}

TEST_CASE("significance map categories and counts") {
    std::vector<PhaseEffect> effects;
    auto mk = [](std::string f, data::PhaseLabel ph, double p, bool valid = true) {
        PhaseEffect e;
        e.feature = std::move(f);
        e.phase = ph;
        e.kind = SummaryKind::velocity;
        e.p_value = p;
        e.valid = valid;
        e.n = 10;
        return e;
    };
    effects.push_back(mk("a", data::PhaseLabel::P2, 1e-5));
    effects.push_back(mk("a", data::PhaseLabel::P4, 1e-4));
    effects.push_back(mk("b", data::PhaseLabel::P2, 0.2));
    effects.push_back(mk("b", data::PhaseLabel::P4, 1e-5));
    effects.push_back(mk("c", data::PhaseLabel::P2, 0.01));
    effects.push_back(mk("c", data::PhaseLabel::P4, 0.04));
    effects.push_back(mk("d", data::PhaseLabel::P2, 1.0, false));
    auto map = significance_map(effects);
    CHECK(map.category(effects[0]) == SigCategory::p001);
    CHECK(map.category(effects[2]) == SigCategory::ns);
    CHECK(map.category(effects[4]) == SigCategory::p05);
    CHECK(map.category(effects[6]) == SigCategory::invalid);
    auto strong = map.significant_in_both_stressors(SummaryKind::velocity, 0.001);
    CHECK(strong == std::set<std::string>{"a"});
    auto mid = map.significant_in_both_stressors(SummaryKind::velocity, 0.05);
    CHECK(mid == std::set<std::string>{"a", "c"});
    // all p=1 -> nothing significant
    std::vector<PhaseEffect> nulls = {mk("x", data::PhaseLabel::P2, 1.0),
                                      mk("x", data::PhaseLabel::P4, 1.0)};
    auto map0 = significance_map(nulls);
    CHECK(map0.significant_in_both_stressors(SummaryKind::velocity, 0.05).empty());
}

TEST_CASE("stats report csv round trip is lossless") {
    std::vector<PhaseEffect> effects;
    Rng rng(3);
    for (int i = 0; i < 6; ++i) {
        PhaseEffect e;
        e.feature = "ch_" + std::to_string(i);
        e.phase = static_cast<data::PhaseLabel>(i % 5);
        e.kind = i % 2 ? SummaryKind::velocity : SummaryKind::mean_level;
        e.n = 5 + i;
        e.mean_diff = rng.normal();
        e.t_stat = rng.normal() * 3;
        e.p_value = rng.uniform(1e-7, 1.0);
        e.valid = i != 3;
        effects.push_back(e);
    }
    auto map = significance_map(effects);
    std::string path = std::filesystem::temp_directory_path() /
                       ("stats_report_" + std::to_string(::getpid()) + ".csv");
    write_report_csv(path, map, SmoothingOperator::spline_auto());
    auto rows = read_report_csv(path);
    REQUIRE(rows.size() == effects.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].feature == effects[i].feature);
        CHECK(rows[i].phase == data::to_string(effects[i].phase));
        CHECK(rows[i].summary_kind == to_string(effects[i].kind));
        CHECK(rows[i].n == effects[i].n);
        CHECK(rows[i].mean_diff == effects[i].mean_diff);  // exact round trip
        CHECK(rows[i].t == effects[i].t_stat);
        CHECK(rows[i].p == effects[i].p_value);
        CHECK(rows[i].category == to_string(map.category(effects[i])));
    }
    std::filesystem::remove(path);
}

}  // TEST_SUITE
