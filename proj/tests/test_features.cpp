#include <doctest.h>

#include <cmath>

#include "stresskit/errors.hpp"
#include "stresskit/features.hpp"
#include "stresskit/rng.hpp"
#include "test_util.hpp"

using namespace stresskit;
using namespace stresskit::features;

namespace {

data::FeatureSequence facial_seq(int frames, double fs = 10.0) {
    data::FeatureSequence s;
    s.channel_names = data::facial_channel_names();
    s.sample_rate_hz = fs;
    s.values = Matrix({frames, data::kFacialChannels});
    s.phase_of_frame.assign(frames, std::nullopt);
    return s;
}

data::FeatureSequence gaze_seq(const std::vector<double>& x, const std::vector<double>& y,
                               double fs) {
    data::FeatureSequence s;
    s.channel_names = data::gaze_channel_names();
    s.sample_rate_hz = fs;
    s.values = Matrix({static_cast<int>(x.size()), 2});
    for (std::size_t i = 0; i < x.size(); ++i) {
        s.values.at(static_cast<int>(i), 0) = x[i];
        s.values.at(static_cast<int>(i), 1) = y[i];
    }
    s.phase_of_frame.assign(x.size(), std::nullopt);
    return s;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("facial derivatives: constant, hand difference, single frame") {
    auto seq = facial_seq(3);
    seq.values.at(0, 0) = 0;
    seq.values.at(1, 0) = 1;
    seq.values.at(2, 0) = 3;
    auto d = facial_derivatives(seq);
    CHECK(d.channel_names[0] == "d_exp_00");
    CHECK(d.values.at(0, 0) == 0.0);
    CHECK(d.values.at(1, 0) == 1.0);
    CHECK(d.values.at(2, 0) == 2.0);
    for (int c = 1; c < 56; ++c)
        for (int t = 0; t < 3; ++t) CHECK(d.values.at(t, c) == 0.0);  // constant -> zero

    auto single = facial_seq(1);
    auto d1 = facial_derivatives(single);
    CHECK(d1.values.rows() == 1);
    for (int c = 0; c < 56; ++c) CHECK(d1.values.at(0, c) == 0.0);

    data::FeatureSequence wrong;
    wrong.channel_names = {"a", "b"};
    wrong.values = Matrix({2, 2});
    wrong.phase_of_frame.assign(2, std::nullopt);
    CHECK_THROWS_AS(facial_derivatives(wrong), SchemaError);
}

TEST_CASE("gaze dynamics: hand-traced velocities and the 3-4-5 speed") {
    auto s = gaze_seq({0, 1, 2}, {0, 0, 0}, 10.0);
    auto g = gaze_dynamics(s);
    const int vx = 0, speed = 2;
    CHECK(g.values.at(0, vx) == 0.0);
    CHECK(g.values.at(1, vx) == doctest::Approx(10.0));
    CHECK(g.values.at(2, vx) == doctest::Approx(10.0));
    CHECK(g.values.at(1, speed) == doctest::Approx(10.0));

    // static gaze: every dynamic channel 0
    auto st = gaze_dynamics(gaze_seq({2, 2, 2, 2}, {5, 5, 5, 5}, 10.0));
    for (int t = 0; t < 4; ++t)
        for (int c = 0; c < st.values.cols(); ++c) {
            if (st.channel_names[c] == "roll_mean_1s" || st.channel_names[c] == "roll_mean_3s")
                continue;  // rolling means of zero speed are zero anyway
            CHECK(st.values.at(t, c) == doctest::Approx(0.0));
        }

    // v_x=3, v_y=4 -> speed 5: positions step by (0.3, 0.4) at 10 Hz
    auto tri = gaze_dynamics(gaze_seq({0, 0.3}, {0, 0.4}, 10.0));
    CHECK(tri.values.at(1, speed) == doctest::Approx(5.0));

    CHECK_THROWS_AS(gaze_dynamics(gaze_seq({1}, {1}, 10.0)), InsufficientDataError);
}

TEST_CASE("gaze speed invariant under constant translation") {
    Rng rng(5);
    std::vector<double> x(40), y(40);
    for (int i = 0; i < 40; ++i) {
        x[i] = rng.normal();
        y[i] = rng.normal();
    }
    auto g1 = gaze_dynamics(gaze_seq(x, y, 10.0));
    for (auto& v : x) v += 100.0;
    for (auto& v : y) v -= 55.0;
    auto g2 = gaze_dynamics(gaze_seq(x, y, 10.0));
    int speed_col = 2;
    for (int t = 0; t < 40; ++t)
        CHECK(g1.values.at(t, speed_col) == doctest::Approx(g2.values.at(t, speed_col)));
}

TEST_CASE("segment_windows: counts, labels, threshold strictness") {
    // 200 frames at 10 Hz -> 2 windows of 90 frames, 20 dropped
    std::vector<std::optional<data::PhaseLabel>> phases(200, data::PhaseLabel::P1);
    auto slices = segment_windows(phases, 10.0);
    CHECK(slices.size() == 2);
    CHECK(slices[0].t_len == 90);
    CHECK(slices[1].start_frame == 90);

    // window fully inside P2 -> ratio 1, label stress
    std::vector<std::optional<data::PhaseLabel>> p2(90, data::PhaseLabel::P2);
    auto s2 = segment_windows(p2, 10.0);
    REQUIRE(s2.size() == 1);
    CHECK(s2[0].stress_ratio == doctest::Approx(1.0));
    CHECK(s2[0].label == 1);
    CHECK(*s2[0].phase_mode == data::PhaseLabel::P2);

    // exactly 36/90 stressor frames: ratio 0.4 -> no_stress (strict inequality)
    std::vector<std::optional<data::PhaseLabel>> mixed;
    for (int i = 0; i < 36; ++i) mixed.push_back(data::PhaseLabel::P2);
    for (int i = 0; i < 54; ++i) mixed.push_back(data::PhaseLabel::P3);
    auto s3 = segment_windows(mixed, 10.0);
    REQUIRE(s3.size() == 1);
    CHECK(s3[0].stress_ratio == doctest::Approx(0.4));
    CHECK(s3[0].label == 0);
    CHECK(*s3[0].phase_mode == data::PhaseLabel::P3);

    // 37/90 -> stress
    mixed[36] = data::PhaseLabel::P2;
    auto s4 = segment_windows(mixed, 10.0);
    CHECK(s4[0].label == 1);

    // frames with no phase count as non-stress
    std::vector<std::optional<data::PhaseLabel>> none_mix(90, std::nullopt);
    for (int i = 0; i < 36; ++i) none_mix[i] = data::PhaseLabel::P2;
    auto s5 = segment_windows(none_mix, 10.0);
    CHECK(s5[0].label == 0);

    // label monotonicity in the threshold
    for (double thr : {0.1, 0.3, 0.5, 0.9}) {
        auto lo = segment_windows(mixed, 10.0, 9.0, thr);
        auto hi = segment_windows(mixed, 10.0, 9.0, thr + 0.05);
        CHECK(lo[0].label >= hi[0].label);
    }

    CHECK_THROWS_AS(segment_windows(phases, 10.0, 0.1), ConfigError);  // T < 2
    CHECK_THROWS_AS(segment_windows(phases, 10.0, -1.0), ConfigError);
}

TEST_CASE("window count = floor(total / window) over random lengths") {
    Rng rng(9);
    for (int rep = 0; rep < 30; ++rep) {
        int total = 1 + static_cast<int>(rng.uniform_index(500));
        std::vector<std::optional<data::PhaseLabel>> phases(total, data::PhaseLabel::P1);
        auto slices = segment_windows(phases, 10.0, 3.0);
        CHECK(static_cast<int>(slices.size()) == total / 30);
    }
}

TEST_CASE("windows overlapping invalid frames are dropped") {
    std::vector<std::optional<data::PhaseLabel>> phases(180, data::PhaseLabel::P1);
    std::vector<char> valid(180, 1);
    valid[100] = 0;  // inside the second window
    auto slices = segment_windows(phases, 10.0, 9.0, 0.4, &valid);
    CHECK(slices.size() == 1);
    CHECK(slices[0].start_frame == 0);
}

TEST_CASE("velocity difference descriptor: spec examples and antisymmetry") {
    Matrix md({3, 2}), nd({3, 2});
    // identical windows -> zero
    auto z = velocity_difference_descriptor(md, nd);
    CHECK(z == std::vector<double>{0.0, 0.0});

    // both constant (different constants) -> zero (differences vanish)
    Matrix c1({3, 2});
    Matrix c2({3, 2});
    for (int t = 0; t < 3; ++t)
        for (int c = 0; c < 2; ++c) {
            c1.at(t, c) = 7.0;
            c2.at(t, c) = -2.5;
        }
    auto z2 = velocity_difference_descriptor(c1, c2);
    CHECK(z2[0] == doctest::Approx(0.0));

    // MD exp_00 = [0,2,4], ND = [0,1,2], T=3 -> component 1
    Matrix md2({3, 2}), nd2({3, 2});
    md2.at(0, 0) = 0;
    md2.at(1, 0) = 2;
    md2.at(2, 0) = 4;
    nd2.at(0, 0) = 0;
    nd2.at(1, 0) = 1;
    nd2.at(2, 0) = 2;
    auto d = velocity_difference_descriptor(md2, nd2);
    CHECK(d[0] == doctest::Approx(1.0));

    auto swapped = velocity_difference_descriptor(nd2, md2);
    CHECK(swapped[0] == doctest::Approx(-1.0));  // antisymmetric

    Matrix bad({4, 2});
    CHECK_THROWS_AS(velocity_difference_descriptor(md2, bad), ShapeError);
}

TEST_CASE("assemble_model_input dimensions") {
    Window w;
    w.facial = Matrix({90, 56});
    w.facial_delta = Matrix({90, 56});
    w.baseline_descriptor = std::vector<double>(56, 0.5);
    Matrix bio({90, 3});

    auto full = assemble_model_input(w, true, true, nullptr);
    CHECK(full.rows() == 90);
    CHECK(full.cols() == 168);  // 56 + 56 + 56

    auto facial_only = assemble_model_input(w, false, false, nullptr);
    CHECK(facial_only.cols() == 56);

    auto early = assemble_model_input(w, true, true, &bio);
    CHECK(early.cols() == 171);

    // baseline broadcast to every frame
    CHECK(full.at(0, 112) == 0.5);
    CHECK(full.at(89, 167) == 0.5);

    Matrix short_bio({45, 3});
    CHECK_THROWS_AS(assemble_model_input(w, true, true, &short_bio), ShapeError);

    Window no_base;
    no_base.facial = Matrix({4, 56});
    no_base.facial_delta = Matrix({4, 56});
    CHECK_THROWS_AS(assemble_model_input(no_base, true, true, nullptr), ConfigError);
}

TEST_CASE("normalization: degenerate channel, exact hand stats, non-idempotence") {
    Matrix w1({2, 2}), w2({2, 2});
    // channel 0 constant 5; channel 1 takes values -1, 1
    w1.at(0, 0) = 5;
    w1.at(1, 0) = 5;
    w2.at(0, 0) = 5;
    w2.at(1, 0) = 5;
    w1.at(0, 1) = -1;
    w1.at(1, 1) = -1;
    w2.at(0, 1) = 1;
    w2.at(1, 1) = 1;
    auto stats = fit_normalization({&w1, &w2});
    CHECK(stats.mean[0] == 5.0);
    CHECK(stats.std[0] == 1.0);  // clamped
    CHECK(stats.mean[1] == 0.0);
    CHECK(stats.std[1] == 1.0);  // population convention

    Matrix m = w1;
    apply_normalization(stats, m);
    CHECK(m.at(0, 0) == 0.0);
    CHECK(m.at(0, 1) == -1.0);

    // applying twice differs from applying once
    Matrix twice = m;
    apply_normalization(stats, twice);
    CHECK(twice.at(0, 0) != m.at(0, 0));

    CHECK_THROWS_AS(fit_normalization({}), InsufficientDataError);
    CHECK_THROWS_AS(fit_normalization({&w1}), InsufficientDataError);
}

TEST_CASE("train stats applied to train set give mean ~0 and std ~1") {
    Rng rng(21);
    std::vector<Matrix> windows;
    for (int i = 0; i < 8; ++i) {
        Matrix m({30, 5});
        for (auto& v : m.data) v = 3.0 + 2.5 * rng.normal();
        windows.push_back(std::move(m));
    }
    std::vector<const Matrix*> ptrs;
    for (auto& w : windows) ptrs.push_back(&w);
    auto stats = fit_normalization(ptrs);
    for (auto& w : windows) apply_normalization(stats, w);

    for (int c = 0; c < 5; ++c) {
        double mean = 0.0, var = 0.0;
        long n = 0;
        for (const auto& w : windows)
            for (int t = 0; t < w.rows(); ++t) {
                mean += w.at(t, c);
                ++n;
            }
        mean /= n;
        for (const auto& w : windows)
            for (int t = 0; t < w.rows(); ++t) var += (w.at(t, c) - mean) * (w.at(t, c) - mean);
        var /= n;
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
    }
}

TEST_CASE("normalization ignores non-train windows entirely") {
    Rng rng(23);
    Matrix train1({10, 3}), train2({10, 3}), test({10, 3});
    for (auto& v : train1.data) v = rng.normal();
    for (auto& v : train2.data) v = rng.normal();
    for (auto& v : test.data) v = rng.normal();
    auto s1 = fit_normalization({&train1, &train2});
    for (auto& v : test.data) v += 1e6;  // perturb a test window
    auto s2 = fit_normalization({&train1, &train2});
    CHECK(s1.mean == s2.mean);
    CHECK(s1.std == s2.std);
}

}  // TEST_SUITE
