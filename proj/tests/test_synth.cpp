#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "stresskit/errors.hpp"
#include "stresskit/stats.hpp"
#include "stresskit/synth.hpp"
#include "test_util.hpp"

using namespace stresskit;
using namespace stresskit::synth;

namespace {

SynthConfig small_config() {
    SynthConfig cfg;
    cfg.n_subjects = 4;
    cfg.phase_durations_s = {8, 6, 8, 6, 8};
    cfg.sample_rate_hz = {{data::Modality::facial, 10.0},
                          {data::Modality::bio, 10.0},
                          {data::Modality::gaze, 10.0}};
    cfg.seed = 7;
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("generated streams satisfy raw-stream invariants by construction") {
    auto subjects = generate(small_config());
    REQUIRE(subjects.size() == 4);
    for (const auto& g : subjects) {
        for (const auto* session : {&g.nd, &g.md}) {
            CHECK(session->streams.size() == 3);
            for (const auto& [mod, st] : session->streams) {
                (void)mod;
                for (std::size_t i = 1; i < st.timestamps.size(); ++i)
                    CHECK(st.timestamps[i] > st.timestamps[i - 1]);
                CHECK(st.values.all_finite());
            }
            CHECK(session->stream(data::Modality::facial).channels() == 56);
            CHECK(session->stream(data::Modality::bio).channels() == 3);
        }
        CHECK(g.nd.subject_id == g.md.subject_id);
    }
}

TEST_CASE("same seed gives byte-identical csv exports") {
    namespace fs = std::filesystem;
    auto root = fs::temp_directory_path() / ("synth_det_" + std::to_string(::getpid()));
    fs::remove_all(root);
    auto cfg = small_config();
    write_dataset((root / "a").string(), generate(cfg));
    write_dataset((root / "b").string(), generate(cfg));
    for (const auto& rel : {"S000/MD/facial.csv", "S001/ND/bio.csv", "S002/MD/gaze.csv",
                            "S003/ND/manifest.json"}) {
        CHECK(slurp((root / "a" / rel).string()) == slurp((root / "b" / rel).string()));
        CHECK(!slurp((root / "a" / rel).string()).empty());
    }
    fs::remove_all(root);
}

TEST_CASE("mean_shift raises the level only inside effect phases of MD") {
    auto cfg = small_config();
    cfg.n_subjects = 12;
    cfg.rho = 0.5;
    cfg.effects.push_back({"exp_00", EffectKind::mean_shift, 4.0,
                           {data::PhaseLabel::P2, data::PhaseLabel::P4}});
    auto subjects = generate(cfg);
    auto intervals = cfg.phase_intervals();
    double in_effect = 0.0, outside = 0.0, nd_in_effect = 0.0;
    long n_in = 0, n_out = 0, n_nd = 0;
    for (const auto& g : subjects) {
        const auto& md = g.md.stream(data::Modality::facial);
        const auto& nd = g.nd.stream(data::Modality::facial);
        for (int t = 0; t < md.frames(); ++t) {
            auto ph = data::phase_at(intervals, md.timestamps[t]);
            double center = md.values.at(t, 0);
            if (ph && data::is_stressor(*ph)) {
                in_effect += center;
                ++n_in;
                nd_in_effect += nd.values.at(t, 0);
                ++n_nd;
            } else {
                outside += center;
                ++n_out;
            }
        }
    }
    in_effect /= n_in;
    outside /= n_out;
    nd_in_effect /= n_nd;
    CHECK(in_effect - outside > 3.0);      // injected +4 sigma
    CHECK(std::abs(nd_in_effect) < 1.0);   // ND never carries effects
}

TEST_CASE("velocity_boost scales frame differences by about (1+m)") {
    auto cfg = small_config();
    cfg.n_subjects = 16;
    cfg.phase_durations_s = {20, 20, 20, 20, 20};
    const double m = 1.0;
    cfg.effects.push_back({"exp_01", EffectKind::velocity_boost, m,
                           {data::PhaseLabel::P2, data::PhaseLabel::P4}});
    auto subjects = generate(cfg);
    auto intervals = cfg.phase_intervals();
    double ss_in = 0.0, ss_out = 0.0;
    long n_in = 0, n_out = 0;
    for (const auto& g : subjects) {
        const auto& st = g.md.stream(data::Modality::facial);
        for (int t = 1; t < st.frames(); ++t) {
            auto ph0 = data::phase_at(intervals, st.timestamps[t - 1]);
            auto ph1 = data::phase_at(intervals, st.timestamps[t]);
            if (!ph0 || !ph1 || *ph0 != *ph1) continue;  // in-phase pairs only
            double d = st.values.at(t, 1) - st.values.at(t - 1, 1);
            if (data::is_stressor(*ph1)) {
                ss_in += d * d;
                ++n_in;
            } else {
                ss_out += d * d;
                ++n_out;
            }
        }
    }
    double ratio = std::sqrt((ss_in / n_in) / (ss_out / n_out));
    CHECK(ratio == doctest::Approx(1.0 + m).epsilon(0.08));
}

TEST_CASE("null config: MD and ND channel samples pass a two-sample KS test") {
    auto cfg = small_config();
    cfg.n_subjects = 6;
    cfg.subject_offset_sigma = 0.0;  // compare marginal distributions directly
    auto subjects = generate(cfg);
    std::vector<double> md_vals, nd_vals;
    for (const auto& g : subjects) {
        const auto& md = g.md.stream(data::Modality::facial);
        const auto& nd = g.nd.stream(data::Modality::facial);
        for (int t = 0; t < md.frames(); t += 7) {  // thin the AR(1) autocorrelation
            md_vals.push_back(md.values.at(t, 3));
            nd_vals.push_back(nd.values.at(t, 3));
        }
    }
    double d = testutil::ks_two_sample(md_vals, nd_vals);
    double crit = 1.628 * std::sqrt(static_cast<double>(md_vals.size() + nd_vals.size()) /
                                    (static_cast<double>(md_vals.size()) * nd_vals.size()));
    CHECK(d < crit);
}

TEST_CASE("null effects give ~alpha false positive rate across runs") {
    // Monte Carlo: magnitude-0 config, mean-level cells at alpha = 0.05
    Rng seed_rng(99);
    long cells = 0, hits = 0;
    for (int run = 0; run < 40; ++run) {
        auto cfg = small_config();
        cfg.n_subjects = 8;
        cfg.sample_rate_hz = {{data::Modality::facial, 10.0}};
        cfg.seed = seed_rng.next_u64();
        auto subjects = generate(cfg);
        std::vector<stats::SubjectPairedSequences> paired;
        for (const auto& g : subjects) {
            stats::SubjectPairedSequences p;
            p.subject_id = g.md.subject_id;
            auto md = data::align_to_reference(g.md, data::Modality::facial);
            auto nd = data::align_to_reference(g.nd, data::Modality::facial);
            p.md = md.seq(data::Modality::facial);
            p.nd = nd.seq(data::Modality::facial);
            // restrict to 4 channels to keep the run fast
            p.md.values = Matrix({p.md.frames(), 4},
                                 std::vector<double>(p.md.values.data.begin(),
                                                     p.md.values.data.begin() + p.md.frames() * 4));
            p.md.channel_names.resize(4);
            p.nd.values = Matrix({p.nd.frames(), 4},
                                 std::vector<double>(p.nd.values.data.begin(),
                                                     p.nd.values.data.begin() + p.nd.frames() * 4));
            p.nd.channel_names.resize(4);
            paired.push_back(std::move(p));
        }
        for (const auto& e : stats::phase_effects(paired, stats::SmoothingOperator::none_op())) {
            if (!e.valid || e.kind != stats::SummaryKind::mean_level) continue;
            ++cells;
            if (e.p_value < 0.05) ++hits;
        }
    }
    // binomial CI: 40 runs x 20 cells = 800 cells, p=0.05 -> mean 40, sd ~6.2
    double rate = static_cast<double>(hits) / static_cast<double>(cells);
    CHECK(cells >= 500);
    CHECK(rate > 0.05 - 4.5 * std::sqrt(0.05 * 0.95 / static_cast<double>(cells)));
    CHECK(rate < 0.05 + 4.5 * std::sqrt(0.05 * 0.95 / static_cast<double>(cells)));
}

TEST_CASE("more subjects means more power (mean p decreases)") {
    Rng seed_rng(1234);
    auto mean_p = [&](int n_subjects, std::uint64_t seed) {
        auto cfg = small_config();
        cfg.n_subjects = n_subjects;
        cfg.rho = 0.3;  // tight phase means keep the Monte Carlo separation clean
        cfg.sample_rate_hz = {{data::Modality::facial, 10.0}};
        cfg.seed = seed;
        cfg.effects.push_back({"exp_00", EffectKind::mean_shift, 0.4,
                               {data::PhaseLabel::P2, data::PhaseLabel::P4}});
        auto subjects = generate(cfg);
        std::vector<stats::SubjectPairedSequences> paired;
        for (const auto& g : subjects) {
            stats::SubjectPairedSequences p;
            p.subject_id = g.md.subject_id;
            p.md = data::align_to_reference(g.md, data::Modality::facial).seq(data::Modality::facial);
            p.nd = data::align_to_reference(g.nd, data::Modality::facial).seq(data::Modality::facial);
            p.md.values = Matrix({p.md.frames(), 1},
                                 std::vector<double>(p.md.values.data.begin(),
                                                     p.md.values.data.begin() + p.md.frames()));
            p.md.channel_names.resize(1);
            p.nd.values = Matrix({p.nd.frames(), 1},
                                 std::vector<double>(p.nd.values.data.begin(),
                                                     p.nd.values.data.begin() + p.nd.frames()));
            p.nd.channel_names.resize(1);
            paired.push_back(std::move(p));
        }
        double sum = 0.0;
        int n = 0;
        for (const auto& e : stats::phase_effects(paired, stats::SmoothingOperator::none_op())) {
            if (!e.valid || e.kind != stats::SummaryKind::mean_level) continue;
            if (!data::is_stressor(e.phase)) continue;
            sum += std::log(std::max(e.p_value, 1e-300));
            ++n;
        }
        return sum / n;
    };
    double small_sum = 0.0, big_sum = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
        std::uint64_t s = seed_rng.next_u64();
        small_sum += mean_p(4, s);
        big_sum += mean_p(8, s + 1);
    }
    CHECK(big_sum < small_sum);  // doubling subjects shrinks p on average
}

TEST_CASE("presets") {
    auto s38 = benchmark_preset("stats_38");
    CHECK(s38.n_subjects == 24);
    CHECK(injected_channels(s38).size() == 38);
    for (const auto& e : s38.effects) CHECK(e.kind == EffectKind::velocity_boost);

    auto strong = benchmark_preset("separable_strong");
    CHECK(strong.n_subjects == 25);
    auto weak = benchmark_preset("weak_bio");
    double weak_bio_mag = 0.0, strong_bio_mag = 0.0;
    for (const auto& e : weak.effects)
        if (e.channel == "hr") weak_bio_mag = std::max(weak_bio_mag, e.magnitude);
    for (const auto& e : strong.effects)
        if (e.channel == "hr") strong_bio_mag = std::max(strong_bio_mag, e.magnitude);
    CHECK(weak_bio_mag < 0.1);
    CHECK(strong_bio_mag >= 0.5);

    CHECK_THROWS_AS(benchmark_preset("nope"), ConfigError);
    CHECK_THROWS_AS([] {
        auto bad = benchmark_preset("stats_38");
        bad.phase_durations_s[2] = -1.0;
        return generate(bad);
    }(), ConfigError);
}

TEST_CASE("synth config json round trip") {
    auto cfg = benchmark_preset("separable_strong");
    auto j = cfg.to_json();
    auto back = SynthConfig::from_json(j);
    CHECK(back.n_subjects == cfg.n_subjects);
    CHECK(back.effects.size() == cfg.effects.size());
    CHECK(back.seed == cfg.seed);
    CHECK(back.to_json() == j);
}

}  // TEST_SUITE
