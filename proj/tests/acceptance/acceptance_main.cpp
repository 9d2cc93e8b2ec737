// Acceptance suite: nine end-to-end criteria, one pass/fail line each.
// Run all with no arguments or a single one with --criterion N.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "stresskit/linalg.hpp"
#include "stresskit/runio.hpp"
#include "stresskit/stats.hpp"
#include "stresskit/subspace.hpp"
#include "stresskit/synth.hpp"
#include "stresskit/traineval.hpp"

#include "../test_util.hpp"

using namespace stresskit;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            if (!detail.empty()) detail += "; ";
            detail += "FAILED: " + what;
        }
    }
    void note(const std::string& what) {
        if (!detail.empty()) detail += "; ";
        detail += what;
    }
};

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(4);
    ss << v;
    return ss.str();
}

// ---------------------------------------------------------- criterion 1 ----
// t-test p matches a quadrature oracle to 1e-9 on a (n, t) grid; null-data
// p-values are KS-uniform at the 1% level over >= 1000 synthetic cells.

Outcome criterion1() {
    Outcome out;
    double worst = 0.0;
    for (int n = 2; n <= 30; ++n) {
        for (double t = -8.0; t <= 8.0 + 1e-9; t += 0.5) {
            double fast = stats::student_t_two_sided_p(t, n - 1);
            double slow = testutil::t_two_sided_p_oracle(t, n - 1);
            worst = std::max(worst, std::abs(fast - slow));
        }
    }
    out.require(worst < 1e-9, "max |dp| vs quadrature oracle = " + fmt(worst));
    out.note("max |dp| " + fmt(worst));

    std::vector<double> pvals;
    for (std::uint64_t seed : {101ULL, 102ULL}) {
        synth::SynthConfig cfg;
        cfg.n_subjects = 10;
        cfg.sample_rate_hz = {{data::Modality::facial, 10.0}};
        cfg.phase_durations_s = {8, 6, 8, 6, 8};
        cfg.seed = seed;
        auto streams = runio::paired_streams_from_generated(synth::generate(cfg));
        for (const auto& e : stats::phase_effects(streams.facial, stats::SmoothingOperator::none_op()))
            if (e.valid) pvals.push_back(e.p_value);
    }
    double d = testutil::ks_uniform(pvals);
    double crit = 1.628 / std::sqrt(static_cast<double>(pvals.size()));
    out.require(pvals.size() >= 1000,
                "need >= 1000 null cells, got " + std::to_string(pvals.size()));
    out.require(d < crit, "KS D = " + fmt(d) + " vs 1% critical " + fmt(crit));
    out.note("KS D " + fmt(d) + " over " + std::to_string(pvals.size()) + " cells (crit " +
             fmt(crit) + ")");
    return out;
}

// ---------------------------------------------------------- criterion 2 ----
// Smoothing operators: k=1 identity exact, k=3 impulse response, spline
// interpolation at lambda=0, line-fit limit at lambda=1e12.

Outcome criterion2() {
    Outcome out;
    Rng rng(4242);
    std::vector<double> sig(64);
    for (auto& v : sig) v = rng.normal();
    auto ident = stats::smooth(sig, stats::SmoothingOperator::triangular(1), 10.0);
    out.require(ident.values == sig, "triangular k=1 identity (exact)");

    auto imp = stats::smooth({0, 0, 1, 0, 0}, stats::SmoothingOperator::triangular(3), 1.0);
    std::vector<double> want = {0.0, 0.25, 0.5, 0.25, 0.0};
    out.require(imp.values == want, "k=3 impulse response [0,0.25,0.5,0.25,0]");

    auto interp = stats::spline_fit(sig, 0.0, 10.0);
    double e0 = 0.0;
    for (std::size_t i = 0; i < sig.size(); ++i) e0 = std::max(e0, std::abs(interp[i] - sig[i]));
    out.require(e0 < 1e-8, "spline lambda=0 interpolation error " + fmt(e0));

    std::vector<double> x(sig.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i) / 10.0;
    auto line = linalg::fit_line(x, sig);
    auto flat = stats::spline_fit(sig, 1e12, 10.0);
    double einf = 0.0;
    for (std::size_t i = 0; i < sig.size(); ++i)
        einf = std::max(einf, std::abs(flat[i] - (line.intercept + line.slope * x[i])));
    out.require(einf < 1e-4, "spline lambda=1e12 vs line fit error " + fmt(einf));
    out.note("interp err " + fmt(e0) + ", line-limit err " + fmt(einf));
    return out;
}

// ---------------------------------------------------------- criterion 3 ----
// Gradient suite: every differentiable op < 1e-4 relative error vs central
// finite differences; each architecture end to end < 1e-3 on toy configs.

double op_gradient_error(const std::string& name) {
    using nd::Tape;
    Rng rng = Rng(Rng::mix(1000 + std::hash<std::string>{}(name)));
    auto rt = [&](std::vector<int> shape) { return testutil::random_tensor(shape, rng); };
    const int B = 2, T = 4, E = 6, H = 2;

    if (name == "matmul") {
        auto p = testutil::random_projection(5 * 4, rng);
        return testutil::GradCheck::run({rt({5, 3}), rt({3, 4})},
                                        [&](Tape<double>& t, const std::vector<int>& in) {
                                            return t.weighted_sum(t.matmul(in[0], in[1]), p);
                                        });
    }
    if (name == "add" || name == "sub" || name == "mul") {
        auto p = testutil::random_projection(4 * 5, rng);
        return testutil::GradCheck::run(
            {rt({4, 5}), rt({4, 5})}, [&](Tape<double>& t, const std::vector<int>& in) {
                int y = name == "add"   ? t.add(in[0], in[1])
                        : name == "sub" ? t.sub(in[0], in[1])
                                        : t.mul(in[0], in[1]);
                return t.weighted_sum(y, p);
            });
    }
    if (name == "scale") {
        auto p = testutil::random_projection(3 * 3, rng);
        return testutil::GradCheck::run({rt({3, 3})},
                                        [&](Tape<double>& t, const std::vector<int>& in) {
                                            return t.weighted_sum(t.scale(in[0], -2.3), p);
                                        });
    }
    if (name == "add_row_bias") {
        auto p = testutil::random_projection(4 * 6, rng);
        return testutil::GradCheck::run({rt({4, 6}), rt({1, 6})},
                                        [&](Tape<double>& t, const std::vector<int>& in) {
                                            return t.weighted_sum(t.add_row_bias(in[0], in[1]), p);
                                        });
    }
    if (name == "relu" || name == "tanh" || name == "sigmoid" || name == "softmax_rows") {
        auto p = testutil::random_projection(5 * 7, rng);
        return testutil::GradCheck::run(
            {rt({5, 7})}, [&](Tape<double>& t, const std::vector<int>& in) {
                int y = name == "relu"      ? t.relu(in[0])
                        : name == "tanh"    ? t.tanh_op(in[0])
                        : name == "sigmoid" ? t.sigmoid(in[0])
                                            : t.softmax_rows(in[0]);
                return t.weighted_sum(y, p);
            });
    }
    if (name == "layer_norm") {
        auto p = testutil::random_projection(4 * 8, rng);
        return testutil::GradCheck::run(
            {rt({4, 8}), rt({1, 8}), rt({1, 8})},
            [&](Tape<double>& t, const std::vector<int>& in) {
                return t.weighted_sum(t.layer_norm(in[0], in[1], in[2]), p);
            });
    }
    if (name == "depthwise_conv1d") {
        auto p = testutil::random_projection(8 * 4, rng);
        return testutil::GradCheck::run(
            {rt({8, 4}), rt({4, 5}), rt({1, 4})},
            [&](Tape<double>& t, const std::vector<int>& in) {
                return t.weighted_sum(t.depthwise_conv1d(in[0], in[1], in[2], 4), p);
            });
    }
    if (name == "concat_cols") {
        auto p = testutil::random_projection(3 * 7, rng);
        return testutil::GradCheck::run({rt({3, 4}), rt({3, 3})},
                                        [&](Tape<double>& t, const std::vector<int>& in) {
                                            return t.weighted_sum(t.concat_cols(in[0], in[1]), p);
                                        });
    }
    if (name == "dropout") {
        auto p = testutil::random_projection(6 * 5, rng);
        return testutil::GradCheck::run(
            {rt({6, 5})}, [&](Tape<double>& t, const std::vector<int>& in) {
                Rng drop(Rng::mix(4));
                return t.weighted_sum(t.dropout(in[0], 0.35, drop, true), p);
            });
    }
    if (name == "attn_scores") {
        auto p = testutil::random_projection(B * H * T * T, rng);
        return testutil::GradCheck::run(
            {rt({B * T, E}), rt({B * T, E})}, [&](Tape<double>& t, const std::vector<int>& in) {
                return t.weighted_sum(t.attn_scores(in[0], in[1], B, T, T, H), p);
            });
    }
    if (name == "attn_apply") {
        auto p = testutil::random_projection(B * T * E, rng);
        return testutil::GradCheck::run(
            {rt({B * H * T, T}), rt({B * T, E})},
            [&](Tape<double>& t, const std::vector<int>& in) {
                return t.weighted_sum(t.attn_apply(in[0], in[1], B, T, T, H), p);
            });
    }
    if (name == "block_softmax_col") {
        auto p = testutil::random_projection(B * T, rng);
        return testutil::GradCheck::run({rt({B * T, 1})},
                                        [&](Tape<double>& t, const std::vector<int>& in) {
                                            return t.weighted_sum(t.block_softmax_col(in[0], T), p);
                                        });
    }
    if (name == "block_weighted_sum") {
        auto p = testutil::random_projection(B * E, rng);
        return testutil::GradCheck::run(
            {rt({B * T, 1}), rt({B * T, E})}, [&](Tape<double>& t, const std::vector<int>& in) {
                return t.weighted_sum(t.block_weighted_sum(in[0], in[1], T), p);
            });
    }
    if (name == "add_pos_rows") {
        auto p = testutil::random_projection(B * T * E, rng);
        return testutil::GradCheck::run(
            {rt({B * T, E}), rt({T + 3, E})}, [&](Tape<double>& t, const std::vector<int>& in) {
                return t.weighted_sum(t.add_pos_rows(in[0], in[1], T), p);
            });
    }
    if (name == "bce_with_logits") {
        std::vector<double> labels = {1, 0, 1, 0, 0};
        return testutil::GradCheck::run({rt({5, 1})},
                                        [&](Tape<double>& t, const std::vector<int>& in) {
                                            return t.bce_with_logits_mean(in[0], labels);
                                        });
    }
    if (name == "mean_all") {
        return testutil::GradCheck::run({rt({4, 4})},
                                        [&](Tape<double>& t, const std::vector<int>& in) {
                                            return t.mean_all(in[0]);
                                        });
    }
    if (name == "sum_all") {
        return testutil::GradCheck::run({rt({4, 4})},
                                        [&](Tape<double>& t, const std::vector<int>& in) {
                                            return t.sum_all(in[0]);
                                        });
    }
    throw std::runtime_error("unknown op " + name);
}

double architecture_gradient_error(model::Fusion fusion) {
    using nd::Tape;
    model::ModelConfig cfg;
    cfg.embed_dim = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.dropout = 0.0;
    cfg.max_t = 12;
    cfg.head_hidden = 8;
    cfg.fusion = fusion == model::Fusion::cross_modal ? fusion : model::Fusion::unimodal;
    cfg.input_dim = fusion == model::Fusion::early ? 11 : 8;  // early: 8 + 3 fused channels
    cfg.input_dim_b = fusion == model::Fusion::cross_modal ? 3 : 0;

    model::StressModel<double> net(cfg, 90125);
    auto params = net.parameters();
    Rng rng(Rng::mix(5150)), drop(0);
    const int B = 2, T = 12;
    auto x = testutil::random_tensor({B * T, cfg.input_dim}, rng);
    std::optional<nd::Tensor<double>> xb;
    if (fusion == model::Fusion::cross_modal)
        xb = testutil::random_tensor({B * T, cfg.input_dim_b}, rng);
    std::vector<double> labels = {1.0, 0.0};

    auto loss_at = [&]() {
        Tape<double> t;
        Rng d(0);
        std::optional<int> xbi;
        if (xb) xbi = t.leaf(*xb, false);
        auto r = net.forward(t, t.leaf(x, false), xbi, B, T, false, d);
        return t.value(t.bce_with_logits_mean(r.logits, labels)).data[0];
    };

    Tape<double> tape;
    Rng d0(0);
    for (auto* p : params) p->zero_grad();
    std::optional<int> xbi;
    if (xb) xbi = tape.leaf(*xb, false);
    auto res = net.forward(tape, tape.leaf(x, false), xbi, B, T, false, d0);
    tape.backward(tape.bce_with_logits_mean(res.logits, labels));

    const double h = 1e-5;
    double max_abs = 0.0, denom = 0.0;
    for (auto* p : params) {
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            double saved = p->value.data[i];
            p->value.data[i] = saved + h;
            double fp = loss_at();
            p->value.data[i] = saved - h;
            double fm = loss_at();
            p->value.data[i] = saved;
            double fd = (fp - fm) / (2 * h);
            max_abs = std::max(max_abs, std::abs(fd - p->grad.data[i]));
            denom = std::max(denom, std::abs(fd));
        }
    }
    return max_abs / std::max(denom, 1e-8);
}

Outcome criterion3() {
    Outcome out;
    const char* ops[] = {"matmul",       "add",
                         "sub",          "mul",
                         "scale",        "add_row_bias",
                         "relu",         "tanh",
                         "sigmoid",      "softmax_rows",
                         "layer_norm",   "depthwise_conv1d",
                         "concat_cols",  "dropout",
                         "attn_scores",  "attn_apply",
                         "block_softmax_col", "block_weighted_sum",
                         "add_pos_rows", "bce_with_logits",
                         "mean_all",     "sum_all"};
    double worst_op = 0.0;
    std::string worst_name;
    for (const char* op : ops) {
        double e = op_gradient_error(op);
        if (e > worst_op) {
            worst_op = e;
            worst_name = op;
        }
        if (e >= 1e-4) out.require(false, std::string(op) + " rel err " + fmt(e));
    }
    out.note("worst op " + worst_name + " " + fmt(worst_op));

    struct Arch {
        const char* name;
        model::Fusion fusion;
    } archs[] = {{"unimodal", model::Fusion::unimodal},
                 {"early_fusion", model::Fusion::early},
                 {"cross_modal", model::Fusion::cross_modal}};
    for (const auto& a : archs) {
        double e = architecture_gradient_error(a.fusion);
        out.require(e < 1e-3, std::string(a.name) + " end-to-end rel err " + fmt(e));
        out.note(std::string(a.name) + " " + fmt(e));
    }
    return out;
}

// ---------------------------------------------------------- criterion 4 ----
// Fast AUROC equals brute force exactly on 500 random instances with ties;
// hand confusion-matrix cases for the threshold metrics.

Outcome criterion4() {
    Outcome out;
    Rng rng(777);
    int checked = 0;
    for (int rep = 0; rep < 500; ++rep) {
        int n = 2 + static_cast<int>(rng.uniform_index(199));
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool has0 = false, has1 = false;
        int levels = 2 + static_cast<int>(rng.uniform_index(30));
        for (int i = 0; i < n; ++i) {
            scores[i] = std::floor(rng.uniform() * levels) / levels;  // ties guaranteed
            labels[i] = rng.uniform() < 0.4 ? 1 : 0;
            (labels[i] ? has1 : has0) = true;
        }
        if (!has0 || !has1) {
            --rep;
            continue;
        }
        double fast = traineval::auroc(scores, labels);
        double brute = testutil::brute_force_auroc(scores, labels);
        if (fast != brute) {
            out.require(false, "auroc mismatch at instance " + std::to_string(rep) + ": " +
                                   fmt(fast) + " vs " + fmt(brute));
            break;
        }
        ++checked;
    }
    out.note(std::to_string(checked) + " instances exact");

    auto m1 = traineval::threshold_metrics({0.9, 0.1, 0.2, 0.3}, {1, 1, 0, 0});
    out.require(std::abs(m1.balanced_accuracy - 0.75) < 1e-12, "balanced accuracy hand case");
    out.require(std::abs(m1.accuracy - 0.75) < 1e-12, "accuracy hand case");
    out.require(std::abs(m1.f1 - 2.0 / 3.0) < 1e-12, "f1 hand case");
    auto m2 = traineval::threshold_metrics({0.9, 0.8, 0.2, 0.6}, {1, 1, 0, 1});
    out.require(std::abs(m2.f1 - 1.0) < 1e-12, "f1 all-correct case");
    out.require(std::abs(m2.balanced_accuracy - 1.0) < 1e-12, "bacc all-correct case");
    return out;
}

// ---------------------------------------------------------- criterion 5 ----
// stats_38 preset: exactly 38 facial channels significant (p < 0.001) in both
// stressor phases under spline smoothing; <= 2 false positives elsewhere.

Outcome criterion5() {
    Outcome out;
    auto cfg = synth::benchmark_preset("stats_38");
    auto streams = runio::paired_streams_from_generated(synth::generate(cfg));
    auto effects = stats::phase_effects(streams.facial, stats::SmoothingOperator::spline_auto());
    auto map = stats::significance_map(std::move(effects));
    auto strong = map.significant_in_both_stressors(stats::SummaryKind::velocity, 0.001);

    auto injected_list = synth::injected_channels(cfg);
    std::set<std::string> injected(injected_list.begin(), injected_list.end());
    int fp = 0;
    for (const auto& f : strong)
        if (!injected.count(f)) ++fp;

    out.require(strong.size() == 38,
                "significant-in-both count = " + std::to_string(strong.size()) + ", want 38");
    out.require(fp <= 2, "false positives = " + std::to_string(fp));
    out.note("count " + std::to_string(strong.size()) + ", false positives " + std::to_string(fp));
    return out;
}

// ---------------------------------------------------------- criterion 6 ----
// Classification benchmark: facial unimodal >= 0.90 AUROC; bio-only on
// weak_bio in [0.45, 0.60]; cross-modal facial+bio >= facial - 0.02 and
// >= bio + 0.25. 25 subjects, 5-fold subject-wise CV, fixed seed.

traineval::TrainOptions benchmark_options() {
    traineval::TrainOptions opts;
    opts.n_folds = 5;
    opts.val_fraction = 0.2;
    opts.max_epochs = 20;
    opts.patience = 5;
    opts.batch_size = 32;
    opts.lr = 1e-3;
    opts.seed = 606;
    opts.precision = "f32";
    opts.jobs = 2;
    opts.model.embed_dim = 32;
    opts.model.n_layers = 2;
    opts.model.n_heads = 4;
    opts.model.dropout = 0.2;
    opts.model.max_t = 90;
    opts.model.input_dim = 1;  // filled per row
    return opts;
}

Outcome criterion6() {
    Outcome out;
    auto opts = benchmark_options();
    features::WindowOptions wopts;

    auto strong_ds = traineval::build_dataset(
        runio::sessions_from_generated(synth::generate(synth::benchmark_preset("separable_strong"))),
        wopts);
    auto strong_report = traineval::run_experiment(
        strong_ds, {traineval::row_by_name("facial"), traineval::row_by_name("cross_facial_bio")},
        opts);
    double facial = *strong_report.row_aggregate_mean("facial", "auroc");
    double cross = *strong_report.row_aggregate_mean("cross_facial_bio", "auroc");

    auto weak_ds = traineval::build_dataset(
        runio::sessions_from_generated(synth::generate(synth::benchmark_preset("weak_bio"))), wopts);
    auto weak_report = traineval::run_experiment(weak_ds, {traineval::row_by_name("bio")}, opts);
    double bio = *weak_report.row_aggregate_mean("bio", "auroc");

    out.require(facial >= 0.90, "facial unimodal auroc " + fmt(facial) + " < 0.90");
    out.require(bio >= 0.45 && bio <= 0.60, "bio-only auroc " + fmt(bio) + " outside [0.45, 0.60]");
    out.require(cross >= facial - 0.02,
                "cross-modal auroc " + fmt(cross) + " < facial - 0.02 = " + fmt(facial - 0.02));
    out.require(cross >= bio + 0.25,
                "cross-modal auroc " + fmt(cross) + " < bio + 0.25 = " + fmt(bio + 0.25));
    out.note("facial " + fmt(facial) + ", cross " + fmt(cross) + ", bio " + fmt(bio));
    return out;
}

// ---------------------------------------------------------- criterion 7 ----
// Determinism: identical config and seed produce byte-identical metrics.json.

traineval::Dataset small_dataset(std::uint64_t seed) {
    synth::SynthConfig cfg;
    cfg.n_subjects = 6;
    cfg.phase_durations_s = {9, 9, 9, 9, 9};
    cfg.seed = seed;
    for (int i = 0; i < 5; ++i)
        cfg.effects.push_back({data::facial_channel_names()[i], synth::EffectKind::mean_shift, 2.5,
                               {data::PhaseLabel::P2, data::PhaseLabel::P4}});
    features::WindowOptions wopts;
    wopts.window_s = 3.0;
    return traineval::build_dataset(runio::sessions_from_generated(synth::generate(cfg)), wopts);
}

traineval::TrainOptions small_options() {
    traineval::TrainOptions opts;
    opts.n_folds = 3;
    opts.max_epochs = 4;
    opts.batch_size = 16;
    opts.seed = 31337;
    opts.model.embed_dim = 8;
    opts.model.n_layers = 1;
    opts.model.n_heads = 2;
    opts.model.dropout = 0.2;
    opts.model.max_t = 30;
    opts.model.head_hidden = 8;
    opts.model.input_dim = 1;
    return opts;
}

Outcome criterion7() {
    Outcome out;
    namespace fs = std::filesystem;
    auto work = fs::temp_directory_path() / "stresskit_acceptance7";
    fs::remove_all(work);
    fs::create_directories(work);

    auto rows = std::vector<traineval::RowSpec>{traineval::row_by_name("facial"),
                                                traineval::row_by_name("knn")};
    std::vector<std::string> dumps;
    for (int run = 0; run < 2; ++run) {
        auto ds = small_dataset(2024);  // regenerated from the same seed each run
        auto report = traineval::run_experiment(ds, rows, small_options());
        std::string path = (work / ("metrics_" + std::to_string(run) + ".json")).string();
        traineval::write_metrics_json(path, report);
        std::ifstream in(path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        dumps.push_back(ss.str());
    }
    out.require(!dumps[0].empty(), "metrics.json written");
    out.require(dumps[0] == dumps[1], "metrics.json bytes differ between identical runs");
    out.note(std::to_string(dumps[0].size()) + " bytes, identical");
    fs::remove_all(work);
    return out;
}

// ---------------------------------------------------------- criterion 8 ----
// Leakage guard: perturbing test-subject raw data changes no training-set
// normalized value and no NormalizationStats entry, exactly.

Outcome criterion8() {
    Outcome out;
    auto ds = small_dataset(77);
    auto opts = small_options();
    auto plans =
        traineval::make_folds(ds.subject_ids(), opts.n_folds, opts.val_fraction, opts.seed);
    const auto& plan = plans[0];
    auto row = traineval::row_by_name("facial");

    auto assemble_train = [&](const traineval::Dataset& d) {
        std::vector<Matrix> inputs;
        for (const auto& s : d.subjects) {
            bool is_train = false;
            for (const auto& t : plan.train_subjects) is_train |= (t == s.subject_id);
            if (!is_train) continue;
            for (const auto& w : s.windows)
                inputs.push_back(features::assemble_model_input(w, true, true, nullptr));
        }
        return inputs;
    };

    auto corrupted = ds;
    for (auto& s : corrupted.subjects) {
        bool is_test = false;
        for (const auto& t : plan.test_subjects) is_test |= (t == s.subject_id);
        if (!is_test) continue;
        for (auto& w : s.windows) {
            for (auto& v : w.facial.data) v = v * 3.7 + 1e5;
            for (auto& v : w.bio.data) v -= 44.0;
        }
    }

    auto train1 = assemble_train(ds);
    auto train2 = assemble_train(corrupted);
    std::vector<const Matrix*> p1, p2;
    for (auto& m : train1) p1.push_back(&m);
    for (auto& m : train2) p2.push_back(&m);
    auto s1 = features::fit_normalization(p1);
    auto s2 = features::fit_normalization(p2);
    out.require(s1.mean == s2.mean && s1.std == s2.std,
                "NormalizationStats changed after test-subject perturbation");

    bool values_equal = train1.size() == train2.size();
    for (std::size_t i = 0; values_equal && i < train1.size(); ++i) {
        features::apply_normalization(s1, train1[i]);
        features::apply_normalization(s2, train2[i]);
        values_equal = train1[i].data == train2[i].data;
    }
    out.require(values_equal, "normalized training values changed");

    auto tf1 = traineval::train_fold(plan, ds, row, opts);
    auto tf2 = traineval::train_fold(plan, corrupted, row, opts);
    out.require(tf1.bundle.at("norm_primary") == tf2.bundle.at("norm_primary"),
                "bundle normalization stats changed");
    out.require(tf1.bundle.at("tensors") == tf2.bundle.at("tensors"),
                "trained parameters changed");
    out.note("stats, normalized values and trained parameters bit-identical");
    return out;
}

// ---------------------------------------------------------- criterion 9 ----
// Subspace oracles: LDA within 5 degrees of the generative axis (N=2000),
// PCA orthonormality/reconstruction at 1e-8, exact label-swap negation.

Outcome criterion9() {
    Outcome out;
    Rng rng(31415);
    const int n = 2000, c = 4;
    std::vector<double> axis(c);
    double norm = 0.0;
    for (int j = 0; j < c; ++j) {
        axis[j] = rng.normal();
        norm += axis[j] * axis[j];
    }
    norm = std::sqrt(norm);
    for (auto& v : axis) v /= norm;

    Matrix x({n, c});
    std::vector<int> labels(n), swapped(n);
    for (int i = 0; i < n; ++i) {
        labels[i] = i % 2;
        swapped[i] = 1 - labels[i];
        for (int j = 0; j < c; ++j)
            x.at(i, j) = rng.normal() + (labels[i] ? 3.0 * axis[j] : 0.0);  // spherical classes
    }
    auto lda = subspace::fit_lda(x, labels);
    double dot = 0.0;
    for (int j = 0; j < c; ++j) dot += lda.direction[j] * axis[j];
    double angle = std::acos(std::min(1.0, std::abs(dot))) * 180.0 / 3.14159265358979323846;
    out.require(angle < 5.0, "LDA angle to generative axis " + fmt(angle) + " deg");
    out.note("LDA angle " + fmt(angle) + " deg");

    auto neg = subspace::fit_lda(x, swapped);
    bool exact = true;
    for (int j = 0; j < c; ++j) exact = exact && (neg.direction[j] == -lda.direction[j]);
    out.require(exact, "label swap does not negate the direction exactly");

    auto pca = subspace::fit_pca(x);
    double ortho = 0.0;
    for (int a = 0; a < c; ++a)
        for (int b = 0; b < c; ++b) {
            double s = 0.0;
            for (int k = 0; k < c; ++k) s += pca.components.at(k, a) * pca.components.at(k, b);
            ortho = std::max(ortho, std::abs(s - (a == b ? 1.0 : 0.0)));
        }
    out.require(ortho < 1e-8, "PCA orthonormality error " + fmt(ortho));

    Matrix scores = subspace::pca_scores(pca, x);
    double rec_err = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            double rec = pca.mean[j];
            for (int k = 0; k < c; ++k) rec += scores.at(i, k) * pca.components.at(j, k);
            rec_err = std::max(rec_err, std::abs(rec - x.at(i, j)));
        }
    out.require(rec_err < 1e-8, "PCA reconstruction error " + fmt(rec_err));
    out.note("ortho " + fmt(ortho) + ", reconstruction " + fmt(rec_err));
    return out;
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

const Criterion kCriteria[] = {
    {1, "statistical oracle (t CDF + null uniformity)", criterion1},
    {2, "smoothing operators", criterion2},
    {3, "gradient suite (ops + architectures)", criterion3},
    {4, "metric oracle (AUROC + confusion matrix)", criterion4},
    {5, "stats benchmark (stats_38)", criterion5},
    {6, "classification benchmark (separable_strong + weak_bio)", criterion6},
    {7, "determinism (byte-identical metrics.json)", criterion7},
    {8, "leakage guard (normalization isolation)", criterion8},
    {9, "subspace oracles (LDA/PCA)", criterion9},
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
    }
    int failures = 0;
    for (const auto& c : kCriteria) {
        if (only != 0 && c.id != only) continue;
        auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("exception: ") + e.what();
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (out.pass ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": " << c.name
                  << " (" << out.detail << ") [" << fmt(secs) << " s]" << std::endl;
        if (!out.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
