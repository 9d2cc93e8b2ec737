#include "stresskit/traineval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "stresskit/csv.hpp"
#include "stresskit/errors.hpp"
#include "stresskit/nd/checkpoint.hpp"
#include "stresskit/rng.hpp"

namespace stresskit::traineval {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- folds ----

std::vector<FoldPlan> make_folds(std::vector<std::string> subjects, int n_folds,
                                 double val_fraction, std::uint64_t seed) {
    const int n = static_cast<int>(subjects.size());
    if (n_folds < 2) throw ConfigError("need at least 2 folds");
    if (n < n_folds) throw ConfigError("fewer subjects than folds");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction in [0,1)");

    Rng rng = Rng(Rng::mix(seed)).fork("folds");
    rng.shuffle(subjects);

    // consecutive chunks; the first n % k chunks take one extra subject
    std::vector<FoldPlan> plans(n_folds);
    int base = n / n_folds, extra = n % n_folds;
    int pos = 0;
    std::vector<std::pair<int, int>> chunks(n_folds);  // (start, len)
    for (int f = 0; f < n_folds; ++f) {
        int len = base + (f < extra ? 1 : 0);
        chunks[f] = {pos, len};
        pos += len;
    }
    for (int f = 0; f < n_folds; ++f) {
        FoldPlan& p = plans[f];
        p.fold_id = f;
        auto [start, len] = chunks[f];
        for (int i = start; i < start + len; ++i) p.test_subjects.push_back(subjects[i]);
        // remaining subjects in ring order after the test chunk
        std::vector<std::string> rest;
        for (int i = 0; i < n - len; ++i) rest.push_back(subjects[(start + len + i) % n]);
        int n_val = std::max(1, static_cast<int>(std::ceil(val_fraction * rest.size())));
        if (n_val >= static_cast<int>(rest.size()))
            throw ConfigError("validation fraction leaves no training subjects");
        p.val_subjects.assign(rest.begin(), rest.begin() + n_val);
        p.train_subjects.assign(rest.begin() + n_val, rest.end());
    }
    return plans;
}

// --------------------------------------------------------------- metrics ---

namespace {
void check_two_classes(const std::vector<int>& labels) {
    int pos = 0, neg = 0;
    for (int l : labels) (l ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw DegenerateDataError("rank metrics need both classes present");
}
}  // namespace

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty()) throw ShapeError("auroc inputs");
    check_two_classes(labels);
    const int n = static_cast<int>(scores.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] < scores[b]; });
    // average ranks over tied groups; rank sum of positives
    double rank_sum_pos = 0.0;
    long n_pos = 0;
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        double avg_rank = 0.5 * static_cast<double>((i + 1) + (j + 1));
        for (int t = i; t <= j; ++t)
            if (labels[order[t]]) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    for (int l : labels) n_pos += l;
    long n_neg = n - n_pos;
    double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty()) throw ShapeError("auprc inputs");
    check_two_classes(labels);
    const int n = static_cast<int>(scores.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    long total_pos = 0;
    for (int l : labels) total_pos += l;
    double ap = 0.0;
    long tp = 0, fp = 0;
    double prev_recall = 0.0;
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        for (int t = i; t <= j; ++t) (labels[order[t]] ? tp : fp)++;
        double recall = static_cast<double>(tp) / total_pos;
        double precision = static_cast<double>(tp) / (tp + fp);
        ap += (recall - prev_recall) * precision;  // step-wise, no interpolation
        prev_recall = recall;
        i = j + 1;
    }
    return ap;
}

ThresholdMetrics threshold_metrics(const std::vector<double>& scores,
                                   const std::vector<int>& labels, double threshold) {
    if (scores.size() != labels.size() || scores.empty()) throw ShapeError("metric inputs");
    long tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        int pred = scores[i] >= threshold ? 1 : 0;
        if (pred && labels[i]) ++tp;
        else if (pred && !labels[i]) ++fp;
        else if (!pred && labels[i]) ++fn;
        else ++tn;
    }
    ThresholdMetrics m;
    m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(scores.size());
    m.f1 = (2 * tp + fp + fn) == 0 ? 0.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    if (tp + fn == 0 || tn + fp == 0)
        throw DegenerateDataError("balanced accuracy needs both classes present");
    double tpr = static_cast<double>(tp) / (tp + fn);
    double tnr = static_cast<double>(tn) / (tn + fp);
    m.balanced_accuracy = 0.5 * (tpr + tnr);
    return m;
}

Aggregate aggregate(const std::vector<std::optional<double>>& values) {
    Aggregate a;
    std::vector<double> v;
    for (const auto& x : values)
        if (x) v.push_back(*x);
    a.n = static_cast<int>(v.size());
    if (v.empty()) return a;
    double m = 0.0;
    for (double x : v) m += x;
    m /= v.size();
    a.mean = m;
    if (v.size() >= 2) {
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        a.stddev = std::sqrt(ss / (v.size() - 1));  // sample std over folds
    } else {
        a.stddev = 0.0;
    }
    return a;
}

// ------------------------------------------------------------------ rows ---

const char* to_string(RowKind k) {
    switch (k) {
        case RowKind::transformer: return "transformer";
        case RowKind::knn: return "knn";
        case RowKind::mlp: return "mlp";
    }
    return "?";
}

const char* to_string(StreamSel s) {
    switch (s) {
        case StreamSel::facial: return "facial";
        case StreamSel::bio: return "bio";
        case StreamSel::gaze: return "gaze";
    }
    return "?";
}

namespace {
StreamSel parse_stream(const std::string& s) {
    if (s == "facial") return StreamSel::facial;
    if (s == "bio") return StreamSel::bio;
    if (s == "gaze") return StreamSel::gaze;
    throw ConfigError("unknown stream '" + s + "'");
}
RowKind parse_kind(const std::string& s) {
    if (s == "transformer") return RowKind::transformer;
    if (s == "knn") return RowKind::knn;
    if (s == "mlp") return RowKind::mlp;
    throw ConfigError("unknown row kind '" + s + "'");
}
}  // namespace

std::vector<RowSpec> default_rows() {
    std::vector<RowSpec> rows;
    auto mk = [](std::string name, RowKind kind, model::Fusion fusion, StreamSel a, StreamSel b) {
        RowSpec r;
        r.name = std::move(name);
        r.kind = kind;
        r.fusion = fusion;
        r.primary = a;
        r.secondary = b;
        return r;
    };
    rows.push_back(mk("facial", RowKind::transformer, model::Fusion::unimodal, StreamSel::facial,
                      StreamSel::bio));
    rows.push_back(
        mk("bio", RowKind::transformer, model::Fusion::unimodal, StreamSel::bio, StreamSel::bio));
    rows.push_back(mk("early_facial_bio", RowKind::transformer, model::Fusion::early,
                      StreamSel::facial, StreamSel::bio));
    rows.push_back(mk("early_facial_gaze", RowKind::transformer, model::Fusion::early,
                      StreamSel::facial, StreamSel::gaze));
    rows.push_back(mk("cross_facial_bio", RowKind::transformer, model::Fusion::cross_modal,
                      StreamSel::facial, StreamSel::bio));
    rows.push_back(mk("cross_facial_gaze", RowKind::transformer, model::Fusion::cross_modal,
                      StreamSel::facial, StreamSel::gaze));
    rows.push_back(mk("cross_gaze_bio", RowKind::transformer, model::Fusion::cross_modal,
                      StreamSel::gaze, StreamSel::bio));
    rows.push_back(
        mk("knn", RowKind::knn, model::Fusion::unimodal, StreamSel::facial, StreamSel::bio));
    rows.push_back(
        mk("mlp", RowKind::mlp, model::Fusion::unimodal, StreamSel::facial, StreamSel::bio));
    return rows;
}

RowSpec row_by_name(const std::string& name) {
    for (const auto& r : default_rows())
        if (r.name == name) return r;
    throw ConfigError("unknown configuration row '" + name + "'");
}

// ---------------------------------------------------------------- dataset --

std::vector<std::string> Dataset::subject_ids() const {
    std::vector<std::string> out;
    for (const auto& s : subjects) out.push_back(s.subject_id);
    return out;
}

Dataset build_dataset(const std::vector<SubjectSessions>& sessions,
                      const features::WindowOptions& opts, bool include_nd_windows) {
    Dataset ds;
    for (const auto& s : sessions) {
        SubjectWindows sw;
        sw.subject_id = s.md.subject_id;
        auto set = features::build_windows(s.md, s.nd ? &*s.nd : nullptr, opts);
        if (ds.t_len == 0) ds.t_len = set.t_len;
        if (set.t_len != 0 && set.t_len != ds.t_len)
            throw ShapeError("window length differs across subjects");
        for (auto& w : set.windows) {
            if (w.baseline_descriptor) ds.has_baseline = true;
            sw.windows.push_back(std::move(w));
        }
        if (include_nd_windows && s.nd) {
            features::WindowOptions nd_opts = opts;
            nd_opts.compute_baseline = false;
            auto nd_set = features::build_windows(*s.nd, nullptr, nd_opts);
            for (auto& w : nd_set.windows) {
                w.label = 0;  // ND drives carry no stressor regardless of phase
                if (ds.has_baseline)
                    w.baseline_descriptor = std::vector<double>(w.facial.cols(), 0.0);
                sw.windows.push_back(std::move(w));
            }
        }
        ds.subjects.push_back(std::move(sw));
    }
    return ds;
}

// ---------------------------------------------------- input assembly -------

namespace {

Matrix stream_input(const features::Window& w, StreamSel sel, const RowSpec& row,
                    bool has_baseline) {
    switch (sel) {
        case StreamSel::facial:
            return features::assemble_model_input(w, row.include_delta,
                                                  row.include_baseline && has_baseline, nullptr);
        case StreamSel::bio:
            if (!w.bio.numel()) throw SchemaError("window has no bio stream");
            return w.bio;
        case StreamSel::gaze:
            if (!w.gaze_dyn.numel()) throw SchemaError("window has no gaze stream");
            return w.gaze_dyn;
    }
    throw ConfigError("bad stream selector");
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("hconcat row mismatch");
    Matrix out({a.rows(), a.cols() + b.cols()});
    for (int i = 0; i < a.rows(); ++i) {
        std::copy(a.row_ptr(i), a.row_ptr(i) + a.cols(), out.row_ptr(i));
        std::copy(b.row_ptr(i), b.row_ptr(i) + b.cols(), out.row_ptr(i) + a.cols());
    }
    return out;
}

struct AssembledWindow {
    Matrix primary;
    Matrix secondary;  // cross-modal only (empty otherwise)
    int label = 0;
};

struct Staged {
    std::vector<AssembledWindow> train, val, test;
    features::NormalizationStats norm_primary, norm_secondary;
    bool has_secondary = false;
};

enum class Role { train, val, test };

Role role_of(const FoldPlan& plan, const std::string& subject) {
    for (const auto& s : plan.test_subjects)
        if (s == subject) return Role::test;
    for (const auto& s : plan.val_subjects)
        if (s == subject) return Role::val;
    return Role::train;
}

Staged stage_windows(const FoldPlan& plan, const Dataset& ds, const RowSpec& row) {
    Staged st;
    st.has_secondary = row.fusion == model::Fusion::cross_modal;
    for (const auto& subj : ds.subjects) {
        Role role = role_of(plan, subj.subject_id);
        for (const auto& w : subj.windows) {
            AssembledWindow aw;
            aw.label = w.label;
            Matrix primary = stream_input(w, row.primary, row, ds.has_baseline);
            if (row.fusion == model::Fusion::early) {
                aw.primary = hconcat(primary, stream_input(w, row.secondary, row, ds.has_baseline));
            } else if (row.fusion == model::Fusion::cross_modal) {
                aw.primary = std::move(primary);
                aw.secondary = stream_input(w, row.secondary, row, ds.has_baseline);
            } else {
                aw.primary = std::move(primary);
            }
            auto& bucket = role == Role::train ? st.train : role == Role::val ? st.val : st.test;
            bucket.push_back(std::move(aw));
        }
    }
    if (st.train.size() < 2) throw InsufficientDataError("fold has fewer than 2 training windows");

    std::vector<const Matrix*> train_primary;
    for (const auto& aw : st.train) train_primary.push_back(&aw.primary);
    st.norm_primary = features::fit_normalization(train_primary);
    if (st.has_secondary) {
        std::vector<const Matrix*> train_secondary;
        for (const auto& aw : st.train) train_secondary.push_back(&aw.secondary);
        st.norm_secondary = features::fit_normalization(train_secondary);
    }
    for (auto* bucket : {&st.train, &st.val, &st.test})
        for (auto& aw : *bucket) {
            features::apply_normalization(st.norm_primary, aw.primary);
            if (st.has_secondary) features::apply_normalization(st.norm_secondary, aw.secondary);
        }
    return st;
}

// Summary-feature table (kNN / MLP baselines) on the facial-style input.
struct SummaryStaged {
    Matrix train_x, val_x, test_x;
    std::vector<int> train_y, val_y, test_y;
    features::NormalizationStats norm;
};

SummaryStaged stage_summaries(const FoldPlan& plan, const Dataset& ds, const RowSpec& row) {
    std::vector<std::vector<double>> rows_train, rows_val, rows_test;
    SummaryStaged st;
    for (const auto& subj : ds.subjects) {
        Role role = role_of(plan, subj.subject_id);
        for (const auto& w : subj.windows) {
            Matrix input = stream_input(w, row.primary, row, ds.has_baseline);
            auto summary = features::summary_features(input);
            auto& rows = role == Role::train ? rows_train : role == Role::val ? rows_val : rows_test;
            std::vector<int>& y = role == Role::train ? st.train_y : role == Role::val ? st.val_y : st.test_y;
            rows.push_back(std::move(summary));
            y.push_back(w.label);
        }
    }
    auto pack = [](const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) return Matrix();
        Matrix m({static_cast<int>(rows.size()), static_cast<int>(rows.front().size())});
        for (std::size_t i = 0; i < rows.size(); ++i)
            std::copy(rows[i].begin(), rows[i].end(), m.row_ptr(static_cast<int>(i)));
        return m;
    };
    st.train_x = pack(rows_train);
    st.val_x = pack(rows_val);
    st.test_x = pack(rows_test);
    if (st.train_x.rows() < 2) throw InsufficientDataError("fold has fewer than 2 training windows");
    st.norm = features::fit_normalization_rows(st.train_x);
    for (Matrix* m : {&st.train_x, &st.val_x, &st.test_x})
        if (m->numel()) features::apply_normalization(st.norm, *m);
    return st;
}

nlohmann::json norm_to_json(const features::NormalizationStats& s) {
    return {{"mean", s.mean}, {"std", s.std}};
}

features::NormalizationStats norm_from_json(const nlohmann::json& j) {
    features::NormalizationStats s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std = j.at("std").get<std::vector<double>>();
    return s;
}

nlohmann::json row_to_json(const RowSpec& r) {
    return {{"name", r.name},
            {"kind", to_string(r.kind)},
            {"fusion", model::to_string(r.fusion)},
            {"primary", to_string(r.primary)},
            {"secondary", to_string(r.secondary)},
            {"include_delta", r.include_delta},
            {"include_baseline", r.include_baseline}};
}

RowSpec row_from_json(const nlohmann::json& j) {
    RowSpec r;
    r.name = j.at("name").get<std::string>();
    r.kind = parse_kind(j.at("kind").get<std::string>());
    r.fusion = model::parse_fusion(j.at("fusion").get<std::string>());
    r.primary = parse_stream(j.at("primary").get<std::string>());
    r.secondary = parse_stream(j.at("secondary").get<std::string>());
    r.include_delta = j.at("include_delta").get<bool>();
    r.include_baseline = j.at("include_baseline").get<bool>();
    return r;
}

std::uint64_t fold_seed(const TrainOptions& opts, const RowSpec& row, int fold_id) {
    Rng r = Rng(Rng::mix(opts.seed)).fork(row.name).fork(static_cast<std::uint64_t>(fold_id));
    return Rng::mix(r.next_u64());
}

// ------------------------------------------------- templated training ------

template <typename T>
nd::Tensor<T> stack_windows(const std::vector<AssembledWindow>& ws, const std::vector<int>& idx,
                            bool secondary) {
    const Matrix& first = secondary ? ws[idx[0]].secondary : ws[idx[0]].primary;
    const int t_len = first.rows(), f = first.cols();
    nd::Tensor<T> out({static_cast<int>(idx.size()) * t_len, f});
    std::size_t o = 0;
    for (int i : idx) {
        const Matrix& m = secondary ? ws[i].secondary : ws[i].primary;
        for (std::size_t e = 0; e < m.data.size(); ++e) out.data[o + e] = static_cast<T>(m.data[e]);
        o += m.data.size();
    }
    return out;
}

template <typename T>
std::vector<T> gather_labels(const std::vector<AssembledWindow>& ws, const std::vector<int>& idx) {
    std::vector<T> y;
    y.reserve(idx.size());
    for (int i : idx) y.push_back(static_cast<T>(ws[i].label));
    return y;
}

struct EpochEntry {
    double train_loss;
    double val_loss;
};

// Shared epoch loop with best-checkpoint early stopping: stops once the
// validation loss has failed to improve for more than `patience` consecutive
// epochs; the best-validation parameters are restored at the end.
template <typename T, typename StepFn, typename ValFn>
std::vector<EpochEntry> run_epochs(std::vector<nd::Parameter<T>*> params, int n_train,
                                   const TrainOptions& opts, Rng& rng, StepFn&& step,
                                   ValFn&& val_loss_fn, int* epochs_run) {
    std::vector<EpochEntry> log;
    std::vector<nd::Tensor<T>> best;
    double best_val = std::numeric_limits<double>::infinity();
    int since_improve = 0;
    bool have_val = true;

    std::vector<int> order(n_train);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
        Rng erng = rng.fork("epoch").fork(static_cast<std::uint64_t>(epoch));
        erng.shuffle(order);
        double loss_sum = 0.0;
        long seen = 0;
        for (int b0 = 0; b0 < n_train; b0 += opts.batch_size) {
            std::vector<int> idx(order.begin() + b0,
                                 order.begin() + std::min(n_train, b0 + opts.batch_size));
            double l = step(idx);
            loss_sum += l * static_cast<double>(idx.size());
            seen += static_cast<long>(idx.size());
        }
        double train_loss = loss_sum / static_cast<double>(seen);
        double val = val_loss_fn(have_val);
        log.push_back({train_loss, val});
        if (!have_val) continue;  // no validation windows: run all epochs
        if (val < best_val - 1e-12) {
            best_val = val;
            since_improve = 0;
            best.clear();
            for (auto* p : params) best.push_back(p->value);
        } else {
            ++since_improve;
        }
        if (since_improve > opts.patience) break;
    }
    if (!best.empty())
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
    *epochs_run = static_cast<int>(log.size());
    return log;
}

template <typename T>
double sigmoid_scalar(T z) {
    return 1.0 / (1.0 + std::exp(-static_cast<double>(z)));
}

template <typename T>
TrainedFold train_transformer(const FoldPlan& plan, const Dataset& ds, const RowSpec& row,
                              const TrainOptions& opts) {
    Staged st = stage_windows(plan, ds, row);
    const int t_len = ds.t_len;
    model::ModelConfig cfg = opts.model;
    cfg.fusion = row.fusion == model::Fusion::cross_modal ? model::Fusion::cross_modal
                                                          : model::Fusion::unimodal;
    cfg.input_dim = st.train.front().primary.cols();
    cfg.input_dim_b = st.has_secondary ? st.train.front().secondary.cols() : 0;
    if (cfg.max_t < t_len) cfg.max_t = t_len;

    const std::uint64_t seed = fold_seed(opts, row, plan.fold_id);
    model::StressModel<T> net(cfg, seed);
    auto params = net.parameters();
    nd::Adam<T> adam(params, static_cast<T>(opts.lr));
    Rng rng(Rng::mix(seed ^ 0x5851f42d4c957f2dULL));
    Rng drop_rng = rng.fork("dropout");

    auto batch_loss = [&](const std::vector<AssembledWindow>& ws, const std::vector<int>& idx,
                          bool training, bool do_step) {
        nd::Tape<T> tape;
        int x = tape.leaf(stack_windows<T>(ws, idx, false), false);
        std::optional<int> xb;
        if (st.has_secondary) xb = tape.leaf(stack_windows<T>(ws, idx, true), false);
        auto res = net.forward(tape, x, xb, static_cast<int>(idx.size()), t_len, training, drop_rng);
        int loss = tape.bce_with_logits_mean(res.logits, gather_labels<T>(ws, idx));
        double value = static_cast<double>(tape.value(loss).data[0]);
        if (do_step) {
            adam.zero_grad();
            tape.backward(loss);
            adam.step();
        }
        return value;
    };

    auto eval_set_loss = [&](const std::vector<AssembledWindow>& ws) {
        double sum = 0.0;
        long n = 0;
        for (int b0 = 0; b0 < static_cast<int>(ws.size()); b0 += opts.batch_size) {
            std::vector<int> idx;
            for (int i = b0; i < std::min<int>(static_cast<int>(ws.size()), b0 + opts.batch_size); ++i)
                idx.push_back(i);
            sum += batch_loss(ws, idx, false, false) * static_cast<double>(idx.size());
            n += static_cast<long>(idx.size());
        }
        return sum / static_cast<double>(n);
    };

    int epochs_run = 0;
    auto log = run_epochs<T>(
        params, static_cast<int>(st.train.size()), opts, rng,
        [&](const std::vector<int>& idx) { return batch_loss(st.train, idx, true, true); },
        [&](bool& have_val) {
            if (st.val.empty()) {
                have_val = false;
                return 0.0;
            }
            return eval_set_loss(st.val);
        },
        &epochs_run);

    TrainedFold out;
    out.metrics.fold_id = plan.fold_id;
    out.metrics.epochs_run = epochs_run;
    for (const auto& e : log) out.metrics.epoch_log.push_back({e.train_loss, e.val_loss});

    // test scores with the restored best parameters
    for (std::size_t i = 0; i < st.test.size(); ++i) {
        std::vector<int> idx = {static_cast<int>(i)};
        nd::Tensor<T> x = stack_windows<T>(st.test, idx, false);
        std::optional<nd::Tensor<T>> xb;
        if (st.has_secondary) xb = stack_windows<T>(st.test, idx, true);
        auto logits = net.predict(x, xb ? &*xb : nullptr, 1, t_len);
        out.test_scores.push_back(sigmoid_scalar(logits[0]));
        out.test_labels.push_back(st.test[i].label);
    }
    out.metrics.n_test = static_cast<int>(out.test_labels.size());

    nlohmann::json bundle;
    bundle["format"] = "stresskit-bundle-v1";
    bundle["row"] = row_to_json(row);
    bundle["fold"] = plan.fold_id;
    bundle["seed"] = seed;
    bundle["precision"] = opts.precision;
    bundle["model_config"] = cfg.to_json();
    bundle["tensors"] = nd::params_to_json(params);
    bundle["norm_primary"] = norm_to_json(st.norm_primary);
    if (st.has_secondary) bundle["norm_secondary"] = norm_to_json(st.norm_secondary);
    nlohmann::json lj = nlohmann::json::array();
    for (const auto& e : log) lj.push_back({e.train_loss, e.val_loss});
    bundle["epoch_log"] = lj;
    out.bundle = std::move(bundle);
    return out;
}

template <typename T>
TrainedFold train_mlp(const FoldPlan& plan, const Dataset& ds, const RowSpec& row,
                      const TrainOptions& opts) {
    SummaryStaged st = stage_summaries(plan, ds, row);
    const std::uint64_t seed = fold_seed(opts, row, plan.fold_id);
    model::MlpModel<T> net(st.train_x.cols(), opts.model.dropout, seed);
    auto params = net.parameters();
    nd::Adam<T> adam(params, static_cast<T>(opts.lr));
    Rng rng(Rng::mix(seed ^ 0x9e3779b97f4a7c15ULL));
    Rng drop_rng = rng.fork("dropout");

    auto to_tensor = [](const Matrix& m, const std::vector<int>& idx) {
        nd::Tensor<T> out({static_cast<int>(idx.size()), m.cols()});
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (int j = 0; j < m.cols(); ++j)
                out.at(static_cast<int>(i), j) = static_cast<T>(m.at(idx[i], j));
        return out;
    };
    auto all_idx = [](const Matrix& m) {
        std::vector<int> idx(m.rows());
        std::iota(idx.begin(), idx.end(), 0);
        return idx;
    };

    auto batch_loss = [&](const Matrix& x, const std::vector<int>& y, const std::vector<int>& idx,
                          bool training, bool do_step) {
        nd::Tape<T> tape;
        int xi = tape.leaf(to_tensor(x, idx), false);
        int logits = net.forward(tape, xi, training, drop_rng);
        std::vector<T> yb;
        for (int i : idx) yb.push_back(static_cast<T>(y[i]));
        int loss = tape.bce_with_logits_mean(logits, yb);
        double value = static_cast<double>(tape.value(loss).data[0]);
        if (do_step) {
            adam.zero_grad();
            tape.backward(loss);
            adam.step();
        }
        return value;
    };

    int epochs_run = 0;
    auto log = run_epochs<T>(
        params, st.train_x.rows(), opts, rng,
        [&](const std::vector<int>& idx) { return batch_loss(st.train_x, st.train_y, idx, true, true); },
        [&](bool& have_val) {
            if (!st.val_x.numel()) {
                have_val = false;
                return 0.0;
            }
            return batch_loss(st.val_x, st.val_y, all_idx(st.val_x), false, false);
        },
        &epochs_run);

    TrainedFold out;
    out.metrics.fold_id = plan.fold_id;
    out.metrics.epochs_run = epochs_run;
    for (const auto& e : log) out.metrics.epoch_log.push_back({e.train_loss, e.val_loss});
    if (st.test_x.numel()) {
        nd::Tensor<T> x({st.test_x.rows(), st.test_x.cols()});
        for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = static_cast<T>(st.test_x.data[i]);
        auto logits = net.predict(x);
        for (std::size_t i = 0; i < logits.size(); ++i) {
            out.test_scores.push_back(sigmoid_scalar(logits[i]));
            out.test_labels.push_back(st.test_y[i]);
        }
    }
    out.metrics.n_test = static_cast<int>(out.test_labels.size());

    nlohmann::json bundle;
    bundle["format"] = "stresskit-bundle-v1";
    bundle["row"] = row_to_json(row);
    bundle["fold"] = plan.fold_id;
    bundle["seed"] = seed;
    bundle["precision"] = opts.precision;
    bundle["mlp_input_dim"] = st.train_x.cols();
    bundle["dropout"] = opts.model.dropout;
    bundle["tensors"] = nd::params_to_json(params);
    bundle["norm_primary"] = norm_to_json(st.norm);
    nlohmann::json lj = nlohmann::json::array();
    for (const auto& e : log) lj.push_back({e.train_loss, e.val_loss});
    bundle["epoch_log"] = lj;
    out.bundle = std::move(bundle);
    return out;
}

TrainedFold train_knn(const FoldPlan& plan, const Dataset& ds, const RowSpec& row,
                      const TrainOptions& opts) {
    SummaryStaged st = stage_summaries(plan, ds, row);
    TrainedFold out;
    out.metrics.fold_id = plan.fold_id;
    out.metrics.epochs_run = 0;
    if (st.test_x.numel()) {
        out.test_scores = model::knn_scores(st.train_x, st.train_y, st.test_x, opts.knn_k);
        out.test_labels = st.test_y;
    }
    out.metrics.n_test = static_cast<int>(out.test_labels.size());

    nlohmann::json bundle;
    bundle["format"] = "stresskit-bundle-v1";
    bundle["row"] = row_to_json(row);
    bundle["fold"] = plan.fold_id;
    bundle["seed"] = fold_seed(opts, row, plan.fold_id);
    bundle["k"] = opts.knn_k;
    bundle["train_x"] = nd::tensor_to_json(st.train_x);
    bundle["train_y"] = st.train_y;
    bundle["norm_primary"] = norm_to_json(st.norm);
    out.bundle = std::move(bundle);
    return out;
}

void fill_rank_metrics(FoldMetrics& m, const std::vector<double>& scores,
                       const std::vector<int>& labels) {
    if (scores.empty()) return;
    try {
        m.auroc_v = auroc(scores, labels);
        m.auprc_v = auprc(scores, labels);
    } catch (const DegenerateDataError&) {
        // single-class test fold: rank metrics stay invalid
    }
    try {
        auto tm = threshold_metrics(scores, labels);
        m.f1_v = tm.f1;
        m.accuracy_v = tm.accuracy;
        m.balanced_accuracy_v = tm.balanced_accuracy;
    } catch (const DegenerateDataError&) {
        long correct = 0, tp2 = 0, fp2 = 0, fn2 = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            int pred = scores[i] >= 0.5 ? 1 : 0;
            if (pred == labels[i]) ++correct;
            if (pred && labels[i]) ++tp2;
            if (pred && !labels[i]) ++fp2;
            if (!pred && labels[i]) ++fn2;
        }
        m.accuracy_v = static_cast<double>(correct) / scores.size();
        m.f1_v = (2 * tp2 + fp2 + fn2) == 0 ? 0.0
                                            : 2.0 * tp2 / static_cast<double>(2 * tp2 + fp2 + fn2);
    }
}

}  // namespace

TrainedFold train_fold(const FoldPlan& plan, const Dataset& dataset, const RowSpec& row,
                       const TrainOptions& opts) {
    TrainedFold out;
    if (row.kind == RowKind::knn) {
        out = train_knn(plan, dataset, row, opts);
    } else if (opts.precision == "f64") {
        out = row.kind == RowKind::transformer ? train_transformer<double>(plan, dataset, row, opts)
                                               : train_mlp<double>(plan, dataset, row, opts);
    } else if (opts.precision == "f32") {
        out = row.kind == RowKind::transformer ? train_transformer<float>(plan, dataset, row, opts)
                                               : train_mlp<float>(plan, dataset, row, opts);
    } else {
        throw ConfigError("precision must be f64 or f32");
    }
    fill_rank_metrics(out.metrics, out.test_scores, out.test_labels);
    return out;
}

namespace {

template <typename T>
std::vector<double> eval_bundle_scores(const nlohmann::json& bundle, const FoldPlan& plan,
                                       const Dataset& ds, const RowSpec& row,
                                       std::vector<int>& labels_out) {
    std::vector<double> scores;
    if (bundle.contains("model_config")) {
        model::ModelConfig cfg = model::ModelConfig::from_json(bundle.at("model_config"));
        model::StressModel<T> net(cfg, bundle.at("seed").get<std::uint64_t>());
        auto params = net.parameters();
        nd::params_from_json<T>(bundle.at("tensors"), params);
        auto norm_p = norm_from_json(bundle.at("norm_primary"));
        std::optional<features::NormalizationStats> norm_s;
        if (bundle.contains("norm_secondary")) norm_s = norm_from_json(bundle.at("norm_secondary"));

        for (const auto& subj : ds.subjects) {
            if (std::find(plan.test_subjects.begin(), plan.test_subjects.end(), subj.subject_id) ==
                plan.test_subjects.end())
                continue;
            for (const auto& w : subj.windows) {
                Matrix primary = stream_input(w, row.primary, row, ds.has_baseline);
                if (row.fusion == model::Fusion::early)
                    primary = hconcat(primary, stream_input(w, row.secondary, row, ds.has_baseline));
                features::apply_normalization(norm_p, primary);
                nd::Tensor<T> x({primary.rows(), primary.cols()});
                for (std::size_t i = 0; i < x.data.size(); ++i)
                    x.data[i] = static_cast<T>(primary.data[i]);
                std::optional<nd::Tensor<T>> xb;
                if (row.fusion == model::Fusion::cross_modal) {
                    Matrix sec = stream_input(w, row.secondary, row, ds.has_baseline);
                    features::apply_normalization(*norm_s, sec);
                    nd::Tensor<T> xbt({sec.rows(), sec.cols()});
                    for (std::size_t i = 0; i < xbt.data.size(); ++i)
                        xbt.data[i] = static_cast<T>(sec.data[i]);
                    xb = std::move(xbt);
                }
                auto logits = net.predict(x, xb ? &*xb : nullptr, 1, ds.t_len);
                scores.push_back(sigmoid_scalar(logits[0]));
                labels_out.push_back(w.label);
            }
        }
        return scores;
    }
    if (bundle.contains("mlp_input_dim")) {
        model::MlpModel<T> net(bundle.at("mlp_input_dim").get<int>(),
                               bundle.at("dropout").get<double>(),
                               bundle.at("seed").get<std::uint64_t>());
        auto params = net.parameters();
        nd::params_from_json<T>(bundle.at("tensors"), params);
        auto norm = norm_from_json(bundle.at("norm_primary"));
        for (const auto& subj : ds.subjects) {
            if (std::find(plan.test_subjects.begin(), plan.test_subjects.end(), subj.subject_id) ==
                plan.test_subjects.end())
                continue;
            for (const auto& w : subj.windows) {
                Matrix input = stream_input(w, row.primary, row, ds.has_baseline);
                auto summary = features::summary_features(input);
                const int dim = static_cast<int>(summary.size());
                Matrix srow({1, dim}, std::move(summary));
                features::apply_normalization(norm, srow);
                nd::Tensor<T> x({1, srow.cols()});
                for (std::size_t i = 0; i < x.data.size(); ++i)
                    x.data[i] = static_cast<T>(srow.data[i]);
                auto logits = net.predict(x);
                scores.push_back(sigmoid_scalar(logits[0]));
                labels_out.push_back(w.label);
            }
        }
        return scores;
    }
    // knn bundle
    Matrix train_x = nd::tensor_from_json<double>(bundle.at("train_x"));
    std::vector<int> train_y = bundle.at("train_y").get<std::vector<int>>();
    auto norm = norm_from_json(bundle.at("norm_primary"));
    int k = bundle.at("k").get<int>();
    std::vector<std::vector<double>> test_rows;
    for (const auto& subj : ds.subjects) {
        if (std::find(plan.test_subjects.begin(), plan.test_subjects.end(), subj.subject_id) ==
            plan.test_subjects.end())
            continue;
        for (const auto& w : subj.windows) {
            Matrix input = stream_input(w, row.primary, row, ds.has_baseline);
            test_rows.push_back(features::summary_features(input));
            labels_out.push_back(w.label);
        }
    }
    if (test_rows.empty()) return scores;
    Matrix test_x({static_cast<int>(test_rows.size()), static_cast<int>(test_rows.front().size())});
    for (std::size_t i = 0; i < test_rows.size(); ++i)
        std::copy(test_rows[i].begin(), test_rows[i].end(), test_x.row_ptr(static_cast<int>(i)));
    features::apply_normalization(norm, test_x);
    return model::knn_scores(train_x, train_y, test_x, k);
}

}  // namespace

FoldMetrics eval_bundle(const nlohmann::json& bundle, const FoldPlan& plan, const Dataset& dataset,
                        const TrainOptions& opts) {
    RowSpec row = row_from_json(bundle.at("row"));
    std::vector<int> labels;
    std::vector<double> scores;
    std::string precision = bundle.value("precision", opts.precision);
    if (precision == "f32")
        scores = eval_bundle_scores<float>(bundle, plan, dataset, row, labels);
    else
        scores = eval_bundle_scores<double>(bundle, plan, dataset, row, labels);
    FoldMetrics m;
    m.fold_id = plan.fold_id;
    m.n_test = static_cast<int>(labels.size());
    if (bundle.contains("epoch_log")) m.epochs_run = static_cast<int>(bundle.at("epoch_log").size());
    fill_rank_metrics(m, scores, labels);
    return m;
}

// ----------------------------------------------------------- experiment ----

nlohmann::json TrainOptions::to_json() const {
    return {{"n_folds", n_folds},       {"val_fraction", val_fraction},
            {"max_epochs", max_epochs}, {"patience", patience},
            {"batch_size", batch_size}, {"lr", lr},
            {"seed", seed},             {"precision", precision},
            {"jobs", jobs},             {"model", model.to_json()},
            {"knn_k", knn_k}};
}

TrainOptions TrainOptions::from_json(const nlohmann::json& j) {
    TrainOptions o;
    o.n_folds = j.value("n_folds", o.n_folds);
    o.val_fraction = j.value("val_fraction", o.val_fraction);
    o.max_epochs = j.value("max_epochs", o.max_epochs);
    o.patience = j.value("patience", o.patience);
    o.batch_size = j.value("batch_size", o.batch_size);
    o.lr = j.value("lr", o.lr);
    o.seed = j.value("seed", o.seed);
    o.precision = j.value("precision", o.precision);
    o.jobs = j.value("jobs", o.jobs);
    if (j.contains("model")) o.model = model::ModelConfig::from_json(j.at("model"));
    o.knn_k = j.value("knn_k", o.knn_k);
    return o;
}

nlohmann::json fold_metrics_to_json(const RowSpec& row, const FoldMetrics& m) {
    auto opt = [](const std::optional<double>& v) {
        return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    nlohmann::json j;
    j["row"] = row.name;
    j["fold"] = m.fold_id;
    j["n_test"] = m.n_test;
    j["epochs"] = m.epochs_run;
    j["auroc"] = opt(m.auroc_v);
    j["auprc"] = opt(m.auprc_v);
    j["f1"] = opt(m.f1_v);
    j["accuracy"] = opt(m.accuracy_v);
    j["balanced_accuracy"] = opt(m.balanced_accuracy_v);
    nlohmann::json lj = nlohmann::json::array();
    for (const auto& e : m.epoch_log) lj.push_back({e[0], e[1]});
    j["epoch_log"] = lj;
    return j;
}

FoldMetrics fold_metrics_from_json(const nlohmann::json& j) {
    FoldMetrics m;
    auto opt = [&](const char* key) -> std::optional<double> {
        if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
        return j.at(key).get<double>();
    };
    m.fold_id = j.at("fold").get<int>();
    m.n_test = j.at("n_test").get<int>();
    m.epochs_run = j.at("epochs").get<int>();
    m.auroc_v = opt("auroc");
    m.auprc_v = opt("auprc");
    m.f1_v = opt("f1");
    m.accuracy_v = opt("accuracy");
    m.balanced_accuracy_v = opt("balanced_accuracy");
    if (j.contains("epoch_log"))
        for (const auto& e : j.at("epoch_log"))
            m.epoch_log.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
    return m;
}

namespace {

struct MetricColumn {
    const char* name;
    std::optional<double> FoldMetrics::*field;
};

constexpr MetricColumn kMetricColumns[] = {
    {"auroc", &FoldMetrics::auroc_v},
    {"auprc", &FoldMetrics::auprc_v},
    {"f1", &FoldMetrics::f1_v},
    {"accuracy", &FoldMetrics::accuracy_v},
    {"balanced_accuracy", &FoldMetrics::balanced_accuracy_v},
};

nlohmann::json aggregate_json(const std::vector<FoldMetrics>& folds) {
    nlohmann::json agg;
    for (const auto& col : kMetricColumns) {
        std::vector<std::optional<double>> vals;
        for (const auto& f : folds) vals.push_back(f.*(col.field));
        Aggregate a = aggregate(vals);
        nlohmann::json e;
        e["mean"] = a.mean ? nlohmann::json(*a.mean) : nlohmann::json(nullptr);
        e["std"] = a.stddev ? nlohmann::json(*a.stddev) : nlohmann::json(nullptr);
        e["n"] = a.n;
        agg[col.name] = e;
    }
    return agg;
}

}  // namespace

nlohmann::json ExperimentReport::to_json() const {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    nlohmann::json rows_j = nlohmann::json::object();
    for (const auto& r : rows) {
        nlohmann::json rj;
        nlohmann::json folds_j = nlohmann::json::array();
        for (const auto& f : r.folds) folds_j.push_back(fold_metrics_to_json(r.row, f));
        rj["folds"] = folds_j;
        rj["aggregate"] = aggregate_json(r.folds);
        rows_j[r.row.name] = rj;
    }
    j["rows"] = rows_j;
    return j;
}

std::optional<double> ExperimentReport::row_aggregate_mean(const std::string& row_name,
                                                           const std::string& metric) const {
    for (const auto& r : rows) {
        if (r.row.name != row_name) continue;
        for (const auto& col : kMetricColumns) {
            if (metric != col.name) continue;
            std::vector<std::optional<double>> vals;
            for (const auto& f : r.folds) vals.push_back(f.*(col.field));
            return aggregate(vals).mean;
        }
    }
    return std::nullopt;
}

ExperimentReport run_experiment(const Dataset& dataset, const std::vector<RowSpec>& rows,
                                const TrainOptions& opts, const std::string* out_dir) {
    if (dataset.subjects.empty()) throw InsufficientDataError("empty dataset");
    auto plans = make_folds(dataset.subject_ids(), opts.n_folds, opts.val_fraction, opts.seed);

    ExperimentReport report;
    report.seed = opts.seed;
    {
        nlohmann::json cfg = opts.to_json();
        nlohmann::json row_names = nlohmann::json::array();
        for (const auto& r : rows) row_names.push_back(row_to_json(r));
        cfg["rows"] = row_names;
        std::uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : cfg.dump()) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        char buf[24];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        report.config_hash = buf;
    }

    if (out_dir) {
        fs::create_directories(*out_dir + "/checkpoints");
        fs::create_directories(*out_dir + "/fold_metrics");
    }

    for (const auto& row : rows) {
        RowReport rr;
        rr.row = row;
        rr.folds.resize(plans.size());
        std::vector<nlohmann::json> bundles(plans.size());

        int jobs = std::max(1, std::min(opts.jobs, static_cast<int>(plans.size())));
        std::exception_ptr first_error;
        std::mutex err_mutex;
        auto work = [&](int begin, int step) {
            for (std::size_t f = begin; f < plans.size(); f += step) {
                try {
                    TrainedFold tf = train_fold(plans[f], dataset, row, opts);
                    rr.folds[f] = tf.metrics;
                    bundles[f] = std::move(tf.bundle);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        };
        if (jobs == 1) {
            work(0, 1);
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < jobs; ++t) pool.emplace_back(work, t, jobs);
            for (auto& th : pool) th.join();
        }
        if (first_error) std::rethrow_exception(first_error);

        if (out_dir) {
            for (std::size_t f = 0; f < plans.size(); ++f) {
                std::string base = row.name + "_fold" + std::to_string(f);
                std::ofstream cp(*out_dir + "/checkpoints/" + base + ".json", std::ios::binary);
                cp << bundles[f].dump() << '\n';
                std::ofstream fm(*out_dir + "/fold_metrics/" + base + ".json", std::ios::binary);
                fm << fold_metrics_to_json(row, rr.folds[f]).dump(2) << '\n';
            }
        }
        report.rows.push_back(std::move(rr));
    }
    return report;
}

void write_metrics_json(const std::string& path, const ExperimentReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << report.to_json().dump(2) << '\n';
}

void write_comparison_csv(const std::string& path, const ExperimentReport& report) {
    std::vector<std::string> header = {"configuration"};
    for (const auto& col : kMetricColumns) {
        header.push_back(std::string(col.name) + "_mean");
        header.push_back(std::string(col.name) + "_std");
    }
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : report.rows) {
        std::vector<std::string> row = {r.row.name};
        for (const auto& col : kMetricColumns) {
            std::vector<std::optional<double>> vals;
            for (const auto& f : r.folds) vals.push_back(f.*(col.field));
            Aggregate a = aggregate(vals);
            row.push_back(a.mean ? csv::format_double(*a.mean) : "invalid");
            row.push_back(a.stddev ? csv::format_double(*a.stddev) : "invalid");
        }
        rows.push_back(std::move(row));
    }
    csv::write_rows(path, header, rows);
}

}  // namespace stresskit::traineval
