// stresskit CLI: synthetic data generation, ingestion checks, feature export,
// phase-wise statistics, PCA/LDA subspace analysis, model training and
// evaluation. Subcommands read a JSON config (when given) with every key
// overridable by flags; each run directory receives the resolved config and
// seed so reruns are reproducible from artifacts alone.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "stresskit/csv.hpp"
#include "stresskit/errors.hpp"
#include "stresskit/kernels.hpp"
#include "stresskit/runio.hpp"
#include "stresskit/subspace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stresskit;

namespace {

std::string resolve_out(const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    if (const char* root = std::getenv("STRESSKIT_OUT_ROOT"))
        return std::string(root) + "/" + path;
    return path;
}

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    return runio::read_json_file(path);
}

template <typename T>
T cfg_get(const json& cfg, const std::string& key, T fallback) {
    return cfg.contains(key) ? cfg.at(key).get<T>() : fallback;
}

struct CommonArgs {
    std::string config_path;
    std::string data_dir;
    std::string out_dir;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_data = true) {
    cmd->add_option("--config", args.config_path, "JSON config file");
    if (with_data) cmd->add_option("--in,--data", args.data_dir, "dataset root directory");
    cmd->add_option("--out", args.out_dir, "output run directory");
    cmd->add_flag("--force", args.force, "allow writing into a non-empty run directory");
}

void stamp_run_dir(const std::string& out, const json& resolved) {
    runio::write_json_file(out + "/resolved_config.json", resolved);
}

// ---------------------------------------------------------------- synth ----

int cmd_synth(const CommonArgs& args, const std::string& preset, int subjects_override,
              std::uint64_t seed_override, bool seed_set) {
    json cfg = load_config_file(args.config_path);
    synth::SynthConfig sc;
    std::string preset_name = preset;
    if (preset_name.empty() && cfg.contains("synth") && cfg.at("synth").contains("preset"))
        preset_name = cfg.at("synth").at("preset").get<std::string>();
    if (!preset_name.empty())
        sc = synth::benchmark_preset(preset_name);
    else if (cfg.contains("synth"))
        sc = synth::SynthConfig::from_json(cfg.at("synth"));
    if (subjects_override > 0) sc.n_subjects = subjects_override;
    if (seed_set) sc.seed = seed_override;

    std::string out = resolve_out(args.out_dir);
    if (out.empty()) throw ConfigError("synth needs --out");
    runio::ensure_run_dir(out, args.force);

    auto subjects = synth::generate(sc);
    synth::write_dataset(out, subjects);

    json resolved;
    resolved["command"] = "synth";
    resolved["preset"] = preset_name;
    resolved["synth"] = sc.to_json();
    stamp_run_dir(out, resolved);

    int windows_hint = static_cast<int>(sc.total_duration_s() / 9.0);
    std::cout << "synth: wrote " << subjects.size() << " subjects (MD+ND) to " << out << "\n"
              << "  phases total " << sc.total_duration_s() << " s, ~" << windows_hint
              << " windows of 9 s per drive\n";
    return 0;
}

// --------------------------------------------------------------- ingest ----

int cmd_ingest(const CommonArgs& args) {
    if (args.data_dir.empty()) throw ConfigError("ingest needs --in");
    json summary = json::object();
    int sessions = 0;
    for (const auto& subject : runio::list_subjects(args.data_dir)) {
        for (const std::string cond : {"MD", "ND"}) {
            std::string dir = args.data_dir + "/" + subject + "/" + cond;
            if (!fs::exists(dir + "/manifest.json")) continue;
            auto session = runio::load_session(dir);
            ++sessions;
            json cj = json::object();
            for (const auto& [mod, cs] : session.cleaning) {
                cj[data::to_string(mod)] = {{"kept", cs.kept},
                                            {"dropped_nonmonotonic", cs.dropped_nonmonotonic},
                                            {"dropped_nonfinite", cs.dropped_nonfinite}};
            }
            summary[subject + "/" + cond] = cj;
        }
    }
    std::cout << "ingest: " << sessions << " sessions validated\n";
    if (!args.out_dir.empty()) {
        std::string out = resolve_out(args.out_dir);
        runio::ensure_run_dir(out, args.force);
        runio::write_json_file(out + "/cleaning_summary.json", summary);
        std::cout << "  cleaning summary written to " << out << "/cleaning_summary.json\n";
    }
    return 0;
}

// ------------------------------------------------------------- features ----

int cmd_features(const CommonArgs& args, double window_s, double threshold, bool include_nd) {
    json cfg = load_config_file(args.config_path);
    if (args.data_dir.empty()) throw ConfigError("features needs --in");
    std::string out = resolve_out(args.out_dir);
    if (out.empty()) throw ConfigError("features needs --out");

    features::WindowOptions opts;
    opts.window_s = window_s;
    opts.stress_threshold = threshold;
    auto dataset = runio::load_dataset(args.data_dir, opts, include_nd);
    runio::ensure_run_dir(out, args.force);

    // flatten per-subject window sets into one table
    features::WindowSet all;
    all.t_len = dataset.t_len;
    std::size_t n = 0;
    for (auto& s : dataset.subjects)
        for (auto& w : s.windows) {
            all.windows.push_back(std::move(w));
            ++n;
        }
    features::write_windows_csv(out + "/windows.csv", {&all});

    json resolved = {{"command", "features"},
                     {"data", args.data_dir},
                     {"window_s", window_s},
                     {"stress_threshold", threshold},
                     {"include_nd_windows", include_nd}};
    stamp_run_dir(out, resolved);
    std::cout << "features: " << n << " windows of " << dataset.t_len << " frames -> " << out
              << "/windows.csv\n";
    return 0;
}

// ---------------------------------------------------------------- stats ----

int cmd_stats(const CommonArgs& args, const std::string& smoothing, double param) {
    if (args.data_dir.empty()) throw ConfigError("stats needs --in");
    std::string out = resolve_out(args.out_dir);
    if (out.empty()) throw ConfigError("stats needs --out");

    auto op = stats::parse_smoothing(smoothing, param);
    auto streams = runio::load_paired_streams(args.data_dir);
    if (streams.facial.empty()) throw InsufficientDataError("no MD/ND paired subjects found");

    auto effects = stats::phase_effects(streams.facial, op);
    if (!streams.bio.empty()) {
        // physiological channels analyzed on raw signals
        auto bio_effects = stats::phase_effects(streams.bio, stats::SmoothingOperator::none_op());
        effects.insert(effects.end(), bio_effects.begin(), bio_effects.end());
    }
    auto map = stats::significance_map(std::move(effects));

    runio::ensure_run_dir(out, args.force);
    stats::write_report_csv(out + "/stats_report.csv", map, op);
    json counts = map.summary_counts();
    runio::write_json_file(out + "/significance_summary.json", counts);

    json resolved = {{"command", "stats"},
                     {"data", args.data_dir},
                     {"smoothing", smoothing},
                     {"param", param}};
    stamp_run_dir(out, resolved);

    std::cout << "stats: " << map.effects.size() << " cells (" << streams.facial.size()
              << " paired subjects) -> " << out << "/stats_report.csv\n";
    for (const auto& [key, value] : counts.items())
        std::cout << "  " << key << " = " << value << "\n";
    return 0;
}

// -------------------------------------------------------------- subspace ---

int cmd_subspace(const CommonArgs& args) {
    if (args.data_dir.empty()) throw ConfigError("subspace needs --in");
    std::string out = resolve_out(args.out_dir);
    if (out.empty()) throw ConfigError("subspace needs --out");

    auto aligned = runio::load_aligned(args.data_dir);
    // pooled MD facial frames with a phase label; stress = stressor phase
    std::vector<const data::AlignedSession*> sessions;
    long rows = 0;
    for (const auto& sa : aligned) {
        rows += sa.md.frames();
        sessions.push_back(&sa.md);
    }
    Matrix pool({static_cast<int>(rows), data::kFacialChannels});
    std::vector<int> labels;
    labels.reserve(rows);
    int r = 0;
    for (const auto* s : sessions) {
        const auto& seq = s->seq(data::Modality::facial);
        for (int t = 0; t < seq.frames(); ++t) {
            if (!s->phase_of_frame[t]) continue;
            std::copy(seq.values.row_ptr(t), seq.values.row_ptr(t) + data::kFacialChannels,
                      pool.row_ptr(r));
            labels.push_back(data::is_stressor(*s->phase_of_frame[t]) ? 1 : 0);
            ++r;
        }
    }
    Matrix frames({r, data::kFacialChannels});
    std::copy(pool.data.begin(), pool.data.begin() + static_cast<std::size_t>(r) * data::kFacialChannels,
              frames.data.begin());

    auto std_stats = subspace::fit_standardizer(frames);
    Matrix z = subspace::standardize(std_stats, frames);
    auto pca = subspace::fit_pca(z);
    auto ranking = subspace::rank_stress_components(pca, z, labels);
    auto lda = subspace::fit_lda(z, labels);
    auto perturbed = subspace::perturb_along_axis(std_stats.mean, lda.direction, lda.sigma_proj);

    runio::ensure_run_dir(out, args.force);
    const auto& channels = data::facial_channel_names();
    subspace::write_pca_report_csv(out + "/pca_report.csv", channels, pca, ranking);
    subspace::write_lda_axis_csv(out + "/lda_axis.csv", channels, lda);
    subspace::write_perturbed_csv(out + "/perturbed_coeffs.csv", channels, std_stats.mean, perturbed);

    json resolved = {{"command", "subspace"}, {"data", args.data_dir}};
    stamp_run_dir(out, resolved);

    std::cout << "subspace: " << r << " labeled frames; top components:";
    for (int i = 0; i < 3 && i < static_cast<int>(ranking.size()); ++i)
        std::cout << " PC" << ranking[i].component << " (r="
                  << csv::format_double(ranking[i].correlation) << ")";
    std::cout << "\n  reports -> " << out << "\n";
    return 0;
}

// ---------------------------------------------------------------- train ----

traineval::TrainOptions train_options_from(const json& cfg, std::uint64_t seed_override,
                                           bool seed_set, int jobs_override) {
    traineval::TrainOptions opts;
    if (cfg.contains("train")) opts = traineval::TrainOptions::from_json(cfg.at("train"));
    if (seed_set) opts.seed = seed_override;
    if (jobs_override > 0) opts.jobs = jobs_override;
    return opts;
}

std::vector<traineval::RowSpec> rows_from(const json& cfg, const std::string& rows_flag) {
    std::vector<std::string> names;
    if (!rows_flag.empty()) {
        std::string cur;
        for (char c : rows_flag + ",") {
            if (c == ',') {
                if (!cur.empty()) names.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
    } else if (cfg.contains("rows")) {
        names = cfg.at("rows").get<std::vector<std::string>>();
    }
    if (names.empty()) return traineval::default_rows();
    std::vector<traineval::RowSpec> rows;
    for (const auto& n : names) rows.push_back(traineval::row_by_name(n));
    return rows;
}

int cmd_train(const CommonArgs& args, std::uint64_t seed_override, bool seed_set,
              const std::string& rows_flag, int jobs) {
    json cfg = load_config_file(args.config_path);
    std::string data = !args.data_dir.empty() ? args.data_dir : cfg_get<std::string>(cfg, "data", "");
    std::string out = resolve_out(!args.out_dir.empty() ? args.out_dir
                                                        : cfg_get<std::string>(cfg, "out", ""));
    if (data.empty()) throw ConfigError("train needs --data (or config key 'data')");
    if (out.empty()) throw ConfigError("train needs --out (or config key 'out')");

    auto opts = train_options_from(cfg, seed_override, seed_set, jobs);
    auto rows = rows_from(cfg, rows_flag);

    features::WindowOptions wopts;
    if (cfg.contains("features")) {
        const auto& fj = cfg.at("features");
        wopts.window_s = fj.value("window_s", wopts.window_s);
        wopts.stress_threshold = fj.value("stress_threshold", wopts.stress_threshold);
    }
    bool include_nd = cfg.contains("features") &&
                      cfg.at("features").value("include_nd_windows", false);

    auto dataset = runio::load_dataset(data, wopts, include_nd);
    runio::ensure_run_dir(out, args.force);

    auto report = traineval::run_experiment(dataset, rows, opts, &out);
    traineval::write_metrics_json(out + "/metrics.json", report);
    traineval::write_comparison_csv(out + "/comparison.csv", report);

    json resolved;
    resolved["command"] = "train";
    resolved["data"] = data;
    resolved["train"] = opts.to_json();
    json row_names = json::array();
    for (const auto& r : rows) row_names.push_back(r.name);
    resolved["rows"] = row_names;
    resolved["features"] = {{"window_s", wopts.window_s},
                            {"stress_threshold", wopts.stress_threshold},
                            {"include_nd_windows", include_nd}};
    resolved["config_hash"] = report.config_hash;
    resolved["kernel_backend"] = kernels::backend_name(kernels::active_backend());
    stamp_run_dir(out, resolved);

    std::cout << "train: " << rows.size() << " configurations x " << opts.n_folds << " folds -> "
              << out << "\n";
    for (const auto& rr : report.rows) {
        auto mean = report.row_aggregate_mean(rr.row.name, "auroc");
        std::cout << "  " << rr.row.name << ": auroc "
                  << (mean ? csv::format_double(*mean) : "invalid") << "\n";
    }
    return 0;
}

// ----------------------------------------------------------------- eval ----

int cmd_eval(const std::string& run_dir, const std::string& data_dir) {
    if (run_dir.empty()) throw ConfigError("eval needs --run");
    json resolved = runio::read_json_file(run_dir + "/resolved_config.json");
    std::string data = !data_dir.empty() ? data_dir : resolved.value("data", "");
    if (data.empty()) throw ConfigError("eval needs --data");

    auto opts = traineval::TrainOptions::from_json(resolved.at("train"));
    features::WindowOptions wopts;
    wopts.window_s = resolved.at("features").value("window_s", 9.0);
    wopts.stress_threshold = resolved.at("features").value("stress_threshold", 0.4);
    bool include_nd = resolved.at("features").value("include_nd_windows", false);
    auto dataset = runio::load_dataset(data, wopts, include_nd);
    auto plans = traineval::make_folds(dataset.subject_ids(), opts.n_folds, opts.val_fraction,
                                       opts.seed);

    json stored = runio::read_json_file(run_dir + "/metrics.json");
    int checked = 0, mismatched = 0;
    json out_rows = json::object();
    for (const auto& name : resolved.at("rows")) {
        auto row = traineval::row_by_name(name.get<std::string>());
        json folds_j = json::array();
        for (const auto& plan : plans) {
            std::string cp = run_dir + "/checkpoints/" + row.name + "_fold" +
                             std::to_string(plan.fold_id) + ".json";
            json bundle = runio::read_json_file(cp);
            auto m = traineval::eval_bundle(bundle, plan, dataset, opts);
            folds_j.push_back(traineval::fold_metrics_to_json(row, m));
            ++checked;
            const json& orig =
                stored.at("rows").at(row.name).at("folds").at(plan.fold_id);
            for (const char* key : {"auroc", "accuracy"}) {
                const json& a = orig.at(key);
                const json& b = folds_j.back().at(key);
                if (a != b) ++mismatched;
            }
        }
        out_rows[row.name] = {{"folds", folds_j}};
    }
    json out = {{"rows", out_rows}, {"source_run", run_dir}};
    runio::write_json_file(run_dir + "/metrics_eval.json", out);
    std::cout << "eval: " << checked << " fold checkpoints re-evaluated, " << mismatched
              << " metric mismatches vs metrics.json\n";
    return mismatched == 0 ? 0 : 1;
}

// --------------------------------------------------------------- report ----

int cmd_report(const std::string& run_dir) {
    if (run_dir.empty()) throw ConfigError("report needs --run");
    json resolved = runio::read_json_file(run_dir + "/resolved_config.json");
    auto opts = traineval::TrainOptions::from_json(resolved.at("train"));

    traineval::ExperimentReport report;
    report.seed = opts.seed;
    report.config_hash = resolved.value("config_hash", "");
    for (const auto& name : resolved.at("rows")) {
        traineval::RowReport rr;
        rr.row = traineval::row_by_name(name.get<std::string>());
        for (int f = 0; f < opts.n_folds; ++f) {
            std::string p = run_dir + "/fold_metrics/" + rr.row.name + "_fold" +
                            std::to_string(f) + ".json";
            rr.folds.push_back(traineval::fold_metrics_from_json(runio::read_json_file(p)));
        }
        report.rows.push_back(std::move(rr));
    }
    traineval::write_metrics_json(run_dir + "/metrics.json", report);
    traineval::write_comparison_csv(run_dir + "/comparison.csv", report);
    std::cout << "report: regenerated metrics.json and comparison.csv in " << run_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimodal stress estimation toolkit"};
    app.require_subcommand(1);

    CommonArgs synth_args, ingest_args, feat_args, stats_args, sub_args, train_args;
    std::string preset, rows_flag, smoothing = "spline", run_dir, eval_data;
    int subjects = 0, jobs = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    double smoothing_param = -1.0, window_s = 9.0, threshold = 0.4;
    bool include_nd = false;

    auto* c_synth = app.add_subcommand("synth", "generate a synthetic multimodal dataset");
    add_common(c_synth, synth_args, false);
    c_synth->add_option("--preset", preset, "benchmark preset: stats_38 | separable_strong | weak_bio");
    c_synth->add_option("--subjects", subjects, "override subject count");
    c_synth->add_option("--seed", seed, "override RNG seed")->each([&](const std::string&) { seed_set = true; });

    auto* c_ingest = app.add_subcommand("ingest", "validate and clean session tables");
    add_common(c_ingest, ingest_args);

    auto* c_feat = app.add_subcommand("features", "build windows and export the summary table");
    add_common(c_feat, feat_args);
    c_feat->add_option("--window-s", window_s, "window length in seconds");
    c_feat->add_option("--stress-threshold", threshold, "stress ratio label threshold");
    c_feat->add_flag("--include-nd", include_nd, "emit ND windows as negatives");

    auto* c_stats = app.add_subcommand("stats", "phase-wise MD-ND paired analysis");
    add_common(c_stats, stats_args);
    c_stats->add_option("--smoothing", smoothing, "none | triangular | spline");
    c_stats->add_option("--param", smoothing_param,
                        "triangular width or spline lambda (negative = auto)");

    auto* c_sub = app.add_subcommand("subspace", "PCA / LDA stress axis analysis");
    add_common(c_sub, sub_args);

    auto* c_train = app.add_subcommand("train", "train and evaluate the configured model rows");
    add_common(c_train, train_args);
    c_train->add_option("--seed", seed, "master seed")->each([&](const std::string&) { seed_set = true; });
    c_train->add_option("--rows", rows_flag, "comma-separated configuration rows");
    c_train->add_option("--jobs", jobs, "parallel fold workers");

    auto* c_eval = app.add_subcommand("eval", "re-evaluate stored checkpoints against a dataset");
    c_eval->add_option("--run", run_dir, "run directory")->required();
    c_eval->add_option("--data", eval_data, "dataset root");

    auto* c_report = app.add_subcommand("report", "regenerate tables from run artifacts");
    c_report->add_option("--run", run_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (c_synth->parsed()) return cmd_synth(synth_args, preset, subjects, seed, seed_set);
        if (c_ingest->parsed()) return cmd_ingest(ingest_args);
        if (c_feat->parsed()) return cmd_features(feat_args, window_s, threshold, include_nd);
        if (c_stats->parsed()) return cmd_stats(stats_args, smoothing, smoothing_param);
        if (c_sub->parsed()) return cmd_subspace(sub_args);
        if (c_train->parsed()) return cmd_train(train_args, seed, seed_set, rows_flag, jobs);
        if (c_eval->parsed()) return cmd_eval(run_dir, eval_data);
        if (c_report->parsed()) return cmd_report(run_dir);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: UnhandledError: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
