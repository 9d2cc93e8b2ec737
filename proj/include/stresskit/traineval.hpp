#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stresskit/features.hpp"
#include "stresskit/model/model.hpp"

namespace stresskit::traineval {

struct FoldPlan {
    int fold_id = 0;
    std::vector<std::string> train_subjects;
    std::vector<std::string> val_subjects;
    std::vector<std::string> test_subjects;
};

// Subject-wise folds: subjects shuffled by seed, test sets are near-equal
// consecutive chunks (first n mod k chunks take the extra subject), validation
// subjects are drawn cyclically after each fold's test chunk.
std::vector<FoldPlan> make_folds(std::vector<std::string> subjects, int n_folds,
                                 double val_fraction, std::uint64_t seed);

// Rank metrics. AUROC is the Mann-Whitney statistic with ties counted 1/2;
// AUPRC integrates the precision-recall steps with no interpolation.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);

struct ThresholdMetrics {
    double f1 = 0.0;
    double accuracy = 0.0;
    double balanced_accuracy = 0.0;
};
// Predictions are score >= threshold on probability scores.
ThresholdMetrics threshold_metrics(const std::vector<double>& scores,
                                   const std::vector<int>& labels, double threshold = 0.5);

enum class RowKind { transformer, knn, mlp };
enum class StreamSel { facial, bio, gaze };
const char* to_string(RowKind k);
const char* to_string(StreamSel s);

// One comparison-table row: which architecture/baseline runs on which input
// streams.
struct RowSpec {
    std::string name;
    RowKind kind = RowKind::transformer;
    model::Fusion fusion = model::Fusion::unimodal;
    StreamSel primary = StreamSel::facial;
    StreamSel secondary = StreamSel::bio;
    bool include_delta = true;     // facial stream only
    bool include_baseline = true;  // facial stream only
};

std::vector<RowSpec> default_rows();
RowSpec row_by_name(const std::string& name);

struct SubjectWindows {
    std::string subject_id;
    std::vector<features::Window> windows;
};

struct Dataset {
    std::vector<SubjectWindows> subjects;
    int t_len = 0;
    bool has_baseline = false;

    std::vector<std::string> subject_ids() const;
};

struct SubjectSessions {
    data::AlignedSession md;
    std::optional<data::AlignedSession> nd;
};

// MD windows are the classification units; ND windows join as negatives only
// when include_nd_windows is set.
Dataset build_dataset(const std::vector<SubjectSessions>& sessions,
                      const features::WindowOptions& opts, bool include_nd_windows = false);

struct TrainOptions {
    int n_folds = 5;
    double val_fraction = 0.2;
    int max_epochs = 20;
    int patience = 5;
    int batch_size = 32;
    double lr = 1e-3;
    std::uint64_t seed = 1;
    std::string precision = "f64";  // "f64" | "f32"
    int jobs = 1;
    model::ModelConfig model;  // input dims are filled per row
    int knn_k = 5;

    nlohmann::json to_json() const;
    static TrainOptions from_json(const nlohmann::json& j);
};

struct FoldMetrics {
    int fold_id = 0;
    int n_test = 0;
    int epochs_run = 0;
    std::optional<double> auroc_v, auprc_v, f1_v, accuracy_v, balanced_accuracy_v;
    std::vector<std::array<double, 2>> epoch_log;  // {train_loss, val_loss}
};

struct TrainedFold {
    FoldMetrics metrics;
    nlohmann::json bundle;  // checkpoint: params/config/normalization/log
    std::vector<double> test_scores;
    std::vector<int> test_labels;
};

TrainedFold train_fold(const FoldPlan& plan, const Dataset& dataset, const RowSpec& row,
                       const TrainOptions& opts);

// Recomputes a fold's test metrics from a stored bundle (no retraining).
FoldMetrics eval_bundle(const nlohmann::json& bundle, const FoldPlan& plan, const Dataset& dataset,
                        const TrainOptions& opts);

struct Aggregate {
    std::optional<double> mean, stddev;  // sample std over folds with valid values
    int n = 0;
};
Aggregate aggregate(const std::vector<std::optional<double>>& values);

struct RowReport {
    RowSpec row;
    std::vector<FoldMetrics> folds;
};

struct ExperimentReport {
    std::vector<RowReport> rows;
    std::uint64_t seed = 0;
    std::string config_hash;

    nlohmann::json to_json() const;
    std::optional<double> row_aggregate_mean(const std::string& row_name,
                                             const std::string& metric) const;
};

// Trains every row over every fold. When out_dir is non-null, per-fold
// bundles and metrics land under it (checkpoints/, fold_metrics/).
ExperimentReport run_experiment(const Dataset& dataset, const std::vector<RowSpec>& rows,
                                const TrainOptions& opts, const std::string* out_dir = nullptr);

void write_metrics_json(const std::string& path, const ExperimentReport& report);
void write_comparison_csv(const std::string& path, const ExperimentReport& report);
nlohmann::json fold_metrics_to_json(const RowSpec& row, const FoldMetrics& m);
FoldMetrics fold_metrics_from_json(const nlohmann::json& j);

}  // namespace stresskit::traineval
