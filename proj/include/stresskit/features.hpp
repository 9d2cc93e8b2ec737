#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stresskit/data_model.hpp"

namespace stresskit::features {

using data::AlignedSession;
using data::FeatureSequence;

// Frame-to-frame differences of the 56 facial coefficients; first frame is the
// zero vector and channel names gain a d_ prefix.
FeatureSequence facial_derivatives(const FeatureSequence& seq);
Matrix frame_differences(const Matrix& frames);  // same rule on a raw matrix

// Gaze kinematics from (gaze_x, gaze_y): velocities/accelerations by trailing
// finite differences, rolling speed statistics over 1 s and 3 s, and the 2 s
// positional dispersion sqrt(var_x + var_y). Population standard deviations;
// rolling windows are trailing (causal) and shorter prefixes use all
// available frames.
FeatureSequence gaze_dynamics(const FeatureSequence& seq);
const std::vector<std::string>& gaze_dynamics_channel_names();

struct WindowSlice {
    int start_frame = 0;
    int t_len = 0;
    int seq_index = 0;  // ordinal among emitted windows of this sequence
    std::optional<data::PhaseLabel> phase_mode;
    double stress_ratio = 0.0;
    int label = 0;  // 1 = stress (stress_ratio strictly greater than threshold)
};

// Consecutive non-overlapping windows of round(window_s * fs) frames starting
// at frame 0; the trailing remainder is dropped, as is any window touching an
// invalid frame. Frames with no phase count as non-stress; phase_mode ties
// resolve to the earlier phase in P1..P5 order.
std::vector<WindowSlice> segment_windows(
    const std::vector<std::optional<data::PhaseLabel>>& phase_of_frame, double sample_rate_hz,
    double window_s = 9.0, double stress_threshold = 0.4,
    const std::vector<char>* frame_valid = nullptr);

// Mean over t = 2..T of the difference of MD and ND frame-to-frame
// differences; antisymmetric in its arguments.
std::vector<double> velocity_difference_descriptor(const Matrix& md_frames, const Matrix& nd_frames);

struct Window {
    std::string subject_id;
    data::DriveCondition condition = data::DriveCondition::MD;
    std::optional<data::PhaseLabel> phase_mode;
    int window_index = 0;  // ordinal within (session, phase_mode), pairing key
    int seq_index = 0;
    double stress_ratio = 0.0;
    int label = 0;
    Matrix facial;       // T x 56
    Matrix facial_delta; // T x 56
    Matrix bio;          // T x 3 (empty when modality absent)
    Matrix gaze_dyn;     // T x 11 (empty when modality absent)
    std::optional<std::vector<double>> baseline_descriptor;  // length 56
};

struct WindowOptions {
    double window_s = 9.0;
    double stress_threshold = 0.4;
    bool compute_baseline = true;  // needs the paired ND session
};

struct WindowSet {
    int t_len = 0;
    std::vector<Window> windows;
    std::vector<std::string> warnings;
};

// Builds windows for the MD drive of one subject. The paired ND session (when
// given) provides the velocity-difference baseline: MD windows pair with the
// ND window of equal (phase_mode, window_index); unmatched windows fall back
// to the ND phase-mean frame difference, then to a zero descriptor with a
// recorded warning.
WindowSet build_windows(const AlignedSession& md, const AlignedSession* nd,
                        const WindowOptions& opts);

// Per-frame concatenation: facial [| d_facial] [| baseline broadcast]
// [| secondary] -> T x F.
Matrix assemble_model_input(const Window& w, bool include_delta, bool include_baseline,
                            const Matrix* secondary);

struct NormalizationStats {
    std::vector<double> mean;
    std::vector<double> std;  // population; entries < 1e-8 clamped to 1
};

// Z-scoring statistics pooled over every frame of the training windows only.
NormalizationStats fit_normalization(const std::vector<const Matrix*>& train_inputs);
// Same statistics over the rows of one matrix (summary-feature tables).
NormalizationStats fit_normalization_rows(const Matrix& rows);
void apply_normalization(const NormalizationStats& stats, Matrix& m);

// Per-channel mean followed by per-channel population std of a window matrix;
// the summary representation used by the kNN/MLP baselines and the windows
// table export.
std::vector<double> summary_features(const Matrix& m);

void write_windows_csv(const std::string& path, const std::vector<const WindowSet*>& sets);

}  // namespace stresskit::features
