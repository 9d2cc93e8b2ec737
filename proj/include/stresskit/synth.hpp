#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "stresskit/data_model.hpp"

namespace stresskit::synth {

enum class EffectKind { mean_shift, velocity_boost };
const char* to_string(EffectKind k);

struct Effect {
    std::string channel;  // e.g. exp_03, hr, gaze_x
    EffectKind kind = EffectKind::mean_shift;
    double magnitude = 0.0;  // in units of the channel's innovation sigma
    std::vector<data::PhaseLabel> phases = {data::PhaseLabel::P2, data::PhaseLabel::P4};
};

struct SynthConfig {
    int n_subjects = 24;
    std::map<data::Modality, double> sample_rate_hz = {
        {data::Modality::facial, 10.0}, {data::Modality::bio, 10.0}, {data::Modality::gaze, 10.0}};
    std::array<double, 5> phase_durations_s = {60.0, 45.0, 60.0, 45.0, 60.0};
    double rho = 0.9;    // AR(1) coefficient, overridable per channel
    double sigma = 1.0;  // innovation std, overridable per channel
    std::map<std::string, double> rho_override;
    std::map<std::string, double> sigma_override;
    double subject_offset_sigma = 1.0;
    double bio_lag_s = 2.0;  // effects on bio channels arrive delayed
    std::vector<Effect> effects;
    std::uint64_t seed = 42;

    double total_duration_s() const;
    std::vector<data::PhaseInterval> phase_intervals() const;
    double channel_rho(const std::string& ch) const;
    double channel_sigma(const std::string& ch) const;
    nlohmann::json to_json() const;
    static SynthConfig from_json(const nlohmann::json& j);
};

struct GeneratedSubject {
    data::SessionRecording nd;
    data::SessionRecording md;
};

// Per subject and channel: an AR(1) baseline with a subject-specific offset,
// identical in distribution across drives. The MD drive applies the
// configured effects inside their phases: mean_shift adds magnitude*sigma to
// the level; velocity_boost adds an independent high-frequency component (a
// fast AR process) sized so the frame-difference scale multiplies by
// (1 + magnitude). Bio channels receive effects shifted later by bio_lag_s.
// Fully deterministic per seed.
std::vector<GeneratedSubject> generate(const SynthConfig& cfg);

// Presets: stats_38 (velocity effects on exactly 38 facial channels),
// separable_strong (strong facial + moderate bio effects), weak_bio
// (near-zero bio effects).
SynthConfig benchmark_preset(const std::string& name);
const std::vector<std::string>& preset_names();
// channels carrying injected effects, for power/false-positive bookkeeping
std::vector<std::string> injected_channels(const SynthConfig& cfg);

std::string subject_name(int index);

// Writes <root>/<subject>/<ND|MD>/{facial.csv,bio.csv,gaze.csv,manifest.json}
// using the data-model schemas; byte-identical for identical configs.
void write_dataset(const std::string& root, const std::vector<GeneratedSubject>& subjects);
void write_session_csv(const std::string& dir, const data::SessionRecording& session);

}  // namespace stresskit::synth
