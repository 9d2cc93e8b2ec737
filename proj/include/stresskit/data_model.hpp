#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stresskit/nd/tensor.hpp"

namespace stresskit::data {

enum class PhaseLabel { P1, P2, P3, P4, P5 };
enum class DriveCondition { ND, MD };
enum class Modality { facial, bio, gaze };

// P2 and P4 are the stressor phases.
inline bool is_stressor(PhaseLabel p) { return p == PhaseLabel::P2 || p == PhaseLabel::P4; }

const char* to_string(PhaseLabel p);
const char* to_string(DriveCondition c);
const char* to_string(Modality m);
PhaseLabel parse_phase(const std::string& s);
DriveCondition parse_condition(const std::string& s);
Modality parse_modality(const std::string& s);

constexpr int kFacialChannels = 56;
const std::vector<std::string>& facial_channel_names();  // exp_00..exp_49, pose_00..pose_05
const std::vector<std::string>& bio_channel_names();     // pp, hr, br
const std::vector<std::string>& gaze_channel_names();    // gaze_x, gaze_y
const std::vector<std::string>& channel_names_for(Modality m);

struct PhaseInterval {
    PhaseLabel label;
    double start_s;
    double end_s;
};

// Membership is half-open [start_s, end_s).
std::optional<PhaseLabel> phase_at(const std::vector<PhaseInterval>& phases, double t);

struct RawStream {
    Modality modality;
    std::vector<double> timestamps;  // strictly increasing after cleaning
    std::vector<std::string> channel_names;
    Matrix values;  // N x C, rows parallel to timestamps
    double sample_rate_hz = 0.0;

    int frames() const { return static_cast<int>(timestamps.size()); }
    int channels() const { return static_cast<int>(channel_names.size()); }
};

struct CleaningSummary {
    int dropped_nonmonotonic = 0;
    int dropped_nonfinite = 0;
    int kept = 0;
};

struct SessionManifest {
    std::string subject_id;
    DriveCondition condition = DriveCondition::ND;
    std::map<Modality, double> sample_rate_hz;  // declared, never inferred
    std::vector<PhaseInterval> phases;
};

SessionManifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const SessionManifest& m);
void validate_manifest(const SessionManifest& m);

struct SessionRecording {
    std::string subject_id;
    DriveCondition condition = DriveCondition::ND;
    std::map<Modality, RawStream> streams;
    std::vector<PhaseInterval> phases;
    std::map<Modality, CleaningSummary> cleaning;

    const RawStream& stream(Modality m) const;
    bool has(Modality m) const { return streams.count(m) != 0; }
};

struct FeatureSequence {
    Matrix values;  // T x C
    std::vector<std::string> channel_names;
    double sample_rate_hz = 0.0;
    std::vector<std::optional<PhaseLabel>> phase_of_frame;

    int frames() const { return values.rows(); }
    int channels() const { return values.cols(); }
};

// All modalities resampled onto the reference stream's clock. Frames of a
// non-reference stream with no source sample within one reference period are
// zero-filled and flagged invalid; windowing skips windows touching them.
struct AlignedSession {
    std::string subject_id;
    DriveCondition condition = DriveCondition::ND;
    Modality reference = Modality::facial;
    std::vector<double> timestamps;
    std::vector<std::optional<PhaseLabel>> phase_of_frame;
    std::map<Modality, FeatureSequence> seqs;
    std::map<Modality, std::vector<char>> frame_valid;

    int frames() const { return static_cast<int>(timestamps.size()); }
    const FeatureSequence& seq(Modality m) const;
    // A frame is usable iff every requested modality is valid there.
    std::vector<char> combined_valid(const std::vector<Modality>& mods) const;
};

// Reads per-modality CSV tables, validates schemas, cleans timestamps and
// non-finite rows, and returns a SessionRecording satisfying all RawStream
// invariants. Row cleaning keeps the first occurrence of a timestamp and
// drops rows whose timestamp fails to increase.
SessionRecording ingest_session(const std::map<Modality, std::string>& paths,
                                const SessionManifest& manifest);

// Assembles a session from in-memory streams (synthetic generation path);
// applies the same validation as ingest_session but no cleaning.
SessionRecording build_session(const SessionManifest& manifest,
                               std::map<Modality, RawStream> streams);

AlignedSession align_to_reference(const SessionRecording& session, Modality reference);

}  // namespace stresskit::data
