#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stresskit/stats.hpp"
#include "stresskit/synth.hpp"
#include "stresskit/traineval.hpp"

namespace stresskit::runio {

// Dataset directory layout (written by `synth`, read by everything else):
//   <root>/<subject>/<ND|MD>/{facial.csv,bio.csv,gaze.csv,manifest.json}

std::vector<std::string> list_subjects(const std::string& root);

data::SessionRecording load_session(const std::string& session_dir);

struct SubjectAligned {
    std::string subject_id;
    data::AlignedSession md;
    std::optional<data::AlignedSession> nd;
};

std::vector<SubjectAligned> load_aligned(const std::string& root,
                                         data::Modality reference = data::Modality::facial);

traineval::Dataset load_dataset(const std::string& root, const features::WindowOptions& opts,
                                bool include_nd_windows = false);

// MD/ND paired sequences for the statistics pipeline: facial channels (the
// smoothing protocol) and bio channels (analyzed raw) as separate groups.
struct PairedStreams {
    std::vector<stats::SubjectPairedSequences> facial;
    std::vector<stats::SubjectPairedSequences> bio;
};
PairedStreams load_paired_streams(const std::string& root);
PairedStreams paired_streams_from_generated(const std::vector<synth::GeneratedSubject>& subjects);

std::vector<traineval::SubjectSessions> sessions_from_generated(
    const std::vector<synth::GeneratedSubject>& subjects);

// Run directories are append-only: creating over a non-empty directory
// requires force.
void ensure_run_dir(const std::string& path, bool force);

std::string config_hash(const nlohmann::json& j);
nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j, int indent = 2);

}  // namespace stresskit::runio
