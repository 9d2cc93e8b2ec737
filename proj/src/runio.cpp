#include "stresskit/runio.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "stresskit/errors.hpp"

namespace stresskit::runio {

namespace fs = std::filesystem;

std::vector<std::string> list_subjects(const std::string& root) {
    if (!fs::is_directory(root)) throw IoError("dataset root not found: " + root);
    std::vector<std::string> subjects;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        if (fs::exists(entry.path() / "MD" / "manifest.json"))
            subjects.push_back(entry.path().filename().string());
    }
    std::sort(subjects.begin(), subjects.end());
    if (subjects.empty()) throw IoError("no subject sessions under " + root);
    return subjects;
}

data::SessionRecording load_session(const std::string& session_dir) {
    auto manifest = data::read_manifest(session_dir + "/manifest.json");
    std::map<data::Modality, std::string> paths;
    for (const auto& [mod, rate] : manifest.sample_rate_hz) {
        (void)rate;
        std::string p = session_dir + "/" + data::to_string(mod) + ".csv";
        if (fs::exists(p)) paths[mod] = p;
    }
    if (paths.empty()) throw IoError("no stream tables in " + session_dir);
    return data::ingest_session(paths, manifest);
}

std::vector<SubjectAligned> load_aligned(const std::string& root, data::Modality reference) {
    std::vector<SubjectAligned> out;
    for (const auto& subject : list_subjects(root)) {
        SubjectAligned sa;
        sa.subject_id = subject;
        sa.md = data::align_to_reference(load_session(root + "/" + subject + "/MD"), reference);
        std::string nd_dir = root + "/" + subject + "/ND";
        if (fs::exists(nd_dir + "/manifest.json"))
            sa.nd = data::align_to_reference(load_session(nd_dir), reference);
        out.push_back(std::move(sa));
    }
    return out;
}

traineval::Dataset load_dataset(const std::string& root, const features::WindowOptions& opts,
                                bool include_nd_windows) {
    std::vector<traineval::SubjectSessions> sessions;
    for (auto& sa : load_aligned(root)) {
        traineval::SubjectSessions ss;
        ss.md = std::move(sa.md);
        ss.nd = std::move(sa.nd);
        sessions.push_back(std::move(ss));
    }
    return traineval::build_dataset(sessions, opts, include_nd_windows);
}

namespace {

PairedStreams paired_from_aligned(std::vector<SubjectAligned>&& aligned) {
    PairedStreams out;
    for (auto& sa : aligned) {
        if (!sa.nd) continue;  // stats needs both drives
        if (sa.md.seqs.count(data::Modality::facial) && sa.nd->seqs.count(data::Modality::facial)) {
            stats::SubjectPairedSequences p;
            p.subject_id = sa.subject_id;
            p.md = sa.md.seq(data::Modality::facial);
            p.nd = sa.nd->seq(data::Modality::facial);
            out.facial.push_back(std::move(p));
        }
        if (sa.md.seqs.count(data::Modality::bio) && sa.nd->seqs.count(data::Modality::bio)) {
            stats::SubjectPairedSequences p;
            p.subject_id = sa.subject_id;
            p.md = sa.md.seq(data::Modality::bio);
            p.nd = sa.nd->seq(data::Modality::bio);
            out.bio.push_back(std::move(p));
        }
    }
    return out;
}

}  // namespace

PairedStreams load_paired_streams(const std::string& root) {
    return paired_from_aligned(load_aligned(root));
}

PairedStreams paired_streams_from_generated(const std::vector<synth::GeneratedSubject>& subjects) {
    std::vector<SubjectAligned> aligned;
    for (const auto& g : subjects) {
        SubjectAligned sa;
        sa.subject_id = g.md.subject_id;
        sa.md = data::align_to_reference(g.md, data::Modality::facial);
        sa.nd = data::align_to_reference(g.nd, data::Modality::facial);
        aligned.push_back(std::move(sa));
    }
    return paired_from_aligned(std::move(aligned));
}

std::vector<traineval::SubjectSessions> sessions_from_generated(
    const std::vector<synth::GeneratedSubject>& subjects) {
    std::vector<traineval::SubjectSessions> out;
    for (const auto& g : subjects) {
        traineval::SubjectSessions ss;
        ss.md = data::align_to_reference(g.md, data::Modality::facial);
        ss.nd = data::align_to_reference(g.nd, data::Modality::facial);
        out.push_back(std::move(ss));
    }
    return out;
}

void ensure_run_dir(const std::string& path, bool force) {
    fs::path p(path);
    if (fs::exists(p)) {
        if (!fs::is_directory(p)) throw IoError(path + " exists and is not a directory");
        bool empty = fs::directory_iterator(p) == fs::directory_iterator();
        if (!empty && !force)
            throw IoError("run directory " + path + " is not empty (use --force to overwrite)");
    }
    fs::create_directories(p);
}

std::string config_hash(const nlohmann::json& j) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : j.dump()) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
    return j;
}

void write_json_file(const std::string& path, const nlohmann::json& j, int indent) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(indent) << '\n';
}

}  // namespace stresskit::runio
