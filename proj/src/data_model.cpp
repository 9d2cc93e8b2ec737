#include "stresskit/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "stresskit/csv.hpp"
#include "stresskit/errors.hpp"

namespace stresskit::data {

const char* to_string(PhaseLabel p) {
    switch (p) {
        case PhaseLabel::P1: return "P1";
        case PhaseLabel::P2: return "P2";
        case PhaseLabel::P3: return "P3";
        case PhaseLabel::P4: return "P4";
        case PhaseLabel::P5: return "P5";
    }
    return "?";
}

const char* to_string(DriveCondition c) { return c == DriveCondition::ND ? "ND" : "MD"; }

const char* to_string(Modality m) {
    switch (m) {
        case Modality::facial: return "facial";
        case Modality::bio: return "bio";
        case Modality::gaze: return "gaze";
    }
    return "?";
}

PhaseLabel parse_phase(const std::string& s) {
    for (PhaseLabel p : {PhaseLabel::P1, PhaseLabel::P2, PhaseLabel::P3, PhaseLabel::P4, PhaseLabel::P5})
        if (s == to_string(p)) return p;
    throw ManifestError("unknown phase label '" + s + "'");
}

DriveCondition parse_condition(const std::string& s) {
    if (s == "ND") return DriveCondition::ND;
    if (s == "MD") return DriveCondition::MD;
    throw ManifestError("unknown drive condition '" + s + "' (expected ND or MD)");
}

Modality parse_modality(const std::string& s) {
    if (s == "facial") return Modality::facial;
    if (s == "bio") return Modality::bio;
    if (s == "gaze") return Modality::gaze;
    throw ManifestError("unknown modality '" + s + "'");
}

namespace {

std::vector<std::string> make_facial_names() {
    std::vector<std::string> v;
    char buf[16];
    for (int i = 0; i < 50; ++i) {
        std::snprintf(buf, sizeof(buf), "exp_%02d", i);
        v.emplace_back(buf);
    }
    for (int i = 0; i < 6; ++i) {
        std::snprintf(buf, sizeof(buf), "pose_%02d", i);
        v.emplace_back(buf);
    }
    return v;
}

}  // namespace

const std::vector<std::string>& facial_channel_names() {
    static const std::vector<std::string> v = make_facial_names();
    return v;
}

const std::vector<std::string>& bio_channel_names() {
    static const std::vector<std::string> v = {"pp", "hr", "br"};
    return v;
}

const std::vector<std::string>& gaze_channel_names() {
    static const std::vector<std::string> v = {"gaze_x", "gaze_y"};
    return v;
}

const std::vector<std::string>& channel_names_for(Modality m) {
    switch (m) {
        case Modality::facial: return facial_channel_names();
        case Modality::bio: return bio_channel_names();
        case Modality::gaze: return gaze_channel_names();
    }
    return facial_channel_names();
}

std::optional<PhaseLabel> phase_at(const std::vector<PhaseInterval>& phases, double t) {
    for (const auto& p : phases)
        if (t >= p.start_s && t < p.end_s) return p.label;
    return std::nullopt;
}

void validate_manifest(const SessionManifest& m) {
    if (m.subject_id.empty()) throw ManifestError("subject_id must be non-empty");
    for (const auto& [mod, rate] : m.sample_rate_hz)
        if (!(rate > 0.0) || !std::isfinite(rate))
            throw ManifestError(std::string("sample rate for ") + to_string(mod) + " must be positive");
    for (const auto& p : m.phases)
        if (!(p.end_s > p.start_s)) throw ManifestError("phase interval must have end_s > start_s");
    auto sorted = m.phases;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const PhaseInterval& a, const PhaseInterval& b) { return a.start_s < b.start_s; });
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i].start_s < sorted[i - 1].end_s)
            throw ManifestError("phase intervals overlap near t=" + std::to_string(sorted[i].start_s));
}

SessionManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError(path + ": " + e.what());
    }
    SessionManifest m;
    try {
        m.subject_id = j.at("subject_id").get<std::string>();
        m.condition = parse_condition(j.at("condition").get<std::string>());
        for (const auto& [key, val] : j.at("sample_rate_hz").items())
            m.sample_rate_hz[parse_modality(key)] = val.get<double>();
        for (const auto& pj : j.at("phases")) {
            PhaseInterval p;
            p.label = parse_phase(pj.at("label").get<std::string>());
            p.start_s = pj.at("start_s").get<double>();
            p.end_s = pj.at("end_s").get<double>();
            m.phases.push_back(p);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError(path + ": " + e.what());
    }
    validate_manifest(m);
    return m;
}

void write_manifest(const std::string& path, const SessionManifest& m) {
    nlohmann::json j;
    j["subject_id"] = m.subject_id;
    j["condition"] = to_string(m.condition);
    nlohmann::json rates = nlohmann::json::object();
    for (const auto& [mod, rate] : m.sample_rate_hz) rates[to_string(mod)] = rate;
    j["sample_rate_hz"] = rates;
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& p : m.phases)
        phases.push_back({{"label", to_string(p.label)}, {"start_s", p.start_s}, {"end_s", p.end_s}});
    j["phases"] = phases;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest " + path);
    out << j.dump(2) << '\n';
}

const RawStream& SessionRecording::stream(Modality m) const {
    auto it = streams.find(m);
    if (it == streams.end())
        throw SchemaError(std::string("session has no ") + to_string(m) + " stream");
    return it->second;
}

const FeatureSequence& AlignedSession::seq(Modality m) const {
    auto it = seqs.find(m);
    if (it == seqs.end())
        throw SchemaError(std::string("aligned session has no ") + to_string(m) + " stream");
    return it->second;
}

std::vector<char> AlignedSession::combined_valid(const std::vector<Modality>& mods) const {
    std::vector<char> out(timestamps.size(), 1);
    for (Modality m : mods) {
        auto it = frame_valid.find(m);
        if (it == frame_valid.end())
            throw SchemaError(std::string("aligned session has no ") + to_string(m) + " stream");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] && it->second[i];
    }
    return out;
}

namespace {

void check_schema(const csv::Table& t, Modality m, const std::string& path) {
    const auto& want = channel_names_for(m);
    if (t.columns.empty() || t.columns[0] != "timestamp_s")
        throw SchemaError(path + ": first column must be timestamp_s");
    if (t.columns.size() != want.size() + 1)
        throw SchemaError(path + ": expected " + std::to_string(want.size()) + " channels for " +
                          to_string(m) + ", got " + std::to_string(t.columns.size() - 1));
    for (std::size_t i = 0; i < want.size(); ++i)
        if (t.columns[i + 1] != want[i])
            throw SchemaError(path + ": column " + std::to_string(i + 1) + " is '" +
                              t.columns[i + 1] + "', expected '" + want[i] + "'");
}

RawStream clean_rows(const csv::Table& t, Modality m, double rate, CleaningSummary& summary) {
    const std::size_t nch = t.columns.size() - 1;
    RawStream s;
    s.modality = m;
    s.channel_names.assign(t.columns.begin() + 1, t.columns.end());
    s.sample_rate_hz = rate;

    std::vector<double> ts;
    std::vector<double> flat;
    double last = -std::numeric_limits<double>::infinity();
    for (const auto& row : t.rows) {
        bool finite = true;
        for (double v : row)
            if (!std::isfinite(v)) {
                finite = false;
                break;
            }
        if (!finite) {
            ++summary.dropped_nonfinite;
            continue;
        }
        if (row[0] <= last) {
            ++summary.dropped_nonmonotonic;
            continue;
        }
        last = row[0];
        ts.push_back(row[0]);
        flat.insert(flat.end(), row.begin() + 1, row.end());
    }
    summary.kept = static_cast<int>(ts.size());
    s.timestamps = std::move(ts);
    if (s.timestamps.empty()) return s;  // caller raises EmptyStreamError with context
    s.values = Matrix({static_cast<int>(s.timestamps.size()), static_cast<int>(nch)}, std::move(flat));
    return s;
}

void validate_stream(const RawStream& s) {
    if (s.timestamps.empty()) throw EmptyStreamError(std::string(to_string(s.modality)) + " stream is empty");
    const auto& want = channel_names_for(s.modality);
    if (s.channel_names != want)
        throw SchemaError(std::string(to_string(s.modality)) + " stream has wrong channel layout");
    if (s.values.rows() != s.frames() || s.values.cols() != s.channels())
        throw SchemaError("stream value matrix does not match timestamps/channels");
    if (!(s.sample_rate_hz > 0.0)) throw ManifestError("stream sample rate must be positive");
    for (std::size_t i = 1; i < s.timestamps.size(); ++i)
        if (!(s.timestamps[i] > s.timestamps[i - 1]))
            throw SchemaError("timestamps not strictly increasing");
}

}  // namespace

SessionRecording ingest_session(const std::map<Modality, std::string>& paths,
                                const SessionManifest& manifest) {
    validate_manifest(manifest);
    SessionRecording rec;
    rec.subject_id = manifest.subject_id;
    rec.condition = manifest.condition;
    rec.phases = manifest.phases;
    for (const auto& [mod, path] : paths) {
        auto rate_it = manifest.sample_rate_hz.find(mod);
        if (rate_it == manifest.sample_rate_hz.end())
            throw ManifestError(std::string("manifest declares no sample rate for ") + to_string(mod));
        csv::Table t = csv::read_numeric(path);
        check_schema(t, mod, path);
        CleaningSummary summary;
        RawStream s = clean_rows(t, mod, rate_it->second, summary);
        if (s.timestamps.empty())
            throw EmptyStreamError(path + ": no rows left after cleaning");
        validate_stream(s);
        rec.cleaning[mod] = summary;
        rec.streams.emplace(mod, std::move(s));
    }
    if (rec.streams.empty()) throw EmptyStreamError("session has no streams");
    return rec;
}

SessionRecording build_session(const SessionManifest& manifest, std::map<Modality, RawStream> streams) {
    validate_manifest(manifest);
    SessionRecording rec;
    rec.subject_id = manifest.subject_id;
    rec.condition = manifest.condition;
    rec.phases = manifest.phases;
    for (auto& [mod, s] : streams) {
        validate_stream(s);
        CleaningSummary summary;
        summary.kept = s.frames();
        rec.cleaning[mod] = summary;
        rec.streams.emplace(mod, std::move(s));
    }
    if (rec.streams.empty()) throw EmptyStreamError("session has no streams");
    return rec;
}

AlignedSession align_to_reference(const SessionRecording& session, Modality reference) {
    const RawStream& ref = session.stream(reference);
    if (ref.timestamps.empty()) throw EmptyStreamError("reference stream is empty");

    AlignedSession out;
    out.subject_id = session.subject_id;
    out.condition = session.condition;
    out.reference = reference;
    out.timestamps = ref.timestamps;
    const int t_len = ref.frames();
    out.phase_of_frame.resize(t_len);
    for (int i = 0; i < t_len; ++i) out.phase_of_frame[i] = phase_at(session.phases, ref.timestamps[i]);

    const double gap = 1.0 / ref.sample_rate_hz;
    const double tol = gap * (1.0 + 1e-9);

    for (const auto& [mod, src] : session.streams) {
        FeatureSequence seq;
        seq.channel_names = src.channel_names;
        seq.sample_rate_hz = ref.sample_rate_hz;
        seq.phase_of_frame = out.phase_of_frame;
        std::vector<char> valid(t_len, 1);
        if (mod == reference) {
            seq.values = src.values;
        } else {
            seq.values = Matrix({t_len, src.channels()});
            const auto& sts = src.timestamps;
            for (int i = 0; i < t_len; ++i) {
                double t = ref.timestamps[i];
                auto it = std::lower_bound(sts.begin(), sts.end(), t);
                // nearest neighbor; equidistant resolves to the earlier sample
                int best = -1;
                if (it != sts.end() && it != sts.begin()) {
                    int hi = static_cast<int>(it - sts.begin());
                    int lo = hi - 1;
                    best = (t - sts[lo] <= sts[hi] - t) ? lo : hi;
                } else if (it != sts.end()) {
                    best = static_cast<int>(it - sts.begin());
                } else {
                    best = static_cast<int>(sts.size()) - 1;
                }
                if (std::abs(sts[best] - t) <= tol) {
                    std::copy(src.values.row_ptr(best), src.values.row_ptr(best) + src.channels(),
                              seq.values.row_ptr(i));
                } else {
                    valid[i] = 0;  // zero-filled, excluded from windows
                }
            }
        }
        out.frame_valid[mod] = std::move(valid);
        out.seqs.emplace(mod, std::move(seq));
    }
    return out;
}

}  // namespace stresskit::data
