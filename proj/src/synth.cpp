#include "stresskit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "stresskit/csv.hpp"
#include "stresskit/errors.hpp"
#include "stresskit/rng.hpp"

namespace stresskit::synth {

namespace fs = std::filesystem;

const char* to_string(EffectKind k) { return k == EffectKind::mean_shift ? "mean_shift" : "velocity_boost"; }

double SynthConfig::total_duration_s() const {
    double t = 0.0;
    for (double d : phase_durations_s) t += d;
    return t;
}

std::vector<data::PhaseInterval> SynthConfig::phase_intervals() const {
    std::vector<data::PhaseInterval> out;
    double t = 0.0;
    for (int p = 0; p < 5; ++p) {
        if (!(phase_durations_s[p] > 0.0)) throw ConfigError("phase durations must be positive");
        out.push_back({static_cast<data::PhaseLabel>(p), t, t + phase_durations_s[p]});
        t += phase_durations_s[p];
    }
    return out;
}

double SynthConfig::channel_rho(const std::string& ch) const {
    auto it = rho_override.find(ch);
    return it == rho_override.end() ? rho : it->second;
}

double SynthConfig::channel_sigma(const std::string& ch) const {
    auto it = sigma_override.find(ch);
    return it == sigma_override.end() ? sigma : it->second;
}

nlohmann::json SynthConfig::to_json() const {
    nlohmann::json j;
    j["n_subjects"] = n_subjects;
    nlohmann::json rates = nlohmann::json::object();
    for (const auto& [mod, r] : sample_rate_hz) rates[data::to_string(mod)] = r;
    j["sample_rate_hz"] = rates;
    j["phase_durations_s"] = phase_durations_s;
    j["rho"] = rho;
    j["sigma"] = sigma;
    j["rho_override"] = rho_override;
    j["sigma_override"] = sigma_override;
    j["subject_offset_sigma"] = subject_offset_sigma;
    j["bio_lag_s"] = bio_lag_s;
    nlohmann::json ej = nlohmann::json::array();
    for (const auto& e : effects) {
        nlohmann::json phases = nlohmann::json::array();
        for (auto p : e.phases) phases.push_back(data::to_string(p));
        ej.push_back({{"channel", e.channel},
                      {"kind", to_string(e.kind)},
                      {"magnitude", e.magnitude},
                      {"phases", phases}});
    }
    j["effects"] = ej;
    j["seed"] = seed;
    return j;
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
    SynthConfig c;
    c.n_subjects = j.value("n_subjects", c.n_subjects);
    if (j.contains("sample_rate_hz")) {
        c.sample_rate_hz.clear();
        for (const auto& [k, v] : j.at("sample_rate_hz").items())
            c.sample_rate_hz[data::parse_modality(k)] = v.get<double>();
    }
    if (j.contains("phase_durations_s")) {
        auto d = j.at("phase_durations_s").get<std::vector<double>>();
        if (d.size() != 5) throw ConfigError("phase_durations_s needs 5 entries");
        std::copy(d.begin(), d.end(), c.phase_durations_s.begin());
    }
    c.rho = j.value("rho", c.rho);
    c.sigma = j.value("sigma", c.sigma);
    if (j.contains("rho_override"))
        c.rho_override = j.at("rho_override").get<std::map<std::string, double>>();
    if (j.contains("sigma_override"))
        c.sigma_override = j.at("sigma_override").get<std::map<std::string, double>>();
    c.subject_offset_sigma = j.value("subject_offset_sigma", c.subject_offset_sigma);
    c.bio_lag_s = j.value("bio_lag_s", c.bio_lag_s);
    if (j.contains("effects")) {
        c.effects.clear();
        for (const auto& ej : j.at("effects")) {
            Effect e;
            e.channel = ej.at("channel").get<std::string>();
            std::string kind = ej.at("kind").get<std::string>();
            if (kind == "mean_shift")
                e.kind = EffectKind::mean_shift;
            else if (kind == "velocity_boost")
                e.kind = EffectKind::velocity_boost;
            else
                throw ConfigError("unknown effect kind '" + kind + "'");
            e.magnitude = ej.at("magnitude").get<double>();
            e.phases.clear();
            for (const auto& p : ej.at("phases")) e.phases.push_back(data::parse_phase(p.get<std::string>()));
            c.effects.push_back(std::move(e));
        }
    }
    c.seed = j.value("seed", c.seed);
    return c;
}

std::string subject_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "S%03d", index);
    return buf;
}

namespace {

// The velocity boost is an independent fast AR(1) (kBoostRho well below the
// baseline rho, so it lives at higher frequencies) whose innovation scale is
// calibrated so the frame-difference variance multiplies by (1+magnitude)^2:
//   Var(dw) = 2 s^2/(1+rho_b) = ((1+m)^2 - 1) * 2 sigma^2/(1+rho)
constexpr double kBoostRho = 0.7;

struct ChannelEffects {
    double mean_shift = 0.0;      // absolute, already scaled by sigma
    double boost_innov = 0.0;     // innovation std of the added fast AR component
    std::array<bool, 5> phases{}; // union over effects on this channel
};

ChannelEffects effects_for_channel(const SynthConfig& cfg, const std::string& ch) {
    ChannelEffects ce;
    double sigma = cfg.channel_sigma(ch);
    double rho = cfg.channel_rho(ch);
    for (const auto& e : cfg.effects) {
        if (e.channel != ch) continue;
        if (!std::isfinite(e.magnitude)) throw ConfigError("effect magnitude must be finite");
        for (auto p : e.phases) ce.phases[static_cast<int>(p)] = true;
        if (e.kind == EffectKind::mean_shift) {
            ce.mean_shift += e.magnitude * sigma;
        } else {
            double m = e.magnitude;
            double extra = ((1.0 + m) * (1.0 + m) - 1.0) * sigma * sigma * (1.0 + kBoostRho) /
                           (1.0 + rho);
            ce.boost_innov = std::sqrt(ce.boost_innov * ce.boost_innov + std::max(extra, 0.0));
        }
    }
    return ce;
}

std::vector<double> make_timestamps(double total_s, double fs) {
    const int n = static_cast<int>(std::floor(total_s * fs - 1e-9)) + 1;
    std::vector<double> ts(n);
    for (int i = 0; i < n; ++i) ts[i] = static_cast<double>(i) / fs;
    return ts;
}

}  // namespace

std::vector<GeneratedSubject> generate(const SynthConfig& cfg) {
    if (cfg.n_subjects <= 0) throw ConfigError("n_subjects must be positive");
    if (!(cfg.rho >= 0.0 && cfg.rho < 1.0)) throw ConfigError("rho must be in [0,1)");
    auto intervals = cfg.phase_intervals();

    Rng root(Rng::mix(cfg.seed));
    std::vector<GeneratedSubject> out;
    out.reserve(cfg.n_subjects);

    const data::Modality mods[] = {data::Modality::facial, data::Modality::bio, data::Modality::gaze};

    for (int s = 0; s < cfg.n_subjects; ++s) {
        Rng subj = root.fork("subject").fork(static_cast<std::uint64_t>(s));
        GeneratedSubject gen;
        for (data::DriveCondition cond : {data::DriveCondition::ND, data::DriveCondition::MD}) {
            data::SessionManifest man;
            man.subject_id = subject_name(s);
            man.condition = cond;
            man.phases = intervals;
            std::map<data::Modality, data::RawStream> streams;
            for (data::Modality mod : mods) {
                auto rate_it = cfg.sample_rate_hz.find(mod);
                if (rate_it == cfg.sample_rate_hz.end()) continue;  // modality disabled
                const double fs = rate_it->second;
                if (!(fs > 0.0)) throw ConfigError("sample rate must be positive");
                man.sample_rate_hz[mod] = fs;

                const auto& channels = data::channel_names_for(mod);
                data::RawStream st;
                st.modality = mod;
                st.sample_rate_hz = fs;
                st.channel_names = channels;
                st.timestamps = make_timestamps(cfg.total_duration_s(), fs);
                const int t_len = static_cast<int>(st.timestamps.size());
                st.values = Matrix({t_len, static_cast<int>(channels.size())});

                const double lag = mod == data::Modality::bio ? cfg.bio_lag_s : 0.0;
                for (std::size_t c = 0; c < channels.size(); ++c) {
                    const std::string& ch = channels[c];
                    const double rho = cfg.channel_rho(ch);
                    const double sigma = cfg.channel_sigma(ch);
                    // offsets shared across drives; AR stream independent per drive
                    Rng off_rng = subj.fork("offset").fork(ch);
                    const double offset = cfg.subject_offset_sigma * off_rng.normal();
                    Rng ar = subj.fork(data::to_string(cond)).fork(ch);
                    Rng boost = subj.fork(data::to_string(cond)).fork("boost").fork(ch);

                    ChannelEffects ce{};
                    if (cond == data::DriveCondition::MD) ce = effects_for_channel(cfg, ch);

                    const double stat_sd = sigma / std::sqrt(1.0 - rho * rho);
                    double x = offset + stat_sd * ar.normal();
                    double w = 0.0;  // boost state; advances only inside effect frames
                    for (int t = 0; t < t_len; ++t) {
                        if (t > 0) x = offset + rho * (x - offset) + sigma * ar.normal();
                        double v = x;
                        bool in_effect = false;
                        if (cond == data::DriveCondition::MD) {
                            auto ph = data::phase_at(intervals, st.timestamps[t] - lag);
                            in_effect = ph && ce.phases[static_cast<int>(*ph)];
                        }
                        if (in_effect) {
                            v += ce.mean_shift;
                            if (ce.boost_innov > 0.0) {
                                w = kBoostRho * w + ce.boost_innov * boost.normal();
                                v += w;
                            }
                        }
                        st.values.at(t, static_cast<int>(c)) = v;
                    }
                }
                streams.emplace(mod, std::move(st));
            }
            auto session = data::build_session(man, std::move(streams));
            (cond == data::DriveCondition::ND ? gen.nd : gen.md) = std::move(session);
        }
        out.push_back(std::move(gen));
    }
    return out;
}

namespace {

std::vector<std::string> stats38_channels() {
    // 34 expression + 4 pose channels, 38 total
    std::vector<std::string> v;
    const auto& names = data::facial_channel_names();
    for (int i = 0; i < 34; ++i) v.push_back(names[i]);          // exp_00..exp_33
    for (int i = 0; i < 4; ++i) v.push_back(names[50 + i]);      // pose_00..pose_03
    return v;
}

std::vector<std::string> strong_facial_channels() {
    std::vector<std::string> v;
    const auto& names = data::facial_channel_names();
    for (int i = 0; i < 10; ++i) v.push_back(names[i]);  // exp_00..exp_09
    v.push_back("exp_40");
    v.push_back("pose_00");
    return v;
}

}  // namespace

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> v = {"stats_38", "separable_strong", "weak_bio"};
    return v;
}

SynthConfig benchmark_preset(const std::string& name) {
    SynthConfig cfg;
    if (name == "stats_38") {
        cfg.n_subjects = 24;
        cfg.seed = 42;
        for (const auto& ch : stats38_channels())
            cfg.effects.push_back({ch, EffectKind::velocity_boost, 1.0,
                                   {data::PhaseLabel::P2, data::PhaseLabel::P4}});
        return cfg;
    }
    if (name == "separable_strong" || name == "weak_bio") {
        cfg.n_subjects = 25;
        cfg.seed = name == "weak_bio" ? 47 : 43;
        for (const auto& ch : strong_facial_channels()) {
            cfg.effects.push_back({ch, EffectKind::mean_shift, 2.0,
                                   {data::PhaseLabel::P2, data::PhaseLabel::P4}});
            cfg.effects.push_back({ch, EffectKind::velocity_boost, 1.0,
                                   {data::PhaseLabel::P2, data::PhaseLabel::P4}});
        }
        const double bio_mag = name == "weak_bio" ? 0.05 : 1.0;
        for (const std::string ch : {"pp", "hr", "br"})
            cfg.effects.push_back({ch, EffectKind::mean_shift, bio_mag,
                                   {data::PhaseLabel::P2, data::PhaseLabel::P4}});
        for (const std::string ch : {"gaze_x", "gaze_y"})
            cfg.effects.push_back({ch, EffectKind::velocity_boost, 0.6,
                                   {data::PhaseLabel::P2, data::PhaseLabel::P4}});
        return cfg;
    }
    throw ConfigError("unknown preset '" + name + "'");
}

std::vector<std::string> injected_channels(const SynthConfig& cfg) {
    std::vector<std::string> v;
    for (const auto& e : cfg.effects)
        if (std::find(v.begin(), v.end(), e.channel) == v.end()) v.push_back(e.channel);
    return v;
}

void write_session_csv(const std::string& dir, const data::SessionRecording& session) {
    fs::create_directories(dir);
    for (const auto& [mod, st] : session.streams) {
        std::vector<std::string> header = {"timestamp_s"};
        header.insert(header.end(), st.channel_names.begin(), st.channel_names.end());
        std::vector<std::vector<std::string>> rows;
        rows.reserve(st.timestamps.size());
        for (int t = 0; t < st.frames(); ++t) {
            std::vector<std::string> row;
            row.reserve(header.size());
            row.push_back(csv::format_double(st.timestamps[t]));
            for (int c = 0; c < st.channels(); ++c) row.push_back(csv::format_double(st.values.at(t, c)));
            rows.push_back(std::move(row));
        }
        csv::write_rows(dir + "/" + data::to_string(mod) + ".csv", header, rows);
    }
    data::SessionManifest man;
    man.subject_id = session.subject_id;
    man.condition = session.condition;
    man.phases = session.phases;
    for (const auto& [mod, st] : session.streams) man.sample_rate_hz[mod] = st.sample_rate_hz;
    data::write_manifest(dir + "/manifest.json", man);
}

void write_dataset(const std::string& root, const std::vector<GeneratedSubject>& subjects) {
    fs::create_directories(root);
    for (const auto& g : subjects) {
        write_session_csv(root + "/" + g.nd.subject_id + "/ND", g.nd);
        write_session_csv(root + "/" + g.md.subject_id + "/MD", g.md);
    }
}

}  // namespace stresskit::synth
