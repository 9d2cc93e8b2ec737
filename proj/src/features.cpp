#include "stresskit/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "stresskit/csv.hpp"
#include "stresskit/errors.hpp"

namespace stresskit::features {

Matrix frame_differences(const Matrix& frames) {
    Matrix out({frames.rows(), frames.cols()});
    for (int t = 1; t < frames.rows(); ++t)
        for (int c = 0; c < frames.cols(); ++c)
            out.at(t, c) = frames.at(t, c) - frames.at(t - 1, c);
    return out;
}

FeatureSequence facial_derivatives(const FeatureSequence& seq) {
    if (seq.channel_names != data::facial_channel_names())
        throw SchemaError("facial_derivatives expects the 56-channel facial layout");
    FeatureSequence out;
    out.values = frame_differences(seq.values);
    out.sample_rate_hz = seq.sample_rate_hz;
    out.phase_of_frame = seq.phase_of_frame;
    out.channel_names.reserve(seq.channel_names.size());
    for (const auto& n : seq.channel_names) out.channel_names.push_back("d_" + n);
    return out;
}

const std::vector<std::string>& gaze_dynamics_channel_names() {
    static const std::vector<std::string> v = {"v_x",        "v_y",        "speed",       "a_x",
                                               "a_y",        "a_mag",      "roll_mean_1s", "roll_std_1s",
                                               "roll_mean_3s", "roll_std_3s", "dispersion_2s"};
    return v;
}

namespace {

// trailing-window mean/std (population) of x over [t-w+1, t] clipped at 0
void rolling_stats(const std::vector<double>& x, int w, std::vector<double>& mean_out,
                   std::vector<double>& std_out) {
    const int n = static_cast<int>(x.size());
    mean_out.resize(n);
    std_out.resize(n);
    for (int t = 0; t < n; ++t) {
        int lo = std::max(0, t - w + 1);
        int cnt = t - lo + 1;
        double m = 0.0;
        for (int i = lo; i <= t; ++i) m += x[i];
        m /= cnt;
        double ss = 0.0;
        for (int i = lo; i <= t; ++i) ss += (x[i] - m) * (x[i] - m);
        mean_out[t] = m;
        std_out[t] = std::sqrt(ss / cnt);
    }
}

}  // namespace

FeatureSequence gaze_dynamics(const FeatureSequence& seq) {
    if (seq.channel_names != data::gaze_channel_names())
        throw SchemaError("gaze_dynamics expects channels gaze_x, gaze_y");
    const int n = seq.frames();
    if (n < 2) throw InsufficientDataError("gaze_dynamics needs at least 2 frames");
    if (!(seq.sample_rate_hz > 0.0)) throw ConfigError("gaze sample rate must be positive");
    const double fs = seq.sample_rate_hz;

    std::vector<double> x(n), y(n);
    for (int t = 0; t < n; ++t) {
        x[t] = seq.values.at(t, 0);
        y[t] = seq.values.at(t, 1);
    }

    std::vector<double> vx(n, 0.0), vy(n, 0.0), ax(n, 0.0), ay(n, 0.0), speed(n, 0.0), amag(n, 0.0);
    for (int t = 1; t < n; ++t) {
        vx[t] = (x[t] - x[t - 1]) * fs;
        vy[t] = (y[t] - y[t - 1]) * fs;
    }
    // first valid acceleration is t = 2 (v[0] is a fill value, not a velocity)
    for (int t = 2; t < n; ++t) {
        ax[t] = (vx[t] - vx[t - 1]) * fs;
        ay[t] = (vy[t] - vy[t - 1]) * fs;
    }
    for (int t = 0; t < n; ++t) {
        speed[t] = std::hypot(vx[t], vy[t]);
        amag[t] = std::hypot(ax[t], ay[t]);
    }

    const int w1 = std::max(1, static_cast<int>(std::llround(1.0 * fs)));
    const int w3 = std::max(1, static_cast<int>(std::llround(3.0 * fs)));
    const int w2 = std::max(1, static_cast<int>(std::llround(2.0 * fs)));
    std::vector<double> rm1, rs1, rm3, rs3;
    rolling_stats(speed, w1, rm1, rs1);
    rolling_stats(speed, w3, rm3, rs3);
    std::vector<double> mx, sx, my, sy;
    rolling_stats(x, w2, mx, sx);
    rolling_stats(y, w2, my, sy);

    FeatureSequence out;
    out.channel_names = gaze_dynamics_channel_names();
    out.sample_rate_hz = fs;
    out.phase_of_frame = seq.phase_of_frame;
    out.values = Matrix({n, static_cast<int>(out.channel_names.size())});
    for (int t = 0; t < n; ++t) {
        double* row = out.values.row_ptr(t);
        row[0] = vx[t];
        row[1] = vy[t];
        row[2] = speed[t];
        row[3] = ax[t];
        row[4] = ay[t];
        row[5] = amag[t];
        row[6] = rm1[t];
        row[7] = rs1[t];
        row[8] = rm3[t];
        row[9] = rs3[t];
        row[10] = std::hypot(sx[t], sy[t]);  // dispersion over trailing 2 s
    }
    return out;
}

std::vector<WindowSlice> segment_windows(
    const std::vector<std::optional<data::PhaseLabel>>& phase_of_frame, double sample_rate_hz,
    double window_s, double stress_threshold, const std::vector<char>* frame_valid) {
    if (!(window_s > 0.0)) throw ConfigError("window_s must be positive");
    if (!(sample_rate_hz > 0.0)) throw ConfigError("sample rate must be positive");
    const int t_len = static_cast<int>(std::llround(window_s * sample_rate_hz));
    if (t_len < 2) throw ConfigError("window of " + std::to_string(t_len) + " frames is too short");

    const int total = static_cast<int>(phase_of_frame.size());
    const int n_windows = total / t_len;
    std::vector<WindowSlice> out;
    int emitted = 0;
    for (int w = 0; w < n_windows; ++w) {
        const int start = w * t_len;
        if (frame_valid) {
            bool ok = true;
            for (int t = start; t < start + t_len; ++t)
                if (!(*frame_valid)[t]) {
                    ok = false;
                    break;
                }
            if (!ok) continue;
        }
        WindowSlice ws;
        ws.start_frame = start;
        ws.t_len = t_len;
        ws.seq_index = emitted++;
        int stress_frames = 0;
        int counts[5] = {0, 0, 0, 0, 0};
        for (int t = start; t < start + t_len; ++t) {
            const auto& ph = phase_of_frame[t];
            if (!ph) continue;  // counts as non-stress
            ++counts[static_cast<int>(*ph)];
            if (data::is_stressor(*ph)) ++stress_frames;
        }
        int best = -1, best_count = 0;
        for (int p = 0; p < 5; ++p)
            if (counts[p] > best_count) {  // ties keep the earlier phase
                best_count = counts[p];
                best = p;
            }
        if (best >= 0) ws.phase_mode = static_cast<data::PhaseLabel>(best);
        ws.stress_ratio = static_cast<double>(stress_frames) / t_len;
        ws.label = ws.stress_ratio > stress_threshold ? 1 : 0;
        out.push_back(ws);
    }
    return out;
}

std::vector<double> velocity_difference_descriptor(const Matrix& md_frames, const Matrix& nd_frames) {
    if (md_frames.rows() != nd_frames.rows() || md_frames.cols() != nd_frames.cols())
        throw ShapeError("velocity_difference_descriptor windows differ in shape");
    const int t_len = md_frames.rows();
    const int c = md_frames.cols();
    if (t_len < 2) throw ShapeError("descriptor needs at least 2 frames");
    std::vector<double> out(c, 0.0);
    for (int t = 1; t < t_len; ++t) {
        for (int j = 0; j < c; ++j) {
            double dmd = md_frames.at(t, j) - md_frames.at(t - 1, j);
            double dnd = nd_frames.at(t, j) - nd_frames.at(t - 1, j);
            out[j] += dmd - dnd;
        }
    }
    for (auto& v : out) v /= static_cast<double>(t_len - 1);
    return out;
}

namespace {

Matrix slice_rows(const Matrix& m, int start, int len) {
    Matrix out({len, m.cols()});
    for (int t = 0; t < len; ++t)
        std::copy(m.row_ptr(start + t), m.row_ptr(start + t) + m.cols(), out.row_ptr(t));
    return out;
}

// Mean frame-to-frame difference over all ND frames carrying the phase.
std::optional<std::vector<double>> nd_phase_mean_diff(const data::FeatureSequence& facial,
                                                      data::PhaseLabel phase) {
    std::vector<int> idx;
    for (int t = 0; t < facial.frames(); ++t)
        if (facial.phase_of_frame[t] && *facial.phase_of_frame[t] == phase) idx.push_back(t);
    if (idx.size() < 2) return std::nullopt;
    std::vector<double> out(facial.channels(), 0.0);
    for (std::size_t i = 1; i < idx.size(); ++i)
        for (int c = 0; c < facial.channels(); ++c)
            out[c] += facial.values.at(idx[i], c) - facial.values.at(idx[i - 1], c);
    for (auto& v : out) v /= static_cast<double>(idx.size() - 1);
    return out;
}

std::vector<double> row_mean_of_differences(const Matrix& frames) {
    std::vector<double> out(frames.cols(), 0.0);
    for (int t = 1; t < frames.rows(); ++t)
        for (int c = 0; c < frames.cols(); ++c) out[c] += frames.at(t, c) - frames.at(t - 1, c);
    for (auto& v : out) v /= static_cast<double>(frames.rows() - 1);
    return out;
}

}  // namespace

WindowSet build_windows(const AlignedSession& md, const AlignedSession* nd,
                        const WindowOptions& opts) {
    const auto& facial = md.seq(data::Modality::facial);
    std::vector<data::Modality> mods;
    for (const auto& [m, _] : md.seqs) mods.push_back(m);
    auto valid = md.combined_valid(mods);

    auto slices = segment_windows(md.phase_of_frame, facial.sample_rate_hz, opts.window_s,
                                  opts.stress_threshold, &valid);

    // Precompute gaze dynamics over the whole sequence (rolling stats need
    // history), then slice per window.
    std::optional<FeatureSequence> gaze_dyn;
    if (md.seqs.count(data::Modality::gaze))
        gaze_dyn = gaze_dynamics(md.seq(data::Modality::gaze));

    // ND windows grouped by phase for descriptor pairing.
    std::map<int, std::vector<Matrix>> nd_by_phase;
    const data::FeatureSequence* nd_facial = nullptr;
    if (nd) {
        nd_facial = &nd->seq(data::Modality::facial);
        std::vector<data::Modality> nd_mods;
        for (const auto& [m, _] : nd->seqs) nd_mods.push_back(m);
        auto nd_valid = nd->combined_valid(nd_mods);
        auto nd_slices = segment_windows(nd->phase_of_frame, nd_facial->sample_rate_hz,
                                         opts.window_s, opts.stress_threshold, &nd_valid);
        for (const auto& s : nd_slices) {
            if (!s.phase_mode) continue;
            nd_by_phase[static_cast<int>(*s.phase_mode)].push_back(
                slice_rows(nd_facial->values, s.start_frame, s.t_len));
        }
    }

    WindowSet set;
    set.t_len = slices.empty() ? 0 : slices.front().t_len;
    std::map<int, int> phase_counter;  // per-phase ordinal (key -1 for none)
    for (const auto& s : slices) {
        Window w;
        w.subject_id = md.subject_id;
        w.condition = md.condition;
        w.phase_mode = s.phase_mode;
        w.seq_index = s.seq_index;
        int phase_key = s.phase_mode ? static_cast<int>(*s.phase_mode) : -1;
        w.window_index = phase_counter[phase_key]++;
        w.stress_ratio = s.stress_ratio;
        w.label = s.label;
        w.facial = slice_rows(facial.values, s.start_frame, s.t_len);
        w.facial_delta = frame_differences(w.facial);
        if (md.seqs.count(data::Modality::bio))
            w.bio = slice_rows(md.seq(data::Modality::bio).values, s.start_frame, s.t_len);
        if (gaze_dyn) w.gaze_dyn = slice_rows(gaze_dyn->values, s.start_frame, s.t_len);

        if (opts.compute_baseline && nd) {
            if (s.phase_mode) {
                auto it = nd_by_phase.find(phase_key);
                if (it != nd_by_phase.end() && w.window_index < static_cast<int>(it->second.size())) {
                    w.baseline_descriptor =
                        velocity_difference_descriptor(w.facial, it->second[w.window_index]);
                } else {
                    auto fallback = nd_phase_mean_diff(*nd_facial, *s.phase_mode);
                    if (fallback) {
                        auto md_mean = row_mean_of_differences(w.facial);
                        std::vector<double> d(md_mean.size());
                        for (std::size_t i = 0; i < d.size(); ++i) d[i] = md_mean[i] - (*fallback)[i];
                        w.baseline_descriptor = std::move(d);
                    } else {
                        w.baseline_descriptor = std::vector<double>(w.facial.cols(), 0.0);
                        set.warnings.push_back(w.subject_id + ": no ND frames in phase " +
                                               data::to_string(*s.phase_mode) + " for window " +
                                               std::to_string(s.seq_index) +
                                               "; zero baseline descriptor");
                    }
                }
            } else {
                w.baseline_descriptor = std::vector<double>(w.facial.cols(), 0.0);
                set.warnings.push_back(w.subject_id + ": window " + std::to_string(s.seq_index) +
                                       " has no phase; zero baseline descriptor");
            }
        }
        set.windows.push_back(std::move(w));
    }
    return set;
}

Matrix assemble_model_input(const Window& w, bool include_delta, bool include_baseline,
                            const Matrix* secondary) {
    const int t_len = w.facial.rows();
    int f = w.facial.cols();
    if (include_delta) f += w.facial_delta.cols();
    if (include_baseline) {
        if (!w.baseline_descriptor)
            throw ConfigError("window has no baseline descriptor (built without a paired ND drive)");
        f += static_cast<int>(w.baseline_descriptor->size());
    }
    if (secondary) {
        if (secondary->rows() != t_len)
            throw ShapeError("secondary stream length " + std::to_string(secondary->rows()) +
                             " != window length " + std::to_string(t_len));
        f += secondary->cols();
    }
    Matrix out({t_len, f});
    for (int t = 0; t < t_len; ++t) {
        double* row = out.row_ptr(t);
        int o = 0;
        std::copy(w.facial.row_ptr(t), w.facial.row_ptr(t) + w.facial.cols(), row + o);
        o += w.facial.cols();
        if (include_delta) {
            std::copy(w.facial_delta.row_ptr(t), w.facial_delta.row_ptr(t) + w.facial_delta.cols(),
                      row + o);
            o += w.facial_delta.cols();
        }
        if (include_baseline) {
            std::copy(w.baseline_descriptor->begin(), w.baseline_descriptor->end(), row + o);
            o += static_cast<int>(w.baseline_descriptor->size());
        }
        if (secondary) {
            std::copy(secondary->row_ptr(t), secondary->row_ptr(t) + secondary->cols(), row + o);
            o += secondary->cols();
        }
    }
    return out;
}

NormalizationStats fit_normalization(const std::vector<const Matrix*>& train_inputs) {
    if (train_inputs.size() < 2)
        throw InsufficientDataError("normalization needs at least 2 training windows");
    const int c = train_inputs.front()->cols();
    long n = 0;
    std::vector<double> sum(c, 0.0), sumsq(c, 0.0);
    for (const auto* m : train_inputs) {
        if (m->cols() != c) throw ShapeError("normalization inputs differ in width");
        for (int t = 0; t < m->rows(); ++t) {
            const double* row = m->row_ptr(t);
            for (int j = 0; j < c; ++j) {
                sum[j] += row[j];
                sumsq[j] += row[j] * row[j];
            }
            ++n;
        }
    }
    NormalizationStats s;
    s.mean.resize(c);
    s.std.resize(c);
    for (int j = 0; j < c; ++j) {
        s.mean[j] = sum[j] / n;
        double var = sumsq[j] / n - s.mean[j] * s.mean[j];
        double sd = var > 0.0 ? std::sqrt(var) : 0.0;
        s.std[j] = sd < 1e-8 ? 1.0 : sd;  // degenerate channels pass through
    }
    return s;
}

NormalizationStats fit_normalization_rows(const Matrix& rows) {
    if (rows.rows() < 2) throw InsufficientDataError("normalization needs at least 2 rows");
    const int c = rows.cols();
    NormalizationStats s;
    s.mean.assign(c, 0.0);
    s.std.assign(c, 0.0);
    for (int i = 0; i < rows.rows(); ++i)
        for (int j = 0; j < c; ++j) s.mean[j] += rows.at(i, j);
    for (int j = 0; j < c; ++j) s.mean[j] /= rows.rows();
    for (int i = 0; i < rows.rows(); ++i)
        for (int j = 0; j < c; ++j) {
            double d = rows.at(i, j) - s.mean[j];
            s.std[j] += d * d;
        }
    for (int j = 0; j < c; ++j) {
        double sd = std::sqrt(s.std[j] / rows.rows());
        s.std[j] = sd < 1e-8 ? 1.0 : sd;
    }
    return s;
}

void apply_normalization(const NormalizationStats& stats, Matrix& m) {
    if (m.cols() != static_cast<int>(stats.mean.size()))
        throw ShapeError("normalization stats width mismatch");
    for (int t = 0; t < m.rows(); ++t) {
        double* row = m.row_ptr(t);
        for (int j = 0; j < m.cols(); ++j) row[j] = (row[j] - stats.mean[j]) / stats.std[j];
    }
}

std::vector<double> summary_features(const Matrix& m) {
    const int c = m.cols();
    const int n = m.rows();
    std::vector<double> out(2 * c, 0.0);
    for (int t = 0; t < n; ++t) {
        const double* row = m.row_ptr(t);
        for (int j = 0; j < c; ++j) out[j] += row[j];
    }
    for (int j = 0; j < c; ++j) out[j] /= n;
    for (int t = 0; t < n; ++t) {
        const double* row = m.row_ptr(t);
        for (int j = 0; j < c; ++j) {
            double d = row[j] - out[j];
            out[c + j] += d * d;
        }
    }
    for (int j = 0; j < c; ++j) out[c + j] = std::sqrt(out[c + j] / n);
    return out;
}

void write_windows_csv(const std::string& path, const std::vector<const WindowSet*>& sets) {
    std::vector<std::string> header = {"subject",      "condition", "phase_mode",
                                       "window_index", "label",     "stress_ratio"};
    bool header_done = false;
    std::vector<std::vector<std::string>> rows;
    for (const auto* set : sets) {
        for (const auto& w : set->windows) {
            Matrix input = assemble_model_input(
                w, true, w.baseline_descriptor.has_value(), w.bio.numel() ? &w.bio : nullptr);
            auto summary = summary_features(input);
            if (!header_done) {
                for (std::size_t j = 0; j < summary.size() / 2; ++j)
                    header.push_back("mean_" + std::to_string(j));
                for (std::size_t j = 0; j < summary.size() / 2; ++j)
                    header.push_back("std_" + std::to_string(j));
                header_done = true;
            }
            std::vector<std::string> row = {
                w.subject_id,
                data::to_string(w.condition),
                w.phase_mode ? data::to_string(*w.phase_mode) : "none",
                std::to_string(w.window_index),
                w.label ? "stress" : "no_stress",
                csv::format_double(w.stress_ratio)};
            for (double v : summary) row.push_back(csv::format_double(v));
            rows.push_back(std::move(row));
        }
    }
    csv::write_rows(path, header, rows);
}

}  // namespace stresskit::features
