#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "sdvc/common.hpp"
#include "sdvc/corpus.hpp"
#include "sdvc/timeline.hpp"

namespace sdvc {

inline constexpr double kEnergyFloorDb = -120.0;
inline constexpr double kEnergyHopS = 0.1;

// Per-frame RMS energy in dBFS over non-overlapping 0.1 s frames.
struct EnergyTrack {
    double frame_hop_s = kEnergyHopS;
    std::vector<double> values;  // dBFS, floored at kEnergyFloorDb
};

struct EtModel {
    double threshold_adult = 0.0;  // dBFS
    double threshold_child = 0.0;
    int median_len = 11;

    double threshold(Channel c) const {
        return c == Channel::adult ? threshold_adult : threshold_child;
    }
};

inline EnergyTrack energy_track(std::span<const double> waveform,
                                int sample_rate = kSampleRate) {
    const int frame = static_cast<int>(std::lround(kEnergyHopS * sample_rate));
    EnergyTrack track;
    const auto n = static_cast<long long>(waveform.size());
    for (long long start = 0; start < n; start += frame) {
        const long long end = std::min<long long>(start + frame, n);
        double acc = 0.0;
        for (long long i = start; i < end; ++i) acc += waveform[i] * waveform[i];
        const double rms = std::sqrt(acc / static_cast<double>(end - start));
        const double db =
            rms > 0.0 ? std::max(kEnergyFloorDb, 20.0 * std::log10(rms))
                      : kEnergyFloorDb;
        track.values.push_back(db);
    }
    return track;
}

// Adaptive-threshold voice activity detector used as the calibration target
// for the unsupervised energy baseline: voiced iff the frame energy exceeds
// the session median by `margin_db`, then median-smoothed.
inline std::vector<int> reference_vad(const EnergyTrack& track,
                                      double margin_db = 16.0,
                                      int median_len = 11) {
    if (track.values.empty()) return {};
    std::vector<double> sorted = track.values;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    const double threshold = median + margin_db;
    std::vector<int> voiced(track.values.size());
    for (std::size_t i = 0; i < track.values.size(); ++i)
        voiced[i] = track.values[i] > threshold ? 1 : 0;
    return smooth_mode(voiced, median_len);
}

namespace detail {

struct ThresholdGrid {
    double lo = kEnergyFloorDb;
    double hi = kEnergyFloorDb;

    // 1 dB steps covering the observed range
    std::vector<double> steps() const {
        std::vector<double> out;
        for (double t = std::floor(lo); t <= std::ceil(hi) + 1e-9; t += 1.0)
            out.push_back(t);
        if (out.empty()) out.push_back(lo);
        return out;
    }
};

inline ThresholdGrid observed_grid(const std::vector<EnergyTrack>& tracks) {
    ThresholdGrid g;
    g.lo = std::numeric_limits<double>::infinity();
    g.hi = -std::numeric_limits<double>::infinity();
    for (const auto& t : tracks)
        for (double v : t.values) {
            g.lo = std::min(g.lo, v);
            g.hi = std::max(g.hi, v);
        }
    if (!std::isfinite(g.lo)) g.lo = g.hi = kEnergyFloorDb;
    return g;
}

inline double fit_channel_unsupervised(const std::vector<EnergyTrack>& tracks,
                                       double vad_margin_db, int median_len) {
    const auto grid = observed_grid(tracks);
    std::vector<std::vector<int>> targets;
    targets.reserve(tracks.size());
    for (const auto& t : tracks)
        targets.push_back(reference_vad(t, vad_margin_db, median_len));

    double best_t = grid.steps().front();
    long long best_agree = -1;
    for (double t : grid.steps()) {
        long long agree = 0;
        for (std::size_t k = 0; k < tracks.size(); ++k)
            for (std::size_t i = 0; i < tracks[k].values.size(); ++i)
                if ((tracks[k].values[i] > t ? 1 : 0) == targets[k][i]) ++agree;
        if (agree > best_agree) {  // ties keep the lowest threshold
            best_agree = agree;
            best_t = t;
        }
    }
    return best_t;
}

}  // namespace detail

// Unsupervised ET: per channel, grid-search the threshold (1 dB steps over
// the observed range) that best agrees frame-by-frame with the reference VAD.
inline EtModel fit_unsupervised(const std::vector<Session>& train_sessions,
                                int median_len = 11, double vad_margin_db = 16.0) {
    std::vector<EnergyTrack> adult, child;
    for (const auto& s : train_sessions) {
        adult.push_back(energy_track(s.adult_audio));
        child.push_back(energy_track(s.child_audio));
    }
    EtModel model;
    model.median_len = median_len;
    model.threshold_adult =
        detail::fit_channel_unsupervised(adult, vad_margin_db, median_len);
    model.threshold_child =
        detail::fit_channel_unsupervised(child, vad_margin_db, median_len);
    return model;
}

// Weak-supervised ET: per channel, the lowest threshold above which the
// foreground channel is strictly louder than the background channel on every
// training frame: T_c = max{ E_c(f) : E_c(f) <= E_other(f) } + 1 dB, or the
// grid minimum when no such frame exists.
inline EtModel fit_weak_supervised(const std::vector<Session>& train_sessions,
                                   int median_len = 11) {
    EtModel model;
    model.median_len = median_len;
    for (Channel c : {Channel::adult, Channel::child}) {
        double worst = kNegInf;
        double grid_min = std::numeric_limits<double>::infinity();
        for (const auto& s : train_sessions) {
            const auto fg = energy_track(s.audio(c));
            const auto bg = energy_track(
                s.audio(c == Channel::adult ? Channel::child : Channel::adult));
            const auto n = std::min(fg.values.size(), bg.values.size());
            for (std::size_t i = 0; i < n; ++i) {
                grid_min = std::min(grid_min, fg.values[i]);
                if (fg.values[i] <= bg.values[i])
                    worst = std::max(worst, fg.values[i]);
            }
        }
        if (!std::isfinite(grid_min)) grid_min = kEnergyFloorDb;
        const double t = (worst == kNegInf) ? grid_min : worst + 1.0;
        if (c == Channel::adult)
            model.threshold_adult = t;
        else
            model.threshold_child = t;
    }
    return model;
}

// Threshold each channel, median-smooth, emit a generic VOICED/SIL timeline.
inline DiarizationTimeline diarize_et(const EtModel& model, const Session& session) {
    DiarizationTimeline tl;
    tl.hop_s = kEnergyHopS;
    for (Channel c : {Channel::adult, Channel::child}) {
        const auto track = energy_track(session.audio(c));
        SpeakerTrack st;
        st.speaker = channel_name(c);
        st.silence_label = "SIL";
        st.frames.reserve(track.values.size());
        for (double v : track.values)
            st.frames.push_back(v > model.threshold(c) ? "VOICED" : "SIL");
        st.frames = smooth_mode(st.frames, model.median_len);
        tl.tracks.push_back(std::move(st));
    }
    return tl;
}

}  // namespace sdvc
