#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sdvc/common.hpp"

namespace sdvc {

// Frame-rate class sequence for one speaker/channel.
struct SpeakerTrack {
    std::string speaker;
    std::string silence_label = "SIL";
    std::vector<std::string> frames;
};

struct DiarizationTimeline {
    double hop_s = 0.1;
    std::vector<SpeakerTrack> tracks;

    const SpeakerTrack* find(const std::string& speaker) const {
        for (const auto& t : tracks)
            if (t.speaker == speaker) return &t;
        return nullptr;
    }

    void validate() const {
        for (std::size_t i = 1; i < tracks.size(); ++i)
            if (tracks[i].frames.size() != tracks[0].frames.size())
                throw ValidationError("timeline tracks have unequal lengths");
    }
};

struct TimelineSegment {
    std::string speaker;
    std::string label;
    double start_s = 0.0;
    double end_s = 0.0;

    bool operator==(const TimelineSegment&) const = default;
};

using SegmentSet = std::vector<TimelineSegment>;

// Sliding mode filter, the multi-class generalization of a median filter.
// Window is centered; edge windows shrink. When the maximal count is tied
// between classes the original center value is kept.
template <typename T>
std::vector<T> smooth_mode(const std::vector<T>& seq, int window) {
    if (window < 1 || window % 2 == 0)
        throw ValidationError("smooth: window must be odd and >= 1");
    const int n = static_cast<int>(seq.size());
    const int half = window / 2;
    std::vector<T> out(seq.size());
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half);
        const int hi = std::min(n - 1, i + half);
        std::map<T, int> counts;
        for (int j = lo; j <= hi; ++j) ++counts[seq[j]];
        int best = -1;
        bool tie = false;
        T best_val = seq[i];
        for (const auto& [val, cnt] : counts) {
            if (cnt > best) {
                best = cnt;
                best_val = val;
                tie = false;
            } else if (cnt == best) {
                tie = true;
            }
        }
        out[i] = tie ? seq[i] : best_val;
    }
    return out;
}

inline SpeakerTrack smooth(const SpeakerTrack& track, int window = 11) {
    SpeakerTrack out = track;
    out.frames = smooth_mode(track.frames, window);
    return out;
}

inline DiarizationTimeline smooth(const DiarizationTimeline& tl, int window = 11) {
    DiarizationTimeline out = tl;
    for (auto& t : out.tracks) t.frames = smooth_mode(t.frames, window);
    return out;
}

// Maximal runs of identical non-silence classes become segments
// [i*hop, (j+1)*hop). Adjacent runs of different speech classes stay
// separate segments.
inline SegmentSet timeline_to_segments(const DiarizationTimeline& tl) {
    SegmentSet out;
    for (const auto& track : tl.tracks) {
        const int n = static_cast<int>(track.frames.size());
        int i = 0;
        while (i < n) {
            if (track.frames[i] == track.silence_label) {
                ++i;
                continue;
            }
            int j = i;
            while (j + 1 < n && track.frames[j + 1] == track.frames[i]) ++j;
            out.push_back({track.speaker, track.frames[i], i * tl.hop_s,
                           (j + 1) * tl.hop_s});
            i = j + 1;
        }
    }
    return out;
}

// Inverse of timeline_to_segments for hop-aligned segments: frame k takes the
// label of the segment covering its midpoint.
inline DiarizationTimeline segments_to_timeline(
    const SegmentSet& segments, const std::vector<std::string>& speakers,
    double total_s, double hop_s = 0.1, const std::string& silence = "SIL") {
    DiarizationTimeline tl;
    tl.hop_s = hop_s;
    const int n = static_cast<int>(std::llround(total_s / hop_s));
    for (const auto& sp : speakers) {
        SpeakerTrack track;
        track.speaker = sp;
        track.silence_label = silence;
        track.frames.assign(n, silence);
        for (const auto& seg : segments) {
            if (seg.speaker != sp) continue;
            for (int k = 0; k < n; ++k) {
                const double mid = (k + 0.5) * hop_s;
                if (mid >= seg.start_s && mid < seg.end_s)
                    track.frames[k] = seg.label;
            }
        }
        tl.tracks.push_back(std::move(track));
    }
    return tl;
}

// ---------------------------------------------------------------------------
// RTTM-compatible serialization with a trailing class column for VC labels:
//   SPEAKER <session> 1 <start> <dur> <NA> <NA> <speaker> <NA> <NA> <class>
// ---------------------------------------------------------------------------

inline void write_rttm(const std::filesystem::path& path,
                       const std::string& session_id, const SegmentSet& segments) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write rttm: " + path.string());
    for (const auto& s : segments)
        out << "SPEAKER " << session_id << " 1 " << format_seconds(s.start_s)
            << ' ' << format_seconds(s.end_s - s.start_s)
            << " <NA> <NA> " << s.speaker << " <NA> <NA> " << s.label << '\n';
}

inline SegmentSet read_rttm(const std::filesystem::path& path,
                            std::string* session_id_out = nullptr) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open rttm: " + path.string());
    SegmentSet out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == ';') continue;
        std::stringstream ss(line);
        std::string kind, session, chan, start, dur, na1, na2, speaker, na3, na4,
            label;
        ss >> kind >> session >> chan >> start >> dur >> na1 >> na2 >> speaker >>
            na3 >> na4 >> label;
        if (kind != "SPEAKER") continue;
        if (session_id_out) *session_id_out = session;
        TimelineSegment seg;
        seg.speaker = speaker;
        seg.label = label.empty() ? speaker : label;
        seg.start_s = std::stod(start);
        seg.end_s = seg.start_s + std::stod(dur);
        out.push_back(seg);
    }
    return out;
}

}  // namespace sdvc
