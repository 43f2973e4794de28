#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sdvc/common.hpp"
#include "sdvc/corpus.hpp"
#include "sdvc/inventory.hpp"

namespace sdvc {

struct FrameSpec {
    double frame_len_s = 2.0;
    double hop_s = 0.1;
    double center_len_s = 0.1;

    void validate() const {
        if (hop_s <= 0.0) throw ValidationError("FrameSpec: hop_s must be > 0");
        if (center_len_s > frame_len_s)
            throw ValidationError("FrameSpec: center_len_s > frame_len_s");
    }

    int samples_per_frame() const {
        return static_cast<int>(std::lround(frame_len_s * kSampleRate));
    }

    // Center window of frame i: [i*hop + (frame_len - center)/2,
    //                            i*hop + (frame_len + center)/2)
    double center_start(int i) const {
        return i * hop_s + (frame_len_s - center_len_s) / 2.0;
    }
    double center_end(int i) const {
        return i * hop_s + (frame_len_s + center_len_s) / 2.0;
    }

    // Frames exist while the center window lies within [0, duration].
    int frame_count(double duration_s) const {
        const double head = (frame_len_s + center_len_s) / 2.0;
        if (duration_s + 1e-9 < head) return 0;
        return static_cast<int>(std::floor((duration_s - head) / hop_s + 1e-9)) + 1;
    }

    // Offset (in hops) from a frame index to the 0-based timeline slot that
    // contains the frame's center point.
    int timeline_slot_offset() const {
        return static_cast<int>(std::lround(frame_len_s / 2.0 / hop_s));
    }
};

// One training example: a dual-channel window plus per-tier labels. Audio is
// always re-cut from the session waveform, never cached.
struct FrameExample {
    const Session* session = nullptr;
    int frame_index = 0;
    double start_s = 0.0;
    std::string adu_label;
    std::string chi_label;

    std::vector<double> cut(Channel c, const FrameSpec& spec) const {
        const auto& audio = session->audio(c);
        const int n = spec.samples_per_frame();
        std::vector<double> out(n, 0.0);
        const auto first = static_cast<long long>(std::llround(start_s * kSampleRate));
        for (int i = 0; i < n; ++i) {
            const long long idx = first + i;
            if (idx >= 0 && idx < static_cast<long long>(audio.size()))
                out[i] = audio[idx];
        }
        return out;
    }
};

// Majority-overlap label for a window. Unlabeled time counts toward the
// tier's silence class; ties go to the class listed later in the inventory.
inline std::string label_for_window(std::span<const AnnotatedSegment> segments,
                                    const ClassInventory& inventory, double t0,
                                    double t1) {
    if (t1 <= t0) throw ValidationError("label_for_window: t1 <= t0");
    std::vector<double> overlap(inventory.classes.size(), 0.0);
    double labeled = 0.0;
    for (const auto& s : segments) {
        const double lo = std::max(t0, s.start_s);
        const double hi = std::min(t1, s.end_s);
        if (hi > lo) {
            overlap[inventory.index_of(s.label)] += hi - lo;
            labeled += hi - lo;
        }
    }
    overlap[inventory.silence_index()] += std::max(0.0, (t1 - t0) - labeled);

    constexpr double kTieEps = 1e-9;
    int best = inventory.silence_index();
    for (std::size_t i = 0; i < overlap.size(); ++i) {
        const int idx = static_cast<int>(i);
        if (overlap[i] > overlap[best] + kTieEps)
            best = idx;
        else if (std::abs(overlap[i] - overlap[best]) <= kTieEps && idx > best)
            best = idx;  // reverse-order priority on ties
    }
    if (overlap[best] <= kTieEps) return inventory.silence_class;
    return inventory.classes[best];
}

inline std::vector<FrameExample> frames_from_session(const Session& session,
                                                     const FrameSpec& spec) {
    spec.validate();
    const auto adu = adu_inventory();
    const auto chi = chi_inventory();
    const auto adu_segs = session.tier_segments(Channel::adult, "ADU");
    const auto chi_segs = session.tier_segments(Channel::child, "CHI");
    const int n = spec.frame_count(session.duration_s);
    std::vector<FrameExample> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        FrameExample f;
        f.session = &session;
        f.frame_index = i;
        f.start_s = i * spec.hop_s;
        f.adu_label = label_for_window(adu_segs, adu, spec.center_start(i),
                                       spec.center_end(i));
        f.chi_label = label_for_window(chi_segs, chi, spec.center_start(i),
                                       spec.center_end(i));
        out.push_back(std::move(f));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Class balancing: per-class caps (subsample) and optional floors
// (oversample by cycling). Identity when no policy is configured.
// ---------------------------------------------------------------------------

struct BalancePolicy {
    std::string tier = "chi";  // which label the caps apply to: "adu" | "chi"
    std::map<std::string, int> caps;
    std::map<std::string, int> floors;

    bool empty() const { return caps.empty() && floors.empty(); }
};

inline std::vector<FrameExample> balance_sample(std::vector<FrameExample> frames,
                                                const BalancePolicy& policy,
                                                std::uint64_t seed) {
    if (policy.empty()) return frames;
    auto label_of = [&](const FrameExample& f) -> const std::string& {
        return policy.tier == "adu" ? f.adu_label : f.chi_label;
    };
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < frames.size(); ++i)
        by_class[label_of(frames[i])].push_back(i);

    Rng rng(seed);
    std::vector<bool> keep(frames.size(), true);
    std::vector<FrameExample> extra;
    for (auto& [cls, idxs] : by_class) {
        auto cap = policy.caps.find(cls);
        if (cap != policy.caps.end() &&
            static_cast<int>(idxs.size()) > cap->second) {
            // sample cap->second indices without replacement, keep input order
            std::vector<std::size_t> pool = idxs;
            for (std::size_t i = pool.size(); i > 1; --i)
                std::swap(pool[i - 1], pool[rng.below(i)]);
            pool.resize(static_cast<std::size_t>(std::max(cap->second, 0)));
            std::vector<bool> chosen_set(frames.size(), false);
            for (auto p : pool) chosen_set[p] = true;
            for (auto i : idxs)
                if (!chosen_set[i]) keep[i] = false;
        }
        auto floor = policy.floors.find(cls);
        if (floor != policy.floors.end() && !idxs.empty()) {
            int have = static_cast<int>(idxs.size());
            for (int j = 0; have + j < floor->second; ++j)
                extra.push_back(frames[idxs[j % idxs.size()]]);
        }
    }
    std::vector<FrameExample> out;
    for (std::size_t i = 0; i < frames.size(); ++i)
        if (keep[i]) out.push_back(frames[i]);
    out.insert(out.end(), extra.begin(), extra.end());
    return out;
}

// ---------------------------------------------------------------------------
// Frame cache: one CSV record per frame. Audio is never cached.
// ---------------------------------------------------------------------------

inline void write_frame_cache(const std::filesystem::path& path,
                              std::span<const FrameExample> frames,
                              const std::string& meta_comment = "") {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write frame cache: " + path.string());
    if (!meta_comment.empty()) out << "# " << meta_comment << '\n';
    out << "session_id,start_s,adu_label,chi_label\n";
    for (const auto& f : frames)
        out << f.session->session_id << ',' << format_seconds(f.start_s) << ','
            << f.adu_label << ',' << f.chi_label << '\n';
}

}  // namespace sdvc
