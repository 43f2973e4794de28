#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdvc/common.hpp"
#include "sdvc/inventory.hpp"
#include "sdvc/wav.hpp"

namespace sdvc {

enum class Channel { adult, child };

inline std::string channel_name(Channel c) {
    return c == Channel::adult ? "adult" : "child";
}

struct AnnotatedSegment {
    Channel channel = Channel::adult;
    std::string tier;   // tier name, e.g. "ADU" / "CHI"
    std::string label;  // class name within the tier
    double start_s = 0.0;
    double end_s = 0.0;

    bool operator==(const AnnotatedSegment&) const = default;
};

struct Session {
    std::string session_id;
    std::string child_id;
    std::vector<double> adult_audio;  // 16 kHz mono
    std::vector<double> child_audio;  // 16 kHz mono
    double duration_s = 0.0;
    std::vector<AnnotatedSegment> segments;  // normalized, sorted per tier

    const std::vector<double>& audio(Channel c) const {
        return c == Channel::adult ? adult_audio : child_audio;
    }

    std::vector<AnnotatedSegment> tier_segments(Channel c,
                                                const std::string& tier) const {
        std::vector<AnnotatedSegment> out;
        for (const auto& s : segments)
            if (s.channel == c && s.tier == tier) out.push_back(s);
        return out;
    }
};

struct Clip {
    std::string clip_id;
    std::string child_id;
    std::vector<double> audio;
    std::string label;  // BABBLE class
    std::string split;  // train / dev / test
};

// Short IPA-transcribed utterance used for phone-recognizer training.
struct Utterance {
    std::string utt_id;
    std::vector<double> audio;
    std::vector<std::string> phones;
    std::string split;
};

struct FoldManifest {
    int fold_id = 0;
    std::set<std::string> train_ids;  // child ids
    std::set<std::string> test_ids;
};

// ---------------------------------------------------------------------------
// Segment CSV: header `tier,label,start_s,end_s`, seconds with >= 3 decimals.
// ---------------------------------------------------------------------------

inline std::vector<AnnotatedSegment> read_segment_csv(
    const std::filesystem::path& path, Channel channel) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open segment file: " + path.string());
    std::vector<AnnotatedSegment> out;
    std::string line;
    bool header_seen = false;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;  // first non-comment line is the header
            continue;
        }
        std::stringstream ss(line);
        std::string tier, label, start, end;
        if (!std::getline(ss, tier, ',') || !std::getline(ss, label, ',') ||
            !std::getline(ss, start, ',') || !std::getline(ss, end))
            throw ValidationError("malformed segment row at " + path.string() +
                                  ":" + std::to_string(line_no));
        AnnotatedSegment seg;
        seg.channel = channel;
        seg.tier = tier;
        seg.label = label;
        try {
            seg.start_s = std::stod(start);
            seg.end_s = std::stod(end);
        } catch (const std::exception&) {
            throw ValidationError("bad time value at " + path.string() + ":" +
                                  std::to_string(line_no));
        }
        out.push_back(seg);
    }
    return out;
}

inline void write_segment_csv(const std::filesystem::path& path,
                              const std::vector<AnnotatedSegment>& segments) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write segment file: " + path.string());
    out << "tier,label,start_s,end_s\n";
    for (const auto& s : segments)
        out << s.tier << ',' << s.label << ',' << format_seconds(s.start_s)
            << ',' << format_seconds(s.end_s) << '\n';
}

// ---------------------------------------------------------------------------
// Normalization: per tier, sort, merge same-label overlaps (and touching
// runs), reject conflicting-label overlaps. Silence-class rows are implicit
// and dropped on ingest.
// ---------------------------------------------------------------------------

inline std::vector<AnnotatedSegment> normalize_tier_segments(
    std::vector<AnnotatedSegment> segs, const ClassInventory& inventory,
    const std::string& context) {
    for (const auto& s : segs) {
        if (s.end_s <= s.start_s)
            throw ValidationError(context + ": segment with end <= start at [" +
                                  format_seconds(s.start_s) + "," +
                                  format_seconds(s.end_s) + ")");
        if (!inventory.contains(s.label))
            throw ValidationError(context + ": label '" + s.label +
                                  "' not in tier " + inventory.tier_name);
    }
    std::erase_if(segs, [&](const AnnotatedSegment& s) {
        return s.label == inventory.silence_class;
    });
    std::sort(segs.begin(), segs.end(),
              [](const AnnotatedSegment& a, const AnnotatedSegment& b) {
                  if (a.start_s != b.start_s) return a.start_s < b.start_s;
                  return a.end_s < b.end_s;
              });
    std::vector<AnnotatedSegment> out;
    for (const auto& s : segs) {
        if (!out.empty() && s.start_s < out.back().end_s) {
            if (s.label == out.back().label) {
                out.back().end_s = std::max(out.back().end_s, s.end_s);
                continue;
            }
            throw ValidationError(
                context + ": conflicting labels " + out.back().label + "/" +
                s.label + " overlap in [" + format_seconds(s.start_s) + "," +
                format_seconds(std::min(out.back().end_s, s.end_s)) + ")");
        }
        if (!out.empty() && s.start_s == out.back().end_s &&
            s.label == out.back().label) {
            out.back().end_s = s.end_s;
            continue;
        }
        out.push_back(s);
    }
    return out;
}

inline std::vector<AnnotatedSegment> normalize_segments(
    std::vector<AnnotatedSegment> segs, const std::string& context) {
    std::map<std::pair<int, std::string>, std::vector<AnnotatedSegment>> groups;
    for (auto& s : segs)
        groups[{static_cast<int>(s.channel), s.tier}].push_back(std::move(s));
    std::vector<AnnotatedSegment> out;
    for (auto& [key, group] : groups) {
        auto norm = normalize_tier_segments(std::move(group),
                                            inventory_by_name(key.second),
                                            context + " tier " + key.second);
        out.insert(out.end(), norm.begin(), norm.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Manifest: JSON-lines, one record per line. Session rows reference two wav
// files and two segment CSVs; clip and utterance rows are single-wav.
// ---------------------------------------------------------------------------

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base,
                                     const std::string& rel) {
    std::filesystem::path p(rel);
    return p.is_absolute() ? p : base / p;
}

inline std::vector<nlohmann::json> read_manifest_rows(
    const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in)
        throw IngestError("cannot open manifest: " + manifest_path.string());
    std::vector<nlohmann::json> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json row;
        try {
            row = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw ValidationError("bad JSON at " + manifest_path.string() +
                                  ":" + std::to_string(line_no) + ": " +
                                  e.what());
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace detail

// Channel length mismatch up to this many seconds is zero-padded; beyond it
// the session is rejected as corrupt.
inline constexpr double kChannelPadToleranceS = 0.05;

inline std::vector<Session> load_sessions(
    const std::filesystem::path& manifest_path) {
    const auto base = manifest_path.parent_path();
    std::vector<Session> sessions;
    for (const auto& row : detail::read_manifest_rows(manifest_path)) {
        const std::string type = row.value("type", "session");
        if (type != "session") continue;
        Session s;
        s.session_id = row.at("session_id").get<std::string>();
        s.child_id = row.at("child_id").get<std::string>();
        const auto adult_wav =
            detail::resolve(base, row.at("adult_wav").get<std::string>());
        const auto child_wav =
            detail::resolve(base, row.at("child_wav").get<std::string>());
        s.adult_audio = to_16k_mono(read_wav(adult_wav));
        s.child_audio = to_16k_mono(read_wav(child_wav));

        const auto n_a = s.adult_audio.size();
        const auto n_c = s.child_audio.size();
        const double diff_s =
            std::abs(static_cast<double>(n_a) - static_cast<double>(n_c)) /
            kSampleRate;
        if (diff_s > kChannelPadToleranceS)
            throw ValidationError("session " + s.session_id +
                                  ": channel durations differ by " +
                                  format_seconds(diff_s) + " s (max " +
                                  format_seconds(kChannelPadToleranceS) + ")");
        const auto n = std::max(n_a, n_c);
        s.adult_audio.resize(n, 0.0);
        s.child_audio.resize(n, 0.0);
        s.duration_s = static_cast<double>(n) / kSampleRate;

        std::vector<AnnotatedSegment> segs;
        auto adult_rows = read_segment_csv(
            detail::resolve(base, row.at("adult_csv").get<std::string>()),
            Channel::adult);
        auto child_rows = read_segment_csv(
            detail::resolve(base, row.at("child_csv").get<std::string>()),
            Channel::child);
        segs.insert(segs.end(), adult_rows.begin(), adult_rows.end());
        segs.insert(segs.end(), child_rows.begin(), child_rows.end());
        s.segments = normalize_segments(std::move(segs), "session " + s.session_id);
        for (const auto& seg : s.segments)
            if (seg.start_s < 0.0 || seg.end_s > s.duration_s + 1e-6)
                throw ValidationError("session " + s.session_id + ": segment [" +
                                      format_seconds(seg.start_s) + "," +
                                      format_seconds(seg.end_s) +
                                      ") outside audio duration " +
                                      format_seconds(s.duration_s));
        sessions.push_back(std::move(s));
    }
    return sessions;
}

inline std::vector<Clip> load_clips(const std::filesystem::path& manifest_path) {
    const auto base = manifest_path.parent_path();
    std::vector<Clip> clips;
    const auto inventory = babble_inventory();
    for (const auto& row : detail::read_manifest_rows(manifest_path)) {
        if (row.value("type", "") != "clip") continue;
        Clip c;
        c.clip_id = row.at("clip_id").get<std::string>();
        c.child_id = row.at("child_id").get<std::string>();
        c.label = row.at("label").get<std::string>();
        c.split = row.value("split", "train");
        if (!inventory.contains(c.label))
            throw ValidationError("clip " + c.clip_id + ": label '" + c.label +
                                  "' not in BABBLE inventory");
        c.audio = to_16k_mono(
            read_wav(detail::resolve(base, row.at("wav").get<std::string>())));
        if (c.audio.empty())
            throw ValidationError("clip " + c.clip_id + ": empty audio");
        clips.push_back(std::move(c));
    }
    return clips;
}

inline std::vector<Utterance> load_utterances(
    const std::filesystem::path& manifest_path) {
    const auto base = manifest_path.parent_path();
    std::vector<Utterance> utts;
    for (const auto& row : detail::read_manifest_rows(manifest_path)) {
        if (row.value("type", "") != "utt") continue;
        Utterance u;
        u.utt_id = row.at("id").get<std::string>();
        u.split = row.value("split", "train");
        std::stringstream ss(row.value("ipa", ""));
        std::string tok;
        while (ss >> tok) u.phones.push_back(tok);
        u.audio = to_16k_mono(
            read_wav(detail::resolve(base, row.at("wav").get<std::string>())));
        utts.push_back(std::move(u));
    }
    return utts;
}

// ---------------------------------------------------------------------------
// Cross-validation folds: speaker-disjoint partition of child ids.
// ---------------------------------------------------------------------------

inline std::vector<FoldManifest> make_folds(const std::vector<Session>& sessions,
                                            int k, std::uint64_t seed) {
    if (k < 2) throw ValidationError("make_folds: k must be >= 2");
    std::set<std::string> ids;
    for (const auto& s : sessions) ids.insert(s.child_id);
    if (static_cast<int>(ids.size()) < k)
        throw ValidationError("make_folds: " + std::to_string(ids.size()) +
                              " child ids < k=" + std::to_string(k));
    std::vector<std::string> ordered(ids.begin(), ids.end());
    Rng rng(seed);
    for (std::size_t i = ordered.size(); i > 1; --i)
        std::swap(ordered[i - 1], ordered[rng.below(i)]);

    std::vector<FoldManifest> folds(k);
    const int n = static_cast<int>(ordered.size());
    const int base = n / k, extra = n % k;
    int pos = 0;
    for (int f = 0; f < k; ++f) {
        folds[f].fold_id = f;
        const int take = base + (f < extra ? 1 : 0);
        for (int i = 0; i < take; ++i) folds[f].test_ids.insert(ordered[pos++]);
    }
    for (int f = 0; f < k; ++f)
        for (const auto& id : ordered)
            if (!folds[f].test_ids.count(id)) folds[f].train_ids.insert(id);
    return folds;
}

}  // namespace sdvc
