#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdvc/common.hpp"
#include "sdvc/corpus.hpp"
#include "sdvc/phone_inventory.hpp"
#include "sdvc/wav.hpp"

namespace sdvc {

// Synthetic stand-in for session corpora: foreground events are rendered as
// class-specific band-limited tones, and an attenuated copy of each event is
// mixed into the opposite channel to simulate microphone bleed.
struct FixtureSpec {
    int n_sessions = 2;
    double duration_s = 60.0;
    double bleed_db = -15.0;  // -inf disables bleed entirely
    double noise_floor_db = -60.0;
    double event_level_db = -10.0;
    // fraction of session duration per class, per tier
    std::map<std::string, double> adu_mix = {{"VOC", 0.30}, {"LAU", 0.03}};
    std::map<std::string, double> chi_mix = {
        {"VOC", 0.08}, {"VERB", 0.05}, {"LAU", 0.03}, {"CRY", 0.04}};

    nlohmann::json to_json() const {
        return {{"n_sessions", n_sessions},
                {"duration_s", duration_s},
                {"bleed_db", std::isinf(bleed_db) ? -999.0 : bleed_db},
                {"noise_floor_db", noise_floor_db},
                {"event_level_db", event_level_db},
                {"adu_mix", adu_mix},
                {"chi_mix", chi_mix}};
    }
};

namespace detail {

struct ToneProfile {
    double f0 = 440.0;
    double f1 = 0.0;        // secondary partial, 0 = none
    double am_hz = 0.0;     // amplitude modulation (laughter pulses)
    double vibrato_hz = 0.0;
};

inline ToneProfile tone_profile(Channel channel, const std::string& cls) {
    if (channel == Channel::adult) {
        if (cls == "VOC") return {220.0, 440.0, 0.0, 0.0};
        if (cls == "LAU") return {300.0, 0.0, 8.0, 0.0};
    } else {
        if (cls == "VOC") return {450.0, 900.0, 0.0, 0.0};
        if (cls == "VERB") return {500.0, 700.0, 4.0, 0.0};
        if (cls == "LAU") return {600.0, 0.0, 10.0, 0.0};
        if (cls == "CRY") return {900.0, 0.0, 0.0, 5.0};
    }
    return {400.0, 0.0, 0.0, 0.0};
}

inline void render_event(std::vector<double>& out, long long start_sample,
                         long long n_samples, const ToneProfile& p, double amp,
                         Rng& rng) {
    const double phase0 = rng.uniform(0.0, 2.0 * M_PI);
    const double phase1 = rng.uniform(0.0, 2.0 * M_PI);
    const long long ramp = kSampleRate / 100;  // 10 ms
    for (long long i = 0; i < n_samples; ++i) {
        const long long idx = start_sample + i;
        if (idx < 0 || idx >= static_cast<long long>(out.size())) continue;
        const double t = static_cast<double>(i) / kSampleRate;
        double f0 = p.f0;
        if (p.vibrato_hz > 0.0)
            f0 *= 1.0 + 0.03 * std::sin(2.0 * M_PI * p.vibrato_hz * t);
        double v = 0.7 * std::sin(2.0 * M_PI * f0 * t + phase0);
        if (p.f1 > 0.0) v += 0.3 * std::sin(2.0 * M_PI * p.f1 * t + phase1);
        if (p.am_hz > 0.0)
            v *= 0.55 + 0.45 * std::sin(2.0 * M_PI * p.am_hz * t);
        double env = 1.0;
        if (i < ramp) env = 0.5 - 0.5 * std::cos(M_PI * i / ramp);
        const long long tail = n_samples - 1 - i;
        if (tail < ramp) env = std::min(env, 0.5 - 0.5 * std::cos(M_PI * tail / ramp));
        out[idx] += amp * env * v;
    }
}

inline double round_ms(double t) { return std::llround(t * 1000.0) / 1000.0; }

}  // namespace detail

// Generates n deterministic two-channel sessions with segment CSVs and a
// JSON-lines manifest; returns the manifest path. Events alternate between
// channels (turn-taking), so cross-channel overlap does not occur.
inline std::filesystem::path generate_fixture(const FixtureSpec& spec,
                                              std::uint64_t seed,
                                              const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto manifest_path = out_dir / "manifest.jsonl";
    std::ofstream manifest(manifest_path);
    if (!manifest)
        throw IngestError("cannot write manifest: " + manifest_path.string());
    const std::string spec_hash = to_hex(fnv1a64(spec.to_json().dump()));
    manifest << nlohmann::json{{"type", "meta"},
                               {"version", kVersion},
                               {"config_hash", spec_hash},
                               {"seed", seed}}
                    .dump()
             << '\n';

    Rng root(seed);
    const double amp = std::pow(10.0, spec.event_level_db / 20.0);
    const double noise_amp =
        std::pow(10.0, spec.noise_floor_db / 20.0) * std::sqrt(3.0);
    const double bleed =
        std::isinf(spec.bleed_db) ? 0.0 : std::pow(10.0, spec.bleed_db / 20.0);

    for (int si = 0; si < spec.n_sessions; ++si) {
        Rng rng = root.fork(si);
        const std::string sid = "s" + std::to_string(si);
        const auto n = static_cast<long long>(
            std::llround(spec.duration_s * kSampleRate));
        std::vector<double> adult(n, 0.0), child(n, 0.0);

        // remaining speech budget per (channel, class)
        std::map<std::string, double> adu_budget, chi_budget;
        for (const auto& [cls, frac] : spec.adu_mix)
            adu_budget[cls] = frac * spec.duration_s;
        for (const auto& [cls, frac] : spec.chi_mix)
            chi_budget[cls] = frac * spec.duration_s;

        std::vector<AnnotatedSegment> segments;
        double cursor = 1.2;  // keep the session head silent
        Channel turn = Channel::adult;
        // events must outlast the 11-frame median filter, so never below 0.8 s
        constexpr double kMinEvent = 0.8;
        auto has_budget = [&](const std::map<std::string, double>& b) {
            for (const auto& [_, v] : b)
                if (v >= kMinEvent) return true;
            return false;
        };
        while (cursor < spec.duration_s - 1.0) {
            auto* budget = turn == Channel::adult ? &adu_budget : &chi_budget;
            if (!has_budget(*budget)) {
                turn = turn == Channel::adult ? Channel::child : Channel::adult;
                budget = turn == Channel::adult ? &adu_budget : &chi_budget;
                if (!has_budget(*budget)) break;
            }
            // pick a class weighted by remaining budget
            double total = 0.0;
            for (const auto& [_, v] : *budget)
                if (v >= kMinEvent) total += v;
            double pick = rng.uniform(0.0, total);
            std::string cls;
            for (const auto& [c, v] : *budget) {
                if (v < kMinEvent) continue;
                if (pick < v) {
                    cls = c;
                    break;
                }
                pick -= v;
            }
            if (cls.empty()) break;

            double len = std::min(rng.uniform(0.8, 1.8), (*budget)[cls]);
            len = detail::round_ms(std::max(len, kMinEvent));
            const double start = detail::round_ms(cursor);
            if (start + len > spec.duration_s - 0.5) break;

            const auto s0 = static_cast<long long>(std::llround(start * kSampleRate));
            const auto ns = static_cast<long long>(std::llround(len * kSampleRate));
            auto& fg = turn == Channel::adult ? adult : child;
            auto& bg = turn == Channel::adult ? child : adult;
            std::vector<double> event(fg.size(), 0.0);
            const double ev_amp = amp * std::pow(10.0, rng.uniform(-2.0, 2.0) / 20.0);
            detail::render_event(event, s0, ns,
                                 detail::tone_profile(turn, cls), ev_amp, rng);
            for (long long i = s0; i < std::min<long long>(s0 + ns, n); ++i) {
                fg[i] += event[i];
                if (bleed > 0.0) bg[i] += bleed * event[i];
            }

            AnnotatedSegment seg;
            seg.channel = turn;
            seg.tier = turn == Channel::adult ? "ADU" : "CHI";
            seg.label = cls;
            seg.start_s = start;
            seg.end_s = detail::round_ms(start + len);
            segments.push_back(seg);

            (*budget)[cls] -= len;
            // gaps must also outlast the median filter, or adjacent same-channel
            // events merge in the smoothed output
            cursor = start + len + rng.uniform(0.8, 1.6);
            turn = turn == Channel::adult ? Channel::child : Channel::adult;
        }

        for (long long i = 0; i < n; ++i) {
            adult[i] += noise_amp * rng.uniform(-1.0, 1.0);
            child[i] += noise_amp * rng.uniform(-1.0, 1.0);
        }

        write_wav_pcm16(out_dir / (sid + "_adult.wav"), adult);
        write_wav_pcm16(out_dir / (sid + "_child.wav"), child);
        std::vector<AnnotatedSegment> adu_rows, chi_rows;
        for (const auto& s : segments)
            (s.channel == Channel::adult ? adu_rows : chi_rows).push_back(s);
        write_segment_csv(out_dir / (sid + "_adult.csv"), adu_rows);
        write_segment_csv(out_dir / (sid + "_child.csv"), chi_rows);

        manifest << nlohmann::json{{"type", "session"},
                                   {"session_id", sid},
                                   {"child_id", "child" + std::to_string(si)},
                                   {"adult_wav", sid + "_adult.wav"},
                                   {"child_wav", sid + "_child.wav"},
                                   {"adult_csv", sid + "_adult.csv"},
                                   {"child_csv", sid + "_child.csv"}}
                        .dump()
                 << '\n';
    }
    return manifest_path;
}

// ---------------------------------------------------------------------------
// Single-clip corpus fixture (BABBLE classes, train/dev/test splits).
// ---------------------------------------------------------------------------

struct ClipFixtureSpec {
    int clips_per_class = 9;
    double min_len_s = 0.4;
    double max_len_s = 0.9;
    double noise_floor_db = -60.0;
    double event_level_db = -10.0;

    nlohmann::json to_json() const {
        return {{"clips_per_class", clips_per_class},
                {"min_len_s", min_len_s},
                {"max_len_s", max_len_s},
                {"noise_floor_db", noise_floor_db},
                {"event_level_db", event_level_db}};
    }
};

namespace detail {

inline ToneProfile babble_profile(const std::string& cls) {
    if (cls == "NON-CAN") return {420.0, 0.0, 0.0, 0.0};
    if (cls == "CAN") return {500.0, 950.0, 4.0, 0.0};
    if (cls == "LAU") return {620.0, 0.0, 10.0, 0.0};
    if (cls == "CRY") return {880.0, 0.0, 0.0, 5.0};
    return {0.0, 0.0, 0.0, 0.0};  // JUNK: noise only
}

}  // namespace detail

inline std::filesystem::path generate_clip_fixture(
    const ClipFixtureSpec& spec, std::uint64_t seed,
    const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto manifest_path = out_dir / "clips.jsonl";
    std::ofstream manifest(manifest_path);
    if (!manifest)
        throw IngestError("cannot write manifest: " + manifest_path.string());
    manifest << nlohmann::json{{"type", "meta"},
                               {"version", kVersion},
                               {"config_hash", to_hex(fnv1a64(spec.to_json().dump()))},
                               {"seed", seed}}
                    .dump()
             << '\n';

    Rng root(seed);
    const double amp = std::pow(10.0, spec.event_level_db / 20.0);
    const double noise_amp =
        std::pow(10.0, spec.noise_floor_db / 20.0) * std::sqrt(3.0);
    const auto inventory = babble_inventory();
    static const char* splits[] = {"train", "dev", "test"};
    int counter = 0;
    for (const auto& cls : inventory.classes) {
        for (int i = 0; i < spec.clips_per_class; ++i, ++counter) {
            Rng rng = root.fork(counter);
            const double len = rng.uniform(spec.min_len_s, spec.max_len_s);
            const auto n =
                static_cast<long long>(std::llround(len * kSampleRate));
            std::vector<double> audio(n, 0.0);
            const auto profile = detail::babble_profile(cls);
            if (profile.f0 > 0.0)
                detail::render_event(audio, 0, n, profile, amp, rng);
            for (auto& v : audio) v += noise_amp * rng.uniform(-1.0, 1.0);

            const std::string cid = "clip" + std::to_string(counter);
            write_wav_pcm16(out_dir / (cid + ".wav"), audio);
            manifest << nlohmann::json{{"type", "clip"},
                                       {"clip_id", cid},
                                       {"child_id", "bc" + std::to_string(i % 6)},
                                       {"wav", cid + ".wav"},
                                       {"label", cls},
                                       {"split", splits[i % 3]}}
                            .dump()
                     << '\n';
        }
    }
    return manifest_path;
}

// ---------------------------------------------------------------------------
// IPA utterance fixture for phone-recognizer training: each phone renders as
// a distinct pure tone, so a small model can learn the mapping.
// ---------------------------------------------------------------------------

struct UttFixtureSpec {
    int n_utterances = 30;
    int max_phones = 2;
    double phone_len_s = 0.24;
    double gap_s = 0.06;
    double event_level_db = -10.0;
    double noise_floor_db = -60.0;
    int n_phones_used = 4;  // draw phones from the first n ids of the inventory

    nlohmann::json to_json() const {
        return {{"n_utterances", n_utterances},
                {"max_phones", max_phones},
                {"phone_len_s", phone_len_s},
                {"gap_s", gap_s},
                {"event_level_db", event_level_db},
                {"noise_floor_db", noise_floor_db},
                {"n_phones_used", n_phones_used}};
    }
};

// Geometric spacing keeps tones in distinct log-spaced filterbank bands; ids
// wrap past 9 to stay under Nyquist. Frequencies are multiples of 50 Hz so a
// 20 ms analysis window sees an integer cycle count (no per-frame leakage).
inline double phone_tone_hz(int phone_id) {
    const double raw =
        300.0 * std::pow(2.0, 0.45 * (phone_id % 9)) + 50.0 * (phone_id / 9);
    return std::round(raw / 50.0) * 50.0;
}

inline std::filesystem::path generate_utterance_fixture(
    const UttFixtureSpec& spec, const PhoneInventory& phones, std::uint64_t seed,
    const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto manifest_path = out_dir / "utts.jsonl";
    std::ofstream manifest(manifest_path);
    if (!manifest)
        throw IngestError("cannot write manifest: " + manifest_path.string());
    manifest << nlohmann::json{{"type", "meta"},
                               {"version", kVersion},
                               {"config_hash", to_hex(fnv1a64(spec.to_json().dump()))},
                               {"seed", seed}}
                    .dump()
             << '\n';

    Rng root(seed);
    const double amp = std::pow(10.0, spec.event_level_db / 20.0);
    const double noise_amp =
        std::pow(10.0, spec.noise_floor_db / 20.0) * std::sqrt(3.0);
    const int usable = std::min(spec.n_phones_used, phones.size());
    for (int ui = 0; ui < spec.n_utterances; ++ui) {
        Rng rng = root.fork(ui);
        const int n_ph = 1 + static_cast<int>(rng.below(spec.max_phones));
        std::vector<int> ids;
        for (int p = 0; p < n_ph; ++p)
            ids.push_back(static_cast<int>(rng.below(usable)));

        const double total =
            0.2 + n_ph * (spec.phone_len_s + spec.gap_s) + 0.2;
        const auto n = static_cast<long long>(std::llround(total * kSampleRate));
        std::vector<double> audio(n, 0.0);
        double t = 0.2;
        std::string ipa;
        for (int id : ids) {
            detail::ToneProfile p;
            p.f0 = phone_tone_hz(id);
            detail::render_event(
                audio, static_cast<long long>(std::llround(t * kSampleRate)),
                static_cast<long long>(std::llround(spec.phone_len_s * kSampleRate)),
                p, amp, rng);
            t += spec.phone_len_s + spec.gap_s;
            if (!ipa.empty()) ipa += ' ';
            ipa += phones.phones[id];
        }
        for (auto& v : audio) v += noise_amp * rng.uniform(-1.0, 1.0);

        const std::string uid = "utt" + std::to_string(ui);
        write_wav_pcm16(out_dir / (uid + ".wav"), audio);
        manifest << nlohmann::json{{"type", "utt"},
                                   {"id", uid},
                                   {"wav", uid + ".wav"},
                                   {"ipa", ipa},
                                   {"split", ui % 5 == 4 ? "test" : "train"}}
                        .dump()
                 << '\n';
    }
    return manifest_path;
}

}  // namespace sdvc
