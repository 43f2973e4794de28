#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdvc/common.hpp"
#include "sdvc/inventory.hpp"
#include "sdvc/timeline.hpp"

namespace sdvc {

// ---------------------------------------------------------------------------
// Diarization error rate.
//
// Channels are two fixed speakers (adult, child): the channels are physically
// separate microphones, so there is no speaker-assignment problem and
// "confusion" reduces to per-channel miss/false-alarm. Scoring runs on a 1 ms
// discretized timeline; a +-collar region around every reference segment
// boundary (on any channel) is excluded from scoring. The denominator is the
// reference speech time that survives the collar exclusion.
// ---------------------------------------------------------------------------

namespace detail {

using MsInterval = std::pair<std::int64_t, std::int64_t>;  // [start, end) in ms

inline std::int64_t to_ms(double seconds) {
    return std::llround(seconds * 1000.0);
}

inline std::vector<MsInterval> merge_intervals(std::vector<MsInterval> v) {
    std::sort(v.begin(), v.end());
    std::vector<MsInterval> out;
    for (const auto& iv : v) {
        if (iv.second <= iv.first) continue;
        if (!out.empty() && iv.first <= out.back().second)
            out.back().second = std::max(out.back().second, iv.second);
        else
            out.push_back(iv);
    }
    return out;
}

inline std::vector<MsInterval> intersect_intervals(
    const std::vector<MsInterval>& a, const std::vector<MsInterval>& b) {
    std::vector<MsInterval> out;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const auto lo = std::max(a[i].first, b[j].first);
        const auto hi = std::min(a[i].second, b[j].second);
        if (hi > lo) out.push_back({lo, hi});
        if (a[i].second < b[j].second)
            ++i;
        else
            ++j;
    }
    return out;
}

// a \ b; both merged/sorted
inline std::vector<MsInterval> subtract_intervals(
    const std::vector<MsInterval>& a, const std::vector<MsInterval>& b) {
    std::vector<MsInterval> out;
    std::size_t j = 0;
    for (auto [lo, hi] : a) {
        auto cur = lo;
        while (j < b.size() && b[j].second <= cur) ++j;
        std::size_t k = j;
        while (k < b.size() && b[k].first < hi) {
            if (b[k].first > cur) out.push_back({cur, b[k].first});
            cur = std::max(cur, b[k].second);
            ++k;
        }
        if (cur < hi) out.push_back({cur, hi});
    }
    return merge_intervals(std::move(out));
}

inline std::int64_t total_ms(const std::vector<MsInterval>& v) {
    std::int64_t acc = 0;
    for (const auto& iv : v) acc += iv.second - iv.first;
    return acc;
}

inline std::vector<MsInterval> speech_intervals(const SegmentSet& segments,
                                                const std::string& speaker) {
    std::vector<MsInterval> out;
    for (const auto& s : segments)
        if (s.speaker == speaker) out.push_back({to_ms(s.start_s), to_ms(s.end_s)});
    return merge_intervals(std::move(out));
}

}  // namespace detail

struct DerBreakdown {
    double der_pct = 0.0;
    double missed_s = 0.0;
    double false_alarm_s = 0.0;
    double confusion_s = 0.0;  // always 0 under fixed channel identities
    double scored_speech_s = 0.0;
};

inline DerBreakdown der_breakdown(const SegmentSet& ref, const SegmentSet& hyp,
                                  double collar_s = 0.25) {
    if (collar_s < 0.0) throw ValidationError("der: collar must be >= 0");
    std::set<std::string> speakers;
    for (const auto& s : ref) speakers.insert(s.speaker);
    for (const auto& s : hyp) speakers.insert(s.speaker);

    // global no-score zones around every reference boundary
    const auto collar_ms = detail::to_ms(collar_s);
    std::vector<detail::MsInterval> noscore;
    for (const auto& s : ref) {
        const auto b0 = detail::to_ms(s.start_s);
        const auto b1 = detail::to_ms(s.end_s);
        noscore.push_back({std::max<std::int64_t>(0, b0 - collar_ms), b0 + collar_ms});
        noscore.push_back({std::max<std::int64_t>(0, b1 - collar_ms), b1 + collar_ms});
    }
    noscore = detail::merge_intervals(std::move(noscore));

    std::int64_t miss = 0, fa = 0, den = 0;
    for (const auto& sp : speakers) {
        auto r = detail::speech_intervals(ref, sp);
        auto h = detail::speech_intervals(hyp, sp);
        const auto r_scored = detail::subtract_intervals(r, noscore);
        const auto h_scored = detail::subtract_intervals(h, noscore);
        den += detail::total_ms(r_scored);
        miss += detail::total_ms(detail::subtract_intervals(r_scored, h_scored));
        fa += detail::total_ms(detail::subtract_intervals(h_scored, r_scored));
    }
    if (den == 0)
        throw EmptyReferenceError(
            "der: no scored reference speech (empty reference or collar covers "
            "everything)");

    DerBreakdown out;
    out.missed_s = miss / 1000.0;
    out.false_alarm_s = fa / 1000.0;
    out.confusion_s = 0.0;
    out.scored_speech_s = den / 1000.0;
    out.der_pct = 100.0 * static_cast<double>(miss + fa) / static_cast<double>(den);
    return out;
}

inline double der(const SegmentSet& ref, const SegmentSet& hyp,
                  double collar_s = 0.25) {
    return der_breakdown(ref, hyp, collar_s).der_pct;
}

// ---------------------------------------------------------------------------
// Frame-level classification metrics.
// ---------------------------------------------------------------------------

struct ClassCounts {
    std::int64_t tp = 0, fp = 0, fn = 0, support = 0;
};

inline std::map<std::string, ClassCounts> per_class_counts(
    std::span<const std::string> ref, std::span<const std::string> hyp) {
    if (ref.size() != hyp.size())
        throw ValidationError("metrics: ref/hyp length mismatch");
    std::map<std::string, ClassCounts> counts;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        auto& r = counts[ref[i]];
        ++r.support;
        if (ref[i] == hyp[i]) {
            ++r.tp;
        } else {
            ++r.fn;
            ++counts[hyp[i]].fp;
        }
    }
    return counts;
}

// Macro-averaged F1 over the tier's inventory. Silence is a class like any
// other (configurable); classes absent from both ref and hyp are excluded
// from the average.
inline double f1_unweighted(std::span<const std::string> ref,
                            std::span<const std::string> hyp,
                            const ClassInventory& tier,
                            bool include_silence = true) {
    const auto counts = per_class_counts(ref, hyp);
    double sum = 0.0;
    int n = 0;
    for (const auto& cls : tier.classes) {
        if (!include_silence && cls == tier.silence_class) continue;
        auto it = counts.find(cls);
        if (it == counts.end()) continue;  // absent from both ref and hyp
        const auto& c = it->second;
        if (c.tp + c.fp + c.fn == 0) continue;
        sum += 2.0 * c.tp / static_cast<double>(2 * c.tp + c.fp + c.fn);
        ++n;
    }
    if (n == 0) throw EmptyReferenceError("f1: no classes present");
    return 100.0 * sum / n;
}

// Mean per-class recall over classes present in the reference.
inline double uar(std::span<const std::string> ref,
                  std::span<const std::string> hyp, const ClassInventory& tier) {
    const auto counts = per_class_counts(ref, hyp);
    double sum = 0.0;
    int n = 0;
    for (const auto& cls : tier.classes) {
        auto it = counts.find(cls);
        if (it == counts.end() || it->second.support == 0) continue;
        sum += static_cast<double>(it->second.tp) /
               static_cast<double>(it->second.support);
        ++n;
    }
    if (n == 0) throw EmptyReferenceError("uar: empty reference");
    return 100.0 * sum / n;
}

inline double accuracy(std::span<const std::string> ref,
                       std::span<const std::string> hyp) {
    if (ref.empty()) throw EmptyReferenceError("accuracy: empty reference");
    if (ref.size() != hyp.size())
        throw ValidationError("metrics: ref/hyp length mismatch");
    std::int64_t ok = 0;
    for (std::size_t i = 0; i < ref.size(); ++i)
        if (ref[i] == hyp[i]) ++ok;
    return 100.0 * ok / static_cast<double>(ref.size());
}

// ---------------------------------------------------------------------------
// Percentile bootstrap (2.5 / 97.5). Items are resampled with replacement;
// when group ids are given, whole groups are resampled (e.g. frames grouped
// by session).
// ---------------------------------------------------------------------------

struct BootstrapCi {
    double low = 0.0;
    double high = 0.0;
};

inline BootstrapCi bootstrap_ci(
    std::span<const std::string> ref, std::span<const std::string> hyp,
    const std::function<double(std::span<const std::string>,
                               std::span<const std::string>)>& metric,
    std::uint64_t seed, int n_resamples = 1000,
    std::span<const std::string> groups = {}) {
    if (ref.size() != hyp.size() ||
        (!groups.empty() && groups.size() != ref.size()))
        throw ValidationError("bootstrap: input length mismatch");
    if (ref.empty()) throw EmptyReferenceError("bootstrap: empty sample");

    // unit = one item, or one group of items
    std::vector<std::vector<std::size_t>> units;
    if (groups.empty()) {
        units.reserve(ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) units.push_back({i});
    } else {
        std::map<std::string, std::vector<std::size_t>> by_group;
        for (std::size_t i = 0; i < groups.size(); ++i)
            by_group[groups[i]].push_back(i);
        for (auto& [_, idxs] : by_group) units.push_back(std::move(idxs));
    }

    Rng rng(seed);
    std::vector<double> stats;
    stats.reserve(n_resamples);
    std::vector<std::string> r, h;
    for (int it = 0; it < n_resamples; ++it) {
        r.clear();
        h.clear();
        for (std::size_t u = 0; u < units.size(); ++u) {
            const auto& unit = units[rng.below(units.size())];
            for (auto idx : unit) {
                r.push_back(ref[idx]);
                h.push_back(hyp[idx]);
            }
        }
        try {
            stats.push_back(metric(r, h));
        } catch (const EmptyReferenceError&) {
            // degenerate resample (e.g. all one class); skip it
        }
    }
    if (stats.empty()) throw EmptyReferenceError("bootstrap: no valid resamples");
    std::sort(stats.begin(), stats.end());

    auto quantile = [&](double q) {
        const double pos = q * (static_cast<double>(stats.size()) - 1.0);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, stats.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return stats[lo] * (1.0 - frac) + stats[hi] * frac;
    };
    return {quantile(0.025), quantile(0.975)};
}

// ---------------------------------------------------------------------------
// Aggregate report.
// ---------------------------------------------------------------------------

struct MetricReport {
    double der_pct = -1.0;  // < 0 when diarization was not scored
    std::map<std::string, double> f1;           // per tier, silence included
    std::map<std::string, double> f1_excl_sil;  // per tier, silence excluded
    double uar_pct = -1.0;
    BootstrapCi uar_ci{-1.0, -1.0};
    std::map<std::string, std::map<std::string, std::int64_t>> support;
    std::string config_hash;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["version"] = kVersion;
        j["config_hash"] = config_hash;
        if (der_pct >= 0.0) j["der_pct"] = der_pct;
        j["f1_pct"] = f1;
        j["f1_excl_silence_pct"] = f1_excl_sil;
        if (uar_pct >= 0.0) {
            j["uar_pct"] = uar_pct;
            j["uar_ci95_pct"] = {uar_ci.low, uar_ci.high};
        }
        j["support"] = support;
        return j;
    }
};

}  // namespace sdvc
