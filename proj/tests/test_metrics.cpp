#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "sdvc/metrics.hpp"
#include "sdvc/timeline.hpp"

using namespace sdvc;

namespace {

TimelineSegment seg(const std::string& speaker, double a, double b,
                    const std::string& label = "VOC") {
    return {speaker, label, a, b};
}

// random ref/hyp segment sets on a 10 ms grid; ref boundaries spaced so the
// 0.25 s collar never swallows whole segments
SegmentSet random_ref(Rng& rng, double horizon_s) {
    SegmentSet out;
    for (const auto& sp : {"adult", "child"}) {
        double t = 0.1 * rng.below(20);
        while (true) {
            t += 0.6 + 0.01 * rng.below(200);
            const double len = 0.6 + 0.01 * rng.below(500);
            if (t + len > horizon_s) break;
            out.push_back(seg(sp, t, t + len));
            t += len;
        }
    }
    return out;
}

SegmentSet random_hyp(Rng& rng, double horizon_s) {
    SegmentSet out;
    for (const auto& sp : {"adult", "child"}) {
        double t = 0.01 * rng.below(50);
        while (true) {
            t += 0.01 * (1 + rng.below(150));
            const double len = 0.01 * (5 + rng.below(300));
            if (t + len > horizon_s) break;
            out.push_back(seg(sp, t, t + len));
            t += len;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("smooth: isolated single-frame spike is removed") {
    std::vector<std::string> x(21, "SIL");
    x[10] = "VOC";
    const auto y = smooth_mode(x, 11);
    for (const auto& v : y) CHECK(v == "SIL");
}

TEST_CASE("smooth: constant sequences are unchanged") {
    std::vector<std::string> x(40, "CRY");
    CHECK(smooth_mode(x, 11) == x);
}

TEST_CASE("smooth: alternating ties keep the center value") {
    std::vector<std::string> x;
    for (int i = 0; i < 20; ++i) x.push_back(i % 2 ? "A" : "B");
    const auto y = smooth_mode(x, 11);
    // recount every window by hand: ties must keep centers
    for (int i = 0; i < 20; ++i) {
        const int lo = std::max(0, i - 5), hi = std::min(19, i + 5);
        int a = 0, b = 0;
        for (int j = lo; j <= hi; ++j) (x[j] == "A" ? a : b)++;
        if (a == b)
            CHECK(y[i] == x[i]);
        else
            CHECK(y[i] == (a > b ? "A" : "B"));
    }
}

TEST_CASE("smooth output classes are a subset of input classes") {
    Rng rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<std::string> x;
        const std::vector<std::string> classes = {"SIL", "VOC", "CRY", "LAU"};
        const int n = 5 + rng.below(60);
        std::set<std::string> in_classes;
        for (int i = 0; i < n; ++i) {
            x.push_back(classes[rng.below(classes.size())]);
            in_classes.insert(x.back());
        }
        for (const auto& v : smooth_mode(x, 11)) CHECK(in_classes.count(v));
    }
}

TEST_CASE("smooth: binary sequences whose runs fill half the window are fixed points") {
    // The general idempotence claim fails (e.g. 0,1,0,1,0 under window 3
    // oscillates its edges); runs of at least (window+1)/2 are provably stable.
    for (int window : {3, 11}) {
        Rng rng(17);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<int> x;
            int cls = static_cast<int>(rng.below(2));
            while (static_cast<int>(x.size()) < 80) {
                const int run = (window + 1) / 2 + static_cast<int>(rng.below(8));
                for (int i = 0; i < run; ++i) x.push_back(cls);
                cls = 1 - cls;
            }
            const auto once = smooth_mode(x, window);
            CHECK(once == x);
            CHECK(smooth_mode(once, window) == once);
        }
    }
}

TEST_CASE("timeline_to_segments merges runs and splits class changes") {
    DiarizationTimeline tl;
    tl.hop_s = 0.1;
    tl.tracks.push_back({"child", "SIL", {"SIL", "VOC", "VOC", "SIL"}});
    auto s = timeline_to_segments(tl);
    REQUIRE(s.size() == 1);
    CHECK(s[0].label == "VOC");
    CHECK(s[0].start_s == doctest::Approx(0.1));
    CHECK(s[0].end_s == doctest::Approx(0.3));

    tl.tracks[0].frames = {"VOC", "CRY"};
    s = timeline_to_segments(tl);
    REQUIRE(s.size() == 2);
    CHECK(s[0].label == "VOC");
    CHECK(s[0].end_s == doctest::Approx(0.1));
    CHECK(s[1].label == "CRY");
    CHECK(s[1].start_s == doctest::Approx(0.1));
}

TEST_CASE("segments->timeline->segments is identity on hop-aligned segments") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        SegmentSet in;
        double t = 0.1 * rng.below(5);
        const std::vector<std::string> classes = {"VOC", "CRY"};
        while (true) {
            t += 0.1 * (1 + rng.below(8));
            const double len = 0.1 * (1 + rng.below(20));
            if (t + len > 30.0) break;
            // alternate labels so adjacent segments never merge
            in.push_back(seg("child", t, t + len, classes[in.size() % 2]));
            t += len;
        }
        const auto tl = segments_to_timeline(in, {"child"}, 30.0);
        const auto out = timeline_to_segments(tl);
        REQUIRE(out.size() == in.size());
        for (std::size_t i = 0; i < in.size(); ++i) {
            CHECK(out[i].label == in[i].label);
            CHECK(out[i].start_s == doctest::Approx(in[i].start_s));
            CHECK(out[i].end_s == doctest::Approx(in[i].end_s));
        }
    }
}

TEST_CASE("der: identical ref and hyp scores zero at any collar") {
    Rng rng(9);
    for (double collar : {0.0, 0.1, 0.25, 1.0}) {
        for (int trial = 0; trial < 20; ++trial) {
            const auto ref = random_ref(rng, 40.0);
            if (ref.empty()) continue;
            try {
                CHECK(der(ref, ref, collar) == 0.0);
            } catch (const EmptyReferenceError&) {
                // legal when the collar swallowed all scored speech
                CHECK(collar >= 0.25);
            }
        }
    }
}

TEST_CASE("der: worked collar example is exact") {
    const SegmentSet ref = {seg("A", 0.0, 10.0)};
    const SegmentSet hyp = {seg("A", 0.0, 5.0)};
    const auto b = der_breakdown(ref, hyp, 0.25);
    CHECK(b.der_pct == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(b.missed_s == doctest::Approx(4.75));
    CHECK(b.scored_speech_s == doctest::Approx(9.5));
}

TEST_CASE("der: collar large enough to cover everything is an error") {
    const SegmentSet ref = {seg("A", 1.0, 2.0)};
    CHECK_THROWS_AS(der(ref, ref, 5.0), EmptyReferenceError);
    CHECK_THROWS_AS(der({}, {seg("A", 0.0, 1.0)}, 0.25), EmptyReferenceError);
}

TEST_CASE("der matches the 1 ms brute-force oracle on random cases") {
    Rng rng(41);
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const auto ref = random_ref(rng, 50.0);
        const auto hyp = random_hyp(rng, 50.0);
        const auto expected = oracle::der_ms(ref, hyp, 0.25);
        if (!expected) {
            CHECK_THROWS_AS(der(ref, hyp, 0.25), EmptyReferenceError);
            continue;
        }
        CHECK(der(ref, hyp, 0.25) == doctest::Approx(*expected).epsilon(1e-12));
        ++checked;
    }
    CHECK(checked > 30);
}

TEST_CASE("der is invariant to splitting a hypothesis segment") {
    const SegmentSet ref = {seg("A", 0.0, 10.0), seg("B", 2.0, 6.0)};
    const SegmentSet hyp1 = {seg("A", 1.0, 9.0)};
    const SegmentSet hyp2 = {seg("A", 1.0, 4.0), seg("A", 4.0, 9.0)};
    CHECK(der(ref, hyp1) == der(ref, hyp2));
}

TEST_CASE("f1: perfect prediction scores 100") {
    const std::vector<std::string> ref = {"SIL", "VOC", "LAU", "SIL"};
    CHECK(f1_unweighted(ref, ref, adu_inventory()) == doctest::Approx(100.0));
}

TEST_CASE("f1: per-class scores 100 and 50 macro-average to 75") {
    // A perfect, B half right with misses landing on silence
    const ClassInventory tier("T", {"SIL", "A", "B"}, "SIL");
    const std::vector<std::string> ref = {"A", "A", "B", "B", "B"};
    const std::vector<std::string> hyp = {"A", "A", "B", "SIL", "SIL"};
    CHECK(f1_unweighted(ref, hyp, tier, /*include_silence=*/false) ==
          doctest::Approx(75.0));
    // with silence included, its two false positives drag the average down
    CHECK(f1_unweighted(ref, hyp, tier, true) == doctest::Approx(50.0));
}

TEST_CASE("f1/uar match the confusion-matrix oracle on random tables") {
    const ClassInventory tier("T", {"C0", "C1", "C2", "C3", "C4", "C5"}, "C0");
    Rng rng(77);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 30 + rng.below(400);
        std::vector<std::string> ref, hyp;
        const int used = 2 + rng.below(5);
        for (int i = 0; i < n; ++i) {
            ref.push_back(tier.classes[rng.below(used)]);
            hyp.push_back(tier.classes[rng.below(used)]);
        }
        oracle::Confusion conf(tier, ref, hyp);
        CHECK(f1_unweighted(ref, hyp, tier) ==
              doctest::Approx(conf.macro_f1(true, "C0")).epsilon(1e-12));
        CHECK(uar(ref, hyp, tier) ==
              doctest::Approx(conf.uar()).epsilon(1e-12));
    }
}

TEST_CASE("f1 excludes classes absent from both ref and hyp") {
    const ClassInventory tier("T", {"A", "B", "C"}, "A");
    const std::vector<std::string> ref = {"A", "B", "A"};
    const std::vector<std::string> hyp = {"A", "B", "B"};
    // class C absent entirely: average over A and B only
    // A: tp1 fp0 fn1; B: tp1 fp1 fn0
    const double a_f1 = 2.0 * 1 / (2 * 1 + 0 + 1);
    const double b_f1 = 2.0 * 1 / (2 * 1 + 1 + 0);
    CHECK(f1_unweighted(ref, hyp, tier) ==
          doctest::Approx(100.0 * (a_f1 + b_f1) / 2));
}

TEST_CASE("uar: recalls one and a half average to 75") {
    // class A recall 1.0 (2/2), class B recall 0.5 (1/2)
    const ClassInventory tier("T", {"A", "B"}, "A");
    const std::vector<std::string> ref = {"A", "A", "B", "B"};
    const std::vector<std::string> hyp = {"A", "A", "B", "A"};
    CHECK(uar(ref, hyp, tier) == doctest::Approx(75.0));
    CHECK(uar(ref, ref, tier) == doctest::Approx(100.0));
}

TEST_CASE("uar only averages classes present in the reference") {
    const ClassInventory tier("T", {"A", "B", "C"}, "A");
    const std::vector<std::string> ref = {"A", "A"};
    const std::vector<std::string> hyp = {"A", "C"};
    CHECK(uar(ref, hyp, tier) == doctest::Approx(50.0));
}

TEST_CASE("bootstrap: all-correct predictions give a (100, 100) interval") {
    std::vector<std::string> ref(50, "A"), hyp(50, "A");
    for (int i = 0; i < 25; ++i) ref[i] = hyp[i] = "B";
    const auto ci = bootstrap_ci(ref, hyp, accuracy, 3, 200);
    CHECK(ci.low == doctest::Approx(100.0));
    CHECK(ci.high == doctest::Approx(100.0));
}

TEST_CASE("bootstrap is deterministic for a fixed seed") {
    Rng rng(5);
    std::vector<std::string> ref, hyp;
    for (int i = 0; i < 200; ++i) {
        ref.push_back(rng.below(2) ? "A" : "B");
        hyp.push_back(rng.below(2) ? "A" : "B");
    }
    const auto a = bootstrap_ci(ref, hyp, accuracy, 11, 300);
    const auto b = bootstrap_ci(ref, hyp, accuracy, 11, 300);
    CHECK(a.low == b.low);
    CHECK(a.high == b.high);
}

TEST_CASE("bootstrap CI width tracks the normal approximation") {
    // Bernoulli(0.8) accuracy, n = 500: width ~ 2 * 1.96 * sqrt(.8*.2/500) * 100
    Rng rng(19);
    std::vector<std::string> ref(500, "A"), hyp(500, "A");
    for (int i = 0; i < 500; ++i)
        if (rng.uniform() > 0.8) hyp[i] = "B";
    const auto ci = bootstrap_ci(ref, hyp, accuracy, 7, 1000);
    const double width = ci.high - ci.low;
    CHECK(width > 5.0);
    CHECK(width < 9.0);
}

TEST_CASE("grouped bootstrap resamples whole groups") {
    // two sessions with opposite accuracy; grouped CI must reach both extremes
    std::vector<std::string> ref, hyp, groups;
    for (int i = 0; i < 40; ++i) {
        ref.push_back("A");
        hyp.push_back("A");
        groups.push_back("s0");
    }
    for (int i = 0; i < 40; ++i) {
        ref.push_back("A");
        hyp.push_back("B");
        groups.push_back("s1");
    }
    const auto ci = bootstrap_ci(ref, hyp, accuracy, 3, 500, groups);
    CHECK(ci.low == doctest::Approx(0.0));
    CHECK(ci.high == doctest::Approx(100.0));
}

TEST_CASE("rttm round-trip") {
    const auto dir = std::filesystem::temp_directory_path() / "sdvc_rttm";
    std::filesystem::create_directories(dir);
    const SegmentSet segs = {seg("adult", 1.25, 3.5, "VOC"),
                             seg("child", 4.0, 4.75, "CRY")};
    write_rttm(dir / "x.rttm", "sess1", segs);
    std::string sid;
    const auto back = read_rttm(dir / "x.rttm", &sid);
    CHECK(sid == "sess1");
    REQUIRE(back.size() == 2);
    CHECK(back[0].speaker == "adult");
    CHECK(back[0].label == "VOC");
    CHECK(back[0].start_s == doctest::Approx(1.25));
    CHECK(back[1].end_s == doctest::Approx(4.75));
}
