#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sdvc/corpus.hpp"
#include "sdvc/fixture.hpp"

using namespace sdvc;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("sdvc_corpus_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// hand-built one-session manifest with the given child CSV rows
fs::path make_manifest(const fs::path& dir,
                       const std::vector<AnnotatedSegment>& chi_rows,
                       double duration_s = 5.0) {
    std::vector<double> wave(
        static_cast<std::size_t>(duration_s * kSampleRate), 0.0);
    write_wav_pcm16(dir / "a.wav", wave);
    write_wav_pcm16(dir / "c.wav", wave);
    write_segment_csv(dir / "a.csv", {});
    write_segment_csv(dir / "c.csv", chi_rows);
    std::ofstream m(dir / "manifest.jsonl");
    m << R"({"type":"session","session_id":"s0","child_id":"k0",)"
      << R"("adult_wav":"a.wav","child_wav":"c.wav",)"
      << R"("adult_csv":"a.csv","child_csv":"c.csv"})" << "\n";
    return dir / "manifest.jsonl";
}

AnnotatedSegment chi(const std::string& label, double a, double b) {
    return {Channel::child, "CHI", label, a, b};
}

}  // namespace

TEST_CASE("load_sessions passes through disjoint segments") {
    const auto dir = temp_dir("passthrough");
    const auto m = make_manifest(dir, {chi("VOC", 1.0, 1.5), chi("CRY", 3.0, 3.4)});
    const auto sessions = load_sessions(m);
    REQUIRE(sessions.size() == 1);
    const auto segs = sessions[0].tier_segments(Channel::child, "CHI");
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].label == "VOC");
    CHECK(segs[0].start_s == doctest::Approx(1.0));
    CHECK(segs[1].label == "CRY");
}

TEST_CASE("same-label overlap merges") {
    const auto dir = temp_dir("merge");
    const auto m = make_manifest(dir, {chi("VOC", 1.0, 2.0), chi("VOC", 1.5, 2.5)});
    const auto sessions = load_sessions(m);
    const auto segs = sessions[0].tier_segments(Channel::child, "CHI");
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].start_s == doctest::Approx(1.0));
    CHECK(segs[0].end_s == doctest::Approx(2.5));
}

TEST_CASE("conflicting-label overlap is rejected citing the interval") {
    const auto dir = temp_dir("conflict");
    const auto m = make_manifest(dir, {chi("VOC", 1.0, 2.0), chi("CRY", 1.5, 2.5)});
    try {
        load_sessions(m);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("1.5") != std::string::npos);
        CHECK(msg.find("2") != std::string::npos);
    }
}

TEST_CASE("missing audio file names the path") {
    const auto dir = temp_dir("missing");
    std::ofstream m(dir / "manifest.jsonl");
    m << R"({"type":"session","session_id":"s0","child_id":"k0",)"
      << R"("adult_wav":"nope.wav","child_wav":"nope.wav",)"
      << R"("adult_csv":"a.csv","child_csv":"c.csv"})" << "\n";
    m.close();
    try {
        load_sessions(dir / "manifest.jsonl");
        FAIL("expected IngestError");
    } catch (const IngestError& e) {
        CHECK(std::string(e.what()).find("nope.wav") != std::string::npos);
    }
}

TEST_CASE("channel length mismatch beyond tolerance is rejected") {
    const auto dir = temp_dir("mismatch");
    std::vector<double> adult(5 * kSampleRate, 0.0);
    std::vector<double> child(5 * kSampleRate + kSampleRate / 2, 0.0);  // +0.5 s
    write_wav_pcm16(dir / "a.wav", adult);
    write_wav_pcm16(dir / "c.wav", child);
    write_segment_csv(dir / "a.csv", {});
    write_segment_csv(dir / "c.csv", {});
    std::ofstream m(dir / "manifest.jsonl");
    m << R"({"type":"session","session_id":"s0","child_id":"k0",)"
      << R"("adult_wav":"a.wav","child_wav":"c.wav",)"
      << R"("adult_csv":"a.csv","child_csv":"c.csv"})" << "\n";
    m.close();
    CHECK_THROWS_AS(load_sessions(dir / "manifest.jsonl"), ValidationError);

    // 0.03 s difference pads instead
    std::vector<double> child2(5 * kSampleRate + 480, 0.0);
    write_wav_pcm16(dir / "c.wav", child2);
    const auto sessions = load_sessions(dir / "manifest.jsonl");
    CHECK(sessions[0].adult_audio.size() == sessions[0].child_audio.size());
}

TEST_CASE("segment csv round-trips the normalized table exactly") {
    const auto dir = temp_dir("roundtrip");
    Rng rng(31);
    for (int trial = 0; trial < 25; ++trial) {
        // random non-overlapping CHI segments on a ms grid
        std::vector<AnnotatedSegment> rows;
        const auto inv = chi_inventory();
        double t = 0.0;
        while (true) {
            t += 0.001 * (1 + rng.below(900));
            const double len = 0.001 * (1 + rng.below(2000));
            if (t + len > 4.9) break;
            const auto& cls =
                inv.classes[1 + rng.below(inv.classes.size() - 1)];
            rows.push_back(chi(cls, t, t + len));
            t += len;
        }
        const auto m = make_manifest(dir, rows);
        const auto first = load_sessions(m)[0].tier_segments(Channel::child, "CHI");
        write_segment_csv(dir / "c.csv", first);
        const auto second =
            load_sessions(m)[0].tier_segments(Channel::child, "CHI");
        CHECK(first == second);
    }
}

TEST_CASE("sessions come back sorted, non-overlapping, in bounds") {
    const auto dir = temp_dir("invariants");
    FixtureSpec spec;
    spec.n_sessions = 3;
    spec.duration_s = 40.0;
    const auto sessions = load_sessions(generate_fixture(spec, 5, dir));
    for (const auto& s : sessions) {
        for (Channel c : {Channel::adult, Channel::child}) {
            const auto tier = c == Channel::adult ? "ADU" : "CHI";
            const auto segs = s.tier_segments(c, tier);
            for (std::size_t i = 0; i < segs.size(); ++i) {
                CHECK(segs[i].start_s >= 0.0);
                CHECK(segs[i].end_s <= s.duration_s + 1e-9);
                if (i > 0) CHECK(segs[i].start_s >= segs[i - 1].end_s);
            }
        }
    }
}

TEST_CASE("make_folds: 43 children split 15/14/14") {
    std::vector<Session> sessions;
    for (int i = 0; i < 43; ++i) {
        Session s;
        s.session_id = "s" + std::to_string(i);
        s.child_id = "k" + std::to_string(i);
        sessions.push_back(std::move(s));
    }
    const auto folds = make_folds(sessions, 3, 7);
    REQUIRE(folds.size() == 3);
    std::multiset<std::size_t> sizes;
    for (const auto& f : folds) sizes.insert(f.test_ids.size());
    CHECK(sizes == std::multiset<std::size_t>{14, 14, 15});
}

TEST_CASE("make_folds is a speaker-disjoint partition") {
    std::vector<Session> sessions;
    for (int i = 0; i < 17; ++i) {
        Session s;
        s.child_id = "k" + std::to_string(i % 9);  // repeated children
        s.session_id = "s" + std::to_string(i);
        sessions.push_back(std::move(s));
    }
    const auto folds = make_folds(sessions, 3, 11);
    std::set<std::string> seen;
    for (const auto& f : folds) {
        for (const auto& id : f.test_ids) {
            CHECK(!f.train_ids.count(id));
            CHECK(seen.insert(id).second);  // each child in exactly one test fold
        }
    }
    CHECK(seen.size() == 9);
}

TEST_CASE("make_folds: 3 children, k=3 puts one child per fold") {
    std::vector<Session> sessions(3);
    for (int i = 0; i < 3; ++i) sessions[i].child_id = "k" + std::to_string(i);
    const auto folds = make_folds(sessions, 3, 1);
    for (const auto& f : folds) CHECK(f.test_ids.size() == 1);
}

TEST_CASE("make_folds determinism and error cases") {
    std::vector<Session> sessions(5);
    for (int i = 0; i < 5; ++i) sessions[i].child_id = "k" + std::to_string(i);
    const auto a = make_folds(sessions, 3, 99);
    const auto b = make_folds(sessions, 3, 99);
    for (int f = 0; f < 3; ++f) CHECK(a[f].test_ids == b[f].test_ids);
    CHECK_THROWS_AS(make_folds(sessions, 6, 1), ValidationError);
    CHECK_THROWS_AS(make_folds(sessions, 1, 1), ValidationError);
}

TEST_CASE("fixture rerun is byte-identical") {
    FixtureSpec spec;
    spec.n_sessions = 2;
    spec.duration_s = 20.0;
    const auto d1 = temp_dir("det1");
    const auto d2 = temp_dir("det2");
    generate_fixture(spec, 7, d1);
    generate_fixture(spec, 7, d2);
    for (const auto& entry : fs::directory_iterator(d1)) {
        std::ifstream fa(entry.path(), std::ios::binary);
        std::ifstream fb(d2 / entry.path().filename(), std::ios::binary);
        std::string ca((std::istreambuf_iterator<char>(fa)), {});
        std::string cb((std::istreambuf_iterator<char>(fb)), {});
        CHECK(!ca.empty());
        CHECK(ca == cb);
    }
}

TEST_CASE("fixture with -inf bleed: background stays at its silence floor") {
    FixtureSpec spec;
    spec.n_sessions = 1;
    spec.duration_s = 30.0;
    spec.bleed_db = -std::numeric_limits<double>::infinity();
    const auto dir = temp_dir("nobleed");
    const auto sessions = load_sessions(generate_fixture(spec, 3, dir));
    const auto& s = sessions[0];
    // during adult speech, the child channel energy must equal its own floor
    const auto adult_segs = s.tier_segments(Channel::adult, "ADU");
    REQUIRE(!adult_segs.empty());
    auto rms_db = [&](const std::vector<double>& x, double a, double b) {
        const auto i0 = static_cast<std::size_t>(a * kSampleRate);
        const auto i1 = static_cast<std::size_t>(b * kSampleRate);
        double acc = 0.0;
        for (auto i = i0; i < i1; ++i) acc += x[i] * x[i];
        return 20.0 * std::log10(std::sqrt(acc / (i1 - i0)));
    };
    const auto& seg = adult_segs[0];
    const double during = rms_db(s.child_audio, seg.start_s, seg.end_s);
    const double floor = rms_db(s.child_audio, 0.0, 1.0);  // leading silence
    CHECK(during == doctest::Approx(floor).epsilon(0.02));
}

TEST_CASE("fixture hits the requested class-mix budget") {
    FixtureSpec spec;
    spec.n_sessions = 1;
    spec.duration_s = 600.0;
    spec.adu_mix = {};
    spec.chi_mix = {{"VOC", 0.1}};
    const auto dir = temp_dir("budget");
    const auto sessions = load_sessions(generate_fixture(spec, 9, dir));
    double total = 0.0;
    for (const auto& seg : sessions[0].tier_segments(Channel::child, "CHI"))
        if (seg.label == "VOC") total += seg.end_s - seg.start_s;
    CHECK(total > 55.0);
    CHECK(total < 65.0);
}

TEST_CASE("clip and utterance manifests load with splits") {
    const auto dir = temp_dir("clips");
    ClipFixtureSpec cs;
    cs.clips_per_class = 3;
    const auto cm = generate_clip_fixture(cs, 3, dir);
    const auto clips = load_clips(cm);
    CHECK(clips.size() == 15);  // 5 classes x 3
    for (const auto& c : clips) {
        CHECK(!c.audio.empty());
        CHECK(babble_inventory().contains(c.label));
    }
    UttFixtureSpec us;
    us.n_utterances = 10;
    const auto um = generate_utterance_fixture(us, test_phone_inventory(4), 3,
                                               temp_dir("utts"));
    const auto utts = load_utterances(um);
    CHECK(utts.size() == 10);
    int with_test = 0;
    for (const auto& u : utts) with_test += u.split == "test";
    CHECK(with_test == 2);
}

TEST_CASE("inventory invariants") {
    CHECK_THROWS_AS(ClassInventory("X", {"A", "A"}, "A"), ValidationError);
    CHECK_THROWS_AS(ClassInventory("X", {"A", "B"}, "C"), ValidationError);
    CHECK(babble_inventory().silence_class == "JUNK");
    CHECK(adu_inventory().classes ==
          std::vector<std::string>{"SIL", "VOC", "LAU"});
    CHECK(chi_inventory().classes ==
          std::vector<std::string>{"SIL", "VOC", "VERB", "LAU", "CRY"});
}
