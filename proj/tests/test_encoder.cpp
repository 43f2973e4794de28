#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdvc/encoder.hpp"

using namespace sdvc;

namespace {

std::vector<double> test_wave(double seconds, std::uint64_t seed = 3) {
    Rng rng(seed);
    std::vector<double> out(static_cast<std::size_t>(seconds * kSampleRate));
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = 0.3 * std::sin(2.0 * M_PI * 500.0 * i / kSampleRate) +
                 0.01 * rng.uniform(-1.0, 1.0);
    return out;
}

}  // namespace

TEST_CASE("stub encoder is deterministic across instances and calls") {
    const auto wave = test_wave(2.0);
    StubEncoder a(9, 2, 16), b(9, 2, 16);
    const auto fa = a.encode(wave);
    const auto fb = b.encode(wave);
    const auto fa2 = a.encode(wave);
    REQUIRE(fa.num_layers() == 2);
    for (int l = 0; l < 2; ++l) {
        CHECK(fa.layers[l].d == fb.layers[l].d);
        CHECK(fa.layers[l].d == fa2.layers[l].d);
    }
    // different seeds give different projections
    StubEncoder c(10, 2, 16);
    CHECK(c.encode(wave).layers[0].d != fa.layers[0].d);
}

TEST_CASE("2 s of audio at 50 Hz stub rate gives T_h = 100") {
    StubEncoder enc(1, 3, 8);
    const auto f = enc.encode(test_wave(2.0));
    CHECK(f.t() == 100);
    CHECK(f.dim() == 8);
    CHECK(f.num_layers() == 3);
}

TEST_CASE("zero waveform encodes to finite features") {
    StubEncoder enc(1, 2, 8);
    std::vector<double> zeros(32000, 0.0);
    const auto f = enc.encode(zeros);
    for (const auto& layer : f.layers)
        for (double v : layer.d) CHECK(std::isfinite(v));
}

TEST_CASE("waveform shorter than one hop is rejected with padding advice") {
    StubEncoder enc(1, 2, 8);
    std::vector<double> tiny(100, 0.0);
    try {
        enc.encode(tiny);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("zero-pad") != std::string::npos);
    }
}

TEST_CASE("pool_utterance: constant-in-time features pool to the constant") {
    LayerFeatureSet f;
    Mat layer(5, 3);
    for (int t = 0; t < 5; ++t)
        for (int c = 0; c < 3; ++c) layer.at(t, c) = 1.5 * (c + 1);
    f.layers.push_back(layer);
    const auto pooled = pool_utterance(f);
    REQUIRE(pooled.size() == 1);
    CHECK(pooled[0] == Vec{1.5, 3.0, 4.5});
}

TEST_CASE("pool_utterance: antisymmetric two-step features pool to zero") {
    LayerFeatureSet f;
    Mat layer(2, 4);
    for (int c = 0; c < 4; ++c) {
        layer.at(0, c) = 0.25 * (c + 1);
        layer.at(1, c) = -0.25 * (c + 1);
    }
    f.layers.push_back(layer);
    const auto pooled = pool_utterance(f);
    for (double v : pooled[0]) CHECK(v == 0.0);
}

TEST_CASE("pool_utterance matches hand-computed column means") {
    LayerFeatureSet f;
    Mat layer(3, 4);
    Rng rng(17);
    for (auto& v : layer.d) v = rng.uniform(-2.0, 2.0);
    f.layers.push_back(layer);
    const auto pooled = pool_utterance(f);
    for (int c = 0; c < 4; ++c) {
        const double mean =
            (layer.at(0, c) + layer.at(1, c) + layer.at(2, c)) / 3.0;
        CHECK(pooled[0][c] == doctest::Approx(mean).epsilon(1e-15));
    }
}

TEST_CASE("pool_utterance is invariant to time reversal") {
    StubEncoder enc(4, 2, 12);
    auto f = enc.encode(test_wave(1.4));
    const auto pooled = pool_utterance(f);
    for (auto& layer : f.layers)
        for (int t = 0; t < layer.rows / 2; ++t)
            for (int c = 0; c < layer.cols; ++c)
                std::swap(layer.at(t, c), layer.at(layer.rows - 1 - t, c));
    const auto reversed = pool_utterance(f);
    for (std::size_t l = 0; l < pooled.size(); ++l)
        for (std::size_t c = 0; c < pooled[l].size(); ++c)
            CHECK(pooled[l][c] == doctest::Approx(reversed[l][c]).epsilon(1e-12));
}

TEST_CASE("weighted_layer_avg: one-hot weights return the layer exactly") {
    std::vector<Vec> pooled = {{1.0, 2.0}, {3.5, -1.25}, {0.125, 7.0}};
    const Vec one_hot = {0.0, 1.0, 0.0};
    const auto out = weighted_layer_avg(pooled, one_hot);
    CHECK(out[0] == 3.5);  // bit-for-bit
    CHECK(out[1] == -1.25);
}

TEST_CASE("weighted_layer_avg: uniform weights over identical layers") {
    std::vector<Vec> pooled = {{2.0, -4.0}, {2.0, -4.0}, {2.0, -4.0}};
    const Vec w = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    const auto out = weighted_layer_avg(pooled, w);
    CHECK(out[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(-4.0).epsilon(1e-15));
}

TEST_CASE("weighted_layer_avg: scalar arithmetic per dimension") {
    std::vector<Vec> pooled = {{1.0, 8.0}, {5.0, -4.0}};
    const Vec w = {0.25, 0.75};
    const auto out = weighted_layer_avg(pooled, w);
    CHECK(out[0] == doctest::Approx(0.25 * 1.0 + 0.75 * 5.0));
    CHECK(out[1] == doctest::Approx(0.25 * 8.0 + 0.75 * -4.0));
}

TEST_CASE("weighted_layer_avg is permutation-equivariant") {
    Rng rng(5);
    std::vector<Vec> pooled;
    Vec w;
    for (int l = 0; l < 4; ++l) {
        Vec layer(6);
        for (auto& v : layer) v = rng.uniform(-1.0, 1.0);
        pooled.push_back(layer);
        w.push_back(rng.uniform(0.0, 1.0));
    }
    double sum = 0.0;
    for (double v : w) sum += v;
    for (auto& v : w) v /= sum;
    const auto base = weighted_layer_avg(pooled, w);
    // permute layers and weights together
    std::vector<std::size_t> perm = {2, 0, 3, 1};
    std::vector<Vec> p2;
    Vec w2;
    for (auto i : perm) {
        p2.push_back(pooled[i]);
        w2.push_back(w[i]);
    }
    const auto permuted = weighted_layer_avg(p2, w2);
    for (std::size_t c = 0; c < base.size(); ++c)
        CHECK(base[c] == doctest::Approx(permuted[c]).epsilon(1e-12));
}

TEST_CASE("weighted_layer_avg is linear in the pooled features") {
    Rng rng(7);
    std::vector<Vec> a = {{1.0, 2.0}, {3.0, 4.0}};
    std::vector<Vec> b = {{-2.0, 0.5}, {1.0, -1.0}};
    const Vec w = {0.3, 0.7};
    std::vector<Vec> sum = a;
    for (std::size_t l = 0; l < a.size(); ++l)
        for (std::size_t c = 0; c < a[l].size(); ++c) sum[l][c] += b[l][c];
    const auto lhs = weighted_layer_avg(sum, w);
    const auto ra = weighted_layer_avg(a, w);
    const auto rb = weighted_layer_avg(b, w);
    for (std::size_t c = 0; c < lhs.size(); ++c)
        CHECK(lhs[c] == doctest::Approx(ra[c] + rb[c]).epsilon(1e-12));
}

TEST_CASE("LayerWeights: softmax weights sum to one and grads match FD") {
    LayerWeights lw(4);
    lw.logits = {0.3, -1.2, 0.8, 0.1};
    auto w = lw.weights();
    double sum = 0.0;
    for (double v : w) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

    // analytic jacobian-vector product vs central differences on a random
    // scalar function f(w) = d . w
    Rng rng(5);
    Vec d(4);
    for (auto& v : d) v = rng.uniform(-1.0, 1.0);
    const auto analytic = lw.backward(d);
    for (int i = 0; i < 4; ++i) {
        const double h = 1e-6;
        auto perturbed = lw;
        perturbed.logits[i] += h;
        double fp = 0.0, fm = 0.0;
        for (int k = 0; k < 4; ++k) fp += d[k] * perturbed.weights()[k];
        perturbed.logits[i] -= 2 * h;
        for (int k = 0; k < 4; ++k) fm += d[k] * perturbed.weights()[k];
        const double fd = (fp - fm) / (2 * h);
        CHECK(analytic[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("stub encoder backward matches finite differences") {
    StubEncoder enc(11, 2, 6, 50.0, 8);
    const auto wave = test_wave(0.5);
    const auto ctx = enc.encode_ctx(wave);
    // scalar loss: sum of all layer features times fixed random weights
    Rng rng(3);
    std::vector<Mat> dfeats;
    for (const auto& layer : ctx.features.layers) {
        Mat d(layer.rows, layer.cols);
        for (auto& v : d.d) v = rng.uniform(-1.0, 1.0);
        dfeats.push_back(d);
    }
    auto loss = [&]() {
        const auto f = enc.encode(wave);
        double acc = 0.0;
        for (std::size_t l = 0; l < f.layers.size(); ++l)
            for (std::size_t i = 0; i < f.layers[l].d.size(); ++i)
                acc += dfeats[l].d[i] * f.layers[l].d[i];
        return acc;
    };
    enc.zero_grads();
    enc.backward(ctx, dfeats);
    auto params = enc.params();
    auto grads = enc.grads();
    Rng pick(9);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        for (int check = 0; check < 10; ++check) {
            const auto idx = pick.below(params[pi]->d.size());
            const double orig = params[pi]->d[idx];
            const double h = 1e-5;
            params[pi]->d[idx] = orig + h;
            const double fp = loss();
            params[pi]->d[idx] = orig - h;
            const double fm = loss();
            params[pi]->d[idx] = orig;
            const double fd = (fp - fm) / (2 * h);
            CHECK(grads[pi]->d[idx] == doctest::Approx(fd).epsilon(1e-4));
        }
    }
}
