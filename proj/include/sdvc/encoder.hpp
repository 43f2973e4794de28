#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sdvc/common.hpp"
#include "sdvc/tensor.hpp"
#include "sdvc/wav.hpp"

namespace sdvc {

struct EncoderProfile {
    std::string name = "stub";
    int num_layers = 2;
    int hidden_dim = 16;
    double frame_rate_hz = 50.0;

    void validate() const {
        if (num_layers < 1)
            throw ValidationError("encoder profile: num_layers must be >= 1");
        if (hidden_dim < 1)
            throw ValidationError("encoder profile: hidden_dim must be >= 1");
        if (frame_rate_hz <= 0.0)
            throw ValidationError("encoder profile: frame_rate_hz must be > 0");
    }
};

// Per-layer hidden feature sequences for one waveform; all layers share the
// same time length.
struct LayerFeatureSet {
    std::vector<Mat> layers;

    int num_layers() const { return static_cast<int>(layers.size()); }
    int t() const { return layers.empty() ? 0 : layers[0].rows; }
    int dim() const { return layers.empty() ? 0 : layers[0].cols; }
};

// Layer mixing weights parameterized by logits so the sum-to-one constraint
// is structural.
struct LayerWeights {
    Vec logits;

    explicit LayerWeights(int num_layers = 0) : logits(num_layers, 0.0) {}

    Vec weights() const { return softmax(logits); }

    // d(loss)/d(logits) given d(loss)/d(weights)
    Vec backward(const Vec& dweights) const {
        const Vec w = weights();
        double dot = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) dot += dweights[i] * w[i];
        Vec out(w.size());
        for (std::size_t i = 0; i < w.size(); ++i)
            out[i] = w[i] * (dweights[i] - dot);
        return out;
    }
};

// Mean over time per layer.
inline std::vector<Vec> pool_utterance(const LayerFeatureSet& features) {
    std::vector<Vec> out;
    out.reserve(features.layers.size());
    for (const auto& layer : features.layers) {
        Vec mean(layer.cols, 0.0);
        for (int t = 0; t < layer.rows; ++t)
            for (int c = 0; c < layer.cols; ++c) mean[c] += layer.at(t, c);
        for (auto& v : mean) v /= std::max(1, layer.rows);
        out.push_back(std::move(mean));
    }
    return out;
}

inline Vec weighted_layer_avg(const std::vector<Vec>& pooled,
                              std::span<const double> weights) {
    if (pooled.size() != weights.size())
        throw ValidationError("weighted_layer_avg: layer/weight count mismatch");
    if (pooled.empty()) throw ValidationError("weighted_layer_avg: no layers");
    Vec out(pooled[0].size(), 0.0);
    for (std::size_t l = 0; l < pooled.size(); ++l)
        for (std::size_t c = 0; c < out.size(); ++c)
            out[c] += weights[l] * pooled[l][c];
    return out;
}

// Forward-pass context kept for backprop through the encoder.
struct EncodeContext {
    LayerFeatureSet features;
    Mat fbank;  // scaled filterbank output, [T x bands]
};

// Waveform in, per-layer features out. Inference is deterministic. Trainable
// encoders expose their parameter/gradient tensors and accept per-layer
// feature gradients.
class Encoder {
  public:
    virtual ~Encoder() = default;

    virtual const EncoderProfile& profile() const = 0;
    virtual LayerFeatureSet encode(std::span<const double> wave) const = 0;

    virtual EncodeContext encode_ctx(std::span<const double> wave) const {
        return {encode(wave), {}};
    }
    virtual void backward(const EncodeContext&, const std::vector<Mat>&) {}

    virtual bool trainable() const { return false; }
    virtual std::vector<Mat*> params() { return {}; }
    virtual std::vector<Mat*> grads() { return {}; }
    virtual void zero_grads() {
        for (auto* g : grads()) g->zero();
    }
};

// Deterministic non-learned encoder for desk-scale runs: a strided banded
// DFT filterbank followed by per-layer seeded random projections and tanh.
// The projection matrices are the encoder's trainable weights.
class StubEncoder : public Encoder {
  public:
    StubEncoder(std::uint64_t seed, int num_layers, int hidden_dim,
                double frame_rate_hz = 50.0, int bands = 24)
        : bands_(bands) {
        profile_.name = "stub-" + std::to_string(seed);
        profile_.num_layers = num_layers;
        profile_.hidden_dim = hidden_dim;
        profile_.frame_rate_hz = frame_rate_hz;
        profile_.validate();
        hop_ = static_cast<int>(std::lround(kSampleRate / frame_rate_hz));
        if (hop_ < 1) throw ValidationError("stub encoder: frame rate too high");

        band_cos_.assign(bands_, std::vector<double>(hop_));
        band_sin_.assign(bands_, std::vector<double>(hop_));
        for (int b = 0; b < bands_; ++b) {
            // log-spaced band centers from 100 Hz to ~7.6 kHz
            const double frac = bands_ == 1 ? 0.0 : static_cast<double>(b) / (bands_ - 1);
            const double freq = 100.0 * std::pow(76.0, frac);
            for (int i = 0; i < hop_; ++i) {
                const double ang = 2.0 * M_PI * freq * i / kSampleRate;
                band_cos_[b][i] = std::cos(ang);
                band_sin_[b][i] = std::sin(ang);
            }
        }

        Rng rng(seed);
        const double stddev = 1.0 / std::sqrt(static_cast<double>(bands_));
        for (int l = 0; l < num_layers; ++l) {
            projections_.push_back(gaussian_mat(bands_, hidden_dim, stddev, rng));
            grads_.emplace_back(bands_, hidden_dim);
        }
    }

    const EncoderProfile& profile() const override { return profile_; }

    Mat filterbank(std::span<const double> wave) const {
        if (static_cast<int>(wave.size()) < hop_)
            throw ValidationError(
                "waveform shorter than the encoder's minimum receptive field (" +
                std::to_string(hop_) +
                " samples); zero-pad the input before encoding");
        const int t_len = static_cast<int>(wave.size()) / hop_;
        Mat f(t_len, bands_);
        for (int t = 0; t < t_len; ++t) {
            const double* x = wave.data() + static_cast<std::size_t>(t) * hop_;
            for (int b = 0; b < bands_; ++b) {
                double re = 0.0, im = 0.0;
                for (int i = 0; i < hop_; ++i) {
                    re += x[i] * band_cos_[b][i];
                    im += x[i] * band_sin_[b][i];
                }
                const double energy = (re * re + im * im) /
                                      (static_cast<double>(hop_) * hop_);
                // squash the usable dynamic range (~[-10, 0] in log10) to O(1)
                f.at(t, b) = 0.4 * (std::log10(energy + 1e-10) + 5.0);
            }
        }
        return f;
    }

    EncodeContext encode_ctx(std::span<const double> wave) const override {
        EncodeContext ctx;
        ctx.fbank = filterbank(wave);
        ctx.features.layers.reserve(projections_.size());
        for (const auto& p : projections_) {
            Mat layer = matmul(ctx.fbank, p);
            for (auto& v : layer.d) v = std::tanh(v);
            ctx.features.layers.push_back(std::move(layer));
        }
        return ctx;
    }

    LayerFeatureSet encode(std::span<const double> wave) const override {
        return encode_ctx(wave).features;
    }

    // Accumulates d(loss)/d(projection) given per-layer feature gradients.
    void backward(const EncodeContext& ctx,
                  const std::vector<Mat>& dfeatures) override {
        if (!trainable_) return;
        for (std::size_t l = 0; l < projections_.size(); ++l) {
            if (l >= dfeatures.size() || dfeatures[l].size() == 0) continue;
            const Mat& x = ctx.features.layers[l];
            Mat dpre = dfeatures[l];
            for (std::size_t i = 0; i < dpre.d.size(); ++i)
                dpre.d[i] *= 1.0 - x.d[i] * x.d[i];  // tanh'
            add_at_b(grads_[l], ctx.fbank, dpre);
        }
    }

    bool trainable() const override { return trainable_; }
    void set_trainable(bool v) { trainable_ = v; }

    std::vector<Mat*> params() override {
        std::vector<Mat*> out;
        if (trainable_)
            for (auto& p : projections_) out.push_back(&p);
        return out;
    }
    std::vector<Mat*> grads() override {
        std::vector<Mat*> out;
        if (trainable_)
            for (auto& g : grads_) out.push_back(&g);
        return out;
    }

    std::vector<Mat>& projections() { return projections_; }
    const std::vector<Mat>& projections() const { return projections_; }
    int hop_samples() const { return hop_; }
    int bands() const { return bands_; }

  private:
    EncoderProfile profile_;
    int bands_;
    int hop_ = 0;
    bool trainable_ = true;
    std::vector<std::vector<double>> band_cos_, band_sin_;
    std::vector<Mat> projections_;
    std::vector<Mat> grads_;
};

}  // namespace sdvc
