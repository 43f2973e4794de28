#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdvc/common.hpp"
#include "sdvc/corpus.hpp"
#include "sdvc/ctc.hpp"
#include "sdvc/encoder.hpp"
#include "sdvc/optim.hpp"
#include "sdvc/phone_inventory.hpp"

namespace sdvc {

enum class TranscriptSource { reference, pseudo, hypothesis };

struct PhoneTranscript {
    std::vector<int> phone_ids;  // indices into a PhoneInventory, no blanks
    TranscriptSource source = TranscriptSource::reference;

    std::string to_string(const PhoneInventory& inv) const {
        std::string out;
        for (int id : phone_ids) {
            if (!out.empty()) out += ' ';
            out += inv.phones.at(id);
        }
        return out;
    }

    static PhoneTranscript parse(const std::string& text,
                                 const PhoneInventory& inv,
                                 TranscriptSource source) {
        PhoneTranscript t;
        t.source = source;
        std::stringstream ss(text);
        std::string tok;
        while (ss >> tok) t.phone_ids.push_back(inv.id_of(tok));
        return t;
    }
};

// Greedy CTC decoding: per-frame argmax, collapse consecutive repeats, drop
// blanks. Works on logits or posteriors alike (argmax is monotone).
inline PhoneTranscript greedy_decode(const Mat& frame_scores, int blank) {
    PhoneTranscript out;
    out.source = TranscriptSource::hypothesis;
    int prev = -1;
    for (int t = 0; t < frame_scores.rows; ++t) {
        int best = 0;
        for (int k = 1; k < frame_scores.cols; ++k)
            if (frame_scores.at(t, k) > frame_scores.at(t, best)) best = k;
        if (best != prev && best != blank) out.phone_ids.push_back(best);
        prev = best;
    }
    return out;
}

inline int edit_distance(std::span<const int> ref, std::span<const int> hyp) {
    const std::size_t n = ref.size(), m = hyp.size();
    std::vector<int> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

// Phone error rate in percent: edit distance normalized by reference length.
// An empty reference with a nonempty hypothesis has no meaningful rate and is
// rejected; callers aggregating a corpus count those rows separately.
inline double per(const PhoneTranscript& ref, const PhoneTranscript& hyp) {
    if (ref.phone_ids.empty()) {
        if (hyp.phone_ids.empty()) return 0.0;
        throw EmptyReferenceError("per: empty reference with nonempty hypothesis");
    }
    return 100.0 * edit_distance(ref.phone_ids, hyp.phone_ids) /
           static_cast<double>(ref.phone_ids.size());
}

// Corpus PER = total edit distance / total reference length.
struct CorpusPer {
    long long edit_sum = 0;
    long long ref_len_sum = 0;
    long long empty_reference_rows = 0;

    void add(const PhoneTranscript& ref, const PhoneTranscript& hyp) {
        if (ref.phone_ids.empty() && !hyp.phone_ids.empty()) {
            ++empty_reference_rows;
            return;
        }
        edit_sum += edit_distance(ref.phone_ids, hyp.phone_ids);
        ref_len_sum += static_cast<long long>(ref.phone_ids.size());
    }

    double value() const {
        if (ref_len_sum == 0)
            throw EmptyReferenceError("corpus PER: no reference phones");
        return 100.0 * edit_sum / static_cast<double>(ref_len_sum);
    }
};

// ---------------------------------------------------------------------------
// CTC phone-recognizer head: linear (hidden 384 by default), LeakyReLU,
// linear to |phones|+1, softmax inside the CTC loss.
// ---------------------------------------------------------------------------

struct PrHead {
    Mat w1, b1, w2, b2;  // biases are 1-row mats
    Mat gw1, gb1, gw2, gb2;

    PrHead() = default;
    PrHead(int input_dim, int n_phones, Rng& rng, int hidden = 384)
        : w1(gaussian_mat(input_dim, hidden, 1.0 / std::sqrt(input_dim), rng)),
          b1(1, hidden),
          w2(gaussian_mat(hidden, n_phones + 1, 1.0 / std::sqrt(hidden), rng)),
          b2(1, n_phones + 1),
          gw1(input_dim, hidden),
          gb1(1, hidden),
          gw2(hidden, n_phones + 1),
          gb2(1, n_phones + 1) {}

    struct Trace {
        Mat a1;      // pre-activation, [T x hidden]
        Mat h1;      // post-activation
        Mat logits;  // [T x (P+1)]
    };

    Trace forward(const Mat& features) const {
        Trace tr;
        tr.a1 = matmul(features, w1);
        for (int t = 0; t < tr.a1.rows; ++t)
            for (int c = 0; c < tr.a1.cols; ++c) tr.a1.at(t, c) += b1.at(0, c);
        tr.h1 = tr.a1;
        for (auto& v : tr.h1.d) v = leaky_relu(v);
        tr.logits = matmul(tr.h1, w2);
        for (int t = 0; t < tr.logits.rows; ++t)
            for (int c = 0; c < tr.logits.cols; ++c)
                tr.logits.at(t, c) += b2.at(0, c);
        return tr;
    }

    // Returns d(loss)/d(features).
    Mat backward(const Mat& features, const Trace& tr, const Mat& dlogits) {
        add_at_b(gw2, tr.h1, dlogits);
        for (int t = 0; t < dlogits.rows; ++t)
            for (int c = 0; c < dlogits.cols; ++c)
                gb2.at(0, c) += dlogits.at(t, c);
        Mat dh1 = matmul_bt(dlogits, w2);
        for (std::size_t i = 0; i < dh1.d.size(); ++i)
            dh1.d[i] *= leaky_relu_grad(tr.a1.d[i]);
        add_at_b(gw1, features, dh1);
        for (int t = 0; t < dh1.rows; ++t)
            for (int c = 0; c < dh1.cols; ++c) gb1.at(0, c) += dh1.at(t, c);
        return matmul_bt(dh1, w1);
    }

    // Row-stochastic phone posteriors for decoding.
    Mat posteriors(const Mat& features) const {
        Mat logits = forward(features).logits;
        for (int t = 0; t < logits.rows; ++t) {
            const Vec p = softmax(logits.row(t));
            for (int c = 0; c < logits.cols; ++c) logits.at(t, c) = p[c];
        }
        return logits;
    }

    std::vector<Mat*> params() { return {&w1, &b1, &w2, &b2}; }
    std::vector<Mat*> grads() { return {&gw1, &gb1, &gw2, &gb2}; }
};

struct PrModel {
    std::shared_ptr<Encoder> encoder;
    PhoneInventory phones;
    PrHead head;

    // Encode and decode one utterance using the last transformer layer.
    PhoneTranscript transcribe(std::span<const double> audio) const {
        const auto features = encoder->encode(audio);
        const auto logits = head.forward(features.layers.back()).logits;
        auto out = greedy_decode(logits, phones.blank_id());
        out.source = TranscriptSource::pseudo;
        return out;
    }
};

// ---------------------------------------------------------------------------
// Two-level fine-tuning recipe: an ordered list of (dataset, epochs) stages,
// e.g. a large mismatched corpus first, then a small in-domain one.
// ---------------------------------------------------------------------------

struct PrStage {
    const std::vector<Utterance>* utterances = nullptr;
    int epochs = 0;
};

struct PrTrainConfig {
    double lr_head = 1e-3;
    double lr_encoder = 1e-4;
    int batch_size = 8;
};

struct PrTrainReport {
    std::vector<double> epoch_loss;  // mean CTC loss per epoch, all stages
    long long skipped_utterances = 0;
};

inline constexpr double kMaxUtteranceS = 15.0;

inline PrTrainReport train_pr(PrModel& model, const std::vector<PrStage>& stages,
                              const PrTrainConfig& cfg, std::uint64_t seed) {
    for (const auto& stage : stages)
        for (const auto& u : *stage.utterances)
            if (u.audio.size() > kMaxUtteranceS * kSampleRate)
                throw ValidationError("train_pr: utterance " + u.utt_id +
                                      " longer than 15 s");

    Adam::Group head_group{model.head.params(), model.head.grads(), cfg.lr_head};
    Adam::Group enc_group{model.encoder->params(), model.encoder->grads(),
                          cfg.lr_encoder};
    Adam adam({head_group, enc_group});

    PrTrainReport report;
    Rng rng(seed);
    const int blank = model.phones.blank_id();
    for (const auto& stage : stages) {
        const auto& utts = *stage.utterances;
        std::vector<std::size_t> order(utts.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (int epoch = 0; epoch < stage.epochs; ++epoch) {
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[rng.below(i)]);
            double loss_sum = 0.0;
            long long loss_n = 0;
            for (std::size_t base = 0; base < order.size();
                 base += cfg.batch_size) {
                const auto batch_end =
                    std::min(order.size(), base + cfg.batch_size);
                const auto batch_n = static_cast<double>(batch_end - base);
                adam.zero_grads();
                for (std::size_t bi = base; bi < batch_end; ++bi) {
                    const auto& u = utts[order[bi]];
                    const auto ctx = model.encoder->encode_ctx(u.audio);
                    const Mat& feats = ctx.features.layers.back();
                    std::vector<int> label;
                    for (const auto& p : u.phones)
                        label.push_back(model.phones.id_of(p));
                    if (static_cast<int>(label.size()) > feats.rows) {
                        ++report.skipped_utterances;
                        continue;
                    }
                    const auto tr = model.head.forward(feats);
                    Mat dlogits;
                    const auto res =
                        ctc_loss_grad(tr.logits, label, blank, &dlogits);
                    if (!res.feasible) {
                        ++report.skipped_utterances;
                        continue;
                    }
                    loss_sum += res.loss;
                    ++loss_n;
                    for (auto& v : dlogits.d) v /= batch_n;
                    Mat dfeats = model.head.backward(feats, tr, dlogits);
                    if (model.encoder->trainable()) {
                        std::vector<Mat> dlayers(ctx.features.num_layers());
                        dlayers.back() = std::move(dfeats);
                        model.encoder->backward(ctx, dlayers);
                    }
                }
                adam.step();
            }
            report.epoch_loss.push_back(loss_n ? loss_sum / loss_n : 0.0);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Pseudo-reference transcripts: run a frozen recognizer over child vocal
// segments (or whole clips) and store every decode, empty ones included.
// ---------------------------------------------------------------------------

struct PseudoRow {
    std::string id;       // "<session_id>#<n>" or clip id
    double start_s = 0.0;
    double end_s = 0.0;
    std::string phones;  // space-separated IPA, may be empty
};

inline std::vector<PseudoRow> gen_pseudo(const PrModel& model,
                                         const std::vector<Session>& sessions) {
    std::vector<PseudoRow> rows;
    for (const auto& session : sessions) {
        int n = 0;
        for (const auto& seg : session.tier_segments(Channel::child, "CHI")) {
            const auto s0 = static_cast<std::size_t>(
                std::llround(seg.start_s * kSampleRate));
            const auto s1 = std::min(session.child_audio.size(),
                                     static_cast<std::size_t>(std::llround(
                                         seg.end_s * kSampleRate)));
            std::span<const double> slice(session.child_audio.data() + s0,
                                          s1 - s0);
            PseudoRow row;
            row.id = session.session_id + "#" + std::to_string(n++);
            row.start_s = seg.start_s;
            row.end_s = seg.end_s;
            row.phones = model.transcribe(slice).to_string(model.phones);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

inline std::vector<PseudoRow> gen_pseudo(const PrModel& model,
                                         const std::vector<Clip>& clips) {
    std::vector<PseudoRow> rows;
    for (const auto& clip : clips) {
        PseudoRow row;
        row.id = clip.clip_id;
        row.start_s = 0.0;
        row.end_s = static_cast<double>(clip.audio.size()) / kSampleRate;
        row.phones = model.transcribe(clip.audio).to_string(model.phones);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_pseudo_manifest(const std::filesystem::path& path,
                                  std::span<const PseudoRow> rows,
                                  const std::string& config_hash) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write pseudo manifest: " + path.string());
    out << nlohmann::json{{"type", "meta"},
                          {"version", kVersion},
                          {"config_hash", config_hash}}
               .dump()
        << '\n';
    for (const auto& r : rows)
        out << nlohmann::json{{"type", "pseudo"},
                              {"id", r.id},
                              {"start_s", r.start_s},
                              {"end_s", r.end_s},
                              {"phones", r.phones}}
                   .dump()
            << '\n';
}

inline std::vector<PseudoRow> read_pseudo_manifest(
    const std::filesystem::path& path) {
    std::vector<PseudoRow> rows;
    for (const auto& row : detail::read_manifest_rows(path)) {
        if (row.value("type", "") != "pseudo") continue;
        rows.push_back({row.at("id").get<std::string>(),
                        row.at("start_s").get<double>(),
                        row.at("end_s").get<double>(),
                        row.at("phones").get<std::string>()});
    }
    return rows;
}

}  // namespace sdvc
