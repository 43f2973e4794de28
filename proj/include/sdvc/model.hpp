#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdvc/common.hpp"
#include "sdvc/corpus.hpp"
#include "sdvc/ctc.hpp"
#include "sdvc/encoder.hpp"
#include "sdvc/inventory.hpp"
#include "sdvc/tensor.hpp"

namespace sdvc {

// ---------------------------------------------------------------------------
// Combination modules. C1/C2 fuse the two audio channels (sum / concat);
// C3/C4 fuse the child channel with frozen phone-recognizer features.
// ---------------------------------------------------------------------------

enum class CombKind { none, c1_sum_cross, c2_concat_cross, c3_sum_pr, c4_concat_pr };

inline std::string comb_kind_name(CombKind k) {
    switch (k) {
        case CombKind::none: return "none";
        case CombKind::c1_sum_cross: return "C1_sum_cross";
        case CombKind::c2_concat_cross: return "C2_concat_cross";
        case CombKind::c3_sum_pr: return "C3_sum_pr";
        case CombKind::c4_concat_pr: return "C4_concat_pr";
    }
    return "?";
}

inline CombKind comb_kind_from_name(const std::string& name) {
    for (CombKind k : {CombKind::none, CombKind::c1_sum_cross,
                       CombKind::c2_concat_cross, CombKind::c3_sum_pr,
                       CombKind::c4_concat_pr})
        if (comb_kind_name(k) == name) return k;
    throw ValidationError("unknown combination kind: " + name);
}

struct CombinationConfig {
    CombKind kind = CombKind::none;
    double alpha = 1.0;
    double beta = 0.0;
    bool learnable = false;  // sum kinds only: alpha = sigmoid(theta)

    bool is_sum() const {
        return kind == CombKind::c1_sum_cross || kind == CombKind::c3_sum_pr;
    }
    bool is_concat() const {
        return kind == CombKind::c2_concat_cross || kind == CombKind::c4_concat_pr;
    }
    bool uses_pr() const {
        return kind == CombKind::c3_sum_pr || kind == CombKind::c4_concat_pr;
    }
    bool uses_cross() const {
        return kind == CombKind::c1_sum_cross || kind == CombKind::c2_concat_cross;
    }

    void validate() const {
        if (is_sum()) {
            if (alpha < 0.0 || beta < 0.0)
                throw ValidationError("combination: sum weights must be >= 0");
            if (std::abs(alpha + beta - 1.0) > 1e-6)
                throw ValidationError("combination: sum weights must satisfy "
                                      "alpha + beta = 1");
        }
    }
};

// Sum kinds -> alpha*fg + beta*other; concat kinds -> [fg (+) other];
// none -> fg unchanged.
inline Vec combine(CombKind kind, const Vec& fg, const Vec& bg_or_pr,
                   double alpha, double beta) {
    switch (kind) {
        case CombKind::none:
            return fg;
        case CombKind::c1_sum_cross:
        case CombKind::c3_sum_pr: {
            if (fg.size() != bg_or_pr.size())
                throw ValidationError("combine: sum requires equal dimensions");
            Vec out(fg.size());
            for (std::size_t i = 0; i < fg.size(); ++i)
                out[i] = alpha * fg[i] + beta * bg_or_pr[i];
            return out;
        }
        case CombKind::c2_concat_cross:
        case CombKind::c4_concat_pr: {
            Vec out;
            out.reserve(fg.size() + bg_or_pr.size());
            out.insert(out.end(), fg.begin(), fg.end());
            out.insert(out.end(), bg_or_pr.begin(), bg_or_pr.end());
            return out;
        }
    }
    throw ValidationError("combine: bad kind");
}

// ---------------------------------------------------------------------------
// Output tiers: one-hidden-layer FFN per tier, hidden width = input width.
// ---------------------------------------------------------------------------

struct TierHead {
    ClassInventory inventory;
    Mat w1, b1, w2, b2;
    Mat gw1, gb1, gw2, gb2;

    TierHead() = default;
    TierHead(ClassInventory inv, int input_dim, Rng& rng)
        : inventory(std::move(inv)),
          w1(gaussian_mat(input_dim, input_dim, 1.0 / std::sqrt(input_dim), rng)),
          b1(1, input_dim),
          w2(gaussian_mat(input_dim, inventory.size(),
                          1.0 / std::sqrt(input_dim), rng)),
          b2(1, inventory.size()),
          gw1(input_dim, input_dim),
          gb1(1, input_dim),
          gw2(input_dim, inventory.size()),
          gb2(1, inventory.size()) {}

    struct Trace {
        Vec input, a1, h1, logits;
    };

    Trace forward(Vec input) const {
        Trace tr;
        tr.a1.assign(static_cast<std::size_t>(w1.cols), 0.0);
        for (int i = 0; i < w1.rows; ++i) {
            const double x = input[i];
            if (x == 0.0) continue;
            for (int j = 0; j < w1.cols; ++j) tr.a1[j] += x * w1.at(i, j);
        }
        for (int j = 0; j < w1.cols; ++j) tr.a1[j] += b1.at(0, j);
        tr.h1.resize(tr.a1.size());
        for (std::size_t j = 0; j < tr.a1.size(); ++j)
            tr.h1[j] = leaky_relu(tr.a1[j]);
        tr.logits.assign(static_cast<std::size_t>(w2.cols), 0.0);
        for (int i = 0; i < w2.rows; ++i)
            for (int j = 0; j < w2.cols; ++j)
                tr.logits[j] += tr.h1[i] * w2.at(i, j);
        for (int j = 0; j < w2.cols; ++j) tr.logits[j] += b2.at(0, j);
        tr.input = std::move(input);
        return tr;
    }

    // Returns d(loss)/d(input).
    Vec backward(const Trace& tr, const Vec& dlogits) {
        for (int i = 0; i < w2.rows; ++i)
            for (int j = 0; j < w2.cols; ++j)
                gw2.at(i, j) += tr.h1[i] * dlogits[j];
        for (int j = 0; j < w2.cols; ++j) gb2.at(0, j) += dlogits[j];
        Vec dh1(tr.h1.size(), 0.0);
        for (int i = 0; i < w2.rows; ++i)
            for (int j = 0; j < w2.cols; ++j)
                dh1[i] += w2.at(i, j) * dlogits[j];
        for (std::size_t i = 0; i < dh1.size(); ++i)
            dh1[i] *= leaky_relu_grad(tr.a1[i]);
        for (int i = 0; i < w1.rows; ++i)
            for (int j = 0; j < w1.cols; ++j)
                gw1.at(i, j) += tr.input[i] * dh1[j];
        for (int j = 0; j < w1.cols; ++j) gb1.at(0, j) += dh1[j];
        Vec dinput(tr.input.size(), 0.0);
        for (int i = 0; i < w1.rows; ++i)
            for (int j = 0; j < w1.cols; ++j)
                dinput[i] += w1.at(i, j) * dh1[j];
        return dinput;
    }

    std::vector<Mat*> params() { return {&w1, &b1, &w2, &b2}; }
    std::vector<Mat*> grads() { return {&gw1, &gb1, &gw2, &gb2}; }
};

struct AuxCtcConfig {
    bool enabled = false;
    int tap_layer = 8;     // 1-based transformer layer index
    double lambda = 1.0;   // loss weight
    int n_phones = 0;
};

struct TierSetup {
    std::string name;  // "adu" | "chi"
    ClassInventory inventory;
    Channel fg_channel = Channel::adult;
    CombinationConfig comb;
};

struct ModelOutput {
    Vec adu_logits;             // empty in single-channel mode
    Vec chi_logits;
    std::optional<Mat> ctc_logits;  // [T_h x (|phones|+1)]
};

struct ModelInput {
    const std::vector<double>* adult = nullptr;  // null in single-channel mode
    const std::vector<double>* child = nullptr;
};

struct Targets {
    int adu_class = -1;  // -1: tier absent
    int chi_class = -1;
    const std::vector<int>* ctc_label = nullptr;  // null: no aux target
};

struct LossParts {
    double total = 0.0;
    double ce_adu = 0.0;
    double ce_chi = 0.0;
    double ctc = 0.0;
    bool ctc_skipped = false;  // label could not align to the frame length
};

// ---------------------------------------------------------------------------
// The multi-task classifier. An encoder stack is one encoder instance plus
// its layer-mixing logits; joint modeling routes both channels through one
// stack, the separate-encoder variant uses two.
// ---------------------------------------------------------------------------

class VcModel {
    struct Tier;

  public:
    struct Build {
        std::shared_ptr<Encoder> encoder_adult;  // may alias encoder_child
        std::shared_ptr<Encoder> encoder_child;
        std::shared_ptr<Encoder> pr_encoder;     // frozen, optional
        std::vector<TierSetup> tiers;
        AuxCtcConfig aux;
    };

    VcModel(const Build& build, Rng& rng) : aux_(build.aux) {
        if (!build.encoder_child)
            throw ValidationError("model: child encoder is required");
        if (build.encoder_adult) {
            if (build.encoder_adult == build.encoder_child) {
                stacks_.push_back(Stack{build.encoder_adult, {}, {}});
                stack_of_[0] = stack_of_[1] = 0;
            } else {
                stacks_.push_back(Stack{build.encoder_adult, {}, {}});
                stacks_.push_back(Stack{build.encoder_child, {}, {}});
                stack_of_[0] = 0;
                stack_of_[1] = 1;
            }
        } else {
            stacks_.push_back(Stack{build.encoder_child, {}, {}});
            stack_of_[0] = -1;
            stack_of_[1] = 0;
        }
        for (auto& s : stacks_) {
            const int n_layers = s.encoder->profile().num_layers;
            s.lw_logits = Mat(1, n_layers);
            s.lw_grad = Mat(1, n_layers);
        }
        pr_encoder_ = build.pr_encoder;

        if (build.tiers.empty()) throw ValidationError("model: no tiers");
        for (const auto& setup : build.tiers) {
            setup.comb.validate();
            if (setup.comb.uses_pr() && !pr_encoder_)
                throw ValidationError("model: combination " +
                                      comb_kind_name(setup.comb.kind) +
                                      " requires a PR encoder");
            if (setup.comb.uses_cross() && !build.encoder_adult)
                throw ValidationError("model: cross-channel combination needs "
                                      "two channels");
            const int fg_dim =
                stack_for(setup.fg_channel).encoder->profile().hidden_dim;
            int other_dim = 0;
            if (setup.comb.uses_cross())
                other_dim = stack_for(opposite(setup.fg_channel))
                                .encoder->profile()
                                .hidden_dim;
            else if (setup.comb.uses_pr())
                other_dim = pr_encoder_->profile().hidden_dim;
            if (setup.comb.is_sum() && fg_dim != other_dim)
                throw ValidationError(
                    "model: sum combination requires equal feature dims (" +
                    std::to_string(fg_dim) + " vs " + std::to_string(other_dim) +
                    ")");
            const int input_dim =
                setup.comb.is_concat() ? fg_dim + other_dim : fg_dim;

            Tier tier;
            tier.setup = setup;
            tier.head = TierHead(setup.inventory, input_dim, rng);
            tier.theta = Mat(1, 1);
            tier.theta_grad = Mat(1, 1);
            if (setup.comb.is_sum() && setup.comb.learnable) {
                const double a =
                    std::clamp(setup.comb.alpha, 1e-6, 1.0 - 1e-6);
                tier.theta.at(0, 0) = std::log(a / (1.0 - a));
            }
            tiers_.push_back(std::move(tier));
        }

        if (aux_.enabled) {
            const auto& child_stack = stack_for(Channel::child);
            const int n_layers = child_stack.encoder->profile().num_layers;
            if (aux_.tap_layer < 1 || aux_.tap_layer > n_layers)
                throw ValidationError("model: aux tap_layer " +
                                      std::to_string(aux_.tap_layer) +
                                      " outside [1, " + std::to_string(n_layers) +
                                      "]");
            if (aux_.n_phones < 1)
                throw ValidationError("model: aux head needs a phone inventory");
            const int h = child_stack.encoder->profile().hidden_dim;
            aux_w_ = gaussian_mat(h, aux_.n_phones + 1, 1.0 / std::sqrt(h), rng);
            aux_b_ = Mat(1, aux_.n_phones + 1);
            aux_gw_ = Mat(h, aux_.n_phones + 1);
            aux_gb_ = Mat(1, aux_.n_phones + 1);
        }
    }

    // ---- inference ----

    ModelOutput forward(const ModelInput& input) const {
        Workspace ws;
        return run_forward(input, ws);
    }

    // ---- training ----

    // Forward + backward for one frame; gradients are scaled by `scale`
    // (1/batch_size) and accumulated into the parameter grads.
    LossParts accumulate_grads(const ModelInput& input, const Targets& targets,
                               double scale) {
        Workspace ws;
        const ModelOutput out = run_forward(input, ws);
        LossParts parts = compute_loss(out, targets);
        backprop(targets, out, ws, parts, scale);
        return parts;
    }

    LossParts loss_only(const ModelInput& input, const Targets& targets) const {
        Workspace ws;
        return compute_loss(run_forward(input, ws), targets);
    }

    void zero_grads() {
        for (auto& s : stacks_) {
            s.lw_grad.zero();
            s.encoder->zero_grads();
        }
        for (auto& t : tiers_) {
            for (auto* g : t.head.grads()) g->zero();
            t.theta_grad.zero();
        }
        aux_gw_.zero();
        aux_gb_.zero();
    }

    // parameters updated with the head learning rate
    std::vector<Mat*> head_params() {
        std::vector<Mat*> out;
        for (auto& t : tiers_) {
            auto p = t.head.params();
            out.insert(out.end(), p.begin(), p.end());
            if (t.setup.comb.is_sum() && t.setup.comb.learnable)
                out.push_back(&t.theta);
        }
        for (auto& s : stacks_) out.push_back(&s.lw_logits);
        if (aux_.enabled) {
            out.push_back(&aux_w_);
            out.push_back(&aux_b_);
        }
        return out;
    }
    std::vector<Mat*> head_grads() {
        std::vector<Mat*> out;
        for (auto& t : tiers_) {
            auto g = t.head.grads();
            out.insert(out.end(), g.begin(), g.end());
            if (t.setup.comb.is_sum() && t.setup.comb.learnable)
                out.push_back(&t.theta_grad);
        }
        for (auto& s : stacks_) out.push_back(&s.lw_grad);
        if (aux_.enabled) {
            out.push_back(&aux_gw_);
            out.push_back(&aux_gb_);
        }
        return out;
    }

    std::vector<Mat*> encoder_params() {
        std::vector<Mat*> out;
        for (auto& s : stacks_) {
            auto p = s.encoder->params();
            out.insert(out.end(), p.begin(), p.end());
        }
        return out;
    }
    std::vector<Mat*> encoder_grads() {
        std::vector<Mat*> out;
        for (auto& s : stacks_) {
            auto g = s.encoder->grads();
            out.insert(out.end(), g.begin(), g.end());
        }
        return out;
    }

    // stable names for checkpointing
    std::vector<std::pair<std::string, Mat*>> named_tensors() {
        std::vector<std::pair<std::string, Mat*>> out;
        for (std::size_t si = 0; si < stacks_.size(); ++si) {
            out.push_back({"stack" + std::to_string(si) + ".lw_logits",
                           &stacks_[si].lw_logits});
            if (auto* stub = dynamic_cast<StubEncoder*>(stacks_[si].encoder.get()))
                for (std::size_t l = 0; l < stub->projections().size(); ++l)
                    out.push_back({"stack" + std::to_string(si) + ".proj" +
                                       std::to_string(l),
                                   &stub->projections()[l]});
        }
        if (pr_encoder_)
            if (auto* stub = dynamic_cast<StubEncoder*>(pr_encoder_.get()))
                for (std::size_t l = 0; l < stub->projections().size(); ++l)
                    out.push_back({"pr.proj" + std::to_string(l),
                                   &stub->projections()[l]});
        for (auto& t : tiers_) {
            const auto prefix = t.setup.name + "_head.";
            out.push_back({prefix + "w1", &t.head.w1});
            out.push_back({prefix + "b1", &t.head.b1});
            out.push_back({prefix + "w2", &t.head.w2});
            out.push_back({prefix + "b2", &t.head.b2});
            if (t.setup.comb.is_sum() && t.setup.comb.learnable)
                out.push_back({t.setup.name + ".comb_theta", &t.theta});
        }
        if (aux_.enabled) {
            out.push_back({"aux.w", &aux_w_});
            out.push_back({"aux.b", &aux_b_});
        }
        return out;
    }

    const std::vector<TierSetup> tier_setups() const {
        std::vector<TierSetup> out;
        for (const auto& t : tiers_) out.push_back(t.setup);
        return out;
    }
    const AuxCtcConfig& aux_config() const { return aux_; }
    int n_tiers() const { return static_cast<int>(tiers_.size()); }
    Vec layer_weights(int stack = 0) const {
        return softmax(stacks_.at(stack).lw_logits.row(0));
    }
    Mat& lw_logits(int stack = 0) { return stacks_.at(stack).lw_logits; }
    double comb_alpha(int tier) const {
        const auto& t = tiers_.at(tier);
        if (t.setup.comb.is_sum() && t.setup.comb.learnable)
            return 1.0 / (1.0 + std::exp(-t.theta.at(0, 0)));
        return t.setup.comb.alpha;
    }
    std::shared_ptr<Encoder> encoder(Channel c) { return stack_for(c).encoder; }
    std::shared_ptr<Encoder> pr_encoder() { return pr_encoder_; }

  private:
    struct Stack {
        std::shared_ptr<Encoder> encoder;
        Mat lw_logits;
        Mat lw_grad;
    };

    struct Tier {
        TierSetup setup;
        TierHead head;
        Mat theta, theta_grad;  // learnable sum weight (logit of alpha)
    };

    struct ChannelState {
        bool used = false;
        EncodeContext ctx;
        std::vector<Vec> pooled;
        Vec u;  // weighted layer average
    };

    struct Workspace {
        ChannelState chan[2];  // adult, child
        Vec pr_vec;
        std::vector<TierHead::Trace> tier_traces;
        Mat ctc_trace;  // aux logits
    };

    static Channel opposite(Channel c) {
        return c == Channel::adult ? Channel::child : Channel::adult;
    }

    Stack& stack_for(Channel c) {
        const int idx = stack_of_[static_cast<int>(c)];
        if (idx < 0) throw ValidationError("model: channel not configured");
        return stacks_[idx];
    }
    const Stack& stack_for(Channel c) const {
        const int idx = stack_of_[static_cast<int>(c)];
        if (idx < 0) throw ValidationError("model: channel not configured");
        return stacks_[idx];
    }

    const std::vector<double>* wave_of(const ModelInput& input, Channel c) const {
        return c == Channel::adult ? input.adult : input.child;
    }

    ModelOutput run_forward(const ModelInput& input, Workspace& ws) const {
        if (!input.child)
            throw ValidationError("model: child waveform is required");
        if (stack_of_[0] >= 0 && !input.adult)
            throw ValidationError("model: adult waveform is required");

        auto ensure_channel = [&](Channel c) -> ChannelState& {
            auto& state = ws.chan[static_cast<int>(c)];
            if (!state.used) {
                const auto& stack = stack_for(c);
                state.ctx = stack.encoder->encode_ctx(*wave_of(input, c));
                state.pooled = pool_utterance(state.ctx.features);
                state.u = weighted_layer_avg(state.pooled,
                                             softmax(stack.lw_logits.row(0)));
                state.used = true;
            }
            return state;
        };

        bool need_pr = false;
        for (const auto& t : tiers_) need_pr |= t.setup.comb.uses_pr();
        if (need_pr) {
            const auto feats = pr_encoder_->encode(*input.child);
            // frozen PR contributes only its last transformer layer
            Mat last = feats.layers.back();
            Vec mean(last.cols, 0.0);
            for (int t = 0; t < last.rows; ++t)
                for (int c = 0; c < last.cols; ++c) mean[c] += last.at(t, c);
            for (auto& v : mean) v /= std::max(1, last.rows);
            ws.pr_vec = std::move(mean);
        }

        ModelOutput out;
        ws.tier_traces.clear();
        for (std::size_t ti = 0; ti < tiers_.size(); ++ti) {
            const auto& tier = tiers_[ti];
            const auto& fg = ensure_channel(tier.setup.fg_channel);
            Vec combined;
            if (tier.setup.comb.uses_cross()) {
                const auto& bg = ensure_channel(opposite(tier.setup.fg_channel));
                combined = combine(tier.setup.comb.kind, fg.u, bg.u,
                                   comb_alpha_of(tier), 1.0 - comb_alpha_of(tier));
            } else if (tier.setup.comb.uses_pr()) {
                combined = combine(tier.setup.comb.kind, fg.u, ws.pr_vec,
                                   comb_alpha_of(tier), 1.0 - comb_alpha_of(tier));
            } else {
                combined = fg.u;
            }
            auto trace = tier.head.forward(std::move(combined));
            if (tier.setup.name == "adu")
                out.adu_logits = trace.logits;
            else
                out.chi_logits = trace.logits;
            ws.tier_traces.push_back(std::move(trace));
        }

        if (aux_.enabled) {
            const auto& child = ensure_channel(Channel::child);
            const Mat& tap = child.ctx.features.layers.at(aux_.tap_layer - 1);
            Mat z = matmul(tap, aux_w_);
            for (int t = 0; t < z.rows; ++t)
                for (int c = 0; c < z.cols; ++c) z.at(t, c) += aux_b_.at(0, c);
            ws.ctc_trace = z;
            out.ctc_logits = std::move(z);
        }
        return out;
    }

    double comb_alpha_of(const Tier& t) const {
        if (t.setup.comb.is_sum() && t.setup.comb.learnable)
            return 1.0 / (1.0 + std::exp(-t.theta.at(0, 0)));
        return t.setup.comb.alpha;
    }

    LossParts compute_loss(const ModelOutput& out, const Targets& targets) const {
        LossParts parts;
        int n_ce = 0;
        if (targets.adu_class >= 0) {
            const Vec lp = log_softmax(out.adu_logits);
            parts.ce_adu = -lp[targets.adu_class];
            ++n_ce;
        }
        if (targets.chi_class >= 0) {
            const Vec lp = log_softmax(out.chi_logits);
            parts.ce_chi = -lp[targets.chi_class];
            ++n_ce;
        }
        parts.total = n_ce > 0 ? (parts.ce_adu + parts.ce_chi) / n_ce : 0.0;
        if (aux_.enabled && targets.ctc_label && out.ctc_logits) {
            const auto res =
                ctc_loss(*out.ctc_logits, *targets.ctc_label, aux_.n_phones);
            if (res.feasible) {
                parts.ctc = res.loss;
                parts.total += aux_.lambda * res.loss;
            } else {
                parts.ctc_skipped = true;  // contributes lambda * 0
            }
        }
        return parts;
    }

    void backprop(const Targets& targets, const ModelOutput& out,
                  Workspace& ws, LossParts& parts, double scale) {
        const int n_ce = (targets.adu_class >= 0 ? 1 : 0) +
                         (targets.chi_class >= 0 ? 1 : 0);
        Vec du[2];  // d(loss)/d(u) per channel
        for (int c = 0; c < 2; ++c)
            if (ws.chan[c].used) du[c].assign(ws.chan[c].u.size(), 0.0);

        for (std::size_t ti = 0; ti < tiers_.size(); ++ti) {
            auto& tier = tiers_[ti];
            const int target = tier.setup.name == "adu" ? targets.adu_class
                                                        : targets.chi_class;
            if (target < 0) continue;
            const auto& trace = ws.tier_traces[ti];
            Vec dlogits = softmax(trace.logits);
            dlogits[target] -= 1.0;
            const double w = scale / n_ce;
            for (auto& v : dlogits) v *= w;
            Vec dinput = tier.head.backward(trace, dlogits);

            const Channel fg = tier.setup.fg_channel;
            const auto& comb = tier.setup.comb;
            if (comb.kind == CombKind::none) {
                add_to(du[static_cast<int>(fg)], dinput);
            } else if (comb.is_sum()) {
                const double a = comb_alpha_of(tier);
                const Vec& other = comb.uses_cross()
                                       ? ws.chan[static_cast<int>(opposite(fg))].u
                                       : ws.pr_vec;
                auto& dfg = du[static_cast<int>(fg)];
                for (std::size_t i = 0; i < dinput.size(); ++i)
                    dfg[i] += a * dinput[i];
                if (comb.uses_cross()) {
                    auto& dbg = du[static_cast<int>(opposite(fg))];
                    for (std::size_t i = 0; i < dinput.size(); ++i)
                        dbg[i] += (1.0 - a) * dinput[i];
                }
                if (comb.learnable) {
                    const Vec& fg_u = ws.chan[static_cast<int>(fg)].u;
                    double dot = 0.0;
                    for (std::size_t i = 0; i < dinput.size(); ++i)
                        dot += dinput[i] * (fg_u[i] - other[i]);
                    tier.theta_grad.at(0, 0) += dot * a * (1.0 - a);
                }
            } else {  // concat
                const std::size_t fg_dim = ws.chan[static_cast<int>(fg)].u.size();
                auto& dfg = du[static_cast<int>(fg)];
                for (std::size_t i = 0; i < fg_dim; ++i) dfg[i] += dinput[i];
                if (comb.uses_cross()) {
                    auto& dbg = du[static_cast<int>(opposite(fg))];
                    for (std::size_t i = 0; i < dbg.size(); ++i)
                        dbg[i] += dinput[fg_dim + i];
                }
                // PR side is frozen: gradient stops there
            }
        }

        // aux CTC head
        std::vector<Mat> dlayers[2];
        if (aux_.enabled && targets.ctc_label && !parts.ctc_skipped &&
            out.ctc_logits) {
            Mat dz;
            ctc_loss_grad(ws.ctc_trace, *targets.ctc_label, aux_.n_phones, &dz);
            const double w = scale * aux_.lambda;
            for (auto& v : dz.d) v *= w;
            const auto& child = ws.chan[static_cast<int>(Channel::child)];
            const Mat& tap = child.ctx.features.layers.at(aux_.tap_layer - 1);
            add_at_b(aux_gw_, tap, dz);
            for (int t = 0; t < dz.rows; ++t)
                for (int c = 0; c < dz.cols; ++c) aux_gb_.at(0, c) += dz.at(t, c);
            auto& dl = dlayers[static_cast<int>(Channel::child)];
            dl.resize(child.ctx.features.num_layers());
            dl[aux_.tap_layer - 1] = matmul_bt(dz, aux_w_);
        }

        // layer weighting + pooling + encoder
        for (int ci = 0; ci < 2; ++ci) {
            auto& state = ws.chan[ci];
            if (!state.used) continue;
            auto& stack = stack_for(static_cast<Channel>(ci));
            const Vec s = softmax(stack.lw_logits.row(0));
            const int n_layers = static_cast<int>(state.pooled.size());
            const bool have_du =
                !du[ci].empty() &&
                std::any_of(du[ci].begin(), du[ci].end(),
                            [](double v) { return v != 0.0; });

            if (have_du) {
                // d wrt layer-weight logits
                Vec dweights(n_layers, 0.0);
                for (int l = 0; l < n_layers; ++l)
                    for (std::size_t k = 0; k < du[ci].size(); ++k)
                        dweights[l] += du[ci][k] * state.pooled[l][k];
                double dot = 0.0;
                for (int l = 0; l < n_layers; ++l) dot += dweights[l] * s[l];
                for (int l = 0; l < n_layers; ++l)
                    stack.lw_grad.at(0, l) += s[l] * (dweights[l] - dot);
            }

            if (!stack.encoder->trainable()) continue;
            auto& dl = dlayers[ci];
            dl.resize(n_layers);
            if (have_du) {
                const int t_len = state.ctx.features.t();
                for (int l = 0; l < n_layers; ++l) {
                    if (s[l] == 0.0) continue;
                    if (dl[l].size() == 0)
                        dl[l] = Mat(t_len, static_cast<int>(du[ci].size()));
                    const double w = s[l] / t_len;
                    for (int t = 0; t < t_len; ++t)
                        for (std::size_t k = 0; k < du[ci].size(); ++k)
                            dl[l].at(t, static_cast<int>(k)) += w * du[ci][k];
                }
            }
            bool any = false;
            for (const auto& m : dl) any |= m.size() > 0;
            if (any) stack.encoder->backward(state.ctx, dl);
        }
    }

    static void add_to(Vec& acc, const Vec& v) {
        for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
    }

    std::vector<Stack> stacks_;
    int stack_of_[2] = {-1, -1};
    std::shared_ptr<Encoder> pr_encoder_;
    std::vector<Tier> tiers_;
    AuxCtcConfig aux_;
    Mat aux_w_, aux_b_, aux_gw_, aux_gb_;
};

}  // namespace sdvc
