#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdvc/checkpoint.hpp"
#include "sdvc/common.hpp"
#include "sdvc/corpus.hpp"
#include "sdvc/framing.hpp"
#include "sdvc/metrics.hpp"
#include "sdvc/model.hpp"
#include "sdvc/optim.hpp"
#include "sdvc/phonetics.hpp"
#include "sdvc/timeline.hpp"

namespace sdvc {

struct OptimConfig {
    double lr_head = 1e-4;
    double lr_encoder = 1e-5;
    int epochs = 10;
    int batch_size = 32;
    double newbob_factor = 0.5;
    int newbob_patience = 1;
    double improvement_rel = 0.0025;  // 0.25% relative
    std::string selection_metric = "avg_f1";  // avg_f1 | uar
    bool compute_train_accuracy = true;

    void validate() const {
        if (lr_head <= 0.0 || lr_encoder < 0.0)
            throw ValidationError("optim: learning rates must be positive "
                                  "(lr_encoder may be 0 to freeze)");
        if (newbob_factor <= 0.0 || newbob_factor >= 1.0)
            throw ValidationError("optim: newbob_factor must be in (0,1)");
        if (epochs < 0 || batch_size < 1)
            throw ValidationError("optim: bad epochs/batch_size");
    }
};

// ---------------------------------------------------------------------------
// Pseudo-transcript lookup: frames take the transcript of the child segment
// overlapping their center window; clips are keyed by id.
// ---------------------------------------------------------------------------

class PseudoLookup {
  public:
    PseudoLookup() = default;
    PseudoLookup(std::span<const PseudoRow> rows, const PhoneInventory& inv) {
        for (const auto& row : rows) {
            std::vector<int> ids;
            std::stringstream ss(row.phones);
            std::string tok;
            while (ss >> tok) ids.push_back(inv.id_of(tok));
            by_id_[row.id] = ids;
            const auto hash_pos = row.id.find('#');
            if (hash_pos != std::string::npos) {
                const std::string session = row.id.substr(0, hash_pos);
                by_session_[session].push_back({row.start_s, row.end_s, ids});
            }
        }
    }

    // Transcript of the segment with maximal center-window overlap; empty for
    // silence.
    std::vector<int> frame_target(const std::string& session_id, double c0,
                                  double c1) const {
        auto it = by_session_.find(session_id);
        if (it == by_session_.end()) return {};
        const Entry* best = nullptr;
        double best_overlap = 0.0;
        for (const auto& e : it->second) {
            const double ov = std::min(c1, e.end_s) - std::max(c0, e.start_s);
            if (ov > best_overlap) {
                best_overlap = ov;
                best = &e;
            }
        }
        return best ? best->ids : std::vector<int>{};
    }

    std::vector<int> clip_target(const std::string& clip_id) const {
        auto it = by_id_.find(clip_id);
        return it == by_id_.end() ? std::vector<int>{} : it->second;
    }

  private:
    struct Entry {
        double start_s, end_s;
        std::vector<int> ids;
    };
    std::map<std::string, std::vector<Entry>> by_session_;
    std::map<std::string, std::vector<int>> by_id_;
};

// ---------------------------------------------------------------------------
// Training items: a labeled frame (two channels) or a labeled clip (child
// channel only), with an optional CTC target.
// ---------------------------------------------------------------------------

struct TrainItem {
    const FrameExample* frame = nullptr;
    const Clip* clip = nullptr;
    int adu_class = -1;
    int chi_class = -1;
    std::vector<int> ctc_label;
    bool has_ctc = false;
    std::string id;
};

inline std::vector<TrainItem> items_from_frames(
    std::span<const FrameExample> frames, const FrameSpec& spec,
    const PseudoLookup* pseudo) {
    const auto adu = adu_inventory();
    const auto chi = chi_inventory();
    std::vector<TrainItem> items;
    items.reserve(frames.size());
    for (const auto& f : frames) {
        TrainItem item;
        item.frame = &f;
        item.adu_class = adu.index_of(f.adu_label);
        item.chi_class = chi.index_of(f.chi_label);
        item.id = f.session->session_id + "@" + format_seconds(f.start_s);
        if (pseudo) {
            item.ctc_label = pseudo->frame_target(
                f.session->session_id, spec.center_start(f.frame_index),
                spec.center_end(f.frame_index));
            item.has_ctc = true;
        }
        items.push_back(std::move(item));
    }
    return items;
}

inline std::vector<TrainItem> items_from_clips(std::span<const Clip> clips,
                                               const PseudoLookup* pseudo) {
    const auto inventory = babble_inventory();
    std::vector<TrainItem> items;
    items.reserve(clips.size());
    for (const auto& c : clips) {
        TrainItem item;
        item.clip = &c;
        item.chi_class = inventory.index_of(c.label);
        item.id = c.clip_id;
        if (pseudo) {
            item.ctc_label = pseudo->clip_target(c.clip_id);
            item.has_ctc = true;
        }
        items.push_back(std::move(item));
    }
    return items;
}

struct MaterializedInput {
    std::vector<double> adult, child;

    ModelInput view(bool dual) const {
        ModelInput in;
        if (dual) in.adult = &adult;
        in.child = &child;
        return in;
    }
};

inline MaterializedInput materialize(const TrainItem& item, const FrameSpec& spec) {
    MaterializedInput m;
    if (item.frame) {
        m.adult = item.frame->cut(Channel::adult, spec);
        m.child = item.frame->cut(Channel::child, spec);
    } else {
        m.child = item.clip->audio;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Evaluation.
// ---------------------------------------------------------------------------

struct EvalResult {
    double metric = 0.0;  // value of the configured selection metric
    double der = -1.0;
    double f1_adu = -1.0;
    double f1_chi = -1.0;
    double uar = -1.0;
    double acc_adu = -1.0;
    double acc_chi = -1.0;
};

inline SegmentSet session_ref_segments(const Session& session) {
    SegmentSet out;
    for (const auto& s : session.segments)
        out.push_back({channel_name(s.channel), s.label, s.start_s, s.end_s});
    return out;
}

// Place per-frame predictions onto the 0-based 0.1 s timeline grid: frame i's
// label lands on the slot containing its center point (offset frame_len/2).
// Slots before the first center are silence.
inline DiarizationTimeline predictions_to_timeline(
    const Session& session, const FrameSpec& spec,
    std::span<const std::string> adu_pred, std::span<const std::string> chi_pred,
    int smooth_window = 11) {
    DiarizationTimeline tl;
    tl.hop_s = spec.hop_s;
    const int n_slots = static_cast<int>(
        std::llround(session.duration_s / spec.hop_s));
    const int offset = spec.timeline_slot_offset();
    auto make_track = [&](const std::string& speaker,
                          std::span<const std::string> pred) {
        SpeakerTrack track;
        track.speaker = speaker;
        track.silence_label = "SIL";
        track.frames.assign(n_slots, "SIL");
        for (int k = 0; k < n_slots; ++k) {
            const int i = k - offset;
            if (i >= 0 && i < static_cast<int>(pred.size()))
                track.frames[k] = pred[i];
        }
        track.frames = smooth_mode(track.frames, smooth_window);
        return track;
    };
    tl.tracks.push_back(make_track("adult", adu_pred));
    tl.tracks.push_back(make_track("child", chi_pred));
    return tl;
}

struct DerAccum {
    double miss = 0.0, fa = 0.0, den = 0.0;
    int skipped_sessions = 0;

    void add(const DerBreakdown& b) {
        miss += b.missed_s;
        fa += b.false_alarm_s;
        den += b.scored_speech_s;
    }
    double der_pct() const {
        if (den <= 0.0) return -1.0;
        return 100.0 * (miss + fa) / den;
    }
};

inline EvalResult evaluate_sessions(VcModel& model,
                                    std::span<const Session* const> sessions,
                                    const FrameSpec& spec,
                                    const std::string& selection_metric,
                                    int smooth_window = 11,
                                    std::vector<std::string>* ref_adu_out = nullptr,
                                    std::vector<std::string>* hyp_adu_out = nullptr,
                                    std::vector<std::string>* ref_chi_out = nullptr,
                                    std::vector<std::string>* hyp_chi_out = nullptr,
                                    std::vector<std::string>* groups_out = nullptr) {
    const auto adu = adu_inventory();
    const auto chi = chi_inventory();
    std::vector<std::string> ref_a, hyp_a, ref_c, hyp_c, groups;
    DerAccum der_acc;
    for (const Session* session : sessions) {
        const auto frames = frames_from_session(*session, spec);
        std::vector<std::string> pred_a, pred_c;
        for (const auto& f : frames) {
            const auto adult = f.cut(Channel::adult, spec);
            const auto child = f.cut(Channel::child, spec);
            ModelInput in;
            in.adult = &adult;
            in.child = &child;
            const auto out = model.forward(in);
            const auto amax = [](const Vec& v) {
                return static_cast<int>(std::max_element(v.begin(), v.end()) -
                                        v.begin());
            };
            pred_a.push_back(adu.classes[amax(out.adu_logits)]);
            pred_c.push_back(chi.classes[amax(out.chi_logits)]);
            ref_a.push_back(f.adu_label);
            ref_c.push_back(f.chi_label);
            groups.push_back(session->session_id);
        }
        hyp_a.insert(hyp_a.end(), pred_a.begin(), pred_a.end());
        hyp_c.insert(hyp_c.end(), pred_c.begin(), pred_c.end());

        const auto tl = predictions_to_timeline(*session, spec, pred_a, pred_c,
                                                smooth_window);
        try {
            der_acc.add(der_breakdown(session_ref_segments(*session),
                                      timeline_to_segments(tl)));
        } catch (const EmptyReferenceError&) {
            ++der_acc.skipped_sessions;
        }
    }

    EvalResult res;
    res.f1_adu = f1_unweighted(ref_a, hyp_a, adu);
    res.f1_chi = f1_unweighted(ref_c, hyp_c, chi);
    res.uar = uar(ref_c, hyp_c, chi);
    res.acc_adu = accuracy(ref_a, hyp_a);
    res.acc_chi = accuracy(ref_c, hyp_c);
    res.der = der_acc.der_pct();
    res.metric = selection_metric == "uar" ? res.uar
                                           : (res.f1_adu + res.f1_chi) / 2.0;
    if (ref_adu_out) *ref_adu_out = std::move(ref_a);
    if (hyp_adu_out) *hyp_adu_out = std::move(hyp_a);
    if (ref_chi_out) *ref_chi_out = std::move(ref_c);
    if (hyp_chi_out) *hyp_chi_out = std::move(hyp_c);
    if (groups_out) *groups_out = std::move(groups);
    return res;
}

inline EvalResult evaluate_clips(VcModel& model,
                                 std::span<const Clip* const> clips,
                                 const std::string& selection_metric,
                                 std::vector<std::string>* ref_out = nullptr,
                                 std::vector<std::string>* hyp_out = nullptr) {
    const auto inventory = babble_inventory();
    std::vector<std::string> ref, hyp;
    for (const Clip* clip : clips) {
        ModelInput in;
        in.child = &clip->audio;
        const auto out = model.forward(in);
        const int best = static_cast<int>(
            std::max_element(out.chi_logits.begin(), out.chi_logits.end()) -
            out.chi_logits.begin());
        hyp.push_back(inventory.classes[best]);
        ref.push_back(clip->label);
    }
    EvalResult res;
    res.f1_chi = f1_unweighted(ref, hyp, inventory);
    res.uar = uar(ref, hyp, inventory);
    res.acc_chi = accuracy(ref, hyp);
    res.metric = selection_metric == "uar" ? res.uar : res.f1_chi;
    if (ref_out) *ref_out = std::move(ref);
    if (hyp_out) *hyp_out = std::move(hyp);
    return res;
}

// ---------------------------------------------------------------------------
// Run record.
// ---------------------------------------------------------------------------

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0, ce_adu = 0.0, ce_chi = 0.0, ctc = 0.0;
    long long ctc_skipped = 0;
    double train_acc_adu = -1.0, train_acc_chi = -1.0;
    double metric = 0.0, der = -1.0, f1_adu = -1.0, f1_chi = -1.0, uar = -1.0;
    double lr_head = 0.0, lr_encoder = 0.0;

    nlohmann::json to_json() const {
        return {{"epoch", epoch},
                {"train_loss", train_loss},
                {"ce_adu", ce_adu},
                {"ce_chi", ce_chi},
                {"ctc", ctc},
                {"ctc_skipped", ctc_skipped},
                {"train_acc_adu", train_acc_adu},
                {"train_acc_chi", train_acc_chi},
                {"metric", metric},
                {"der", der},
                {"f1_adu", f1_adu},
                {"f1_chi", f1_chi},
                {"uar", uar},
                {"lr_head", lr_head},
                {"lr_encoder", lr_encoder}};
    }
};

struct RunRecord {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string protocol = "paper_test_selection";
    int fold_id = -1;
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    double best_metric = kNegInf;
    std::string best_checkpoint;

    nlohmann::json to_json() const {
        nlohmann::json eps = nlohmann::json::array();
        for (const auto& e : epochs) eps.push_back(e.to_json());
        return {{"version", kVersion},
                {"seed", seed},
                {"config_hash", config_hash},
                {"protocol", protocol},
                {"fold_id", fold_id},
                {"epochs", eps},
                {"best_epoch", best_epoch},
                {"best_metric", best_metric},
                {"best_checkpoint", best_checkpoint}};
    }
};

// ---------------------------------------------------------------------------
// Trainer: batched Adam with dual learning rates, new-bob decay on the
// selection metric, best-checkpoint retention, resumable state.
// ---------------------------------------------------------------------------

class Trainer {
  public:
    Trainer(VcModel& model, std::vector<TrainItem> items, FrameSpec spec,
            std::function<EvalResult(VcModel&)> eval_fn, OptimConfig optim,
            std::uint64_t seed)
        : model_(model),
          items_(std::move(items)),
          spec_(spec),
          eval_fn_(std::move(eval_fn)),
          optim_(optim),
          seed_(seed),
          adam_(make_groups(model, optim)) {
        optim.validate();
        record_.seed = seed;
        dual_ = model_.n_tiers() > 1;
        snapshot_best();  // epoch -1 weights, replaced on first improvement
    }

    bool done() const { return epoch_next_ >= optim_.epochs; }
    int epoch_next() const { return epoch_next_; }
    RunRecord& record() { return record_; }
    Adam& adam() { return adam_; }

    void run_epoch() {
        const int epoch = epoch_next_;
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr_head = adam_.lrs()[0];
        rec.lr_encoder = adam_.lrs()[1];

        // deterministic per-epoch shuffle, independent of earlier epochs
        std::vector<std::size_t> order(items_.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng = Rng(seed_).fork(static_cast<std::uint64_t>(epoch) + 1);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);

        double loss_sum = 0.0, ce_adu_sum = 0.0, ce_chi_sum = 0.0, ctc_sum = 0.0;
        long long n_items = 0;
        for (std::size_t base = 0; base < order.size();
             base += optim_.batch_size) {
            const auto end = std::min(order.size(),
                                      base + static_cast<std::size_t>(
                                                 optim_.batch_size));
            const double batch_n = static_cast<double>(end - base);
            model_.zero_grads();
            double batch_loss = 0.0;
            std::vector<std::string> batch_ids;
            for (std::size_t k = base; k < end; ++k) {
                const auto& item = items_[order[k]];
                batch_ids.push_back(item.id);
                const auto input = materialize(item, spec_);
                Targets targets;
                targets.adu_class = item.adu_class;
                targets.chi_class = item.chi_class;
                if (item.has_ctc) targets.ctc_label = &item.ctc_label;
                const auto parts = model_.accumulate_grads(
                    input.view(dual_), targets, 1.0 / batch_n);
                batch_loss += parts.total;
                loss_sum += parts.total;
                ce_adu_sum += parts.ce_adu;
                ce_chi_sum += parts.ce_chi;
                ctc_sum += parts.ctc;
                if (parts.ctc_skipped) ++rec.ctc_skipped;
                ++n_items;
            }
            if (!std::isfinite(batch_loss)) {
                std::string ids;
                for (const auto& id : batch_ids) ids += " " + id;
                throw TrainingDiverged("non-finite loss at epoch " +
                                       std::to_string(epoch) + ", batch items:" +
                                       ids);
            }
            adam_.step();
        }
        if (n_items > 0) {
            rec.train_loss = loss_sum / n_items;
            rec.ce_adu = ce_adu_sum / n_items;
            rec.ce_chi = ce_chi_sum / n_items;
            rec.ctc = ctc_sum / n_items;
        }

        if (optim_.compute_train_accuracy) {
            long long ok_a = 0, ok_c = 0, n_a = 0, n_c = 0;
            for (const auto& item : items_) {
                const auto input = materialize(item, spec_);
                const auto out = model_.forward(input.view(dual_));
                if (item.adu_class >= 0) {
                    const int best = static_cast<int>(
                        std::max_element(out.adu_logits.begin(),
                                         out.adu_logits.end()) -
                        out.adu_logits.begin());
                    ok_a += best == item.adu_class;
                    ++n_a;
                }
                if (item.chi_class >= 0) {
                    const int best = static_cast<int>(
                        std::max_element(out.chi_logits.begin(),
                                         out.chi_logits.end()) -
                        out.chi_logits.begin());
                    ok_c += best == item.chi_class;
                    ++n_c;
                }
            }
            rec.train_acc_adu = n_a ? 100.0 * ok_a / n_a : -1.0;
            rec.train_acc_chi = n_c ? 100.0 * ok_c / n_c : -1.0;
        }

        const auto eval = eval_fn_(model_);
        rec.metric = eval.metric;
        rec.der = eval.der;
        rec.f1_adu = eval.f1_adu;
        rec.f1_chi = eval.f1_chi;
        rec.uar = eval.uar;
        record_.epochs.push_back(rec);

        const bool improved =
            record_.best_epoch < 0 ||
            rec.metric > record_.best_metric +
                             optim_.improvement_rel * std::abs(record_.best_metric);
        if (improved) {
            record_.best_metric = rec.metric;
            record_.best_epoch = epoch;
            snapshot_best();
            bad_epochs_ = 0;
        } else {
            ++bad_epochs_;
            if (bad_epochs_ >= optim_.newbob_patience) {
                adam_.scale_lr(optim_.newbob_factor);
                bad_epochs_ = 0;
            }
        }
        ++epoch_next_;
    }

    // Restores the weights of the best epoch.
    void restore_best() {
        auto named = model_.named_tensors();
        for (std::size_t i = 0; i < named.size(); ++i)
            named[i].second->d = best_snapshot_[i].d;
    }

    // ---- resumable state ----

    void save_state(const std::filesystem::path& path,
                    const nlohmann::json& config_meta) {
        nlohmann::json meta = config_meta;
        meta["kind"] = "train_state";
        meta["epoch_next"] = epoch_next_;
        meta["bad_epochs"] = bad_epochs_;
        meta["adam_t"] = adam_.step_count();
        meta["lrs"] = adam_.lrs();
        meta["record"] = record_.to_json();
        std::vector<std::pair<std::string, const Mat*>> tensors;
        for (auto& [name, mat] : model_.named_tensors())
            tensors.push_back({"model." + name, mat});
        for (std::size_t i = 0; i < best_snapshot_.size(); ++i)
            tensors.push_back({"best." + std::to_string(i), &best_snapshot_[i]});
        for (std::size_t i = 0; i < adam_.m().size(); ++i) {
            tensors.push_back({"adam.m." + std::to_string(i), &adam_.m()[i]});
            tensors.push_back({"adam.v." + std::to_string(i), &adam_.v()[i]});
        }
        save_checkpoint(path, meta, tensors);
    }

    void load_state(const Checkpoint& ckpt) {
        epoch_next_ = ckpt.meta.at("epoch_next").get<int>();
        bad_epochs_ = ckpt.meta.at("bad_epochs").get<int>();
        adam_.step_count() = ckpt.meta.at("adam_t").get<long long>();
        const auto lrs = ckpt.meta.at("lrs").get<std::vector<double>>();
        // groups are (head, encoder); restore by ratio of current lrs
        adam_.set_lrs(lrs);
        const auto& rec = ckpt.meta.at("record");
        record_.best_epoch = rec.at("best_epoch").get<int>();
        record_.best_metric = rec.at("best_metric").get<double>();
        record_.epochs.clear();
        for (const auto& e : rec.at("epochs")) {
            EpochRecord er;
            er.epoch = e.at("epoch").get<int>();
            er.train_loss = e.at("train_loss").get<double>();
            er.ce_adu = e.at("ce_adu").get<double>();
            er.ce_chi = e.at("ce_chi").get<double>();
            er.ctc = e.at("ctc").get<double>();
            er.ctc_skipped = e.at("ctc_skipped").get<long long>();
            er.train_acc_adu = e.at("train_acc_adu").get<double>();
            er.train_acc_chi = e.at("train_acc_chi").get<double>();
            er.metric = e.at("metric").get<double>();
            er.der = e.at("der").get<double>();
            er.f1_adu = e.at("f1_adu").get<double>();
            er.f1_chi = e.at("f1_chi").get<double>();
            er.uar = e.at("uar").get<double>();
            er.lr_head = e.at("lr_head").get<double>();
            er.lr_encoder = e.at("lr_encoder").get<double>();
            record_.epochs.push_back(er);
        }
        auto named = model_.named_tensors();
        std::vector<std::pair<std::string, Mat*>> model_targets;
        for (auto& [name, mat] : named)
            model_targets.push_back({"model." + name, mat});
        apply_tensors(ckpt, model_targets);
        for (std::size_t i = 0; i < best_snapshot_.size(); ++i) {
            auto it = ckpt.tensors.find("best." + std::to_string(i));
            if (it == ckpt.tensors.end())
                throw ValidationError("train state missing best snapshot");
            best_snapshot_[i] = it->second;
        }
        for (std::size_t i = 0; i < adam_.m().size(); ++i) {
            adam_.m()[i] = ckpt.tensors.at("adam.m." + std::to_string(i));
            adam_.v()[i] = ckpt.tensors.at("adam.v." + std::to_string(i));
        }
    }

  private:
    static std::vector<Adam::Group> make_groups(VcModel& model,
                                                const OptimConfig& optim) {
        optim.validate();
        return {{model.head_params(), model.head_grads(), optim.lr_head},
                {model.encoder_params(), model.encoder_grads(),
                 optim.lr_encoder}};
    }

    void snapshot_best() {
        best_snapshot_.clear();
        for (auto& [name, mat] : model_.named_tensors())
            best_snapshot_.push_back(*mat);
    }

    VcModel& model_;
    std::vector<TrainItem> items_;
    FrameSpec spec_;
    std::function<EvalResult(VcModel&)> eval_fn_;
    OptimConfig optim_;
    std::uint64_t seed_;
    Adam adam_;
    RunRecord record_;
    std::vector<Mat> best_snapshot_;
    int epoch_next_ = 0;
    int bad_epochs_ = 0;
    bool dual_ = true;
};

// ---------------------------------------------------------------------------
// Cross-validation aggregation: mean and std (sample by default) of DER and
// per-channel F1 over folds.
// ---------------------------------------------------------------------------

struct FoldOutcome {
    RunRecord record;
    EvalResult final_eval;
};

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;
};

inline MeanStd mean_std(std::span<const double> values, bool population) {
    MeanStd out;
    if (values.empty()) return out;
    for (double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    if (values.size() == 1) return out;  // stddev = 0, flagged by caller
    double acc = 0.0;
    for (double v : values) acc += (v - out.mean) * (v - out.mean);
    const double denom =
        population ? static_cast<double>(values.size())
                   : static_cast<double>(values.size()) - 1.0;
    out.stddev = std::sqrt(acc / denom);
    return out;
}

struct CvReport {
    std::vector<FoldOutcome> folds;
    MeanStd der, f1_adu, f1_chi, uar;
    bool population_std = false;
    bool single_fold_warning = false;

    nlohmann::json to_json() const {
        nlohmann::json per_fold = nlohmann::json::array();
        for (const auto& f : folds)
            per_fold.push_back({{"fold_id", f.record.fold_id},
                                {"der", f.final_eval.der},
                                {"f1_adu", f.final_eval.f1_adu},
                                {"f1_chi", f.final_eval.f1_chi},
                                {"uar", f.final_eval.uar},
                                {"best_epoch", f.record.best_epoch},
                                {"best_metric", f.record.best_metric}});
        return {{"version", kVersion},
                {"folds", per_fold},
                {"der", {{"mean", der.mean}, {"std", der.stddev}}},
                {"f1_adu", {{"mean", f1_adu.mean}, {"std", f1_adu.stddev}}},
                {"f1_chi", {{"mean", f1_chi.mean}, {"std", f1_chi.stddev}}},
                {"uar", {{"mean", uar.mean}, {"std", uar.stddev}}},
                {"population_std", population_std},
                {"single_fold_warning", single_fold_warning}};
    }
};

inline CvReport aggregate_folds(std::vector<FoldOutcome> folds,
                                bool population_std = false) {
    CvReport report;
    report.population_std = population_std;
    std::vector<double> ders, f1a, f1c, uars;
    for (const auto& f : folds) {
        ders.push_back(f.final_eval.der);
        f1a.push_back(f.final_eval.f1_adu);
        f1c.push_back(f.final_eval.f1_chi);
        uars.push_back(f.final_eval.uar);
    }
    report.der = mean_std(ders, population_std);
    report.f1_adu = mean_std(f1a, population_std);
    report.f1_chi = mean_std(f1c, population_std);
    report.uar = mean_std(uars, population_std);
    report.single_fold_warning = folds.size() == 1;
    report.folds = std::move(folds);
    return report;
}

}  // namespace sdvc
