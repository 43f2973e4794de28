#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdvc/common.hpp"
#include "sdvc/config.hpp"
#include "sdvc/corpus.hpp"
#include "sdvc/energy.hpp"
#include "sdvc/fixture.hpp"
#include "sdvc/framing.hpp"
#include "sdvc/metrics.hpp"
#include "sdvc/model.hpp"
#include "sdvc/phonetics.hpp"
#include "sdvc/training.hpp"

namespace sdvc::cmd {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// fixture: synthesize a corpus in the real file formats.
// ---------------------------------------------------------------------------

struct FixtureArgs {
    std::string kind = "sessions";  // sessions | clips | utterances
    fs::path out_dir = "fixture";
    std::uint64_t seed = 7;
    FixtureSpec session_spec;
    ClipFixtureSpec clip_spec;
    UttFixtureSpec utt_spec;
    fs::path phones_file;  // utterances only
};

inline fs::path cmd_fixture(const FixtureArgs& args) {
    if (args.kind == "sessions")
        return generate_fixture(args.session_spec, args.seed, args.out_dir);
    if (args.kind == "clips")
        return generate_clip_fixture(args.clip_spec, args.seed, args.out_dir);
    if (args.kind == "utterances") {
        const auto phones = PhoneInventory::from_file(args.phones_file);
        return generate_utterance_fixture(args.utt_spec, phones, args.seed,
                                          args.out_dir);
    }
    throw ValidationError("fixture: unknown kind '" + args.kind + "'");
}

// ---------------------------------------------------------------------------
// prepare: frame cache + per-class duration/frame statistics.
// ---------------------------------------------------------------------------

struct PrepareArgs {
    fs::path manifest;
    fs::path out_dir = "prepared";
    FrameSpec spec;
};

struct PrepareResult {
    fs::path cache_path;
    fs::path stats_path;
    long long n_frames = 0;
};

inline PrepareResult cmd_prepare(const PrepareArgs& args, std::ostream& log) {
    const auto sessions = load_sessions(args.manifest);
    if (sessions.empty())
        throw ValidationError("prepare: manifest has no sessions: " +
                              args.manifest.string());
    fs::create_directories(args.out_dir);

    std::vector<FrameExample> all_frames;
    std::map<std::string, std::map<std::string, double>> duration_s;
    std::map<std::string, std::map<std::string, long long>> frame_counts;
    double total_s = 0.0;
    for (const auto& session : sessions) {
        total_s += session.duration_s;
        for (const auto& seg : session.segments)
            duration_s[seg.tier][seg.label] += seg.end_s - seg.start_s;
        auto frames = frames_from_session(session, args.spec);
        for (const auto& f : frames) {
            ++frame_counts["ADU"][f.adu_label];
            ++frame_counts["CHI"][f.chi_label];
        }
        all_frames.insert(all_frames.end(), frames.begin(), frames.end());
    }

    const std::string hash =
        to_hex(fnv1a64(args.manifest.filename().string() + "|" +
                       format_seconds(args.spec.frame_len_s) + "|" +
                       format_seconds(args.spec.hop_s) + "|" +
                       format_seconds(args.spec.center_len_s)));
    PrepareResult result;
    result.n_frames = static_cast<long long>(all_frames.size());
    result.cache_path = args.out_dir / "frames.csv";
    write_frame_cache(result.cache_path, all_frames,
                      std::string("sdvc ") + kVersion + " config " + hash);

    nlohmann::json stats;
    stats["version"] = kVersion;
    stats["config_hash"] = hash;
    stats["sessions"] = sessions.size();
    stats["total_audio_s"] = total_s;
    stats["frames"] = result.n_frames;
    stats["class_duration_s"] = duration_s;
    stats["class_frames"] = frame_counts;
    result.stats_path = args.out_dir / "stats.json";
    std::ofstream out(result.stats_path);
    out << stats.dump(2) << '\n';

    log << "sessions: " << sessions.size() << ", total audio: "
        << format_seconds(total_s) << " s, frames: " << result.n_frames << "\n";
    log << "tier  class    minutes   frames\n";
    for (const auto& [tier, classes] : frame_counts)
        for (const auto& [cls, n] : classes) {
            const double mins = duration_s[tier].count(cls)
                                    ? duration_s[tier][cls] / 60.0
                                    : 0.0;
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%-5s %-8s %8.2f %8lld\n",
                          tier.c_str(), cls.c_str(), mins,
                          static_cast<long long>(n));
            log << buf;
        }
    return result;
}

// ---------------------------------------------------------------------------
// train: cross-validated (RABC) or split-based (BabbleCor) model training.
// ---------------------------------------------------------------------------

struct TrainArgs {
    fs::path config_path;
    fs::path out_dir = "runs";
    bool resume = false;
    int only_fold = -1;  // -1 = all folds
    std::optional<std::uint64_t> seed_override;
};

struct TrainResult {
    CvReport report;
    fs::path report_path;
    std::vector<fs::path> checkpoints;
};

namespace detail {

inline std::vector<const Session*> select_sessions(
    const std::vector<Session>& sessions, const std::set<std::string>& ids) {
    std::vector<const Session*> out;
    for (const auto& s : sessions)
        if (ids.count(s.child_id)) out.push_back(&s);
    return out;
}

inline nlohmann::json model_ckpt_meta(const ExperimentConfig& cfg, int fold,
                                      const RunRecord& record) {
    return {{"kind", "vc_model"},      {"version", kVersion},
            {"config", cfg.raw},       {"config_hash", cfg.hash()},
            {"fold_id", fold},         {"best_epoch", record.best_epoch},
            {"best_metric", record.best_metric}};
}

inline FoldOutcome train_one_fold(
    const ExperimentConfig& cfg, int fold_id, std::vector<TrainItem> items,
    const std::function<EvalResult(VcModel&)>& selection_eval,
    const std::function<EvalResult(VcModel&)>& final_eval, const TrainArgs& args,
    std::vector<fs::path>& checkpoints, std::ostream& log) {
    auto built = build_model(cfg);
    const auto optim = cfg.optim();
    const std::uint64_t fold_seed = cfg.seed() + 7919ULL * (fold_id + 1);
    Trainer trainer(*built.model, std::move(items), cfg.frame_spec(),
                    selection_eval, optim, fold_seed);
    trainer.record().config_hash = cfg.hash();
    trainer.record().protocol = cfg.protocol();
    trainer.record().fold_id = fold_id;

    const fs::path state_path =
        args.out_dir / ("fold" + std::to_string(fold_id) + ".state");
    if (args.resume && fs::exists(state_path)) {
        const auto ckpt = load_checkpoint(state_path);
        require_config_hash(ckpt, cfg.hash());
        trainer.load_state(ckpt);
        log << "fold " << fold_id << ": resumed at epoch "
            << trainer.epoch_next() << "\n";
    }

    nlohmann::json state_meta = {{"config", cfg.raw},
                                 {"config_hash", cfg.hash()},
                                 {"version", kVersion},
                                 {"fold_id", fold_id}};
    while (!trainer.done()) {
        trainer.run_epoch();
        trainer.save_state(state_path, state_meta);
        const auto& e = trainer.record().epochs.back();
        char buf[192];
        std::snprintf(buf, sizeof(buf),
                      "fold %d epoch %d loss %.4f metric %.2f der %.2f lr %g\n",
                      fold_id, e.epoch, e.train_loss, e.metric, e.der,
                      e.lr_head);
        log << buf;
    }
    trainer.restore_best();

    FoldOutcome outcome;
    outcome.final_eval = final_eval(*built.model);
    outcome.record = trainer.record();

    const fs::path ckpt_path =
        args.out_dir / ("fold" + std::to_string(fold_id) + "_best.ckpt");
    std::vector<std::pair<std::string, const Mat*>> tensors;
    for (auto& [name, mat] : built.model->named_tensors())
        tensors.push_back({name, mat});
    save_checkpoint(ckpt_path, model_ckpt_meta(cfg, fold_id, outcome.record),
                    tensors);
    // filename only: run records must be byte-identical across output dirs
    outcome.record.best_checkpoint = ckpt_path.filename().string();
    checkpoints.push_back(ckpt_path);

    std::ofstream rec(args.out_dir /
                      ("fold" + std::to_string(fold_id) + "_run.json"));
    rec << outcome.record.to_json().dump(2) << '\n';
    return outcome;
}

}  // namespace detail

inline TrainResult cmd_train(const TrainArgs& args, std::ostream& log) {
    auto cfg = load_config(args.config_path);
    if (args.seed_override) cfg.raw["seed"] = *args.seed_override;
    if (cfg.method() != "model")
        throw ValidationError("train: config method is '" + cfg.method() +
                              "'; use baseline-et for energy baselines");
    build_model(cfg);  // validate the full model configuration up front
    fs::create_directories(args.out_dir);
    const auto spec = cfg.frame_spec();
    const auto optim = cfg.optim();
    const int smooth_win = cfg.smooth_window();

    std::vector<FoldOutcome> outcomes;
    TrainResult result;

    if (cfg.corpus_mode() == "rabc_two_channel") {
        const auto sessions = load_sessions(cfg.manifest_path());
        const auto folds = make_folds(sessions, cfg.folds(), cfg.seed());
        auto built_probe = build_model(cfg);  // for pseudo/phones reuse
        for (const auto& fold : folds) {
            if (args.only_fold >= 0 && fold.fold_id != args.only_fold) continue;
            auto train_ids = fold.train_ids;
            std::set<std::string> eval_ids = fold.test_ids;
            if (cfg.protocol() == "dev_split") {
                // carve a dev split out of the training children
                std::vector<std::string> ordered(train_ids.begin(),
                                                 train_ids.end());
                Rng rng = Rng(cfg.seed()).fork(500 + fold.fold_id);
                for (std::size_t i = ordered.size(); i > 1; --i)
                    std::swap(ordered[i - 1], ordered[rng.below(i)]);
                const std::size_t n_dev =
                    std::max<std::size_t>(1, ordered.size() / 5);
                eval_ids.clear();
                for (std::size_t i = 0; i < n_dev; ++i) {
                    eval_ids.insert(ordered[i]);
                    train_ids.erase(ordered[i]);
                }
            }
            const auto train_sessions =
                detail::select_sessions(sessions, train_ids);
            const auto eval_sessions =
                detail::select_sessions(sessions, eval_ids);
            const auto test_sessions =
                detail::select_sessions(sessions, fold.test_ids);

            std::vector<FrameExample> frames;
            for (const auto* s : train_sessions) {
                auto f = frames_from_session(*s, spec);
                frames.insert(frames.end(), f.begin(), f.end());
            }
            frames = balance_sample(std::move(frames), cfg.balance(),
                                    cfg.seed() + fold.fold_id);
            auto items = items_from_frames(
                frames, spec,
                built_probe.pseudo ? &*built_probe.pseudo : nullptr);

            auto selection_eval = [&, eval_sessions](VcModel& m) {
                return evaluate_sessions(m, eval_sessions, spec,
                                         optim.selection_metric, smooth_win);
            };
            auto final_eval = [&, test_sessions](VcModel& m) {
                return evaluate_sessions(m, test_sessions, spec,
                                         optim.selection_metric, smooth_win);
            };
            outcomes.push_back(detail::train_one_fold(
                cfg, fold.fold_id, std::move(items), selection_eval, final_eval,
                args, result.checkpoints, log));
        }
    } else {  // babblecor_single
        const auto clips = load_clips(cfg.manifest_path());
        if (clips.empty())
            throw ValidationError("train: manifest has no clips: " +
                                  cfg.manifest_path().string());
        auto built_probe = build_model(cfg);
        std::vector<const Clip*> train, dev, test;
        for (const auto& c : clips) {
            if (c.split == "train") train.push_back(&c);
            else if (c.split == "dev") dev.push_back(&c);
            else test.push_back(&c);
        }
        std::vector<Clip> train_clips;
        for (const auto* c : train) train_clips.push_back(*c);
        auto items = items_from_clips(
            train_clips, built_probe.pseudo ? &*built_probe.pseudo : nullptr);
        const auto& sel_clips =
            cfg.protocol() == "dev_split" && !dev.empty() ? dev : test;
        auto selection_eval = [&, sel_clips](VcModel& m) {
            return evaluate_clips(m, sel_clips, optim.selection_metric);
        };
        auto final_eval = [&, test](VcModel& m) {
            return evaluate_clips(m, test, optim.selection_metric);
        };
        outcomes.push_back(detail::train_one_fold(cfg, 0, std::move(items),
                                                  selection_eval, final_eval,
                                                  args, result.checkpoints, log));
    }

    result.report = aggregate_folds(std::move(outcomes), cfg.population_std());
    nlohmann::json report_json = result.report.to_json();
    report_json["config_hash"] = cfg.hash();
    report_json["experiment"] = cfg.experiment();
    report_json["protocol"] = cfg.protocol();
    result.report_path = args.out_dir / "report.json";
    std::ofstream out(result.report_path);
    out << report_json.dump(2) << '\n';
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%s: DER %.2f +- %.2f, ADU-F1 %.2f +- %.2f, CHI-F1 %.2f +- "
                  "%.2f\n",
                  cfg.experiment().c_str(), result.report.der.mean,
                  result.report.der.stddev, result.report.f1_adu.mean,
                  result.report.f1_adu.stddev, result.report.f1_chi.mean,
                  result.report.f1_chi.stddev);
    log << buf;
    if (result.report.single_fold_warning)
        log << "warning: single fold, reported std is 0\n";
    return result;
}

// what kind of rows a manifest carries: "session", "clip", or ""
inline std::string corpus_rows_kind(const fs::path& manifest) {
    for (const auto& row : sdvc::detail::read_manifest_rows(manifest)) {
        const std::string type = row.value("type", "session");
        if (type == "session" || type == "clip") return type;
    }
    return "";
}

// ---------------------------------------------------------------------------
// eval: score a checkpoint (or oracle predictions) against a manifest.
// ---------------------------------------------------------------------------

struct EvalArgs {
    fs::path checkpoint;               // unused in oracle mode
    std::vector<fs::path> checkpoints; // optional: per-fold aggregate mode
    fs::path manifest;
    fs::path out_dir = "eval";
    std::optional<fs::path> config_path;  // enforce config-hash match
    bool oracle = false;
    std::string clip_split = "test";
    int ci_resamples = 1000;
    std::uint64_t seed = 7;
};

namespace detail {

// Per-fold scoring for the multi-checkpoint form: each checkpoint is scored
// on its own fold's test children, then folds aggregate to mean +- std.
inline nlohmann::json eval_fold_checkpoints(const EvalArgs& args,
                                            std::ostream& log) {
    std::vector<FoldOutcome> outcomes;
    for (const auto& ckpt_path : args.checkpoints) {
        const auto ckpt = load_checkpoint(ckpt_path);
        ExperimentConfig cfg;
        cfg.raw = ckpt.meta.at("config");
        cfg.base_dir = fs::absolute(ckpt_path).parent_path();
        if (args.config_path) {
            const auto file_cfg = load_config(*args.config_path);
            require_config_hash(ckpt, file_cfg.hash());
            cfg = file_cfg;
        }
        auto built = build_model(cfg);
        apply_tensors(ckpt, built.model->named_tensors());
        const int fold_id = ckpt.meta.value("fold_id", -1);

        FoldOutcome outcome;
        outcome.record.fold_id = fold_id;
        outcome.record.config_hash = cfg.hash();
        if (cfg.corpus_mode() == "rabc_two_channel") {
            const auto sessions = load_sessions(args.manifest);
            std::vector<const Session*> test;
            if (fold_id >= 0 && cfg.folds() >= 2 &&
                static_cast<int>(sessions.size()) >= cfg.folds()) {
                const auto folds = make_folds(sessions, cfg.folds(), cfg.seed());
                test = select_sessions(sessions, folds.at(fold_id).test_ids);
            } else {
                for (const auto& s : sessions) test.push_back(&s);
            }
            outcome.final_eval = evaluate_sessions(
                *built.model, test, cfg.frame_spec(),
                cfg.optim().selection_metric, cfg.smooth_window());
        } else {
            const auto clips = load_clips(args.manifest);
            std::vector<const Clip*> test;
            for (const auto& c : clips)
                if (args.clip_split.empty() || c.split == args.clip_split)
                    test.push_back(&c);
            outcome.final_eval =
                evaluate_clips(*built.model, test, cfg.optim().selection_metric);
        }
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "fold %d: DER %.2f ADU-F1 %.2f CHI-F1 %.2f UAR %.2f\n",
                      fold_id, outcome.final_eval.der, outcome.final_eval.f1_adu,
                      outcome.final_eval.f1_chi, outcome.final_eval.uar);
        log << buf;
        outcomes.push_back(std::move(outcome));
    }
    const auto report = aggregate_folds(std::move(outcomes), false);
    auto json = report.to_json();
    std::ofstream out(args.out_dir / "metrics.json");
    out << json.dump(2) << '\n';
    log << json.dump(2) << '\n';
    return json;
}

}  // namespace detail

inline MetricReport cmd_eval(const EvalArgs& args, std::ostream& log) {
    fs::create_directories(args.out_dir);
    if (args.checkpoints.size() > 1) {
        detail::eval_fold_checkpoints(args, log);
        return {};
    }
    MetricReport report;
    const auto adu = adu_inventory();
    const auto chi = chi_inventory();

    const auto rows = corpus_rows_kind(args.manifest);
    std::vector<std::string> ref_a, hyp_a, ref_c, hyp_c, groups;

    if (rows == "session") {
        const auto sessions = load_sessions(args.manifest);
        FrameSpec spec;
        int smooth_win = 11;
        DerAccum der_acc;

        std::shared_ptr<VcModel> model;
        if (!args.oracle) {
            const auto ckpt = load_checkpoint(args.checkpoint);
            ExperimentConfig cfg;
            cfg.raw = ckpt.meta.at("config");
            cfg.base_dir = fs::absolute(args.checkpoint).parent_path();
            if (args.config_path) {
                const auto file_cfg = load_config(*args.config_path);
                require_config_hash(ckpt, file_cfg.hash());
                cfg = file_cfg;
            }
            report.config_hash = cfg.hash();
            spec = cfg.frame_spec();
            smooth_win = cfg.smooth_window();
            auto built = build_model(cfg);
            model = built.model;
            std::vector<std::pair<std::string, Mat*>> targets =
                model->named_tensors();
            apply_tensors(ckpt, targets);
        } else {
            report.config_hash = to_hex(fnv1a64("oracle"));
        }

        for (const auto& session : sessions) {
            const auto frames = frames_from_session(session, spec);
            std::vector<std::string> pred_a, pred_c;
            for (const auto& f : frames) {
                if (args.oracle) {
                    pred_a.push_back(f.adu_label);
                    pred_c.push_back(f.chi_label);
                } else {
                    const auto adult = f.cut(Channel::adult, spec);
                    const auto child = f.cut(Channel::child, spec);
                    ModelInput in;
                    in.adult = &adult;
                    in.child = &child;
                    const auto out = model->forward(in);
                    const auto amax = [](const Vec& v) {
                        return static_cast<int>(
                            std::max_element(v.begin(), v.end()) - v.begin());
                    };
                    pred_a.push_back(adu.classes[amax(out.adu_logits)]);
                    pred_c.push_back(chi.classes[amax(out.chi_logits)]);
                }
                ref_a.push_back(f.adu_label);
                ref_c.push_back(f.chi_label);
                groups.push_back(session.session_id);
            }
            hyp_a.insert(hyp_a.end(), pred_a.begin(), pred_a.end());
            hyp_c.insert(hyp_c.end(), pred_c.begin(), pred_c.end());
            const auto tl = predictions_to_timeline(session, spec, pred_a,
                                                    pred_c, smooth_win);
            write_rttm(args.out_dir / (session.session_id + ".rttm"),
                       session.session_id, timeline_to_segments(tl));
            try {
                der_acc.add(der_breakdown(session_ref_segments(session),
                                          timeline_to_segments(tl)));
            } catch (const EmptyReferenceError&) {
                ++der_acc.skipped_sessions;
            }
        }
        report.der_pct = der_acc.der_pct();
        report.f1["adu"] = f1_unweighted(ref_a, hyp_a, adu);
        report.f1["chi"] = f1_unweighted(ref_c, hyp_c, chi);
        report.f1_excl_sil["adu"] = f1_unweighted(ref_a, hyp_a, adu, false);
        report.f1_excl_sil["chi"] = f1_unweighted(ref_c, hyp_c, chi, false);
        report.uar_pct = uar(ref_c, hyp_c, chi);
        report.uar_ci = bootstrap_ci(
            ref_c, hyp_c,
            [&](std::span<const std::string> r, std::span<const std::string> h) {
                return uar(r, h, chi);
            },
            args.seed, args.ci_resamples, groups);
        for (const auto& [cls, counts] : per_class_counts(ref_a, hyp_a))
            report.support["adu"][cls] = counts.support;
        for (const auto& [cls, counts] : per_class_counts(ref_c, hyp_c))
            report.support["chi"][cls] = counts.support;
    } else if (rows == "clip") {
        const auto clips = load_clips(args.manifest);
        const auto bc = babble_inventory();
        std::shared_ptr<VcModel> model;
        if (!args.oracle) {
            const auto ckpt = load_checkpoint(args.checkpoint);
            ExperimentConfig cfg;
            cfg.raw = ckpt.meta.at("config");
            cfg.base_dir = fs::absolute(args.checkpoint).parent_path();
            if (args.config_path) {
                const auto file_cfg = load_config(*args.config_path);
                require_config_hash(ckpt, file_cfg.hash());
                cfg = file_cfg;
            }
            report.config_hash = cfg.hash();
            auto built = build_model(cfg);
            model = built.model;
            apply_tensors(ckpt, model->named_tensors());
        } else {
            report.config_hash = to_hex(fnv1a64("oracle"));
        }
        for (const auto& clip : clips) {
            if (!args.clip_split.empty() && clip.split != args.clip_split)
                continue;
            ref_c.push_back(clip.label);
            groups.push_back(clip.child_id);
            if (args.oracle) {
                hyp_c.push_back(clip.label);
            } else {
                ModelInput in;
                in.child = &clip.audio;
                const auto out = model->forward(in);
                const int best = static_cast<int>(
                    std::max_element(out.chi_logits.begin(),
                                     out.chi_logits.end()) -
                    out.chi_logits.begin());
                hyp_c.push_back(bc.classes[best]);
            }
        }
        if (ref_c.empty())
            throw ValidationError("eval: no clips in split '" +
                                  args.clip_split + "'");
        report.f1["chi"] = f1_unweighted(ref_c, hyp_c, bc);
        report.f1_excl_sil["chi"] = f1_unweighted(ref_c, hyp_c, bc, false);
        report.uar_pct = uar(ref_c, hyp_c, bc);
        report.uar_ci = bootstrap_ci(
            ref_c, hyp_c,
            [&](std::span<const std::string> r, std::span<const std::string> h) {
                return uar(r, h, bc);
            },
            args.seed, args.ci_resamples);
        for (const auto& [cls, counts] : per_class_counts(ref_c, hyp_c))
            report.support["chi"][cls] = counts.support;
    } else {
        throw ValidationError("eval: manifest has neither sessions nor clips: " +
                              args.manifest.string());
    }

    std::ofstream out(args.out_dir / "metrics.json");
    out << report.to_json().dump(2) << '\n';
    log << report.to_json().dump(2) << '\n';
    return report;
}

// ---------------------------------------------------------------------------
// baseline-et: energy-threshold diarization baselines.
// ---------------------------------------------------------------------------

struct BaselineEtArgs {
    fs::path manifest;
    std::string mode = "unsupervised";  // unsupervised | weak
    int median_len = 11;
    double vad_margin_db = 16.0;
    int folds = 3;
    fs::path out_dir = "et";
    std::uint64_t seed = 7;
};

struct BaselineEtResult {
    MeanStd der;
    std::vector<double> fold_ders;
    fs::path report_path;
};

inline BaselineEtResult cmd_baseline_et(const BaselineEtArgs& args,
                                        std::ostream& log) {
    if (args.mode != "unsupervised" && args.mode != "weak")
        throw ValidationError("baseline-et: mode must be unsupervised|weak");
    if (args.median_len < 1 || args.median_len % 2 == 0)
        throw ValidationError("baseline-et: median length must be odd");
    const auto sessions = load_sessions(args.manifest);
    if (sessions.empty())
        throw ValidationError("baseline-et: manifest has no sessions");
    fs::create_directories(args.out_dir);

    std::vector<FoldManifest> folds;
    if (args.folds <= 1) {
        FoldManifest all;
        all.fold_id = 0;
        for (const auto& s : sessions) {
            all.train_ids.insert(s.child_id);
            all.test_ids.insert(s.child_id);
        }
        folds.push_back(all);
    } else {
        folds = make_folds(sessions, args.folds, args.seed);
    }

    BaselineEtResult result;
    for (const auto& fold : folds) {
        std::vector<Session> train;
        for (const auto& s : sessions)
            if (fold.train_ids.count(s.child_id)) train.push_back(s);
        const auto model =
            args.mode == "weak"
                ? fit_weak_supervised(train, args.median_len)
                : fit_unsupervised(train, args.median_len, args.vad_margin_db);

        DerAccum acc;
        for (const auto& s : sessions) {
            if (!fold.test_ids.count(s.child_id)) continue;
            const auto tl = diarize_et(model, s);
            const auto hyp = timeline_to_segments(tl);
            write_rttm(args.out_dir / ("fold" + std::to_string(fold.fold_id) +
                                       "_" + s.session_id + ".rttm"),
                       s.session_id, hyp);
            try {
                acc.add(der_breakdown(session_ref_segments(s), hyp));
            } catch (const EmptyReferenceError&) {
                ++acc.skipped_sessions;
            }
        }
        result.fold_ders.push_back(acc.der_pct());
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "fold %d: thresholds adult %.1f child %.1f dB, DER %.2f\n",
                      fold.fold_id, model.threshold_adult,
                      model.threshold_child, acc.der_pct());
        log << buf;
    }
    result.der = mean_std(result.fold_ders, false);

    nlohmann::json report = {
        {"version", kVersion},
        {"config_hash",
         to_hex(fnv1a64(args.mode + "|" + std::to_string(args.median_len) +
                        "|" + std::to_string(args.folds)))},
        {"mode", args.mode},
        {"median_len", args.median_len},
        {"fold_der", result.fold_ders},
        {"der", {{"mean", result.der.mean}, {"std", result.der.stddev}}}};
    result.report_path = args.out_dir / "report.json";
    std::ofstream out(result.report_path);
    out << report.dump(2) << '\n';
    char buf[96];
    std::snprintf(buf, sizeof(buf), "ET (%s): DER %.2f +- %.2f\n",
                  args.mode.c_str(), result.der.mean, result.der.stddev);
    log << buf;
    return result;
}

// ---------------------------------------------------------------------------
// gen-pseudo: pseudo-reference transcripts from a frozen phone recognizer.
// ---------------------------------------------------------------------------

struct GenPseudoArgs {
    fs::path pr_checkpoint;
    fs::path manifest;
    fs::path out_path = "pseudo.jsonl";
};

inline fs::path cmd_gen_pseudo(const GenPseudoArgs& args, std::ostream& log) {
    const auto pr = load_pr_checkpoint(args.pr_checkpoint);
    const auto kind = corpus_rows_kind(args.manifest);
    std::vector<PseudoRow> rows;
    if (kind == "session")
        rows = gen_pseudo(pr, load_sessions(args.manifest));
    else if (kind == "clip")
        rows = gen_pseudo(pr, load_clips(args.manifest));
    else
        throw ValidationError("gen-pseudo: manifest has no sessions or clips");
    const auto pr_ckpt = load_checkpoint(args.pr_checkpoint);
    write_pseudo_manifest(args.out_path, rows,
                          pr_ckpt.meta.value("config_hash", ""));
    log << "wrote " << rows.size() << " pseudo transcripts to "
        << args.out_path.string() << "\n";
    return args.out_path;
}

// ---------------------------------------------------------------------------
// decode: transcribe utterances, report corpus PER when references exist.
// ---------------------------------------------------------------------------

struct DecodeArgs {
    fs::path pr_checkpoint;
    fs::path manifest;
    fs::path out_path = "decoded.jsonl";
    std::string split;  // empty = all
};

struct DecodeResult {
    double corpus_per = -1.0;
    long long empty_reference_rows = 0;
    long long n_utterances = 0;
    fs::path out_path;
};

inline DecodeResult cmd_decode(const DecodeArgs& args, std::ostream& log) {
    const auto pr = load_pr_checkpoint(args.pr_checkpoint);
    auto utts = load_utterances(args.manifest);
    if (!args.split.empty())
        std::erase_if(utts, [&](const Utterance& u) {
            return u.split != args.split;
        });
    if (utts.empty()) throw ValidationError("decode: no utterances selected");

    std::ofstream out(args.out_path);
    if (!out) throw IngestError("cannot write: " + args.out_path.string());
    const auto pr_ckpt = load_checkpoint(args.pr_checkpoint);
    out << nlohmann::json{{"type", "meta"},
                          {"version", kVersion},
                          {"config_hash", pr_ckpt.meta.value("config_hash", "")}}
               .dump()
        << '\n';

    CorpusPer corpus;
    bool any_ref = false;
    for (const auto& u : utts) {
        const auto hyp = pr.transcribe(u.audio);
        PhoneTranscript ref;
        for (const auto& p : u.phones) ref.phone_ids.push_back(pr.phones.id_of(p));
        if (!u.phones.empty()) any_ref = true;
        corpus.add(ref, hyp);
        out << nlohmann::json{{"type", "hyp"},
                              {"id", u.utt_id},
                              {"phones", hyp.to_string(pr.phones)}}
                   .dump()
            << '\n';
    }
    DecodeResult result;
    result.out_path = args.out_path;
    result.n_utterances = static_cast<long long>(utts.size());
    result.empty_reference_rows = corpus.empty_reference_rows;
    if (any_ref && corpus.ref_len_sum > 0) {
        result.corpus_per = corpus.value();
        char buf[96];
        std::snprintf(buf, sizeof(buf),
                      "corpus PER %.2f%% over %lld utterances (%lld empty-ref)\n",
                      result.corpus_per, result.n_utterances,
                      result.empty_reference_rows);
        log << buf;
    } else {
        log << "decoded " << result.n_utterances
            << " utterances (no references)\n";
    }
    return result;
}

// ---------------------------------------------------------------------------
// train-pr: the two-level CTC fine-tuning recipe over utterance corpora.
// ---------------------------------------------------------------------------

struct TrainPrArgs {
    fs::path config_path;
    fs::path out_dir = "pr";
    std::optional<std::uint64_t> seed_override;
};

struct TrainPrResult {
    fs::path checkpoint;
    PrTrainReport report;
    double test_per = -1.0;
};

inline TrainPrResult cmd_train_pr(const TrainPrArgs& args, std::ostream& log) {
    auto cfg = load_config(args.config_path);
    if (args.seed_override) cfg.raw["seed"] = *args.seed_override;
    const auto phones =
        PhoneInventory::from_file(cfg.resolve(cfg.raw.at("phones_file")));
    auto enc = make_encoder(cfg.raw.value("encoder", nlohmann::json::object()),
                            cfg, cfg.seed() * 31 + 11);
    Rng rng(cfg.seed());
    PrModel model;
    model.encoder = enc;
    model.phones = phones;
    model.head = PrHead(enc->profile().hidden_dim, phones.size(), rng,
                        cfg.raw.value("pr_hidden", 384));

    std::vector<std::vector<Utterance>> stage_data;
    std::vector<PrStage> stages;
    for (const auto& stage : cfg.raw.at("stages")) {
        auto utts = load_utterances(cfg.resolve(stage.at("manifest")));
        const std::string split = stage.value("split", "train");
        if (!split.empty())
            std::erase_if(utts,
                          [&](const Utterance& u) { return u.split != split; });
        stage_data.push_back(std::move(utts));
        stages.push_back({nullptr, stage.at("epochs").get<int>()});
    }
    for (std::size_t i = 0; i < stages.size(); ++i)
        stages[i].utterances = &stage_data[i];

    PrTrainConfig train_cfg;
    if (cfg.raw.contains("optim")) {
        const auto& j = cfg.raw.at("optim");
        train_cfg.lr_head = j.value("lr_head", train_cfg.lr_head);
        train_cfg.lr_encoder = j.value("lr_encoder", train_cfg.lr_encoder);
        train_cfg.batch_size = j.value("batch_size", train_cfg.batch_size);
    }
    TrainPrResult result;
    result.report = train_pr(model, stages, train_cfg, cfg.seed());

    fs::create_directories(args.out_dir);
    result.checkpoint = args.out_dir / "pr.ckpt";
    save_pr_checkpoint(result.checkpoint, model, cfg.raw, cfg.hash());

    // score on the test split of the last stage manifest, when present
    const auto& last_stage = cfg.raw.at("stages").back();
    auto test_utts = load_utterances(cfg.resolve(last_stage.at("manifest")));
    std::erase_if(test_utts,
                  [](const Utterance& u) { return u.split != "test"; });
    if (!test_utts.empty()) {
        CorpusPer corpus;
        for (const auto& u : test_utts) {
            PhoneTranscript ref;
            for (const auto& p : u.phones)
                ref.phone_ids.push_back(phones.id_of(p));
            corpus.add(ref, model.transcribe(u.audio));
        }
        if (corpus.ref_len_sum > 0) result.test_per = corpus.value();
    }

    nlohmann::json report = {{"version", kVersion},
                             {"config_hash", cfg.hash()},
                             {"epoch_loss", result.report.epoch_loss},
                             {"skipped_utterances",
                              result.report.skipped_utterances},
                             {"test_per", result.test_per}};
    std::ofstream out(args.out_dir / "report.json");
    out << report.dump(2) << '\n';
    char buf[96];
    std::snprintf(buf, sizeof(buf), "PR trained, test PER %.2f%%\n",
                  result.test_per);
    log << buf;
    return result;
}

}  // namespace sdvc::cmd
