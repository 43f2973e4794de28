// sdvc — two-channel child/adult speaker diarization and vocalization
// classification toolkit. Subcommands cover the full pipeline: synthesizing a
// fixture corpus, preparing frame caches, energy-threshold baselines, model
// training/evaluation, and phone-recognizer utilities.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sdvc/commands.hpp"

namespace {

int dispatch(const std::function<void()>& fn) {
    try {
        fn();
        return 0;
    } catch (const sdvc::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sdvc: child/adult speaker diarization + vocalization "
                 "classification toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::optional<std::uint64_t> seed_flag;
    bool deterministic = false;  // runs are deterministic either way
    app.add_option("--seed", seed_flag, "override the config seed");
    app.add_flag("--deterministic", deterministic,
                 "force deterministic mode (single-threaded, seeded)");

    // fixture
    auto* fixture = app.add_subcommand("fixture", "generate a synthetic corpus");
    sdvc::cmd::FixtureArgs fx;
    std::string fx_out = "fixture";
    fixture->add_option("--kind", fx.kind, "sessions | clips | utterances");
    fixture->add_option("--out", fx_out, "output directory")->required();
    fixture->add_option("--sessions", fx.session_spec.n_sessions);
    fixture->add_option("--duration-s", fx.session_spec.duration_s);
    fixture->add_option("--bleed-db", fx.session_spec.bleed_db,
                        "cross-channel bleed (use -999 for none)");
    fixture->add_option("--noise-floor-db", fx.session_spec.noise_floor_db);
    fixture->add_option("--clips-per-class", fx.clip_spec.clips_per_class);
    fixture->add_option("--utterances", fx.utt_spec.n_utterances);
    fixture->add_option("--max-phones", fx.utt_spec.max_phones);
    fixture->add_option("--phones-used", fx.utt_spec.n_phones_used);
    std::string fx_phones;
    fixture->add_option("--phones-file", fx_phones,
                        "inventory file (utterances kind)");

    // prepare
    auto* prepare = app.add_subcommand("prepare", "frame cache + statistics");
    sdvc::cmd::PrepareArgs pr;
    std::string pr_manifest, pr_out = "prepared";
    prepare->add_option("--manifest", pr_manifest)->required();
    prepare->add_option("--out", pr_out);
    prepare->add_option("--frame-len-s", pr.spec.frame_len_s);
    prepare->add_option("--hop-s", pr.spec.hop_s);
    prepare->add_option("--center-len-s", pr.spec.center_len_s);

    // train
    auto* train = app.add_subcommand("train", "train a model per the config");
    sdvc::cmd::TrainArgs tr;
    std::string tr_config, tr_out = "runs";
    train->add_option("--config", tr_config)->required();
    train->add_option("--out", tr_out);
    train->add_flag("--resume", tr.resume, "continue from saved fold state");
    train->add_option("--fold", tr.only_fold, "train a single fold");

    // eval
    auto* eval = app.add_subcommand("eval", "score a checkpoint on a manifest");
    sdvc::cmd::EvalArgs ev;
    std::vector<std::string> ev_ckpts;
    std::string ev_manifest, ev_out = "eval", ev_config;
    eval->add_option("--checkpoint", ev_ckpts,
                     "model checkpoint; repeat for per-fold aggregation");
    eval->add_option("--manifest", ev_manifest)->required();
    eval->add_option("--out", ev_out);
    eval->add_option("--config", ev_config,
                     "enforce a config-hash match before loading");
    eval->add_flag("--oracle", ev.oracle,
                   "score reference labels against themselves");
    eval->add_option("--clip-split", ev.clip_split);
    eval->add_option("--ci-resamples", ev.ci_resamples);

    // baseline-et
    auto* et = app.add_subcommand("baseline-et",
                                  "energy-thresholding diarization baseline");
    sdvc::cmd::BaselineEtArgs eta;
    std::string et_manifest, et_out = "et";
    et->add_option("--manifest", et_manifest)->required();
    et->add_option("--mode", eta.mode, "unsupervised | weak")->required();
    et->add_option("--median-len", eta.median_len);
    et->add_option("--vad-margin-db", eta.vad_margin_db);
    et->add_option("--folds", eta.folds);
    et->add_option("--out", et_out);

    // gen-pseudo
    auto* gp = app.add_subcommand("gen-pseudo",
                                  "pseudo transcripts from a PR checkpoint");
    sdvc::cmd::GenPseudoArgs gpa;
    std::string gp_ckpt, gp_manifest, gp_out = "pseudo.jsonl";
    gp->add_option("--pr-checkpoint", gp_ckpt)->required();
    gp->add_option("--manifest", gp_manifest)->required();
    gp->add_option("--out", gp_out);

    // decode
    auto* dec = app.add_subcommand("decode", "transcribe utterances, report PER");
    sdvc::cmd::DecodeArgs dca;
    std::string dec_ckpt, dec_manifest, dec_out = "decoded.jsonl";
    dec->add_option("--pr-checkpoint", dec_ckpt)->required();
    dec->add_option("--manifest", dec_manifest)->required();
    dec->add_option("--out", dec_out);
    dec->add_option("--split", dca.split, "decode only this split");

    // train-pr
    auto* tpr = app.add_subcommand("train-pr",
                                   "CTC phone-recognizer fine-tuning recipe");
    sdvc::cmd::TrainPrArgs tpa;
    std::string tpr_config, tpr_out = "pr";
    tpr->add_option("--config", tpr_config)->required();
    tpr->add_option("--out", tpr_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // bad arguments are validation errors
    }

    if (fixture->parsed())
        return dispatch([&] {
            fx.out_dir = fx_out;
            if (!fx_phones.empty()) fx.phones_file = fx_phones;
            if (seed_flag) fx.seed = *seed_flag;
            if (fx.session_spec.bleed_db <= -900.0)
                fx.session_spec.bleed_db =
                    -std::numeric_limits<double>::infinity();
            const auto path = sdvc::cmd::cmd_fixture(fx);
            std::cout << path.string() << "\n";
        });
    if (prepare->parsed())
        return dispatch([&] {
            pr.manifest = pr_manifest;
            pr.out_dir = pr_out;
            pr.spec.validate();
            sdvc::cmd::cmd_prepare(pr, std::cout);
        });
    if (train->parsed())
        return dispatch([&] {
            tr.config_path = tr_config;
            tr.out_dir = tr_out;
            tr.seed_override = seed_flag;
            sdvc::cmd::cmd_train(tr, std::cout);
        });
    if (eval->parsed())
        return dispatch([&] {
            if (!ev_ckpts.empty()) ev.checkpoint = ev_ckpts.front();
            for (const auto& c : ev_ckpts) ev.checkpoints.emplace_back(c);
            ev.manifest = ev_manifest;
            ev.out_dir = ev_out;
            if (!ev_config.empty()) ev.config_path = ev_config;
            if (seed_flag) ev.seed = *seed_flag;
            if (!ev.oracle && ev_ckpts.empty())
                throw sdvc::ValidationError(
                    "eval: --checkpoint required unless --oracle");
            sdvc::cmd::cmd_eval(ev, std::cout);
        });
    if (et->parsed())
        return dispatch([&] {
            eta.manifest = et_manifest;
            eta.out_dir = et_out;
            if (seed_flag) eta.seed = *seed_flag;
            sdvc::cmd::cmd_baseline_et(eta, std::cout);
        });
    if (gp->parsed())
        return dispatch([&] {
            gpa.pr_checkpoint = gp_ckpt;
            gpa.manifest = gp_manifest;
            gpa.out_path = gp_out;
            sdvc::cmd::cmd_gen_pseudo(gpa, std::cout);
        });
    if (dec->parsed())
        return dispatch([&] {
            dca.pr_checkpoint = dec_ckpt;
            dca.manifest = dec_manifest;
            dca.out_path = dec_out;
            sdvc::cmd::cmd_decode(dca, std::cout);
        });
    if (tpr->parsed())
        return dispatch([&] {
            tpa.config_path = tpr_config;
            tpa.out_dir = tpr_out;
            tpa.seed_override = seed_flag;
            sdvc::cmd::cmd_train_pr(tpa, std::cout);
        });
    return 0;
}
