#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "sdvc/checkpoint.hpp"
#include "sdvc/common.hpp"
#include "sdvc/encoder.hpp"
#include "sdvc/framing.hpp"
#include "sdvc/model.hpp"
#include "sdvc/phonetics.hpp"
#include "sdvc/training.hpp"

namespace sdvc {

// One experiment = one config file. The canonical JSON dump is hashed and the
// hash is embedded in every output artifact.
struct ExperimentConfig {
    nlohmann::json raw;
    std::filesystem::path base_dir;  // config file location, for relative paths

    std::string experiment() const { return raw.value("experiment", "unnamed"); }
    std::string method() const { return raw.value("method", "model"); }
    std::string corpus_mode() const {
        return raw.value("corpus_mode", "rabc_two_channel");
    }
    std::uint64_t seed() const { return raw.value("seed", 7ULL); }
    int folds() const { return raw.value("folds", 3); }
    std::string protocol() const {
        return raw.value("protocol", "paper_test_selection");
    }
    int smooth_window() const { return raw.value("smooth_window", 11); }
    bool population_std() const { return raw.value("population_std", false); }

    std::filesystem::path manifest_path() const {
        if (!raw.contains("manifest"))
            throw ValidationError("config: missing 'manifest'");
        std::filesystem::path p = raw.at("manifest").get<std::string>();
        return p.is_absolute() ? p : base_dir / p;
    }

    std::filesystem::path resolve(const std::string& rel) const {
        std::filesystem::path p = rel;
        return p.is_absolute() ? p : base_dir / p;
    }

    FrameSpec frame_spec() const {
        FrameSpec spec;
        if (raw.contains("framing")) {
            const auto& f = raw.at("framing");
            spec.frame_len_s = f.value("frame_len_s", 2.0);
            spec.hop_s = f.value("hop_s", 0.1);
            spec.center_len_s = f.value("center_len_s", 0.1);
        }
        spec.validate();
        return spec;
    }

    OptimConfig optim() const {
        OptimConfig o;
        if (raw.contains("optim")) {
            const auto& j = raw.at("optim");
            o.lr_head = j.value("lr_head", o.lr_head);
            o.lr_encoder = j.value("lr_encoder", o.lr_encoder);
            o.epochs = j.value("epochs", o.epochs);
            o.batch_size = j.value("batch_size", o.batch_size);
            o.newbob_factor = j.value("newbob_factor", o.newbob_factor);
            o.newbob_patience = j.value("newbob_patience", o.newbob_patience);
            o.improvement_rel = j.value("improvement_rel", o.improvement_rel);
            o.selection_metric = j.value("selection_metric", o.selection_metric);
            o.compute_train_accuracy =
                j.value("compute_train_accuracy", o.compute_train_accuracy);
        }
        o.validate();
        return o;
    }

    BalancePolicy balance() const {
        BalancePolicy p;
        if (raw.contains("balance")) {
            const auto& j = raw.at("balance");
            p.tier = j.value("tier", p.tier);
            if (j.contains("caps"))
                p.caps = j.at("caps").get<std::map<std::string, int>>();
            if (j.contains("floors"))
                p.floors = j.at("floors").get<std::map<std::string, int>>();
        }
        return p;
    }

    std::string hash() const { return to_hex(fnv1a64(raw.dump())); }
};

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open config: " + path.string());
    ExperimentConfig cfg;
    try {
        in >> cfg.raw;
    } catch (const std::exception& e) {
        throw ValidationError("config parse error in " + path.string() + ": " +
                              e.what());
    }
    cfg.base_dir = std::filesystem::absolute(path).parent_path();
    return cfg;
}

// ---------------------------------------------------------------------------
// Encoder construction. "stub" builds the deterministic test encoder from a
// seed; "checkpoint" restores a previously saved one (profile and weights
// travel inside the archive).
// ---------------------------------------------------------------------------

inline std::shared_ptr<Encoder> make_encoder(const nlohmann::json& spec,
                                             const ExperimentConfig& cfg,
                                             std::uint64_t fallback_seed) {
    const std::string kind = spec.value("kind", "stub");
    if (kind == "stub") {
        auto enc = std::make_shared<StubEncoder>(
            spec.value("seed", fallback_seed), spec.value("num_layers", 12),
            spec.value("hidden_dim", 768), spec.value("frame_rate_hz", 50.0),
            spec.value("bands", 24));
        enc->set_trainable(spec.value("trainable", true));
        return enc;
    }
    if (kind == "checkpoint") {
        if (!spec.contains("path"))
            throw ValidationError("encoder config: checkpoint kind needs 'path'");
        const auto ckpt = load_checkpoint(cfg.resolve(spec.at("path")));
        const auto& prof = ckpt.meta.at("encoder_profile");
        auto enc = std::make_shared<StubEncoder>(
            ckpt.meta.value("encoder_seed", 0ULL),
            prof.at("num_layers").get<int>(), prof.at("hidden_dim").get<int>(),
            prof.value("frame_rate_hz", 50.0), prof.value("bands", 24));
        std::vector<std::pair<std::string, Mat*>> targets;
        for (std::size_t l = 0; l < enc->projections().size(); ++l)
            targets.push_back({"proj" + std::to_string(l), &enc->projections()[l]});
        apply_tensors(ckpt, targets);
        enc->set_trainable(spec.value("trainable", true));
        return enc;
    }
    throw ValidationError("encoder config: unknown kind '" + kind + "'");
}

inline CombinationConfig parse_comb(const nlohmann::json& j) {
    CombinationConfig c;
    c.kind = comb_kind_from_name(j.value("kind", "none"));
    c.alpha = j.value("alpha", c.is_sum() ? 0.5 : 1.0);
    c.beta = j.value("beta", c.is_sum() ? 0.5 : 0.0);
    c.learnable = j.value("learnable", false);
    c.validate();
    return c;
}

// Everything needed to train/evaluate one experiment.
struct BuiltModel {
    std::shared_ptr<VcModel> model;
    std::optional<PhoneInventory> phones;
    std::optional<PseudoLookup> pseudo;
    bool dual_channel = true;
};

inline BuiltModel build_model(const ExperimentConfig& cfg) {
    if (cfg.method() != "model")
        throw ValidationError("config: method '" + cfg.method() +
                              "' does not build a model");
    BuiltModel built;
    built.dual_channel = cfg.corpus_mode() == "rabc_two_channel";
    if (!built.dual_channel && cfg.corpus_mode() != "babblecor_single")
        throw ValidationError("config: unknown corpus_mode '" +
                              cfg.corpus_mode() + "'");

    VcModel::Build build;
    const auto enc_spec = cfg.raw.value("encoder", nlohmann::json::object());
    auto child_enc = make_encoder(enc_spec, cfg, cfg.seed() * 31 + 1);
    build.encoder_child = child_enc;
    if (built.dual_channel) {
        if (cfg.raw.contains("encoder_adult") &&
            !cfg.raw.at("encoder_adult").is_null())
            build.encoder_adult = make_encoder(cfg.raw.at("encoder_adult"), cfg,
                                               cfg.seed() * 31 + 2);
        else
            build.encoder_adult = child_enc;  // joint modeling
    }
    if (cfg.raw.contains("pr_encoder") && !cfg.raw.at("pr_encoder").is_null()) {
        build.pr_encoder =
            make_encoder(cfg.raw.at("pr_encoder"), cfg, cfg.seed() * 31 + 3);
        // auxiliary-feature PR encoders are frozen
        if (auto* stub = dynamic_cast<StubEncoder*>(build.pr_encoder.get()))
            stub->set_trainable(false);
    }

    const auto comb_json = cfg.raw.value("combination", nlohmann::json::object());
    if (built.dual_channel) {
        TierSetup adu;
        adu.name = "adu";
        adu.inventory = adu_inventory();
        adu.fg_channel = Channel::adult;
        if (comb_json.contains("adu")) adu.comb = parse_comb(comb_json.at("adu"));
        build.tiers.push_back(adu);
    }
    TierSetup chi;
    chi.name = "chi";
    chi.inventory = built.dual_channel ? chi_inventory() : babble_inventory();
    chi.fg_channel = Channel::child;
    if (comb_json.contains("chi")) chi.comb = parse_comb(comb_json.at("chi"));
    build.tiers.push_back(chi);

    if (cfg.raw.contains("aux_ctc") &&
        cfg.raw.at("aux_ctc").value("enabled", false)) {
        const auto& j = cfg.raw.at("aux_ctc");
        built.phones =
            PhoneInventory::from_file(cfg.resolve(j.at("phones_file")));
        build.aux.enabled = true;
        build.aux.tap_layer = j.value("tap_layer", 8);
        build.aux.lambda = j.value("lambda", 1.0);
        build.aux.n_phones = built.phones->size();
        if (j.contains("pseudo_manifest")) {
            const auto rows =
                read_pseudo_manifest(cfg.resolve(j.at("pseudo_manifest")));
            built.pseudo = PseudoLookup(rows, *built.phones);
        } else {
            built.pseudo = PseudoLookup();  // all-empty targets
        }
    }

    Rng rng(cfg.seed());
    built.model = std::make_shared<VcModel>(build, rng);
    return built;
}

// ---------------------------------------------------------------------------
// Phone-recognizer checkpoints.
// ---------------------------------------------------------------------------

inline void save_pr_checkpoint(const std::filesystem::path& path,
                               PrModel& model, const nlohmann::json& config,
                               const std::string& config_hash) {
    auto* stub = dynamic_cast<StubEncoder*>(model.encoder.get());
    if (!stub)
        throw ValidationError("pr checkpoint: only stub encoders are savable");
    nlohmann::json meta;
    meta["kind"] = "pr_model";
    meta["version"] = kVersion;
    meta["config"] = config;
    meta["config_hash"] = config_hash;
    meta["encoder_profile"] = {
        {"num_layers", stub->profile().num_layers},
        {"hidden_dim", stub->profile().hidden_dim},
        {"frame_rate_hz", stub->profile().frame_rate_hz},
        {"bands", stub->bands()}};
    meta["phones"] = model.phones.phones;
    meta["pr_hidden"] = model.head.w1.cols;
    std::vector<std::pair<std::string, const Mat*>> tensors;
    for (std::size_t l = 0; l < stub->projections().size(); ++l)
        tensors.push_back({"proj" + std::to_string(l), &stub->projections()[l]});
    tensors.push_back({"head.w1", &model.head.w1});
    tensors.push_back({"head.b1", &model.head.b1});
    tensors.push_back({"head.w2", &model.head.w2});
    tensors.push_back({"head.b2", &model.head.b2});
    save_checkpoint(path, meta, tensors);
}

inline PrModel load_pr_checkpoint(const std::filesystem::path& path) {
    const auto ckpt = load_checkpoint(path);
    if (ckpt.meta.value("kind", "") != "pr_model")
        throw ValidationError("not a PR checkpoint: " + path.string());
    const auto& prof = ckpt.meta.at("encoder_profile");
    PrModel model;
    auto enc = std::make_shared<StubEncoder>(
        0, prof.at("num_layers").get<int>(), prof.at("hidden_dim").get<int>(),
        prof.value("frame_rate_hz", 50.0), prof.value("bands", 24));
    std::vector<std::pair<std::string, Mat*>> targets;
    for (std::size_t l = 0; l < enc->projections().size(); ++l)
        targets.push_back({"proj" + std::to_string(l), &enc->projections()[l]});
    model.phones =
        PhoneInventory(ckpt.meta.at("phones").get<std::vector<std::string>>());
    Rng rng(0);
    model.head = PrHead(prof.at("hidden_dim").get<int>(), model.phones.size(),
                        rng, ckpt.meta.value("pr_hidden", 384));
    targets.push_back({"head.w1", &model.head.w1});
    targets.push_back({"head.b1", &model.head.b1});
    targets.push_back({"head.w2", &model.head.w2});
    targets.push_back({"head.b2", &model.head.b2});
    apply_tensors(ckpt, targets);
    enc->set_trainable(false);
    model.encoder = enc;
    return model;
}

}  // namespace sdvc
