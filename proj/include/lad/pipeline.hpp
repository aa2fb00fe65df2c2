#pragma once

#include "lad/config.hpp"

// Stage orchestration for the three phases plus data, augmentation and
// evaluation. Every stage directory carries a `meta` file with the stage hash
// (its own parameters chained with every upstream stage hash), so a rerun
// skips finished stages and a parameter change re-runs exactly the affected
// suffix of the DAG. Stage failures surface as StageError naming the stage;
// partial artifacts stay on disk.

namespace lad::pipeline {

namespace fs = std::filesystem;
using config::RunConfig;

struct StageError : std::runtime_error {
    std::string stage;
    StageError(std::string stage_, const std::string& msg)
        : std::runtime_error("stage '" + stage_ + "' failed: " + msg), stage(std::move(stage_)) {}
};

struct StagePaths {
    fs::path root;
    fs::path data() const { return root / "data"; }
    fs::path codec() const { return root / "codec"; }
    fs::path diffusion() const { return root / "diffusion"; }
    fs::path masks_aug() const { return root / "masks_aug"; }
    fs::path synth() const { return root / "synth"; }
    fs::path report() const { return root / "report.json"; }
    fs::path embedding() const { return root / "embedding.txt"; }
    fs::path eval_meta() const { return root / "eval_meta"; }
};

namespace detail {

inline std::string section_hash(const char* name, const io::KvMap& kv, const std::string& prefix,
                                std::initializer_list<std::string> upstream) {
    std::uint64_t h = fnv1a64(name);
    for (const auto& [k, v] : kv)
        if (k.rfind(prefix, 0) == 0 || k == "seed") h = fnv1a64(k + "=" + v + "\n", h);
    for (const auto& u : upstream) h = fnv1a64(u, h);
    return hash_hex(h);
}

inline bool stage_done(const fs::path& meta_file, const std::string& expected_hash, const char* hash_key,
                       long required_step = -1) {
    if (!fs::exists(meta_file)) return false;
    try {
        io::KvMap kv = io::kv_load(meta_file);
        if (io::kv_get(kv, hash_key) != expected_hash) return false;
        if (required_step >= 0 && std::stol(io::kv_get(kv, "step")) < required_step) return false;
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

}  // namespace detail

struct StageHashes {
    std::string data, codec, diffusion, augment, sample, eval;

    static StageHashes compute(const RunConfig& cfg) {
        const io::KvMap kv = cfg.to_kv();
        StageHashes h;
        h.data = detail::section_hash("gen-data", kv, "data.", {});
        h.codec = detail::section_hash("train-codec", kv, "codec.", {h.data});
        h.diffusion = detail::section_hash("train-diffusion", kv, "diffusion.", {h.codec});
        h.augment = detail::section_hash("augment-masks", kv, "augment.", {h.data});
        h.sample = detail::section_hash("sample", kv, "sample.", {h.diffusion, h.augment});
        h.eval = detail::section_hash("evaluate", kv, "eval.", {h.sample, h.data});
        return h;
    }
};

// ------------------------------------------------------------------- stages

// Phantom generation + windowing + normalization into a dataset container.
inline void run_gen_data(const RunConfig& cfg, const fs::path& out_dir, const std::string& stage_hash) {
    const phantom::PhantomSpec spec = cfg.phantom_spec();
    spec.validate();
    fs::create_directories(out_dir);

    int written = 0;
    for (int i = 0; i < cfg.data_count; ++i) {
        const std::uint64_t sample_seed = substream_seed(cfg.seed, "data", static_cast<std::uint64_t>(i));
        auto [raw, mask] = phantom::generate_phantom(sample_seed, spec);
        Volume vol = phantom::truncate_normalize(raw, cfg.window_lo, cfg.window_hi);
        vol.id = "phantom_" + std::to_string(i);
        auto crops = phantom::sliding_window_crop(vol, mask, cfg.window_depth, cfg.window_stride);
        for (auto& c : crops) {
            io::write_volume(out_dir, written, c.volume);
            io::write_mask(out_dir, written, c.mask);
            ++written;
        }
    }
    io::DatasetMeta meta;
    meta.count = written;
    meta.shape = {cfg.window_depth, cfg.shape[1], cfg.shape[2]};
    meta.spacing = cfg.spacing;
    meta.dtype = "float32";
    io::write_manifest(out_dir, meta);
    io::kv_save(out_dir / "meta", {{"stage_hash", stage_hash}, {"kind", "dataset"}});
}

inline void run_augment_masks(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir,
                              const std::string& stage_hash) {
    const auto masks = evaluate::load_masks(data_dir);
    augment::AugmentParams params = cfg.augment_params();
    auto augmented = augment::augment_maskset(masks, cfg.augment_count, params);
    fs::create_directories(out_dir);
    for (size_t i = 0; i < augmented.size(); ++i) io::write_mask(out_dir, static_cast<int>(i), augmented[i]);
    io::DatasetMeta meta = io::read_manifest(data_dir);
    meta.count = static_cast<int>(augmented.size());
    meta.dtype = "uint8";
    io::write_manifest(out_dir, meta);
    io::kv_save(out_dir / "meta", {{"stage_hash", stage_hash}, {"kind", "maskset"}});
}

inline void run_sample(const RunConfig& cfg, const fs::path& diffusion_dir, const fs::path& codec_dir,
                       const fs::path& masks_dir, const fs::path& out_dir, const std::string& stage_hash) {
    const codec::CodecModel codec_model = codec::load_codec(codec_dir, cfg.codec_config());
    const diffusion::Denoiser den = diffusion::load_denoiser(diffusion_dir, cfg.diffusion_config());
    const diffusion::NoiseSchedule schedule = diffusion::make_schedule(cfg.timesteps);
    const auto masks = evaluate::load_masks(masks_dir);
    if (masks.empty()) throw ConfigError("sample: empty maskset");

    fs::create_directories(out_dir);
    for (int i = 0; i < cfg.sample_count; ++i) {
        const LabelMask& m = masks[static_cast<size_t>(i) % masks.size()];
        condition::ConditionVector c =
            condition::assemble_condition(m, codec_model, den.content_extractor, den.cfg.cond);
        const std::uint64_t s = substream_seed(cfg.seed, "sample", static_cast<std::uint64_t>(i));
        Volume v = diffusion::sample_volume(den, schedule, codec_model, c, cfg.guidance_w, s, cfg.spacing);
        v.id = "synth_" + std::to_string(i);
        io::write_volume(out_dir, i, v);
    }
    io::DatasetMeta meta;
    meta.count = cfg.sample_count;
    meta.shape = {cfg.window_depth, cfg.shape[1], cfg.shape[2]};
    meta.spacing = cfg.spacing;
    meta.dtype = "float32";
    io::write_manifest(out_dir, meta);
    io::kv_save(out_dir / "meta", {{"stage_hash", stage_hash}, {"kind", "dataset"}});
}

struct RunResult {
    std::vector<std::string> ran, skipped;
    evaluate::MetricsReport report;
};

// The full Fig.-2 pipeline with hash-based stage skipping.
inline RunResult run_pipeline(const RunConfig& cfg, const fs::path& root) {
    const auto violations = config::validate_config(cfg, root);
    if (!violations.empty()) {
        std::string msg = "invalid config:";
        for (const auto& v : violations) msg += "\n  - " + v;
        throw ConfigError(msg);
    }
    const StageHashes hashes = StageHashes::compute(cfg);
    const StagePaths paths{root};
    RunResult res;

    auto guard = [](const char* stage, auto&& fn) {
        try {
            fn();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(stage, e.what());
        }
    };

    if (detail::stage_done(paths.data() / "meta", hashes.data, "stage_hash")) {
        res.skipped.push_back("gen-data");
    } else {
        guard("gen-data", [&] { run_gen_data(cfg, paths.data(), hashes.data); });
        res.ran.push_back("gen-data");
    }

    if (detail::stage_done(paths.codec() / "meta", hashes.codec, "config_hash", cfg.codec_steps)) {
        res.skipped.push_back("train-codec");
    } else {
        guard("train-codec",
              [&] { codec::train_codec(paths.data(), paths.codec(), cfg.codec_config(), cfg.codec_steps, hashes.codec); });
        res.ran.push_back("train-codec");
    }

    if (detail::stage_done(paths.diffusion() / "meta", hashes.diffusion, "config_hash", cfg.diffusion_steps)) {
        res.skipped.push_back("train-diffusion");
    } else {
        guard("train-diffusion", [&] {
            const codec::CodecModel codec_model = codec::load_codec(paths.codec(), cfg.codec_config());
            diffusion::train_diffusion(paths.data(), paths.data(), codec_model, paths.diffusion(),
                                       cfg.diffusion_config(), cfg.diffusion_steps, hashes.diffusion);
        });
        res.ran.push_back("train-diffusion");
    }

    if (detail::stage_done(paths.masks_aug() / "meta", hashes.augment, "stage_hash")) {
        res.skipped.push_back("augment-masks");
    } else {
        guard("augment-masks", [&] { run_augment_masks(cfg, paths.data(), paths.masks_aug(), hashes.augment); });
        res.ran.push_back("augment-masks");
    }

    if (detail::stage_done(paths.synth() / "meta", hashes.sample, "stage_hash")) {
        res.skipped.push_back("sample");
    } else {
        guard("sample",
              [&] { run_sample(cfg, paths.diffusion(), paths.codec(), paths.masks_aug(), paths.synth(), hashes.sample); });
        res.ran.push_back("sample");
    }

    if (detail::stage_done(paths.eval_meta(), hashes.eval, "stage_hash") && fs::exists(paths.report())) {
        res.skipped.push_back("evaluate");
        res.report = evaluate::read_report(paths.report());
    } else {
        guard("evaluate", [&] {
            evaluate::EvalConfig ecfg = cfg.eval_config();
            auto r = evaluate::evaluate(paths.data(), paths.synth(), paths.data(), ecfg);
            evaluate::write_report(paths.report(), r.report);
            evaluate::write_embedding(paths.embedding(), r.embedding);
            io::kv_save(paths.eval_meta(), {{"stage_hash", hashes.eval}, {"kind", "eval"}});
            res.report = r.report;
        });
        res.ran.push_back("evaluate");
    }
    return res;
}

}  // namespace lad::pipeline
