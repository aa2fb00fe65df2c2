#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lad/augment.hpp"
#include "lad/codec.hpp"
#include "lad/core/hash.hpp"
#include "lad/core/io.hpp"
#include "lad/diffusion.hpp"
#include "lad/evaluate.hpp"
#include "lad/phantom.hpp"

// One flat key=value config drives every stage. All randomness flows from the
// root seed through named substreams, so any stage can be reproduced alone.
// Paths are deliberately not part of the config: hashes depend only on
// semantic parameters, so moving an artifact tree never invalidates it.

namespace lad::config {

namespace fs = std::filesystem;

struct RunConfig {
    std::uint64_t seed = 0;

    // data generation + preprocessing
    int data_count = 64;
    std::array<int, 3> shape{32, 64, 64};  // D,H,W
    std::array<double, 3> spacing{2.3, 1.6, 1.6};
    double window_lo = -1000.0, window_hi = 400.0;
    int window_depth = 32, window_stride = 32;
    double tumor_probability = 0.6;
    double noise_amplitude = 30.0;

    // codec
    int codec_steps = 200;
    double lambda_loc = 1.0;
    double codec_lr = 1e-3;
    int codec_batch = 2;
    int codebook_size = 512;
    int latent_channels = 8;
    double commitment_weight = 0.25;
    int disc_start = 50;
    int codec_ckpt_every = 100;
    bool locality_masked_only = false;
    int bbox_margin = 2;

    // diffusion
    int diffusion_steps = 500;
    int timesteps = 300;
    double p_uncond = 0.25;
    double diffusion_lr = 1e-3;
    int diffusion_batch = 2;
    int unet_width = 24;
    int diffusion_ckpt_every = 100;
    bool quantize_sample = true;
    bool posterior_variance = false;
    bool struct_lognorm = true;

    // augmentation
    int augment_count = 64;
    bool flip_h = true, flip_w = true, flip_d = false;
    double rotate_deg = 15.0;
    double scale_lo = 0.9, scale_hi = 1.1;
    double translate_vox = 8.0;
    double elastic_amplitude = 4.0, elastic_sigma = 8.0;

    // sampling
    int sample_count = 16;
    double guidance_w = 1.0;

    // evaluation
    int eval_n_pairs = 64;
    int organ_label = 1;

    io::KvMap to_kv() const {
        io::KvMap kv;
        auto put_d = [&kv](const char* k, double v) {
            std::ostringstream os;
            os.precision(17);
            os << v;
            kv[k] = os.str();
        };
        kv["seed"] = std::to_string(seed);
        kv["data.count"] = std::to_string(data_count);
        kv["data.shape"] = io::shape_str(shape);
        kv["data.spacing"] = io::spacing_str(spacing);
        put_d("data.window_lo", window_lo);
        put_d("data.window_hi", window_hi);
        kv["data.window_depth"] = std::to_string(window_depth);
        kv["data.window_stride"] = std::to_string(window_stride);
        put_d("data.tumor_probability", tumor_probability);
        put_d("data.noise_amplitude", noise_amplitude);
        kv["codec.steps"] = std::to_string(codec_steps);
        put_d("codec.lambda_loc", lambda_loc);
        put_d("codec.lr", codec_lr);
        kv["codec.batch"] = std::to_string(codec_batch);
        kv["codec.codebook_size"] = std::to_string(codebook_size);
        kv["codec.latent_channels"] = std::to_string(latent_channels);
        put_d("codec.commitment", commitment_weight);
        kv["codec.disc_start"] = std::to_string(disc_start);
        kv["codec.ckpt_every"] = std::to_string(codec_ckpt_every);
        kv["codec.locality_masked_only"] = locality_masked_only ? "1" : "0";
        kv["codec.bbox_margin"] = std::to_string(bbox_margin);
        kv["diffusion.steps"] = std::to_string(diffusion_steps);
        kv["diffusion.timesteps"] = std::to_string(timesteps);
        put_d("diffusion.p_uncond", p_uncond);
        put_d("diffusion.lr", diffusion_lr);
        kv["diffusion.batch"] = std::to_string(diffusion_batch);
        kv["diffusion.unet_width"] = std::to_string(unet_width);
        kv["diffusion.ckpt_every"] = std::to_string(diffusion_ckpt_every);
        kv["diffusion.quantize_sample"] = quantize_sample ? "1" : "0";
        kv["diffusion.posterior_variance"] = posterior_variance ? "1" : "0";
        kv["diffusion.struct_lognorm"] = struct_lognorm ? "1" : "0";
        kv["augment.count"] = std::to_string(augment_count);
        kv["augment.flip_h"] = flip_h ? "1" : "0";
        kv["augment.flip_w"] = flip_w ? "1" : "0";
        kv["augment.flip_d"] = flip_d ? "1" : "0";
        put_d("augment.rotate_deg", rotate_deg);
        put_d("augment.scale_lo", scale_lo);
        put_d("augment.scale_hi", scale_hi);
        put_d("augment.translate_vox", translate_vox);
        put_d("augment.elastic_amplitude", elastic_amplitude);
        put_d("augment.elastic_sigma", elastic_sigma);
        kv["sample.count"] = std::to_string(sample_count);
        put_d("sample.w", guidance_w);
        kv["eval.n_pairs"] = std::to_string(eval_n_pairs);
        kv["eval.organ_label"] = std::to_string(organ_label);
        return kv;
    }

    void apply(const std::string& key, const std::string& value) {
        auto as_d = [&value, &key]() {
            try {
                return std::stod(value);
            } catch (...) {
                throw ConfigError("config: bad numeric value for " + key + ": '" + value + "'");
            }
        };
        auto as_i = [&value, &key]() {
            try {
                return std::stoi(value);
            } catch (...) {
                throw ConfigError("config: bad integer value for " + key + ": '" + value + "'");
            }
        };
        auto as_b = [&value, &key]() {
            if (value == "1" || value == "true") return true;
            if (value == "0" || value == "false") return false;
            throw ConfigError("config: bad boolean value for " + key + ": '" + value + "'");
        };
        if (key == "seed") seed = std::stoull(value);
        else if (key == "data.count") data_count = as_i();
        else if (key == "data.shape") shape = io::parse_shape(value);
        else if (key == "data.spacing") spacing = io::parse_spacing(value);
        else if (key == "data.window_lo") window_lo = as_d();
        else if (key == "data.window_hi") window_hi = as_d();
        else if (key == "data.window_depth") window_depth = as_i();
        else if (key == "data.window_stride") window_stride = as_i();
        else if (key == "data.tumor_probability") tumor_probability = as_d();
        else if (key == "data.noise_amplitude") noise_amplitude = as_d();
        else if (key == "codec.steps") codec_steps = as_i();
        else if (key == "codec.lambda_loc") lambda_loc = as_d();
        else if (key == "codec.lr") codec_lr = as_d();
        else if (key == "codec.batch") codec_batch = as_i();
        else if (key == "codec.codebook_size") codebook_size = as_i();
        else if (key == "codec.latent_channels") latent_channels = as_i();
        else if (key == "codec.commitment") commitment_weight = as_d();
        else if (key == "codec.disc_start") disc_start = as_i();
        else if (key == "codec.ckpt_every") codec_ckpt_every = as_i();
        else if (key == "codec.locality_masked_only") locality_masked_only = as_b();
        else if (key == "codec.bbox_margin") bbox_margin = as_i();
        else if (key == "diffusion.steps") diffusion_steps = as_i();
        else if (key == "diffusion.timesteps") timesteps = as_i();
        else if (key == "diffusion.p_uncond") p_uncond = as_d();
        else if (key == "diffusion.lr") diffusion_lr = as_d();
        else if (key == "diffusion.batch") diffusion_batch = as_i();
        else if (key == "diffusion.unet_width") unet_width = as_i();
        else if (key == "diffusion.ckpt_every") diffusion_ckpt_every = as_i();
        else if (key == "diffusion.quantize_sample") quantize_sample = as_b();
        else if (key == "diffusion.posterior_variance") posterior_variance = as_b();
        else if (key == "diffusion.struct_lognorm") struct_lognorm = as_b();
        else if (key == "augment.count") augment_count = as_i();
        else if (key == "augment.flip_h") flip_h = as_b();
        else if (key == "augment.flip_w") flip_w = as_b();
        else if (key == "augment.flip_d") flip_d = as_b();
        else if (key == "augment.rotate_deg") rotate_deg = as_d();
        else if (key == "augment.scale_lo") scale_lo = as_d();
        else if (key == "augment.scale_hi") scale_hi = as_d();
        else if (key == "augment.translate_vox") translate_vox = as_d();
        else if (key == "augment.elastic_amplitude") elastic_amplitude = as_d();
        else if (key == "augment.elastic_sigma") elastic_sigma = as_d();
        else if (key == "sample.count") sample_count = as_i();
        else if (key == "sample.w") guidance_w = as_d();
        else if (key == "eval.n_pairs") eval_n_pairs = as_i();
        else if (key == "eval.organ_label") organ_label = as_i();
        else throw ConfigError("config: unknown key '" + key + "'");
    }

    static RunConfig from_kv(const io::KvMap& kv) {
        RunConfig cfg;
        for (const auto& [k, v] : kv) cfg.apply(k, v);
        return cfg;
    }

    static RunConfig load(const fs::path& path) { return from_kv(io::kv_load(path)); }
    void save(const fs::path& path) const { io::kv_save(path, to_kv()); }

    // hash of the canonical serialization (keys sorted by the map)
    std::string hash() const { return hash_hex(fnv1a64(io::kv_serialize(to_kv()))); }

    // ---- typed views for the modules

    phantom::PhantomSpec phantom_spec() const {
        phantom::PhantomSpec spec;
        spec.shape = shape;
        spec.spacing = spacing;
        spec.tumor_probability = tumor_probability;
        spec.noise_amplitude = noise_amplitude;
        return spec;
    }

    codec::CodecConfig codec_config() const {
        codec::CodecConfig c;
        c.latent_channels = latent_channels;
        c.codebook_size = codebook_size;
        c.commitment_weight = commitment_weight;
        c.lambda_loc = lambda_loc;
        c.bbox_margin = bbox_margin;
        c.locality_masked_only = locality_masked_only;
        c.lr = codec_lr;
        c.batch_size = codec_batch;
        c.disc_start = disc_start;
        c.ckpt_every = codec_ckpt_every;
        c.seed = substream_seed(seed, "codec");
        return c;
    }

    diffusion::DiffusionConfig diffusion_config() const {
        diffusion::DiffusionConfig d;
        d.timesteps = timesteps;
        d.p_uncond = p_uncond;
        d.guidance_w = guidance_w;
        d.lr = diffusion_lr;
        d.batch_size = diffusion_batch;
        d.base_width = unet_width;
        d.quantize_before_decode = quantize_sample;
        d.posterior_variance = posterior_variance;
        d.ckpt_every = diffusion_ckpt_every;
        d.seed = substream_seed(seed, "diffusion");
        d.cond.log_normalize = struct_lognorm;
        return d;
    }

    augment::AugmentParams augment_params() const {
        augment::AugmentParams p;
        p.flip_h = flip_h;
        p.flip_w = flip_w;
        p.flip_d = flip_d;
        p.rotate_deg = rotate_deg;
        p.scale_lo = scale_lo;
        p.scale_hi = scale_hi;
        p.translate_vox = translate_vox;
        p.elastic_amplitude = elastic_amplitude;
        p.elastic_sigma = elastic_sigma;
        p.seed = substream_seed(seed, "augment");
        return p;
    }

    evaluate::EvalConfig eval_config() const {
        evaluate::EvalConfig e;
        e.n_pairs = eval_n_pairs;
        e.organ_label = static_cast<std::uint8_t>(organ_label);
        e.seed = substream_seed(seed, "metrics");
        e.config_hash = hash();
        return e;
    }
};

// Violations are return values, not exceptions.
inline std::vector<std::string> validate_config(const RunConfig& cfg, const fs::path& writable_root = {}) {
    std::vector<std::string> out;
    static const char* axis_names[3] = {"D", "H", "W"};
    for (int a = 0; a < 3; ++a) {
        if (cfg.shape[a] % 4 != 0)
            out.push_back(std::string("data.shape axis ") + axis_names[a] + "=" + std::to_string(cfg.shape[a]) +
                          " not divisible by compression rate 4");
        else if ((cfg.shape[a] / 4) % 4 != 0)
            out.push_back(std::string("data.shape axis ") + axis_names[a] + "=" + std::to_string(cfg.shape[a]) +
                          " leaves latent dim " + std::to_string(cfg.shape[a] / 4) +
                          " not divisible by 4 (U-Net levels)");
    }
    if (cfg.p_uncond < 0.0 || cfg.p_uncond > 1.0)
        out.push_back("diffusion.p_uncond=" + std::to_string(cfg.p_uncond) + " outside [0,1]");
    if (cfg.timesteps < 2) out.push_back("diffusion.timesteps must be >= 2");
    if (cfg.guidance_w < 0.0) out.push_back("sample.w must be >= 0");
    if (!(cfg.window_lo < cfg.window_hi)) out.push_back("data.window_lo must be < data.window_hi");
    if (cfg.window_depth > cfg.shape[0]) out.push_back("data.window_depth exceeds volume depth");
    if (cfg.data_count < 2) out.push_back("data.count must be >= 2");
    if (cfg.sample_count < 2) out.push_back("sample.count must be >= 2 (metrics need pairs)");
    if (cfg.organ_label < 0 || cfg.organ_label > 2) out.push_back("eval.organ_label outside {0,1,2}");
    if (!writable_root.empty()) {
        std::error_code ec;
        fs::create_directories(writable_root, ec);
        const fs::path probe = writable_root / ".lad_write_probe";
        try {
            io::atomic_write(probe, "ok");
            fs::remove(probe);
        } catch (const std::exception&) {
            out.push_back("artifact root '" + writable_root.string() + "' is not writable");
        }
    }
    return out;
}

}  // namespace lad::config
