#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "lad/codec.hpp"
#include "lad/condition.hpp"
#include "lad/core/io.hpp"

// Conditional DDPM over the codec latent space. Content guidance is channel-
// concatenated with z_t at the U-Net input; the structure vector runs through
// a 2-layer MLP and is added to the timestep embedding (a learned null token
// replaces it for the unconditional identifier). Sampling is ancestral with
// classifier-free guidance eps~ = (1+w) eps(z,c) - w eps(z).

namespace lad::diffusion {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- schedule

struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta, alpha, alpha_bar;
};

inline NoiseSchedule make_schedule(int T, const std::string& kind = "linear", double beta_start = 1e-4,
                                   double beta_end = 2e-2) {
    if (T < 2) throw ConfigError("make_schedule: T must be >= 2");
    if (kind != "linear") throw ConfigError("make_schedule: unknown schedule kind '" + kind + "'");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(static_cast<size_t>(T));
    s.alpha.resize(static_cast<size_t>(T));
    s.alpha_bar.resize(static_cast<size_t>(T));
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        s.beta[static_cast<size_t>(t)] = beta_start + (beta_end - beta_start) * t / (T - 1);
        s.alpha[static_cast<size_t>(t)] = 1.0 - s.beta[static_cast<size_t>(t)];
        prod *= s.alpha[static_cast<size_t>(t)];
        s.alpha_bar[static_cast<size_t>(t)] = prod;
        if (!(s.beta[static_cast<size_t>(t)] > 0.0 && s.beta[static_cast<size_t>(t)] < 1.0))
            throw ConfigError("make_schedule: beta outside (0,1)");
        if (t > 0 && s.alpha_bar[static_cast<size_t>(t)] >= s.alpha_bar[static_cast<size_t>(t - 1)])
            throw ConfigError("make_schedule: alpha_bar not strictly decreasing");
    }
    return s;
}

// z_t = sqrt(abar_t) z0 + sqrt(1-abar_t) eps
inline Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s) {
    if (t < 0 || t >= s.T) throw ConfigError("q_sample: t=" + std::to_string(t) + " outside [0,T)");
    check_same_shape(z0, eps, "q_sample");
    const float a = static_cast<float>(std::sqrt(s.alpha_bar[static_cast<size_t>(t)]));
    const float b = static_cast<float>(std::sqrt(1.0 - s.alpha_bar[static_cast<size_t>(t)]));
    Tensor out(z0.shape);
    for (i64 i = 0; i < out.numel(); ++i) out.v[i] = a * z0.v[i] + b * eps.v[i];
    return out;
}

// Classifier-free guidance combination, computed literally.
inline Tensor cfg_predict(const Tensor& eps_cond, const Tensor& eps_uncond, double w) {
    check_same_shape(eps_cond, eps_uncond, "cfg_predict");
    const float a = static_cast<float>(1.0 + w), b = static_cast<float>(w);
    Tensor out(eps_cond.shape);
    for (i64 i = 0; i < out.numel(); ++i) out.v[i] = a * eps_cond.v[i] - b * eps_uncond.v[i];
    return out;
}

inline double cfg_predict_scalar(double eps_cond, double eps_uncond, double w) {
    return (1.0 + w) * eps_cond - w * eps_uncond;
}

// ------------------------------------------------------------------ config

struct DiffusionConfig {
    int timesteps = 300;
    std::string schedule_kind = "linear";
    double beta_start = 1e-4, beta_end = 2e-2;
    double p_uncond = 0.25;
    double guidance_w = 1.0;
    double lr = 1e-4;
    int batch_size = 2;
    int base_width = 24;  // U-Net widths: base, 4/3*base, 2*base
    int embed_dim = 64;
    bool quantize_before_decode = true;
    bool posterior_variance = false;  // false: sigma_t^2 = beta_t
    int ckpt_every = 100;
    std::uint64_t seed = 0;
    condition::ConditionSettings cond;

    void validate() const {
        if (timesteps < 2) throw ConfigError("diffusion: timesteps must be >= 2");
        if (p_uncond < 0.0 || p_uncond > 1.0) throw ConfigError("diffusion: p_uncond outside [0,1]");
        if (guidance_w < 0.0) throw ConfigError("diffusion: guidance w must be >= 0");
        if (base_width < 8 || base_width % 4 != 0) throw ConfigError("diffusion: base_width must be a multiple of 4, >= 8");
        if (batch_size < 1 || ckpt_every < 1) throw ConfigError("diffusion: bad batch/ckpt settings");
    }
};

// ------------------------------------------------------------------- U-Net

namespace detail {

// conv + GN + time-bias + SiLU, twice
struct Block {
    nn::Conv3d c0, c1;
    nn::GroupNorm n0, n1;
    nn::Linear emb_proj;

    Block() = default;
    Block(int cin, int cout, int embed_dim, Rng& rng)
        : c0(cin, cout, 3, 1, 1, rng), c1(cout, cout, 3, 1, 1, rng), n0(cout, 4), n1(cout, 4),
          emb_proj(embed_dim, cout, rng) {}

    Var operator()(Tape& tp, Var x, Var emb) const {
        Var h = n0(tp, c0(tp, x));
        h = ops::add_channel_bias(tp, h, emb_proj(tp, emb));
        h = ops::silu(tp, h);
        h = ops::silu(tp, n1(tp, c1(tp, h)));
        return h;
    }
    void collect(const std::string& p, nn::NamedParams& out) const {
        c0.collect(p + ".c0", out);
        c1.collect(p + ".c1", out);
        n0.collect(p + ".n0", out);
        n1.collect(p + ".n1", out);
        emb_proj.collect(p + ".emb", out);
    }
};

}  // namespace detail

struct UNet3d {
    detail::Block enc0, enc1, mid, dec1, dec0;
    nn::Conv3d down0, down1, out_conv;
    nn::ConvT3d up1, up0;

    UNet3d() = default;
    UNet3d(int in_channels, int out_channels, int base, int embed_dim, Rng& rng) {
        const int w0 = base, w1 = (base * 4 / 3 + 3) / 4 * 4, w2 = base * 2;  // widths stay GroupNorm-divisible
        enc0 = detail::Block(in_channels, w0, embed_dim, rng);
        down0 = nn::Conv3d(w0, w1, 3, 2, 1, rng);
        enc1 = detail::Block(w1, w1, embed_dim, rng);
        down1 = nn::Conv3d(w1, w2, 3, 2, 1, rng);
        mid = detail::Block(w2, w2, embed_dim, rng);
        up1 = nn::ConvT3d(w2, w1, 4, 2, 1, rng);
        dec1 = detail::Block(w1 * 2, w1, embed_dim, rng);
        up0 = nn::ConvT3d(w1, w0, 4, 2, 1, rng);
        dec0 = detail::Block(w0 * 2, w0, embed_dim, rng);
        // near-zero output init keeps the initial eps-prediction MSE at ~1 while
        // still letting different conditions produce different outputs
        out_conv = nn::Conv3d(w0, out_channels, 3, 1, 1, rng, 0.05);
        out_conv.b->val.fill(0.0f);
    }

    Var operator()(Tape& tp, Var x, Var emb) const {
        Var h0 = enc0(tp, x, emb);
        Var h1 = enc1(tp, down0(tp, h0), emb);
        Var m = mid(tp, down1(tp, h1), emb);
        Var u1 = dec1(tp, ops::concat_channels(tp, up1(tp, m), h1), emb);
        Var u0 = dec0(tp, ops::concat_channels(tp, up0(tp, u1), h0), emb);
        return out_conv(tp, u0);
    }
    void collect(const std::string& p, nn::NamedParams& out) const {
        enc0.collect(p + ".enc0", out);
        down0.collect(p + ".down0", out);
        enc1.collect(p + ".enc1", out);
        down1.collect(p + ".down1", out);
        mid.collect(p + ".mid", out);
        up1.collect(p + ".up1", out);
        dec1.collect(p + ".dec1", out);
        up0.collect(p + ".up0", out);
        dec0.collect(p + ".dec0", out);
        out_conv.collect(p + ".out", out);
    }
};

// --------------------------------------------------------------- denoiser

struct Denoiser {
    DiffusionConfig cfg;
    int latent_channels = 8;
    std::array<int, 3> latent_spatial{};
    int struct_len = 0;

    condition::ContentExtractor content_extractor;
    nn::Linear time_mlp0, time_mlp1;
    nn::Linear struct_mlp0, struct_mlp1;
    Var null_token;  // replaces the structure embedding for the unconditional identifier
    UNet3d unet;

    Denoiser() = default;
    Denoiser(const DiffusionConfig& c, int latent_channels_, const std::array<int, 3>& latent_spatial_,
             int struct_len_)
        : cfg(c), latent_channels(latent_channels_), latent_spatial(latent_spatial_), struct_len(struct_len_) {
        cfg.validate();
        for (int a = 0; a < 3; ++a)
            if (latent_spatial[a] % 4 != 0)
                throw ShapeError("denoiser: latent axis " + std::to_string(a) + " = " +
                                 std::to_string(latent_spatial[a]) + " must be divisible by 4 (two U-Net levels)");
        Rng rng(substream_seed(cfg.seed, "diffusion-init"));
        content_extractor = condition::ContentExtractor(latent_channels, rng);
        time_mlp0 = nn::Linear(cfg.embed_dim, cfg.embed_dim, rng);
        time_mlp1 = nn::Linear(cfg.embed_dim, cfg.embed_dim, rng);
        struct_mlp0 = nn::Linear(struct_len, cfg.embed_dim, rng);
        struct_mlp1 = nn::Linear(cfg.embed_dim, cfg.embed_dim, rng);
        null_token = nn::param({cfg.embed_dim});
        nn::init_normal(null_token, rng, 0.5);
        unet = UNet3d(2 * latent_channels, latent_channels, cfg.base_width, cfg.embed_dim, rng);
    }

    nn::NamedParams params() const {
        nn::NamedParams ps;
        unet.collect("unet", ps);
        content_extractor.collect("cond.content", ps);
        time_mlp0.collect("cond.time0", ps);
        time_mlp1.collect("cond.time1", ps);
        struct_mlp0.collect("cond.struct0", ps);
        struct_mlp1.collect("cond.struct1", ps);
        ps.emplace_back("cond.null_token", null_token);
        return ps;
    }

    Tensor sinusoidal_time(int t) const {
        const int half = cfg.embed_dim / 2;
        Tensor e({cfg.embed_dim});
        for (int i = 0; i < half; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
            e.v[static_cast<size_t>(i)] = static_cast<float>(std::sin(t * freq));
            e.v[static_cast<size_t>(half + i)] = static_cast<float>(std::cos(t * freq));
        }
        return e;
    }

    Var time_embedding(Tape& tp, int t) const {
        Var e = make_leaf(sinusoidal_time(t));
        return time_mlp1(tp, ops::silu(tp, time_mlp0(tp, e)));
    }

    Var structure_embedding(Tape& tp, const std::vector<float>& sv) const {
        if (static_cast<int>(sv.size()) != struct_len)
            throw ShapeError("structure vector length " + std::to_string(sv.size()) + " != " + std::to_string(struct_len));
        Tensor t({struct_len});
        std::copy(sv.begin(), sv.end(), t.v.begin());
        return struct_mlp1(tp, ops::silu(tp, struct_mlp0(tp, make_leaf(std::move(t)))));
    }

    // eps_theta(z_t, t, condition). `content` must be spatially aligned with z;
    // `struct_emb` is either structure_embedding(...) or the null token.
    Var forward(Tape& tp, Var z_t, int t, Var content, Var struct_emb) const {
        Var emb = ops::add(tp, time_embedding(tp, t), struct_emb);
        Var x = ops::concat_channels(tp, z_t, content);
        return unet(tp, x, emb);
    }

    // inference pass from a materialized ConditionVector
    Tensor predict(const Tensor& z_t, int t, const condition::ConditionVector& c) const {
        Tape tp;
        tp.recording = false;
        Var content = make_leaf(c.content);
        Var semb = c.is_null ? null_token : structure_embedding(tp, c.structure);
        return forward(tp, make_leaf(z_t), t, content, semb)->val;
    }
};

// ---------------------------------------------------------------- sampler

// Ancestral DDPM chain with double-precision state. The denoise callback
// receives (z_t as float tensor, t) and returns the eps estimate; noise draws
// come one normal() per element, init first, then per step for t > 0.
inline std::vector<double> sample_latent_chain(const std::function<Tensor(const Tensor&, int)>& denoise,
                                               const NoiseSchedule& s, const std::vector<int>& shape, Rng& rng,
                                               bool posterior_variance = false) {
    const i64 n = Tensor::numel_of(shape);
    std::vector<double> z(static_cast<size_t>(n));
    for (auto& x : z) x = rng.normal();

    Tensor zf(shape);
    for (int t = s.T - 1; t >= 0; --t) {
        for (i64 i = 0; i < n; ++i) zf.v[static_cast<size_t>(i)] = static_cast<float>(z[static_cast<size_t>(i)]);
        const Tensor eps = denoise(zf, t);
        const double abar = s.alpha_bar[static_cast<size_t>(t)];
        const double coef = s.beta[static_cast<size_t>(t)] / std::sqrt(1.0 - abar);
        const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha[static_cast<size_t>(t)]);
        double sigma = 0.0;
        if (t > 0) {
            if (posterior_variance) {
                const double abar_prev = s.alpha_bar[static_cast<size_t>(t - 1)];
                sigma = std::sqrt((1.0 - abar_prev) / (1.0 - abar) * s.beta[static_cast<size_t>(t)]);
            } else {
                sigma = std::sqrt(s.beta[static_cast<size_t>(t)]);
            }
        }
        for (i64 i = 0; i < n; ++i) {
            double zi = (z[static_cast<size_t>(i)] - coef * static_cast<double>(eps.v[static_cast<size_t>(i)])) *
                        inv_sqrt_alpha;
            if (t > 0) zi += sigma * rng.normal();
            z[static_cast<size_t>(i)] = zi;
        }
    }
    return z;
}

inline Tensor sample_latent(const std::function<Tensor(const Tensor&, int)>& denoise, const NoiseSchedule& s,
                            const std::vector<int>& shape, Rng& rng, bool posterior_variance = false) {
    const std::vector<double> z = sample_latent_chain(denoise, s, shape, rng, posterior_variance);
    Tensor out(shape);
    for (size_t i = 0; i < z.size(); ++i) out.v[i] = static_cast<float>(z[i]);
    return out;
}

// --------------------------------------------------------------- training

struct LatentSample {
    Tensor z0;           // quantized latent {C,d,h,w}
    Tensor mask_latent;  // frozen-encoder pass over the mask
    std::vector<float> structure;
};

struct StepStats {
    double loss = 0.0;
    int null_count = 0;  // samples in the batch that drew the unconditional identifier
};

struct DiffusionTrainer {
    Denoiser model;
    NoiseSchedule schedule;
    nn::Adam opt;
    Rng rng;
    long step = 0;
    std::string config_hash;

    static std::vector<Var> values_of(const nn::NamedParams& ps) {
        std::vector<Var> out;
        for (const auto& [n, p] : ps) out.push_back(p);
        return out;
    }

    DiffusionTrainer(const DiffusionConfig& cfg, int latent_channels, const std::array<int, 3>& latent_spatial,
                     int struct_len, std::string cfg_hash)
        : model(cfg, latent_channels, latent_spatial, struct_len),
          schedule(make_schedule(cfg.timesteps, cfg.schedule_kind, cfg.beta_start, cfg.beta_end)),
          opt(values_of(model.params()), cfg.lr),
          rng(substream_seed(cfg.seed, "diffusion-train")),
          config_hash(std::move(cfg_hash)) {}

    StepStats train_step(const std::vector<const LatentSample*>& batch) {
        const DiffusionConfig& cfg = model.cfg;
        const float inv_b = 1.0f / static_cast<float>(batch.size());
        StepStats stats;
        for (const LatentSample* s : batch) {
            const bool use_null = rng.bernoulli(cfg.p_uncond);
            const int t = rng.uniform_int(schedule.T);
            Tensor eps(s->z0.shape);
            for (auto& e : eps.v) e = rng.normalf();
            Tensor z_t = q_sample(s->z0, t, eps, schedule);

            Tape tp;
            Var content, semb;
            if (use_null) {
                ++stats.null_count;
                content = make_leaf(Tensor(s->z0.shape));  // all-zero grid
                semb = model.null_token;
            } else {
                content = model.content_extractor(tp, make_leaf(s->mask_latent));
                semb = model.structure_embedding(tp, s->structure);
            }
            Var eps_hat = model.forward(tp, make_leaf(z_t), t, content, semb);
            Var loss = ops::affine(tp, ops::mse(tp, eps_hat, make_leaf(eps)), inv_b);
            if (!std::isfinite(loss->val.v[0])) throw TrainingError("non-finite diffusion loss");
            stats.loss += loss->val.v[0];
            tp.backward(loss);
        }
        opt.step();
        opt.zero_grad();
        ++step;
        return stats;
    }
};

// ------------------------------------------------------------ checkpoints

inline void save_checkpoint(const DiffusionTrainer& tr, const fs::path& dir) {
    fs::create_directories(dir);
    io::atomic_write(dir / "params.bin", io::serialize_params(tr.model.params()));
    io::atomic_write(dir / "adam.bin", io::serialize_adam(tr.opt));
    io::KvMap meta{{"kind", "diffusion"},
                   {"step", std::to_string(tr.step)},
                   {"config_hash", tr.config_hash},
                   {"timesteps", std::to_string(tr.model.cfg.timesteps)},
                   {"p_uncond", std::to_string(tr.model.cfg.p_uncond)},
                   {"latent_channels", std::to_string(tr.model.latent_channels)},
                   {"latent_spatial", io::shape_str(tr.model.latent_spatial)},
                   {"struct_len", std::to_string(tr.model.struct_len)},
                   {"rng", io::rng_state_str(tr.rng)}};
    io::kv_save(dir / "meta", meta);
}

inline bool checkpoint_exists(const fs::path& dir) { return fs::exists(dir / "meta") && fs::exists(dir / "params.bin"); }

inline void load_checkpoint(DiffusionTrainer& tr, const fs::path& dir) {
    io::KvMap meta = io::kv_load(dir / "meta");
    if (io::kv_get(meta, "kind") != "diffusion") throw IoError("not a diffusion checkpoint: " + dir.string());
    if (io::kv_get(meta, "config_hash") != tr.config_hash)
        throw ConfigError("diffusion checkpoint at " + dir.string() + " was produced by a different config");
    nn::NamedParams ps = tr.model.params();
    io::deserialize_params(io::read_file(dir / "params.bin"), ps);
    io::deserialize_adam(io::read_file(dir / "adam.bin"), tr.opt);
    tr.step = std::stol(io::kv_get(meta, "step"));
    tr.rng = io::rng_from_state_str(io::kv_get(meta, "rng"));
}

inline Denoiser load_denoiser(const fs::path& dir, const DiffusionConfig& cfg) {
    io::KvMap meta = io::kv_load(dir / "meta");
    if (io::kv_get(meta, "kind") != "diffusion") throw IoError("not a diffusion checkpoint: " + dir.string());
    Denoiser d(cfg, std::stoi(io::kv_get(meta, "latent_channels")), io::parse_shape(io::kv_get(meta, "latent_spatial")),
               std::stoi(io::kv_get(meta, "struct_len")));
    nn::NamedParams ps = d.params();
    io::deserialize_params(io::read_file(dir / "params.bin"), ps);
    return d;
}

struct TrainResult {
    long steps_run = 0;
    double first_loss = 0, last_loss = 0;
    std::vector<double> losses;
};

// Train against a dataset of (volume, mask) pairs; latents and condition
// inputs are precomputed once through the frozen codec.
inline TrainResult train_diffusion(const fs::path& data_dir, const fs::path& masks_dir,
                                   const codec::CodecModel& codec_model, const fs::path& out_dir,
                                   const DiffusionConfig& cfg, int steps, const std::string& config_hash) {
    cfg.validate();
    const io::DatasetMeta meta = io::read_manifest(data_dir);
    const io::DatasetMeta mask_meta = io::read_manifest(masks_dir);
    if (meta.count < 1) throw ConfigError("train_diffusion: empty dataset");
    if (mask_meta.shape != meta.shape) throw ConfigError("train_diffusion: mask/volume geometry differs");
    const int mask_count = std::min(meta.count, mask_meta.count);

    std::vector<LatentSample> samples;
    for (int i = 0; i < mask_count; ++i) {
        LatentSample s;
        Volume v = io::read_volume(data_dir, i, meta);
        LabelMask m = io::read_mask(masks_dir, i, mask_meta);
        s.z0 = codec_model.quantize(codec_model.encode(v)).data;
        s.mask_latent = condition::mask_latent(codec_model, m);
        s.structure = cfg.cond.normalize(topo::structure_vector_volume(m));
        samples.push_back(std::move(s));
    }

    const auto lat_shape = codec_model.latent_shape_for(meta.shape);
    DiffusionTrainer tr(cfg, codec_model.cfg.latent_channels, lat_shape, 6 * meta.shape[0], config_hash);
    if (checkpoint_exists(out_dir)) {
        if (io::kv_get(io::kv_load(out_dir / "meta"), "config_hash") == config_hash) {
            load_checkpoint(tr, out_dir);
        } else {
            fs::remove(out_dir / "loss.tsv");  // stale checkpoint: retrain from scratch
        }
    }

    TrainResult res;
    std::ostringstream log_lines;
    while (tr.step < steps) {
        std::vector<const LatentSample*> batch;
        for (int b = 0; b < cfg.batch_size; ++b)
            batch.push_back(&samples[static_cast<size_t>(tr.rng.uniform_int(static_cast<int>(samples.size())))]);
        StepStats st = tr.train_step(batch);
        if (res.steps_run == 0) res.first_loss = st.loss;
        res.last_loss = st.loss;
        ++res.steps_run;
        res.losses.push_back(st.loss);
        log_lines << tr.step << "\t" << st.loss << "\t" << st.null_count << "\n";
        if (tr.step % cfg.ckpt_every == 0 || tr.step == steps) save_checkpoint(tr, out_dir);
    }
    if (!checkpoint_exists(out_dir)) save_checkpoint(tr, out_dir);
    fs::create_directories(out_dir);
    std::string prev;
    if (fs::exists(out_dir / "loss.tsv")) prev = io::read_file(out_dir / "loss.tsv");
    io::atomic_write(out_dir / "loss.tsv", prev + log_lines.str());
    return res;
}

// ---------------------------------------------------------------- sampling

// One guided sample: reverse chain under CFG, optional re-quantization,
// decode to a Volume. Deterministic in (condition, seed).
inline Volume sample_volume(const Denoiser& den, const NoiseSchedule& schedule, const codec::CodecModel& codec_model,
                            const condition::ConditionVector& cond, double w, std::uint64_t seed,
                            const std::array<double, 3>& spacing = {1, 1, 1}) {
    if (cond.content.dim(1) != den.latent_spatial[0] || cond.content.dim(2) != den.latent_spatial[1] ||
        cond.content.dim(3) != den.latent_spatial[2])
        throw ShapeError("sample: condition content " + cond.content.shape_str() + " does not match latent spatial dims");

    const condition::ConditionVector null_c = condition::null_condition(den.latent_spatial, den.latent_channels);
    auto denoise = [&](const Tensor& z_t, int t) {
        if (cond.is_null) return den.predict(z_t, t, null_c);
        if (w == 0.0) return den.predict(z_t, t, cond);
        return cfg_predict(den.predict(z_t, t, cond), den.predict(z_t, t, null_c), w);
    };

    Rng rng(substream_seed(seed, "sample"));
    const std::vector<int> shape{den.latent_channels, den.latent_spatial[0], den.latent_spatial[1],
                                 den.latent_spatial[2]};
    Tensor z0 = sample_latent(denoise, schedule, shape, rng, den.cfg.posterior_variance);

    codec::LatentGrid grid;
    grid.data = std::move(z0);
    if (den.cfg.quantize_before_decode) {
        grid = codec_model.quantize(grid);
    } else {
        grid.quantized = true;  // decode directly from the raw chain output
    }
    return codec_model.decode(grid, spacing);
}

}  // namespace lad::diffusion
