#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "lad/core/io.hpp"
#include "lad/core/nn.hpp"
#include "lad/volume.hpp"

// Vector-quantized 3D autoencoder defining the latent space. Trained with the
// global stack (reconstruction + codebook + commitment + perceptual + feature
// matching + adversarial) plus the mask-guided locality term weighted by
// lambda. The perceptual net is a fixed-seed random conv net: deterministic,
// dependency-free, and differentiable through its input.

namespace lad::codec {

namespace fs = std::filesystem;

struct CodecConfig {
    std::array<int, 3> compression{4, 4, 4};
    int latent_channels = 8;
    int codebook_size = 512;
    double commitment_weight = 0.25;
    double lambda_loc = 1.0;
    int bbox_margin = 2;
    bool locality_masked_only = false;  // alternative crop rule: masked voxels instead of bbox

    double lr = 3e-4;
    int batch_size = 2;
    int disc_start = 50;      // generator-only warm-up steps before adversarial terms engage
    double w_perc = 0.1;
    double w_gan = 0.2;
    double w_match = 0.2;

    int ckpt_every = 100;
    std::uint64_t seed = 0;

    void validate() const {
        if (compression != std::array<int, 3>{4, 4, 4})
            throw ConfigError("codec: only compression rate (4,4,4) is implemented");
        if (latent_channels < 1 || codebook_size < 2) throw ConfigError("codec: need C >= 1 and K >= 2");
        if (lambda_loc < 0.0) throw ConfigError("codec: lambda_loc must be >= 0");
        if (batch_size < 1 || ckpt_every < 1) throw ConfigError("codec: bad batch/ckpt settings");
    }
};

// Latent feature grid; when quantized, every spatial vector is bit-identical
// to the codebook entry at its code index.
struct LatentGrid {
    Tensor data;  // {C, D/4, H/4, W/4}
    bool quantized = false;
    std::vector<int> code_indices;  // spatial order, present when quantized
};

// Tight bounding box of nonzero labels, expanded by margin and clipped.
inline std::optional<BBox> mask_bbox(const LabelMask& mask, int margin) {
    if (margin < 0) throw ConfigError("mask_bbox: margin must be >= 0");
    BBox box;
    box.lo = {mask.d(), mask.h(), mask.w()};
    box.hi = {0, 0, 0};
    bool any = false;
    for (int z = 0; z < mask.d(); ++z)
        for (int y = 0; y < mask.h(); ++y)
            for (int x = 0; x < mask.w(); ++x) {
                if (mask.at(z, y, x) == 0) continue;
                any = true;
                box.lo[0] = std::min(box.lo[0], z);
                box.lo[1] = std::min(box.lo[1], y);
                box.lo[2] = std::min(box.lo[2], x);
                box.hi[0] = std::max(box.hi[0], z + 1);
                box.hi[1] = std::max(box.hi[1], y + 1);
                box.hi[2] = std::max(box.hi[2], x + 1);
            }
    if (!any) return std::nullopt;
    const std::array<int, 3> shape = mask.shape;
    for (int a = 0; a < 3; ++a) {
        box.lo[a] = std::max(0, box.lo[a] - margin);
        box.hi[a] = std::min(shape[a], box.hi[a] + margin);
    }
    return box;
}

inline void check_divisible(const std::array<int, 3>& shape, const std::array<int, 3>& rate) {
    static const char* axis_names[3] = {"D", "H", "W"};
    for (int a = 0; a < 3; ++a)
        if (shape[a] % rate[a] != 0)
            throw ShapeError(std::string("encode: axis ") + axis_names[a] + "=" + std::to_string(shape[a]) +
                             " not divisible by compression rate " + std::to_string(rate[a]));
}

// Nearest codebook entry per spatial position under Euclidean distance.
// latent is {C,D,H,W}, codebook {K,C}; ties break to the lowest index.
inline std::vector<int> nearest_code_indices(const Tensor& latent, const Tensor& codebook) {
    const int C = latent.dim(0);
    if (codebook.rank() != 2 || codebook.dim(1) != C)
        throw ShapeError("quantize: codebook entry dim " + std::to_string(codebook.dim(1)) + " != latent channels " +
                         std::to_string(C));
    const int K = codebook.dim(0);
    const i64 spatial = latent.numel() / C;
    std::vector<int> idx(static_cast<size_t>(spatial));
    for (i64 p = 0; p < spatial; ++p) {
        int best = 0;
        double best_d = 1e300;
        for (int k = 0; k < K; ++k) {
            const float* e = &codebook.v[static_cast<size_t>(k) * C];
            double d = 0.0;
            for (int c = 0; c < C; ++c) {
                const double diff = static_cast<double>(latent.v[static_cast<size_t>(c) * spatial + p]) - e[c];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        idx[static_cast<size_t>(p)] = best;
    }
    return idx;
}

// ------------------------------------------------------------------- model

struct Encoder {
    nn::Conv3d c0, c1, c2, c3;
    nn::GroupNorm gn;

    Encoder() = default;
    Encoder(int latent_channels, Rng& rng)
        : c0(1, 8, 3, 1, 1, rng),
          c1(8, 16, 3, 2, 1, rng),
          c2(16, 24, 3, 2, 1, rng),
          c3(24, latent_channels, 3, 1, 1, rng),
          gn(24, 4) {}

    Var operator()(Tape& tp, Var x) const {
        Var h = ops::silu(tp, c0(tp, x));
        h = ops::silu(tp, c1(tp, h));
        h = ops::silu(tp, c2(tp, h));
        h = gn(tp, h);
        return c3(tp, h);
    }
    void collect(const std::string& p, nn::NamedParams& out) const {
        c0.collect(p + ".c0", out);
        c1.collect(p + ".c1", out);
        c2.collect(p + ".c2", out);
        c3.collect(p + ".c3", out);
        gn.collect(p + ".gn", out);
    }
};

struct Decoder {
    nn::Conv3d c0, c_out;
    nn::ConvT3d up1, up2;
    nn::GroupNorm gn;

    Decoder() = default;
    Decoder(int latent_channels, Rng& rng)
        : c0(latent_channels, 24, 3, 1, 1, rng),
          c_out(8, 1, 3, 1, 1, rng),
          up1(24, 16, 4, 2, 1, rng),
          up2(16, 8, 4, 2, 1, rng),
          gn(8, 2) {}

    Var operator()(Tape& tp, Var z) const {
        Var h = ops::silu(tp, c0(tp, z));
        h = ops::silu(tp, up1(tp, h));
        h = ops::silu(tp, up2(tp, h));
        h = gn(tp, h);
        return ops::sigmoid(tp, c_out(tp, h));
    }
    void collect(const std::string& p, nn::NamedParams& out) const {
        c0.collect(p + ".c0", out);
        c_out.collect(p + ".c_out", out);
        up1.collect(p + ".up1", out);
        up2.collect(p + ".up2", out);
        gn.collect(p + ".gn", out);
    }
};

// Small 3D patch discriminator; intermediate activations feed feature matching.
struct PatchDiscriminator {
    nn::Conv3d c0, c1, c2, c3;

    PatchDiscriminator() = default;
    explicit PatchDiscriminator(Rng& rng)
        : c0(1, 8, 4, 2, 1, rng), c1(8, 16, 4, 2, 1, rng), c2(16, 16, 3, 1, 1, rng), c3(16, 1, 3, 1, 1, rng) {}

    struct Out {
        std::vector<Var> features;
        Var logits;
    };
    Out operator()(Tape& tp, Var x) const {
        Out o;
        Var h = ops::leaky_relu(tp, c0(tp, x));
        o.features.push_back(h);
        h = ops::leaky_relu(tp, c1(tp, h));
        o.features.push_back(h);
        h = ops::leaky_relu(tp, c2(tp, h));
        o.features.push_back(h);
        o.logits = c3(tp, h);
        return o;
    }
    void collect(const std::string& p, nn::NamedParams& out) const {
        c0.collect(p + ".c0", out);
        c1.collect(p + ".c1", out);
        c2.collect(p + ".c2", out);
        c3.collect(p + ".c3", out);
    }
};

// Frozen random-parameter feature net standing in for a pretrained perceptual
// model; parameters never train but gradients flow through the input.
struct PerceptualNet {
    nn::Conv3d c0, c1, c2;

    PerceptualNet() = default;
    explicit PerceptualNet(std::uint64_t seed) {
        Rng rng(substream_seed(seed, "perceptual"));
        c0 = nn::Conv3d(1, 8, 3, 2, 1, rng);
        c1 = nn::Conv3d(8, 12, 3, 2, 1, rng);
        c2 = nn::Conv3d(12, 16, 3, 2, 1, rng);
        for (auto* conv : {&c0, &c1, &c2}) {
            conv->w->requires_grad = false;
            conv->b->requires_grad = false;
        }
    }
    std::vector<Var> operator()(Tape& tp, Var x) const {
        std::vector<Var> feats;
        Var h = ops::tanh_op(tp, c0(tp, x));
        feats.push_back(h);
        h = ops::tanh_op(tp, c1(tp, h));
        feats.push_back(h);
        h = ops::tanh_op(tp, c2(tp, h));
        feats.push_back(h);
        return feats;
    }
};

struct CodecModel {
    CodecConfig cfg;
    Encoder encoder;
    Decoder decoder;
    Var codebook;  // {K, C}
    PatchDiscriminator disc;
    PerceptualNet perc;

    CodecModel() = default;
    explicit CodecModel(const CodecConfig& c) : cfg(c), perc(c.seed) {
        cfg.validate();
        Rng rng(substream_seed(cfg.seed, "codec-init"));
        encoder = Encoder(cfg.latent_channels, rng);
        decoder = Decoder(cfg.latent_channels, rng);
        codebook = nn::param({cfg.codebook_size, cfg.latent_channels});
        nn::init_normal(codebook, rng, 0.3);
        disc = PatchDiscriminator(rng);
    }

    nn::NamedParams gen_params() const {
        nn::NamedParams ps;
        encoder.collect("enc", ps);
        decoder.collect("dec", ps);
        ps.emplace_back("codebook", codebook);
        return ps;
    }
    nn::NamedParams disc_params() const {
        nn::NamedParams ps;
        disc.collect("disc", ps);
        return ps;
    }
    nn::NamedParams all_params() const {
        nn::NamedParams ps = gen_params();
        for (auto& p : disc_params()) ps.push_back(p);
        return ps;
    }

    std::array<int, 3> latent_shape_for(const std::array<int, 3>& vol_shape) const {
        check_divisible(vol_shape, cfg.compression);
        return {vol_shape[0] / cfg.compression[0], vol_shape[1] / cfg.compression[1],
                vol_shape[2] / cfg.compression[2]};
    }

    // ---- inference API (no tape recording)

    LatentGrid encode(const Volume& v) const {
        check_divisible(v.shape, cfg.compression);
        Tape tp;
        tp.recording = false;
        Var z = encoder(tp, make_leaf(to_tensor(v)));
        LatentGrid out;
        out.data = z->val;
        out.quantized = false;
        return out;
    }

    LatentGrid encode_tensor(const Tensor& t) const {
        check_divisible({t.dim(1), t.dim(2), t.dim(3)}, cfg.compression);
        Tape tp;
        tp.recording = false;
        Var z = encoder(tp, make_leaf(t));
        LatentGrid out;
        out.data = z->val;
        return out;
    }

    LatentGrid quantize(const LatentGrid& z) const {
        const auto idx = nearest_code_indices(z.data, codebook->val);
        LatentGrid out;
        out.data = Tensor(z.data.shape);
        const int C = z.data.dim(0);
        const i64 spatial = z.data.numel() / C;
        for (i64 p = 0; p < spatial; ++p) {
            const float* e = &codebook->val.v[static_cast<size_t>(idx[static_cast<size_t>(p)]) * C];
            for (int c = 0; c < C; ++c) out.data.v[static_cast<size_t>(c) * spatial + p] = e[c];
        }
        out.quantized = true;
        out.code_indices = idx;
        return out;
    }

    Volume decode(const LatentGrid& z, const std::array<double, 3>& spacing = {1, 1, 1}) const {
        if (!z.quantized) throw ConfigError("decode: latent must be quantized");
        Tape tp;
        tp.recording = false;
        Var x = decoder(tp, make_leaf(z.data));
        return from_tensor(x->val, spacing);
    }

    void save_params(const fs::path& dir) const {
        io::atomic_write(dir / "params.bin", io::serialize_params(all_params()));
    }
    void load_params(const fs::path& dir) { io::deserialize_params(io::read_file(dir / "params.bin"), all_params()); }
};

// ------------------------------------------------------------------- losses

// Mean |x - xhat| over the locality region of one sample: the margin-expanded
// foreground bbox, or the foreground voxels themselves in masked-only mode.
// Empty masks contribute exactly zero. x and xhat are {1,D,H,W} vars.
inline Var locality_term(Tape& tp, Var x, Var xhat, const LabelMask& mask, const CodecConfig& cfg) {
    check_same_shape(x->val, xhat->val, "locality_term");
    if (x->val.dim(1) != mask.d() || x->val.dim(2) != mask.h() || x->val.dim(3) != mask.w())
        throw ShapeError("locality_term: mask shape mismatch");
    if (cfg.locality_masked_only) {
        const size_t n_fg = mask.data.size() - mask.count_label(0);
        if (n_fg == 0) return make_leaf(Tensor({1}));
        Tensor weight({1, mask.d(), mask.h(), mask.w()});
        const float inv = 1.0f / static_cast<float>(n_fg);
        for (size_t i = 0; i < mask.data.size(); ++i) weight.v[i] = mask.data[i] != 0 ? inv : 0.0f;
        Var diff = ops::abs_op(tp, ops::sub(tp, x, xhat));
        return ops::sum_all(tp, ops::mul(tp, diff, make_leaf(std::move(weight))));
    }
    const auto box = mask_bbox(mask, cfg.bbox_margin);
    if (!box) return make_leaf(Tensor({1}));
    Var xs = ops::crop3d(tp, x, box->lo[0], box->hi[0], box->lo[1], box->hi[1], box->lo[2], box->hi[2]);
    Var xh = ops::crop3d(tp, xhat, box->lo[0], box->hi[0], box->lo[1], box->hi[1], box->lo[2], box->hi[2]);
    return ops::l1(tp, xs, xh);
}

// Batch mean of per-sample locality terms.
inline Var locality_loss(Tape& tp, const std::vector<Var>& xs, const std::vector<Var>& xhats,
                         const std::vector<LabelMask>& masks, const CodecConfig& cfg) {
    if (xs.size() != xhats.size() || xs.size() != masks.size() || xs.empty())
        throw ShapeError("locality_loss: batch sizes differ or empty");
    Var acc = locality_term(tp, xs[0], xhats[0], masks[0], cfg);
    for (size_t i = 1; i < xs.size(); ++i) acc = ops::add(tp, acc, locality_term(tp, xs[i], xhats[i], masks[i], cfg));
    return ops::affine(tp, acc, 1.0f / static_cast<float>(xs.size()));
}

struct LossBreakdown {
    double rec = 0, codebook = 0, commit = 0, perc = 0, match = 0, disc_g = 0;
    double glo = 0, loc = 0, total = 0;
    double disc_d = 0;  // discriminator-side hinge loss, logged separately
};

// L = L_glo + lambda * L_loc, with every term checked finite.
inline LossBreakdown total_loss(double rec, double codebook_l, double commit, double perc, double match,
                                double disc_g, double loc, double lambda) {
    LossBreakdown b;
    b.rec = rec;
    b.codebook = codebook_l;
    b.commit = commit;
    b.perc = perc;
    b.match = match;
    b.disc_g = disc_g;
    b.loc = loc;
    const std::pair<const char*, double> terms[] = {{"rec", rec},     {"codebook", codebook_l}, {"commit", commit},
                                                    {"perc", perc},   {"match", match},         {"disc", disc_g},
                                                    {"locality", loc}};
    for (const auto& [name, v] : terms)
        if (!std::isfinite(v)) throw TrainingError(std::string("non-finite loss term: ") + name);
    b.glo = rec + codebook_l + commit + perc + match + disc_g;
    b.total = b.glo + lambda * loc;
    return b;
}

// ----------------------------------------------------------------- training

struct TrainSample {
    Tensor x;  // {1,D,H,W}
    LabelMask mask;
};

struct CodecTrainer {
    CodecModel model;
    nn::Adam opt_g;
    nn::Adam opt_d;
    Rng rng;
    long step = 0;
    std::string config_hash;

    static std::vector<Var> values_of(const nn::NamedParams& ps) {
        std::vector<Var> out;
        for (const auto& [n, p] : ps) out.push_back(p);
        return out;
    }

    CodecTrainer(const CodecConfig& cfg, std::string cfg_hash)
        : model(cfg),
          opt_g(values_of(model.gen_params()), cfg.lr),
          opt_d(values_of(model.disc_params()), cfg.lr),
          rng(substream_seed(cfg.seed, "codec-train")),
          config_hash(std::move(cfg_hash)) {}

    // One optimizer step over a batch of samples; returns the averaged breakdown.
    LossBreakdown train_step(const std::vector<const TrainSample*>& batch) {
        const CodecConfig& cfg = model.cfg;
        const float inv_b = 1.0f / static_cast<float>(batch.size());
        const bool disc_on = step >= cfg.disc_start;

        LossBreakdown mean{};
        std::vector<Tensor> xhat_values;  // reused by the discriminator step

        for (const TrainSample* s : batch) {
            Tape tp;
            Var x = make_leaf(s->x);
            Var z_e = model.encoder(tp, x);
            const auto idx = nearest_code_indices(z_e->val, model.codebook->val);
            Var q = ops::codebook_lookup(tp, model.codebook, idx, z_e->val.dim(1), z_e->val.dim(2), z_e->val.dim(3));
            Var l_codebook = ops::mse(tp, q, ops::detach(tp, z_e));
            Var l_commit = ops::affine(tp, ops::mse(tp, z_e, ops::detach(tp, q)),
                                       static_cast<float>(cfg.commitment_weight));
            Var z_st = ops::straight_through(tp, z_e, q);
            Var xhat = model.decoder(tp, z_st);
            xhat_values.push_back(xhat->val);

            Var l_rec = ops::l1(tp, x, xhat);
            Var l_loc = locality_term(tp, x, xhat, s->mask, cfg);

            auto pf_x = model.perc(tp, x);
            auto pf_h = model.perc(tp, xhat);
            Var l_perc = ops::mse(tp, pf_h[0], ops::detach(tp, pf_x[0]));
            for (size_t l = 1; l < pf_x.size(); ++l)
                l_perc = ops::add(tp, l_perc, ops::mse(tp, pf_h[l], ops::detach(tp, pf_x[l])));
            l_perc = ops::affine(tp, l_perc, static_cast<float>(cfg.w_perc));

            Var l_disc_g = make_leaf(Tensor({1}));
            Var l_match = make_leaf(Tensor({1}));
            if (disc_on) {
                auto d_fake = model.disc(tp, xhat);
                Tape tpx;  // real-side features carry no gradient, keep them off the tape
                tpx.recording = false;
                auto d_real = model.disc(tpx, x);
                l_disc_g = ops::affine(tp, ops::mean_all(tp, d_fake.logits), -static_cast<float>(cfg.w_gan));
                Var m = ops::l1(tp, d_fake.features[0], make_leaf(d_real.features[0]->val));
                for (size_t l = 1; l < d_fake.features.size(); ++l)
                    m = ops::add(tp, m, ops::l1(tp, d_fake.features[l], make_leaf(d_real.features[l]->val)));
                l_match = ops::affine(tp, m, static_cast<float>(cfg.w_match));
            }

            LossBreakdown b = total_loss(l_rec->val.v[0], l_codebook->val.v[0], l_commit->val.v[0], l_perc->val.v[0],
                                         l_match->val.v[0], l_disc_g->val.v[0], l_loc->val.v[0], cfg.lambda_loc);

            Var glo = ops::add(tp, ops::add(tp, ops::add(tp, l_rec, l_codebook), ops::add(tp, l_commit, l_perc)),
                               ops::add(tp, l_match, l_disc_g));
            Var total = ops::add(tp, glo, ops::affine(tp, l_loc, static_cast<float>(cfg.lambda_loc)));
            Var scaled = ops::affine(tp, total, inv_b);
            tp.backward(scaled);

            mean.rec += b.rec * inv_b;
            mean.codebook += b.codebook * inv_b;
            mean.commit += b.commit * inv_b;
            mean.perc += b.perc * inv_b;
            mean.match += b.match * inv_b;
            mean.disc_g += b.disc_g * inv_b;
            mean.loc += b.loc * inv_b;
            mean.glo += b.glo * inv_b;
            mean.total += b.total * inv_b;
        }
        opt_g.step();
        opt_g.zero_grad();
        opt_d.zero_grad();  // generator pass leaks grads into D params; drop them

        if (disc_on) {
            double dloss = 0.0;
            for (size_t i = 0; i < batch.size(); ++i) {
                Tape tp;
                auto d_real = model.disc(tp, make_leaf(batch[i]->x));
                auto d_fake = model.disc(tp, make_leaf(xhat_values[i]));
                // hinge: mean(relu(1 - D(x))) + mean(relu(1 + D(xhat)))
                Var lr_ = ops::mean_all(tp, ops::relu(tp, ops::affine(tp, d_real.logits, -1.0f, 1.0f)));
                Var lf = ops::mean_all(tp, ops::relu(tp, ops::affine(tp, d_fake.logits, 1.0f, 1.0f)));
                Var l = ops::affine(tp, ops::add(tp, lr_, lf), inv_b);
                if (!std::isfinite(l->val.v[0])) throw TrainingError("non-finite loss term: disc_d");
                dloss += l->val.v[0];
                tp.backward(l);
            }
            opt_d.step();
            opt_d.zero_grad();
            opt_g.zero_grad();
            mean.disc_d = dloss;
        }
        ++step;
        return mean;
    }
};

// Checkpoint directory: params.bin + adam_g.bin + adam_d.bin + meta.
inline void save_checkpoint(const CodecTrainer& tr, const fs::path& dir) {
    fs::create_directories(dir);
    tr.model.save_params(dir);
    io::atomic_write(dir / "adam_g.bin", io::serialize_adam(tr.opt_g));
    io::atomic_write(dir / "adam_d.bin", io::serialize_adam(tr.opt_d));
    io::KvMap meta{{"kind", "codec"},
                   {"step", std::to_string(tr.step)},
                   {"config_hash", tr.config_hash},
                   {"lambda_loc", std::to_string(tr.model.cfg.lambda_loc)},
                   {"compression", io::shape_str(tr.model.cfg.compression)},
                   {"codebook_size", std::to_string(tr.model.cfg.codebook_size)},
                   {"latent_channels", std::to_string(tr.model.cfg.latent_channels)},
                   {"rng", io::rng_state_str(tr.rng)}};
    io::kv_save(dir / "meta", meta);
}

inline bool checkpoint_exists(const fs::path& dir) { return fs::exists(dir / "meta") && fs::exists(dir / "params.bin"); }

inline void load_checkpoint(CodecTrainer& tr, const fs::path& dir) {
    io::KvMap meta = io::kv_load(dir / "meta");
    if (io::kv_get(meta, "kind") != "codec") throw IoError("not a codec checkpoint: " + dir.string());
    if (io::kv_get(meta, "config_hash") != tr.config_hash)
        throw ConfigError("codec checkpoint at " + dir.string() + " was produced by a different config");
    tr.model.load_params(dir);
    io::deserialize_adam(io::read_file(dir / "adam_g.bin"), tr.opt_g);
    io::deserialize_adam(io::read_file(dir / "adam_d.bin"), tr.opt_d);
    tr.step = std::stol(io::kv_get(meta, "step"));
    tr.rng = io::rng_from_state_str(io::kv_get(meta, "rng"));
}

// Frozen-encoder copy for downstream consumers (condition path, diffusion).
inline CodecModel load_codec(const fs::path& dir, const CodecConfig& cfg) {
    CodecModel m(cfg);
    nn::NamedParams ps = m.all_params();
    io::deserialize_params(io::read_file(dir / "params.bin"), ps);
    return m;
}

struct TrainResult {
    long steps_run = 0;
    double first_rec = 0, last_rec = 0;
    std::vector<LossBreakdown> log;
};

// Full training entry point with deterministic resume. Loads the dataset,
// runs to cfg-steps, checkpoints every ckpt_every steps and at the end.
inline TrainResult train_codec(const fs::path& data_dir, const fs::path& out_dir, const CodecConfig& cfg, int steps,
                               const std::string& config_hash) {
    cfg.validate();
    const io::DatasetMeta meta = io::read_manifest(data_dir);
    if (meta.count < 1) throw ConfigError("train_codec: empty dataset");
    check_divisible(meta.shape, cfg.compression);

    std::vector<TrainSample> samples;
    samples.reserve(static_cast<size_t>(meta.count));
    for (int i = 0; i < meta.count; ++i) {
        TrainSample s;
        s.x = to_tensor(io::read_volume(data_dir, i, meta));
        s.mask = io::read_mask(data_dir, i, meta);
        samples.push_back(std::move(s));
    }

    CodecTrainer tr(cfg, config_hash);
    if (checkpoint_exists(out_dir)) {
        if (io::kv_get(io::kv_load(out_dir / "meta"), "config_hash") == config_hash) {
            load_checkpoint(tr, out_dir);
        } else {
            // stale checkpoint from a different config: retrain from scratch
            fs::remove(out_dir / "loss.tsv");
        }
    }

    TrainResult res;
    std::ostringstream log_lines;
    while (tr.step < steps) {
        std::vector<const TrainSample*> batch;
        for (int b = 0; b < cfg.batch_size; ++b)
            batch.push_back(&samples[static_cast<size_t>(tr.rng.uniform_int(meta.count))]);
        // a TrainingError (NaN term) propagates; the last checkpoint on disk stays good
        LossBreakdown lb = tr.train_step(batch);
        if (res.steps_run == 0) res.first_rec = lb.rec;
        res.last_rec = lb.rec;
        ++res.steps_run;
        res.log.push_back(lb);
        log_lines << tr.step << "\t" << lb.total << "\t" << lb.rec << "\t" << lb.codebook << "\t" << lb.commit << "\t"
                  << lb.perc << "\t" << lb.match << "\t" << lb.disc_g << "\t" << lb.loc << "\t" << lb.disc_d << "\n";
        if (tr.step % cfg.ckpt_every == 0 || tr.step == steps) save_checkpoint(tr, out_dir);
    }
    if (!checkpoint_exists(out_dir)) save_checkpoint(tr, out_dir);  // steps == 0 edge
    // append per-term loss log
    fs::create_directories(out_dir);
    std::string prev;
    if (fs::exists(out_dir / "loss.tsv")) prev = io::read_file(out_dir / "loss.tsv");
    io::atomic_write(out_dir / "loss.tsv", prev + log_lines.str());
    return res;
}

}  // namespace lad::codec
