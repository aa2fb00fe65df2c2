// lad: locality-aware latent diffusion for synthetic 3D volumes.
// Subcommands cover the pipeline phases individually plus `run` for the whole
// chain with stage caching. Exit codes: 0 ok, 1 config error, 2 stage failure.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "lad/pipeline.hpp"
#include "lad/topo.hpp"

using namespace lad;

namespace {

std::filesystem::path artifact_root(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("LAD_ARTIFACT_ROOT")) return env;
    return ".";
}

config::RunConfig load_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    config::RunConfig cfg;
    if (!config_path.empty()) cfg = config::RunConfig::load(config_path);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.apply(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

void require_valid(const config::RunConfig& cfg) {
    const auto violations = config::validate_config(cfg);
    if (!violations.empty()) {
        std::string msg = "invalid config:";
        for (const auto& v : violations) msg += "\n  - " + v;
        throw ConfigError(msg);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lad: locality-aware latent diffusion for synthetic 3D volumes"};
    app.require_subcommand(1);

    std::string config_path, root_flag;
    std::vector<std::string> overrides;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a phantom dataset (volumes + masks)");
    std::uint64_t gen_seed = 0;
    int gen_count = 64;
    std::string gen_out, gen_shape;
    gen->add_option("--seed", gen_seed, "root seed");
    gen->add_option("--count", gen_count, "number of phantoms");
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--shape", gen_shape, "volume shape DxHxW (default 32x64x64)");

    // train-codec
    auto* tc = app.add_subcommand("train-codec", "train the VQ autoencoder");
    std::string tc_data, tc_out;
    int tc_steps = 200;
    double tc_lambda = 1.0;
    std::uint64_t tc_seed = 0;
    tc->add_option("--data", tc_data)->required();
    tc->add_option("--out", tc_out)->required();
    tc->add_option("--steps", tc_steps);
    tc->add_option("--lambda-loc", tc_lambda);
    tc->add_option("--seed", tc_seed);

    // train-diffusion
    auto* td = app.add_subcommand("train-diffusion", "train the conditional latent DDPM");
    std::string td_data, td_masks, td_codec, td_out;
    int td_steps = 500;
    double td_puncond = 0.25;
    std::uint64_t td_seed = 0;
    td->add_option("--data", td_data)->required();
    td->add_option("--masks", td_masks, "maskset directory (defaults to --data)");
    td->add_option("--codec", td_codec)->required();
    td->add_option("--out", td_out)->required();
    td->add_option("--steps", td_steps);
    td->add_option("--p-uncond", td_puncond);
    td->add_option("--seed", td_seed);

    // augment-masks
    auto* am = app.add_subcommand("augment-masks", "expand a maskset with label-preserving transforms");
    std::string am_in, am_out;
    int am_count = 64;
    std::uint64_t am_seed = 0;
    am->add_option("--in", am_in)->required();
    am->add_option("--out", am_out)->required();
    am->add_option("--count", am_count);
    am->add_option("--seed", am_seed);

    // sample
    auto* sm = app.add_subcommand("sample", "draw guided samples from trained checkpoints");
    std::string sm_diff, sm_codec, sm_masks, sm_out;
    double sm_w = 1.0;
    int sm_count = 16;
    std::uint64_t sm_seed = 0;
    sm->add_option("--diffusion", sm_diff)->required();
    sm->add_option("--codec", sm_codec)->required();
    sm->add_option("--masks", sm_masks)->required();
    sm->add_option("--w", sm_w, "guidance strength");
    sm->add_option("--count", sm_count);
    sm->add_option("--out", sm_out)->required();
    sm->add_option("--seed", sm_seed);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "compute the metrics report for a synthesis set");
    std::string ev_real, ev_synth, ev_masks, ev_out, ev_embed;
    int ev_pairs = 64;
    std::uint64_t ev_seed = 0;
    ev->add_option("--real", ev_real)->required();
    ev->add_option("--synth", ev_synth)->required();
    ev->add_option("--masks", ev_masks)->required();
    ev->add_option("--out", ev_out)->required();
    ev->add_option("--emit-embedding", ev_embed, "write N x 2 embedding points + ellipse parameters");
    ev->add_option("--n-pairs", ev_pairs);
    ev->add_option("--seed", ev_seed);

    // run
    auto* run = app.add_subcommand("run", "run the full pipeline with stage caching");
    run->add_option("--config", config_path, "key=value config file");
    run->add_option("--root", root_flag, "artifact root (or env LAD_ARTIFACT_ROOT)");
    run->add_option("--set", overrides, "override config keys, e.g. --set codec.lambda_loc=0")->take_all();

    // topo (debug)
    auto* tp = app.add_subcommand("topo", "emit the per-slice Betti-number vector of a mask");
    std::string tp_mask, tp_out, tp_shape;
    tp->add_option("--mask", tp_mask)->required();
    tp->add_option("--out", tp_out)->required();
    tp->add_option("--shape", tp_shape, "mask shape DxHxW (default: manifest next to the file)");

    // validate
    auto* vc = app.add_subcommand("validate-config", "check a config file, print violations");
    vc->add_option("--config", config_path);
    vc->add_option("--set", overrides)->take_all();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            config::RunConfig cfg;
            cfg.seed = gen_seed;
            cfg.data_count = gen_count;
            if (!gen_shape.empty()) cfg.shape = io::parse_shape(gen_shape);
            cfg.window_depth = cfg.shape[0];
            cfg.window_stride = cfg.shape[0];
            require_valid(cfg);
            const auto hashes = pipeline::StageHashes::compute(cfg);
            pipeline::run_gen_data(cfg, gen_out, hashes.data);
            std::cout << "wrote dataset to " << gen_out << "\n";
        } else if (tc->parsed()) {
            config::RunConfig cfg;
            cfg.seed = tc_seed;
            cfg.lambda_loc = tc_lambda;
            cfg.codec_steps = tc_steps;
            const auto meta = io::read_manifest(tc_data);
            cfg.shape = meta.shape;
            require_valid(cfg);
            const auto hashes = pipeline::StageHashes::compute(cfg);
            auto res = codec::train_codec(tc_data, tc_out, cfg.codec_config(), tc_steps, hashes.codec);
            std::cout << "codec trained: steps_run=" << res.steps_run << " first_rec=" << res.first_rec
                      << " last_rec=" << res.last_rec << "\n";
        } else if (td->parsed()) {
            config::RunConfig cfg;
            cfg.seed = td_seed;
            cfg.p_uncond = td_puncond;
            cfg.diffusion_steps = td_steps;
            const auto meta = io::read_manifest(td_data);
            cfg.shape = meta.shape;
            require_valid(cfg);
            const auto hashes = pipeline::StageHashes::compute(cfg);
            const codec::CodecModel codec_model = codec::load_codec(td_codec, cfg.codec_config());
            auto res = diffusion::train_diffusion(td_data, td_masks.empty() ? td_data : td_masks, codec_model, td_out,
                                                  cfg.diffusion_config(), td_steps, hashes.diffusion);
            std::cout << "diffusion trained: steps_run=" << res.steps_run << " first_loss=" << res.first_loss
                      << " last_loss=" << res.last_loss << "\n";
        } else if (am->parsed()) {
            config::RunConfig cfg;
            cfg.seed = am_seed;
            cfg.augment_count = am_count;
            const auto meta = io::read_manifest(am_in);
            cfg.shape = meta.shape;
            const auto hashes = pipeline::StageHashes::compute(cfg);
            pipeline::run_augment_masks(cfg, am_in, am_out, hashes.augment);
            std::cout << "wrote " << am_count << " augmented masks to " << am_out << "\n";
        } else if (sm->parsed()) {
            config::RunConfig cfg;
            cfg.seed = sm_seed;
            cfg.guidance_w = sm_w;
            cfg.sample_count = sm_count;
            const auto meta = io::read_manifest(sm_masks);
            cfg.shape = meta.shape;
            cfg.window_depth = meta.shape[0];
            cfg.spacing = meta.spacing;
            require_valid(cfg);
            const auto hashes = pipeline::StageHashes::compute(cfg);
            pipeline::run_sample(cfg, sm_diff, sm_codec, sm_masks, sm_out, hashes.sample);
            std::cout << "wrote " << sm_count << " samples to " << sm_out << "\n";
        } else if (ev->parsed()) {
            evaluate::EvalConfig ecfg;
            ecfg.n_pairs = ev_pairs;
            ecfg.seed = substream_seed(ev_seed, "metrics");
            auto r = evaluate::evaluate(ev_real, ev_synth, ev_masks, ecfg);
            evaluate::write_report(ev_out, r.report);
            if (!ev_embed.empty()) evaluate::write_embedding(ev_embed, r.embedding);
            std::cout << evaluate::report_to_json(r.report).dump(2) << "\n";
            if (!r.report.all_ok()) return 2;
        } else if (run->parsed()) {
            config::RunConfig cfg = load_config(config_path, overrides);
            auto res = pipeline::run_pipeline(cfg, artifact_root(root_flag));
            for (const auto& s : res.skipped) std::cout << "skipped " << s << " (hash match)\n";
            for (const auto& s : res.ran) std::cout << "ran " << s << "\n";
            std::cout << evaluate::report_to_json(res.report).dump(2) << "\n";
        } else if (tp->parsed()) {
            std::array<int, 3> shape{};
            if (!tp_shape.empty()) {
                shape = io::parse_shape(tp_shape);
            } else {
                const auto meta = io::read_manifest(std::filesystem::path(tp_mask).parent_path());
                shape = meta.shape;
            }
            LabelMask m(shape[0], shape[1], shape[2]);
            const std::string bytes = io::read_file(tp_mask);
            if (bytes.size() != m.data.size()) throw ConfigError("topo: mask size does not match shape");
            std::memcpy(m.data.data(), bytes.data(), bytes.size());
            m.validate();
            const auto vec = topo::structure_vector_volume(m);
            std::ostringstream os;
            for (int v : vec) os << v << "\n";
            io::atomic_write(tp_out, os.str());
            std::cout << "wrote " << vec.size() << " integers to " << tp_out << "\n";
        } else if (vc->parsed()) {
            config::RunConfig cfg = load_config(config_path, overrides);
            const auto violations = config::validate_config(cfg);
            if (violations.empty()) {
                std::cout << "ok (hash " << cfg.hash() << ")\n";
            } else {
                for (const auto& v : violations) std::cout << "violation: " << v << "\n";
                return 1;
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const pipeline::StageError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
