#pragma once

#include <nlohmann/json.hpp>
#include <optional>

#include "lad/core/io.hpp"
#include "lad/metrics.hpp"

// Full evaluation pass: holistic + localized FID/MMD, MS-SSIM diversity over
// the synthesis set, and the MDS embedding with per-set ellipse fits.
// Localized metrics crop both sets to the union bounding box of the organ
// label over the ORIGINAL maskset. Component failures are recorded in the
// report instead of aborting the run; mismatched geometry refuses up front.

namespace lad::evaluate {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct EvalConfig {
    int n_pairs = 64;           // MS-SSIM sample pairs
    int msssim_scales = 3;
    std::uint8_t organ_label = 1;
    std::uint64_t seed = 0;
    std::uint64_t extractor_seed = metrics::kDefaultExtractorSeed;
    std::string config_hash;
};

struct MetricsReport {
    double fid_holistic = -1, fid_localized = -1;
    double mmd_holistic = -1, mmd_localized = -1;
    double ms_ssim = -1;
    int pair_count = 0;
    int msssim_scales_used = 0;
    int real_count = 0, synth_count = 0;
    std::string extractor_hash;
    std::string config_hash;
    std::vector<std::string> errors;  // failed components, field left at -1

    bool all_ok() const { return errors.empty(); }
};

struct EmbeddingData {
    std::vector<std::array<double, 2>> real_points, synth_points;
    std::optional<metrics::Conic> real_ellipse, synth_ellipse;
    bool rank_deficient = false;
};

inline ordered_json report_to_json(const MetricsReport& r) {
    ordered_json j;
    auto put = [&j](const char* key, double v) {
        if (v < 0)
            j[key] = nullptr;
        else
            j[key] = v;
    };
    put("fid_holistic", r.fid_holistic);
    put("fid_localized", r.fid_localized);
    put("mmd_holistic", r.mmd_holistic);
    put("mmd_localized", r.mmd_localized);
    put("ms_ssim", r.ms_ssim);
    j["pair_count"] = r.pair_count;
    j["msssim_scales_used"] = r.msssim_scales_used;
    j["real_count"] = r.real_count;
    j["synth_count"] = r.synth_count;
    j["extractor_hash"] = r.extractor_hash;
    j["config_hash"] = r.config_hash;
    j["errors"] = r.errors;
    return j;
}

inline MetricsReport report_from_json(const ordered_json& j) {
    MetricsReport r;
    auto get = [&j](const char* key) { return j.at(key).is_null() ? -1.0 : j.at(key).get<double>(); };
    r.fid_holistic = get("fid_holistic");
    r.fid_localized = get("fid_localized");
    r.mmd_holistic = get("mmd_holistic");
    r.mmd_localized = get("mmd_localized");
    r.ms_ssim = get("ms_ssim");
    r.pair_count = j.at("pair_count").get<int>();
    r.msssim_scales_used = j.at("msssim_scales_used").get<int>();
    r.real_count = j.at("real_count").get<int>();
    r.synth_count = j.at("synth_count").get<int>();
    r.extractor_hash = j.at("extractor_hash").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& e : j.at("errors")) r.errors.push_back(e.get<std::string>());
    return r;
}

inline std::vector<Volume> load_volumes(const fs::path& dir) {
    const io::DatasetMeta meta = io::read_manifest(dir);
    std::vector<Volume> out;
    out.reserve(static_cast<size_t>(meta.count));
    for (int i = 0; i < meta.count; ++i) out.push_back(io::read_volume(dir, i, meta));
    return out;
}

inline std::vector<LabelMask> load_masks(const fs::path& dir) {
    const io::DatasetMeta meta = io::read_manifest(dir);
    std::vector<LabelMask> out;
    out.reserve(static_cast<size_t>(meta.count));
    for (int i = 0; i < meta.count; ++i) out.push_back(io::read_mask(dir, i, meta));
    return out;
}

struct EvalResult {
    MetricsReport report;
    EmbeddingData embedding;
};

inline EvalResult evaluate_sets(const std::vector<Volume>& real, const std::vector<Volume>& synth,
                                const std::vector<LabelMask>& masks, const EvalConfig& cfg) {
    if (real.size() < 2 || synth.size() < 2) throw ConfigError("evaluate: need at least 2 volumes per set");
    if (real[0].shape != synth[0].shape)
        throw ConfigError("evaluate: real geometry " + io::shape_str(real[0].shape) + " != synth geometry " +
                          io::shape_str(synth[0].shape) + "; refusing to compare mismatched artifacts");
    if (!masks.empty() && masks[0].shape != real[0].shape)
        throw ConfigError("evaluate: maskset geometry does not match the volumes");

    metrics::FeatureExtractor extractor(cfg.extractor_seed);
    EvalResult out;
    out.report.extractor_hash = extractor.id;
    out.report.config_hash = cfg.config_hash;
    out.report.real_count = static_cast<int>(real.size());
    out.report.synth_count = static_cast<int>(synth.size());

    metrics::FeatureSet f_real, f_synth;
    bool have_features = false;
    try {
        f_real = extractor.extract(real);
        f_synth = extractor.extract(synth);
        have_features = true;
        out.report.fid_holistic = metrics::fid(f_real, f_synth);
        out.report.mmd_holistic = metrics::mmd(f_real, f_synth);
    } catch (const std::exception& e) {
        out.report.errors.push_back(std::string("holistic: ") + e.what());
    }

    try {
        if (masks.empty()) throw ConfigError("no masks supplied");
        const BBox box = metrics::union_bbox(masks, cfg.organ_label);
        const auto real_crops = metrics::localized_crop(real, box);
        const auto synth_crops = metrics::localized_crop(synth, box);
        const auto fr = extractor.extract(real_crops);
        const auto fsyn = extractor.extract(synth_crops);
        out.report.fid_localized = metrics::fid(fr, fsyn);
        out.report.mmd_localized = metrics::mmd(fr, fsyn);
    } catch (const std::exception& e) {
        out.report.errors.push_back(std::string("localized: ") + e.what());
    }

    try {
        const auto ms = metrics::ms_ssim_pairs(synth, cfg.n_pairs, cfg.seed, cfg.msssim_scales);
        out.report.ms_ssim = ms.value;
        out.report.pair_count = ms.pair_count;
        out.report.msssim_scales_used = ms.scales_used;
    } catch (const std::exception& e) {
        out.report.errors.push_back(std::string("ms_ssim: ") + e.what());
    }

    if (have_features) {
        try {
            metrics::FeatureSet pooled;
            pooled.n = f_real.n + f_synth.n;
            pooled.f = f_real.f;
            pooled.extractor_id = extractor.id;
            pooled.data = f_real.data;
            pooled.data.insert(pooled.data.end(), f_synth.data.begin(), f_synth.data.end());
            const auto mds = metrics::mds_embed(pooled);
            out.embedding.rank_deficient = mds.rank_deficient;
            out.embedding.real_points.assign(mds.points.begin(), mds.points.begin() + f_real.n);
            out.embedding.synth_points.assign(mds.points.begin() + f_real.n, mds.points.end());
            if (out.embedding.real_points.size() >= 5)
                out.embedding.real_ellipse = metrics::ellipse_fit(out.embedding.real_points);
            if (out.embedding.synth_points.size() >= 5)
                out.embedding.synth_ellipse = metrics::ellipse_fit(out.embedding.synth_points);
        } catch (const std::exception& e) {
            out.report.errors.push_back(std::string("embedding: ") + e.what());
        }
    }
    return out;
}

inline EvalResult evaluate(const fs::path& real_dir, const fs::path& synth_dir, const fs::path& masks_dir,
                           const EvalConfig& cfg) {
    return evaluate_sets(load_volumes(real_dir), load_volumes(synth_dir), load_masks(masks_dir), cfg);
}

inline void write_report(const fs::path& path, const MetricsReport& r) {
    io::atomic_write(path, report_to_json(r).dump(2) + "\n");
}

inline MetricsReport read_report(const fs::path& path) {
    return report_from_json(ordered_json::parse(io::read_file(path)));
}

// Plain-text embedding file: comment header with the ellipse conics, then one
// "x y set" row per point.
inline void write_embedding(const fs::path& path, const EmbeddingData& e) {
    std::ostringstream os;
    os.precision(12);
    os << "# lad embedding: columns x y set\n";
    auto put_ellipse = [&os](const char* name, const std::optional<metrics::Conic>& c) {
        if (!c) return;
        os << "# ellipse " << name << ": " << c->a << " " << c->b << " " << c->c << " " << c->d << " " << c->e << " "
           << c->f << "\n";
    };
    put_ellipse("real", e.real_ellipse);
    put_ellipse("synth", e.synth_ellipse);
    for (const auto& p : e.real_points) os << p[0] << " " << p[1] << " real\n";
    for (const auto& p : e.synth_points) os << p[0] << " " << p[1] << " synth\n";
    io::atomic_write(path, os.str());
}

// Parses the data rows back into N x 2 points (labels returned alongside).
inline std::vector<std::array<double, 2>> read_embedding(const fs::path& path,
                                                         std::vector<std::string>* labels = nullptr) {
    std::istringstream is(io::read_file(path));
    std::vector<std::array<double, 2>> pts;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        double x = 0, y = 0;
        std::string label;
        if (!(row >> x >> y >> label)) throw IoError("bad embedding row: " + line);
        pts.push_back({x, y});
        if (labels) labels->push_back(label);
    }
    return pts;
}

}  // namespace lad::evaluate
