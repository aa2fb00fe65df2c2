#include <gtest/gtest.h>

#include <filesystem>

#include "lad/evaluate.hpp"
#include "lad/metrics.hpp"
#include "lad/phantom.hpp"

using namespace lad;
using namespace lad::metrics;
namespace fs = std::filesystem;

namespace {

FeatureSet make_features(int n, int f, Rng& rng, double mean = 0.0, double scale = 1.0) {
    FeatureSet s;
    s.n = n;
    s.f = f;
    s.extractor_id = "test";
    s.data.resize(static_cast<size_t>(n) * f);
    for (auto& x : s.data) x = mean + scale * rng.normal();
    return s;
}

std::vector<Volume> phantom_volumes(int count, std::uint64_t seed0) {
    phantom::PhantomSpec spec;
    spec.shape = {16, 32, 32};
    std::vector<Volume> out;
    for (int i = 0; i < count; ++i) {
        auto [raw, mask] = phantom::generate_phantom(seed0 + static_cast<std::uint64_t>(i), spec);
        out.push_back(phantom::truncate_normalize(raw, -1000, 400));
    }
    return out;
}

std::vector<LabelMask> phantom_masks(int count, std::uint64_t seed0) {
    phantom::PhantomSpec spec;
    spec.shape = {16, 32, 32};
    std::vector<LabelMask> out;
    for (int i = 0; i < count; ++i) {
        auto [raw, mask] = phantom::generate_phantom(seed0 + static_cast<std::uint64_t>(i), spec);
        out.push_back(mask);
    }
    return out;
}

}  // namespace

TEST(FeatureExtractor, DeterministicWidthAndSensitivity) {
    FeatureExtractor ex;
    auto vols = phantom_volumes(2, 0);
    FeatureSet a = ex.extract(vols);
    FeatureSet b = ex.extract(vols);
    EXPECT_EQ(a.data, b.data);
    EXPECT_EQ(a.f, 256);
    EXPECT_EQ(a.n, 2);
    EXPECT_FALSE(ex.id.empty());

    // one voxel changed by 0.5 -> feature row differs
    std::vector<Volume> perturbed = vols;
    perturbed[0].data[1234] = std::clamp(perturbed[0].data[1234] + 0.5f, 0.0f, 1.0f);
    FeatureSet c = ex.extract(perturbed);
    bool any_diff = false;
    for (int k = 0; k < a.f; ++k) any_diff |= (a.row(0)[k] != c.row(0)[k]);
    EXPECT_TRUE(any_diff);

    std::vector<Volume> mixed = {vols[0], Volume(8, 8, 8)};
    EXPECT_THROW(ex.extract(mixed), ShapeError);
    EXPECT_THROW(ex.extract({}), ConfigError);
}

TEST(Fid, SelfDistanceIsZero) {
    Rng rng(1);
    FeatureSet x = make_features(20, 8, rng);
    EXPECT_LE(fid(x, x), 1e-6);
}

TEST(Fid, OneDimensionalClosedForm) {
    // analytic moments: a has mean 0, var 1 (N-1 normalization); b has mean 1, var 1
    FeatureSet a, b;
    a.n = b.n = 3;
    a.f = b.f = 1;
    a.data = {-1.0, 0.0, 1.0};
    b.data = {0.0, 1.0, 2.0};
    EXPECT_NEAR(fid(a, b), 1.0, 1e-9);
}

TEST(Fid, OrthogonalInvariance) {
    Rng rng(2);
    const int f = 6;
    FeatureSet a = make_features(30, f, rng, 0.0, 1.0);
    FeatureSet b = make_features(25, f, rng, 0.5, 1.3);
    const double base = fid(a, b);

    // random orthogonal transform via QR
    Eigen::MatrixXd g(f, f);
    for (int i = 0; i < f; ++i)
        for (int j = 0; j < f; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();

    auto rotate = [&](const FeatureSet& s) {
        FeatureSet out = s;
        for (int i = 0; i < s.n; ++i) {
            Eigen::Map<const Eigen::VectorXd> row(s.row(i), f);
            Eigen::VectorXd r = q * row;
            for (int k = 0; k < f; ++k) out.row(i)[k] = r(k);
        }
        return out;
    };
    EXPECT_NEAR(fid(rotate(a), rotate(b)), base, 1e-5);
}

TEST(Mmd, SymmetryAndSeparation) {
    Rng rng(3);
    FeatureSet a = make_features(24, 6, rng, 0.0);
    FeatureSet b = make_features(20, 6, rng, 0.2);
    EXPECT_NEAR(mmd(a, b), mmd(b, a), 1e-12);  // symmetric up to summation order

    // planted far separation: strongly positive
    FeatureSet far = make_features(20, 6, rng, 8.0);
    EXPECT_GT(mmd(a, far), 0.1);
    EXPECT_GE(mmd(a, b), 0.0);
}

TEST(Mmd, SelfSplitWithinPermutationNullBand) {
    // 95th percentile of 100 null splits; fresh 100 splits exceed it <= 10 times
    Rng rng(4);
    FeatureSet x = make_features(60, 6, rng);

    auto split_mmd = [&](Rng& r) {
        std::vector<int> idx(60);
        for (int i = 0; i < 60; ++i) idx[static_cast<size_t>(i)] = i;
        for (int i = 59; i > 0; --i) std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(r.uniform_int(i + 1))]);
        FeatureSet a, b;
        a.n = b.n = 30;
        a.f = b.f = 6;
        for (int i = 0; i < 30; ++i) {
            for (int k = 0; k < 6; ++k) {
                a.data.push_back(x.row(idx[static_cast<size_t>(i)])[k]);
                b.data.push_back(x.row(idx[static_cast<size_t>(30 + i)])[k]);
            }
        }
        return mmd(a, b);
    };

    Rng null_rng(substream_seed(7, "null"));
    std::vector<double> null_vals;
    for (int i = 0; i < 100; ++i) null_vals.push_back(split_mmd(null_rng));
    std::sort(null_vals.begin(), null_vals.end());
    const double threshold = null_vals[94];

    Rng test_rng(substream_seed(7, "test"));
    int exceed = 0;
    for (int i = 0; i < 100; ++i) exceed += split_mmd(test_rng) > threshold;
    EXPECT_LE(exceed, 10);
}

TEST(Mmd, ZeroBandwidthFallback) {
    FeatureSet a, b;
    a.n = b.n = 3;
    a.f = b.f = 2;
    a.data = {1, 1, 1, 1, 1, 1};
    b.data = {1, 1, 1, 1, 1, 1};
    bool flagged = false;
    MmdOptions opt;
    opt.zero_bandwidth_flag = &flagged;
    EXPECT_DOUBLE_EQ(mmd(a, b, opt), 0.0);
    EXPECT_TRUE(flagged);
}

TEST(MsSsim, SelfSimilarityIsExactlyOne) {
    auto vols = phantom_volumes(1, 5);
    auto r = ms_ssim(vols[0], vols[0]);
    EXPECT_EQ(r.value, 1.0);
    EXPECT_EQ(r.scales_used, 3);
}

TEST(MsSsim, ConstantZeroVsOneNearZero) {
    Volume z(16, 32, 32), o(16, 32, 32);
    for (auto& v : o.data) v = 1.0f;
    auto r = ms_ssim(z, o);
    EXPECT_LT(r.value, 0.05);
    EXPECT_GT(r.value, 0.0);
}

TEST(MsSsim, ScaleReductionOnTinyVolumes) {
    Volume a(4, 6, 6), b(4, 6, 6);
    Rng rng(6);
    for (auto& v : a.data) v = static_cast<float>(rng.uniform());
    for (auto& v : b.data) v = static_cast<float>(rng.uniform());
    auto r = ms_ssim(a, b, 3);
    EXPECT_EQ(r.scales_used, 1);  // a second scale would shrink below 4 voxels
}

TEST(MsSsim, SeededPairsDeterministic) {
    auto vols = phantom_volumes(5, 10);
    auto a = ms_ssim_pairs(vols, 6, 42);
    auto b = ms_ssim_pairs(vols, 6, 42);
    EXPECT_EQ(a.value, b.value);
    auto c = ms_ssim_pairs(vols, 6, 43);
    EXPECT_NE(a.value, c.value);
    EXPECT_THROW(ms_ssim_pairs({vols[0]}, 4, 1), ConfigError);
}

TEST(UnionBbox, SingletonAndDisjointCorners) {
    LabelMask m(8, 8, 8);
    m.at(2, 3, 4) = 1;
    m.at(3, 4, 5) = 1;
    BBox single = union_bbox({m}, 1);
    auto tight = codec::mask_bbox(m, 0);
    EXPECT_EQ(single.lo, tight->lo);
    EXPECT_EQ(single.hi, tight->hi);

    LabelMask a(32, 64, 64), b(32, 64, 64);
    a.at(2, 2, 2) = 1;
    b.at(30, 60, 60) = 1;
    BBox u = union_bbox({a, b}, 1);
    EXPECT_EQ(u.lo, (std::array<int, 3>{2, 2, 2}));
    EXPECT_EQ(u.hi, (std::array<int, 3>{31, 61, 61}));

    // adding a mask inside the current box leaves it unchanged
    LabelMask c(32, 64, 64);
    c.at(15, 30, 30) = 1;
    BBox u2 = union_bbox({a, b, c}, 1);
    EXPECT_EQ(u2.lo, u.lo);
    EXPECT_EQ(u2.hi, u.hi);

    EXPECT_THROW(union_bbox({a, b}, 2), ConfigError);
}

TEST(UnionBbox, MatchesBruteForceOnRandomMasksets) {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<LabelMask> masks;
        const int n = 1 + rng.uniform_int(4);
        bool has_label = false;
        for (int i = 0; i < n; ++i) {
            LabelMask m(6, 7, 8);
            for (auto& v : m.data) v = rng.uniform() < 0.04 ? 1 : 0;
            has_label |= m.count_label(1) > 0;
            masks.push_back(std::move(m));
        }
        if (!has_label) {
            EXPECT_THROW(union_bbox(masks, 1), ConfigError);
            continue;
        }
        BBox got = union_bbox(masks, 1);
        int lo[3] = {99, 99, 99}, hi[3] = {0, 0, 0};
        for (const auto& m : masks)
            for (int z = 0; z < 6; ++z)
                for (int y = 0; y < 7; ++y)
                    for (int x = 0; x < 8; ++x)
                        if (m.at(z, y, x) == 1) {
                            lo[0] = std::min(lo[0], z); hi[0] = std::max(hi[0], z + 1);
                            lo[1] = std::min(lo[1], y); hi[1] = std::max(hi[1], y + 1);
                            lo[2] = std::min(lo[2], x); hi[2] = std::max(hi[2], x + 1);
                        }
        for (int k = 0; k < 3; ++k) {
            EXPECT_EQ(got.lo[static_cast<size_t>(k)], lo[k]);
            EXPECT_EQ(got.hi[static_cast<size_t>(k)], hi[k]);
        }
    }
}

TEST(LocalizedCrop, IdentityShapeAndIdempotence) {
    auto vols = phantom_volumes(2, 20);
    BBox full{{0, 0, 0}, {16, 32, 32}};
    auto same = localized_crop(vols, full);
    EXPECT_EQ(same[0].data, vols[0].data);

    BBox box{{2, 4, 6}, {10, 20, 30}};
    auto crops = localized_crop(vols, box);
    for (const auto& c : crops) EXPECT_EQ(c.shape, (std::array<int, 3>{8, 16, 24}));

    BBox box_rel{{0, 0, 0}, {8, 16, 24}};
    auto twice = localized_crop(crops, box_rel);
    EXPECT_EQ(twice[0].data, crops[0].data);

    BBox oob{{0, 0, 0}, {17, 32, 32}};
    EXPECT_THROW(localized_crop(vols, oob), ShapeError);
}

TEST(Mds, PlanarDistancePreservation) {
    // features ARE 2-D points of a 3-4-5 triangle; embedding must reproduce distances
    FeatureSet f;
    f.n = 3;
    f.f = 2;
    f.data = {0, 0, 3, 0, 0, 4};
    auto res = mds_embed(f);
    auto dist = [&](int i, int j) {
        const double dx = res.points[static_cast<size_t>(i)][0] - res.points[static_cast<size_t>(j)][0];
        const double dy = res.points[static_cast<size_t>(i)][1] - res.points[static_cast<size_t>(j)][1];
        return std::sqrt(dx * dx + dy * dy);
    };
    EXPECT_NEAR(dist(0, 1), 3.0, 1e-6);
    EXPECT_NEAR(dist(0, 2), 4.0, 1e-6);
    EXPECT_NEAR(dist(1, 2), 5.0, 1e-6);

    // double-centering forces zero column means
    double mean_x = 0, mean_y = 0;
    for (const auto& p : res.points) {
        mean_x += p[0] / 3;
        mean_y += p[1] / 3;
    }
    EXPECT_NEAR(mean_x, 0.0, 1e-9);
    EXPECT_NEAR(mean_y, 0.0, 1e-9);
}

TEST(Mds, DuplicatedRowsAndRankDeficiency) {
    Rng rng(8);
    FeatureSet f = make_features(5, 3, rng);
    FeatureSet dup = f;
    dup.n = 10;
    dup.data.insert(dup.data.end(), f.data.begin(), f.data.end());
    auto res = mds_embed(dup);
    for (int i = 0; i < 5; ++i) {
        EXPECT_NEAR(res.points[static_cast<size_t>(i)][0], res.points[static_cast<size_t>(i + 5)][0], 1e-9);
        EXPECT_NEAR(res.points[static_cast<size_t>(i)][1], res.points[static_cast<size_t>(i + 5)][1], 1e-9);
    }

    // collinear points: second axis zero, flagged
    FeatureSet line;
    line.n = 4;
    line.f = 2;
    line.data = {0, 0, 1, 0, 2, 0, 3, 0};
    auto lr = mds_embed(line);
    EXPECT_TRUE(lr.rank_deficient);
    for (const auto& p : lr.points) EXPECT_NEAR(p[1], 0.0, 1e-9);

    EXPECT_THROW(mds_embed(make_features(2, 2, rng)), ConfigError);
}

TEST(Ellipse, RecoversKnownSemiAxes) {
    // x^2/4 + y^2 = 1
    std::vector<std::array<double, 2>> pts;
    for (int i = 0; i < 24; ++i) {
        const double t = 2 * M_PI * i / 24;
        pts.push_back({2.0 * std::cos(t), std::sin(t)});
    }
    Conic c = ellipse_fit(pts);
    EXPECT_LT(c.discriminant(), 0.0);
    EXPECT_NEAR(c.a + c.c, 1.0, 1e-12);
    auto ax = ellipse_axes(c);
    EXPECT_NEAR(ax.semi_major, 2.0, 1e-3);
    EXPECT_NEAR(ax.semi_minor, 1.0, 1e-3);
    EXPECT_NEAR(ax.center_x, 0.0, 1e-6);
    EXPECT_NEAR(ax.center_y, 0.0, 1e-6);
}

TEST(Ellipse, RotationInvarianceOfAxes) {
    Rng rng(9);
    std::vector<std::array<double, 2>> pts;
    for (int i = 0; i < 40; ++i) {
        const double t = 2 * M_PI * i / 40;
        pts.push_back({3.0 * std::cos(t) + 1.0, 1.5 * std::sin(t) - 2.0});
    }
    auto ax0 = ellipse_axes(ellipse_fit(pts));

    const double phi = 0.7;
    std::vector<std::array<double, 2>> rot;
    for (const auto& p : pts)
        rot.push_back({std::cos(phi) * p[0] - std::sin(phi) * p[1], std::sin(phi) * p[0] + std::cos(phi) * p[1]});
    auto ax1 = ellipse_axes(ellipse_fit(rot));
    EXPECT_NEAR(ax1.semi_major, ax0.semi_major, 1e-3);
    EXPECT_NEAR(ax1.semi_minor, ax0.semi_minor, 1e-3);
}

TEST(Ellipse, CircleAndDegenerateCases) {
    std::vector<std::array<double, 2>> circle;
    for (int i = 0; i < 16; ++i) {
        const double t = 2 * M_PI * i / 16;
        circle.push_back({std::cos(t), std::sin(t)});
    }
    Conic c = ellipse_fit(circle);
    EXPECT_NEAR(c.a, c.c, 1e-9);
    EXPECT_NEAR(c.b, 0.0, 1e-9);

    std::vector<std::array<double, 2>> line = {{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}};
    EXPECT_THROW(ellipse_fit(line), ConfigError);
    EXPECT_THROW(ellipse_fit({{0, 0}, {1, 1}}), ConfigError);
}

TEST(Evaluate, SelfComparisonIdentities) {
    auto vols = phantom_volumes(8, 30);
    auto masks = phantom_masks(8, 30);
    evaluate::EvalConfig cfg;
    cfg.n_pairs = 12;
    auto res = evaluate::evaluate_sets(vols, vols, masks, cfg);
    EXPECT_TRUE(res.report.all_ok());
    EXPECT_LE(res.report.fid_holistic, 1e-6);
    EXPECT_LE(res.report.mmd_holistic, 1e-9);
    EXPECT_LE(res.report.fid_localized, 1e-6);
    EXPECT_GT(res.report.ms_ssim, 0.0);
    EXPECT_LT(res.report.ms_ssim, 1.0);  // distinct phantom pairs are not identical
    EXPECT_FALSE(res.report.extractor_hash.empty());
}

TEST(Evaluate, NoiseVolumesScoreWorseThanHeldOutReal) {
    auto real = phantom_volumes(8, 40);
    auto held_out = phantom_volumes(8, 60);
    auto masks = phantom_masks(8, 40);

    Rng rng(11);
    std::vector<Volume> noise;
    for (int i = 0; i < 8; ++i) {
        Volume v(16, 32, 32);
        for (auto& x : v.data) x = static_cast<float>(std::clamp(0.5 + 0.3 * rng.normal(), 0.0, 1.0));
        noise.push_back(std::move(v));
    }

    evaluate::EvalConfig cfg;
    cfg.n_pairs = 8;
    auto r_real = evaluate::evaluate_sets(real, held_out, masks, cfg);
    auto r_noise = evaluate::evaluate_sets(real, noise, masks, cfg);
    EXPECT_GT(r_noise.report.fid_holistic, r_real.report.fid_holistic);
    EXPECT_GT(r_noise.report.mmd_holistic, r_real.report.mmd_holistic);
}

TEST(Evaluate, GeometryMismatchRefused) {
    auto real = phantom_volumes(2, 40);
    std::vector<Volume> synth = {Volume(8, 16, 16), Volume(8, 16, 16)};
    EXPECT_THROW(evaluate::evaluate_sets(real, synth, {}, evaluate::EvalConfig{}), ConfigError);
}

TEST(Evaluate, ReportAndEmbeddingRoundTrip) {
    auto vols = phantom_volumes(6, 50);
    auto masks = phantom_masks(6, 50);
    evaluate::EvalConfig cfg;
    cfg.n_pairs = 6;
    cfg.config_hash = "cafef00d";
    auto res = evaluate::evaluate_sets(vols, phantom_volumes(6, 70), masks, cfg);

    const fs::path dir = fs::temp_directory_path() / "lad_test_metrics";
    fs::create_directories(dir);
    evaluate::write_report(dir / "report.json", res.report);
    auto back = evaluate::read_report(dir / "report.json");
    EXPECT_EQ(back.fid_holistic, res.report.fid_holistic);
    EXPECT_EQ(back.config_hash, "cafef00d");

    evaluate::write_embedding(dir / "embedding.txt", res.embedding);
    std::vector<std::string> labels;
    auto pts = evaluate::read_embedding(dir / "embedding.txt", &labels);
    EXPECT_EQ(pts.size(), 12u);
    EXPECT_EQ(labels[0], "real");
    EXPECT_EQ(labels.back(), "synth");
    fs::remove_all(dir);
}
