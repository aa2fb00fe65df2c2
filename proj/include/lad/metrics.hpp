#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lad/codec.hpp"
#include "lad/core/io.hpp"
#include "lad/core/nn.hpp"
#include "lad/volume.hpp"

// Evaluation protocol: FID and unbiased MMD over features of a fixed-seed
// random 3D conv net (its parameter hash is stamped into every report, so
// numbers are only comparable within one extractor), MS-SSIM over synthetic
// pairs as the diversity proxy, localized variants via the maskset union
// bounding box, and classical MDS with a direct least-squares ellipse fit for
// the embedding figure.

namespace lad::metrics {

namespace fs = std::filesystem;

// -------------------------------------------------------------- feature set

struct FeatureSet {
    int n = 0, f = 0;
    std::vector<double> data;  // row major, n x f
    std::string extractor_id;

    const double* row(int i) const { return &data[static_cast<size_t>(i) * f]; }
    double* row(int i) { return &data[static_cast<size_t>(i) * f]; }
};

inline constexpr std::uint64_t kDefaultExtractorSeed = 0xfea7ull;

struct FeatureExtractor {
    nn::Conv3d c0, c1, c2, c3;
    std::string id;

    explicit FeatureExtractor(std::uint64_t seed = kDefaultExtractorSeed) {
        Rng rng(substream_seed(seed, "feature-extractor"));
        c0 = nn::Conv3d(1, 16, 3, 2, 1, rng);
        c1 = nn::Conv3d(16, 32, 3, 2, 1, rng);
        c2 = nn::Conv3d(32, 64, 3, 2, 1, rng);
        c3 = nn::Conv3d(64, 256, 3, 2, 1, rng);
        nn::NamedParams ps;
        c0.collect("c0", ps);
        c1.collect("c1", ps);
        c2.collect("c2", ps);
        c3.collect("c3", ps);
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& [name, p] : ps) {
            h = fnv1a64(name, h);
            h = fnv1a64(p->val.v.data(), p->val.v.size() * sizeof(float), h);
        }
        id = hash_hex(h);
        for (auto& [name, p] : ps) p->requires_grad = false;
    }

    std::vector<double> extract_one(const Tensor& x) const {
        Tape tp;
        tp.recording = false;
        Var h = ops::tanh_op(tp, c0(tp, make_leaf(x)));
        h = ops::tanh_op(tp, c1(tp, h));
        h = ops::tanh_op(tp, c2(tp, h));
        h = ops::tanh_op(tp, c3(tp, h));
        Var pooled = ops::global_avg_pool(tp, h);
        std::vector<double> out(pooled->val.v.begin(), pooled->val.v.end());
        return out;
    }

    FeatureSet extract(const std::vector<Volume>& volumes) const {
        if (volumes.empty()) throw ConfigError("feature_extract: empty volume list");
        for (const auto& v : volumes)
            if (v.shape != volumes[0].shape)
                throw ShapeError("feature_extract: non-uniform volume shapes in one set");
        FeatureSet fsout;
        fsout.n = static_cast<int>(volumes.size());
        fsout.f = 256;
        fsout.extractor_id = id;
        fsout.data.reserve(static_cast<size_t>(fsout.n) * fsout.f);
        for (const auto& v : volumes) {
            auto row = extract_one(to_tensor(v));
            fsout.data.insert(fsout.data.end(), row.begin(), row.end());
        }
        return fsout;
    }
};

// --------------------------------------------------------------------- FID

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2), covariances with
// the N-1 normalization plus 1e-6 I regularization on both sides.
inline double fid(const FeatureSet& a, const FeatureSet& b) {
    if (a.n < 2 || b.n < 2) throw ConfigError("fid: need at least 2 samples per set");
    if (a.f != b.f) throw ShapeError("fid: feature widths differ");
    const int F = a.f;

    auto moments = [F](const FeatureSet& s, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(s.data.data(), s.n,
                                                                                                   F);
        mu = X.colwise().mean();
        Eigen::MatrixXd centered = X.rowwise() - mu.transpose();
        cov = centered.transpose() * centered / static_cast<double>(s.n - 1);
        cov.diagonal().array() += 1e-6;  // regularization so degenerate sets never throw
    };

    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a, cov_b;
    moments(a, mu_a, cov_a);
    moments(b, mu_b, cov_b);

    const double mean_term = (mu_a - mu_b).squaredNorm();

    // sqrt(Sa) via eigendecomposition, then Tr sqrt of the symmetrized product
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(cov_a);
    Eigen::VectorXd ev_a = es_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd sqrt_a = es_a.eigenvectors() * ev_a.asDiagonal() * es_a.eigenvectors().transpose();
    Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
    inner = 0.5 * (inner + inner.transpose());  // symmetrize against rounding
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_i(inner);
    const double tr_sqrt = es_i.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double value = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, value);
}

// --------------------------------------------------------------------- MMD

struct MmdOptions {
    bool* zero_bandwidth_flag = nullptr;
};

// Unbiased squared-MMD U-statistic, RBF kernel, bandwidth = median pairwise
// distance over the pooled set (fallback 1 when all points coincide).
inline double mmd(const FeatureSet& a, const FeatureSet& b, MmdOptions opt = {}) {
    if (a.n < 2 || b.n < 2) throw ConfigError("mmd: need at least 2 samples per set");
    if (a.f != b.f) throw ShapeError("mmd: feature widths differ");
    const int m = a.n, n = b.n, F = a.f;

    auto dist2 = [F](const double* x, const double* y) {
        double acc = 0.0;
        for (int k = 0; k < F; ++k) {
            const double d = x[k] - y[k];
            acc += d * d;
        }
        return acc;
    };

    std::vector<const double*> pooled;
    pooled.reserve(static_cast<size_t>(m + n));
    for (int i = 0; i < m; ++i) pooled.push_back(a.row(i));
    for (int i = 0; i < n; ++i) pooled.push_back(b.row(i));
    std::vector<double> dists;
    dists.reserve(static_cast<size_t>(m + n) * (m + n - 1) / 2);
    for (size_t i = 0; i < pooled.size(); ++i)
        for (size_t j = i + 1; j < pooled.size(); ++j) dists.push_back(std::sqrt(dist2(pooled[i], pooled[j])));
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2), dists.end());
    double bw = dists[dists.size() / 2];
    if (bw <= 0.0) {
        bw = 1.0;
        if (opt.zero_bandwidth_flag) *opt.zero_bandwidth_flag = true;
    } else if (opt.zero_bandwidth_flag) {
        *opt.zero_bandwidth_flag = false;
    }
    const double gamma = 1.0 / (2.0 * bw * bw);
    auto kern = [&](const double* x, const double* y) { return std::exp(-gamma * dist2(x, y)); };

    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            if (i != j) kxx += kern(a.row(i), a.row(j));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) kyy += kern(b.row(i), b.row(j));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) kxy += kern(a.row(i), b.row(j));
    const double u = kxx / (static_cast<double>(m) * (m - 1)) + kyy / (static_cast<double>(n) * (n - 1)) -
                     2.0 * kxy / (static_cast<double>(m) * n);
    return std::max(0.0, u);
}

// ----------------------------------------------------------------- MS-SSIM

namespace detail {

struct Grid3 {
    int d = 0, h = 0, w = 0;
    std::vector<double> v;
    Grid3() = default;
    Grid3(int d_, int h_, int w_) : d(d_), h(h_), w(w_), v(static_cast<size_t>(d_) * h_ * w_, 0.0) {}
    double at(int z, int y, int x) const { return v[(static_cast<size_t>(z) * h + y) * w + x]; }
    double& at(int z, int y, int x) { return v[(static_cast<size_t>(z) * h + y) * w + x]; }
};

inline std::vector<double> gaussian_kernel_1d(int size, double sigma) {
    std::vector<double> k(static_cast<size_t>(size));
    const int r = size / 2;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        const double x = i - r;
        k[static_cast<size_t>(i)] = std::exp(-0.5 * x * x / (sigma * sigma));
        sum += k[static_cast<size_t>(i)];
    }
    for (auto& x : k) x /= sum;
    return k;
}

// separable valid-region Gaussian filtering with edge clamping
inline Grid3 gauss_filter(const Grid3& g, const std::array<int, 3>& ksize, double sigma) {
    Grid3 a(g.d, g.h, g.w), b(g.d, g.h, g.w), c(g.d, g.h, g.w);
    const auto kd = gaussian_kernel_1d(ksize[0], sigma), kh = gaussian_kernel_1d(ksize[1], sigma),
               kw = gaussian_kernel_1d(ksize[2], sigma);
    const int rd = ksize[0] / 2, rh = ksize[1] / 2, rw = ksize[2] / 2;
    for (int z = 0; z < g.d; ++z)
        for (int y = 0; y < g.h; ++y)
            for (int x = 0; x < g.w; ++x) {
                double acc = 0;
                for (int i = 0; i < ksize[2]; ++i) acc += kw[static_cast<size_t>(i)] * g.at(z, y, std::clamp(x + i - rw, 0, g.w - 1));
                a.at(z, y, x) = acc;
            }
    for (int z = 0; z < g.d; ++z)
        for (int y = 0; y < g.h; ++y)
            for (int x = 0; x < g.w; ++x) {
                double acc = 0;
                for (int i = 0; i < ksize[1]; ++i) acc += kh[static_cast<size_t>(i)] * a.at(z, std::clamp(y + i - rh, 0, g.h - 1), x);
                b.at(z, y, x) = acc;
            }
    for (int z = 0; z < g.d; ++z)
        for (int y = 0; y < g.h; ++y)
            for (int x = 0; x < g.w; ++x) {
                double acc = 0;
                for (int i = 0; i < ksize[0]; ++i) acc += kd[static_cast<size_t>(i)] * b.at(std::clamp(z + i - rd, 0, g.d - 1), y, x);
                c.at(z, y, x) = acc;
            }
    return c;
}

inline Grid3 downsample2(const Grid3& g) {
    Grid3 out(std::max(1, g.d / 2), std::max(1, g.h / 2), std::max(1, g.w / 2));
    for (int z = 0; z < out.d; ++z)
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) {
                double acc = 0;
                int cnt = 0;
                for (int dz = 0; dz < 2; ++dz)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const int zz = 2 * z + dz, yy = 2 * y + dy, xx = 2 * x + dx;
                            if (zz < g.d && yy < g.h && xx < g.w) {
                                acc += g.at(zz, yy, xx);
                                ++cnt;
                            }
                        }
                out.at(z, y, x) = acc / cnt;
            }
    return out;
}

struct SsimComponents {
    double luminance = 0, contrast_structure = 0;
};

inline SsimComponents ssim_components(const Grid3& x, const Grid3& y) {
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // data range 1
    auto odd_le = [](int n, int cap) {
        int k = std::min(cap, n);
        if (k % 2 == 0) --k;
        return std::max(1, k);
    };
    const std::array<int, 3> ks{odd_le(x.d, 11), odd_le(x.h, 11), odd_le(x.w, 11)};
    const double sigma = 1.5;

    Grid3 xx(x.d, x.h, x.w), yy(x.d, x.h, x.w), xy(x.d, x.h, x.w);
    for (size_t i = 0; i < x.v.size(); ++i) {
        xx.v[i] = x.v[i] * x.v[i];
        yy.v[i] = y.v[i] * y.v[i];
        xy.v[i] = x.v[i] * y.v[i];
    }
    Grid3 mu_x = gauss_filter(x, ks, sigma), mu_y = gauss_filter(y, ks, sigma);
    Grid3 sxx = gauss_filter(xx, ks, sigma), syy = gauss_filter(yy, ks, sigma), sxy = gauss_filter(xy, ks, sigma);

    double l_acc = 0, cs_acc = 0;
    for (size_t i = 0; i < x.v.size(); ++i) {
        const double mx = mu_x.v[i], my = mu_y.v[i];
        const double vx = sxx.v[i] - mx * mx, vy = syy.v[i] - my * my, cov = sxy.v[i] - mx * my;
        l_acc += (2 * mx * my + c1) / (mx * mx + my * my + c1);
        cs_acc += (2 * cov + c2) / (vx + vy + c2);
    }
    SsimComponents out;
    out.luminance = l_acc / static_cast<double>(x.v.size());
    out.contrast_structure = cs_acc / static_cast<double>(x.v.size());
    return out;
}

}  // namespace detail

struct MsSsimResult {
    double value = 0.0;
    int scales_used = 0;
};

// Multi-scale SSIM at up to `scales` dyadic scales; standard weights for the
// first `scales` levels renormalized to sum 1. Scales that would shrink any
// axis below 4 voxels are dropped (recorded in scales_used).
inline MsSsimResult ms_ssim(const Volume& a, const Volume& b, int scales = 3) {
    if (a.shape != b.shape) throw ShapeError("ms_ssim: shapes differ");
    static const double kStdWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    if (scales < 1 || scales > 5) throw ConfigError("ms_ssim: scales must be in [1,5]");

    detail::Grid3 x(a.d(), a.h(), a.w()), y(a.d(), a.h(), a.w());
    for (size_t i = 0; i < a.data.size(); ++i) {
        x.v[i] = a.data[i];
        y.v[i] = b.data[i];
    }

    int usable = 1;
    {
        int d = a.d(), h = a.h(), w = a.w();
        while (usable < scales && d / 2 >= 4 && h / 2 >= 4 && w / 2 >= 4) {
            ++usable;
            d /= 2;
            h /= 2;
            w /= 2;
        }
    }
    std::vector<double> weights(static_cast<size_t>(usable));
    double wsum = 0;
    for (int j = 0; j < usable; ++j) wsum += kStdWeights[j];
    for (int j = 0; j < usable; ++j) weights[static_cast<size_t>(j)] = kStdWeights[j] / wsum;

    double value = 1.0;
    for (int j = 0; j < usable; ++j) {
        const auto comp = detail::ssim_components(x, y);
        const double cs = std::max(comp.contrast_structure, 1e-6);
        value *= std::pow(cs, weights[static_cast<size_t>(j)]);
        if (j == usable - 1) value *= std::pow(std::max(comp.luminance, 1e-6), weights[static_cast<size_t>(j)]);
        if (j + 1 < usable) {
            x = detail::downsample2(x);
            y = detail::downsample2(y);
        }
    }
    return {value, usable};
}

struct MsSsimPairsResult {
    double value = 0.0;
    int pair_count = 0;
    int scales_used = 0;
};

// Mean MS-SSIM over seeded random pairs of distinct volumes.
inline MsSsimPairsResult ms_ssim_pairs(const std::vector<Volume>& volumes, int n_pairs, std::uint64_t seed,
                                       int scales = 3) {
    if (volumes.size() < 2) throw ConfigError("ms_ssim_pairs: need at least 2 volumes");
    if (n_pairs < 1) throw ConfigError("ms_ssim_pairs: n_pairs must be >= 1");
    Rng rng(substream_seed(seed, "msssim-pairs"));
    double acc = 0.0;
    int scales_used = scales;
    for (int p = 0; p < n_pairs; ++p) {
        const int i = rng.uniform_int(static_cast<int>(volumes.size()));
        int j = rng.uniform_int(static_cast<int>(volumes.size()) - 1);
        if (j >= i) ++j;
        const auto r = ms_ssim(volumes[static_cast<size_t>(i)], volumes[static_cast<size_t>(j)], scales);
        acc += r.value;
        scales_used = r.scales_used;
    }
    return {acc / n_pairs, n_pairs, scales_used};
}

// ------------------------------------------------------------ localized crops

// Smallest box containing every voxel of `label` across the whole maskset.
inline BBox union_bbox(const std::vector<LabelMask>& masks, std::uint8_t label) {
    if (masks.empty()) throw ConfigError("union_bbox: empty maskset");
    bool any = false;
    BBox box;
    box.lo = masks[0].shape;
    box.hi = {0, 0, 0};
    for (const auto& m : masks) {
        if (m.shape != masks[0].shape) throw ShapeError("union_bbox: inconsistent mask shapes");
        for (int z = 0; z < m.d(); ++z)
            for (int y = 0; y < m.h(); ++y)
                for (int x = 0; x < m.w(); ++x) {
                    if (m.at(z, y, x) != label) continue;
                    any = true;
                    box.lo[0] = std::min(box.lo[0], z);
                    box.lo[1] = std::min(box.lo[1], y);
                    box.lo[2] = std::min(box.lo[2], x);
                    box.hi[0] = std::max(box.hi[0], z + 1);
                    box.hi[1] = std::max(box.hi[1], y + 1);
                    box.hi[2] = std::max(box.hi[2], x + 1);
                }
    }
    if (!any) throw ConfigError("union_bbox: label " + std::to_string(int(label)) + " absent from every mask");
    return box;
}

inline Volume crop_volume(const Volume& v, const BBox& box) {
    box.validate_within(v.shape);
    Volume out(box.extent(0), box.extent(1), box.extent(2));
    out.spacing = v.spacing;
    out.id = v.id + "+crop";
    for (int z = 0; z < out.d(); ++z)
        for (int y = 0; y < out.h(); ++y)
            for (int x = 0; x < out.w(); ++x) out.at(z, y, x) = v.at(z + box.lo[0], y + box.lo[1], x + box.lo[2]);
    return out;
}

inline std::vector<Volume> localized_crop(const std::vector<Volume>& volumes, const BBox& box) {
    std::vector<Volume> out;
    out.reserve(volumes.size());
    for (const auto& v : volumes) out.push_back(crop_volume(v, box));
    return out;
}

// --------------------------------------------------------------------- MDS

struct MdsResult {
    std::vector<std::array<double, 2>> points;
    bool rank_deficient = false;
};

// Classical MDS: double-centered squared-distance matrix, top-2 eigenpairs,
// coordinates scaled by sqrt(eigenvalue); per-axis sign fixed so the first
// nonzero coordinate is positive.
inline MdsResult mds_embed(const FeatureSet& feats) {
    if (feats.n < 3) throw ConfigError("mds_embed: need at least 3 points");
    const int N = feats.n;
    Eigen::MatrixXd d2(N, N);
    for (int i = 0; i < N; ++i) {
        d2(i, i) = 0.0;
        for (int j = i + 1; j < N; ++j) {
            double acc = 0;
            for (int k = 0; k < feats.f; ++k) {
                const double d = feats.row(i)[k] - feats.row(j)[k];
                acc += d * d;
            }
            d2(i, j) = d2(j, i) = acc;
        }
    }
    Eigen::MatrixXd j_mat = Eigen::MatrixXd::Identity(N, N) - Eigen::MatrixXd::Constant(N, N, 1.0 / N);
    Eigen::MatrixXd b_mat = -0.5 * j_mat * d2 * j_mat;
    b_mat = 0.5 * (b_mat + b_mat.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b_mat);

    MdsResult res;
    res.points.assign(static_cast<size_t>(N), {0.0, 0.0});
    for (int axis = 0; axis < 2; ++axis) {
        const int idx = N - 1 - axis;  // eigenvalues ascending
        const double lambda = es.eigenvalues()(idx);
        if (lambda <= 1e-12) {
            if (axis == 1) res.rank_deficient = true;
            continue;
        }
        Eigen::VectorXd coord = es.eigenvectors().col(idx) * std::sqrt(lambda);
        double sign = 1.0;
        for (int i = 0; i < N; ++i)
            if (std::fabs(coord(i)) > 1e-12) {
                sign = coord(i) > 0 ? 1.0 : -1.0;
                break;
            }
        for (int i = 0; i < N; ++i) res.points[static_cast<size_t>(i)][static_cast<size_t>(axis)] = coord(i) * sign;
    }
    return res;
}

// ------------------------------------------------------------- ellipse fit

// conic a x^2 + b xy + c y^2 + d x + e y + f = 0, normalized to a + c = 1
struct Conic {
    double a = 0, b = 0, c = 0, d = 0, e = 0, f = 0;
    double discriminant() const { return b * b - 4.0 * a * c; }
};

// Direct least-squares ellipse fit (Halir-Flusser reduction of Fitzgibbon's
// constrained problem to a 3x3 eigensystem).
inline Conic ellipse_fit(const std::vector<std::array<double, 2>>& pts) {
    if (pts.size() < 5) throw ConfigError("ellipse_fit: need at least 5 points");
    const int N = static_cast<int>(pts.size());
    Eigen::MatrixXd d1(N, 3), d2(N, 3);
    for (int i = 0; i < N; ++i) {
        const double x = pts[static_cast<size_t>(i)][0], y = pts[static_cast<size_t>(i)][1];
        d1(i, 0) = x * x;
        d1(i, 1) = x * y;
        d1(i, 2) = y * y;
        d2(i, 0) = x;
        d2(i, 1) = y;
        d2(i, 2) = 1.0;
    }
    Eigen::Matrix3d s1 = d1.transpose() * d1;
    Eigen::Matrix3d s2 = d1.transpose() * d2;
    Eigen::Matrix3d s3 = d2.transpose() * d2;
    Eigen::FullPivLU<Eigen::Matrix3d> lu(s3);
    if (!lu.isInvertible()) throw ConfigError("ellipse_fit: degenerate point configuration (collinear points)");
    Eigen::Matrix3d t_mat = -lu.solve(s2.transpose());
    Eigen::Matrix3d m = s1 + s2 * t_mat;
    Eigen::Matrix3d c1_inv;
    c1_inv << 0, 0, 0.5, 0, -1, 0, 0.5, 0, 0;
    Eigen::Matrix3d sys = c1_inv * m;

    Eigen::EigenSolver<Eigen::Matrix3d> es(sys);
    int best = -1;
    for (int k = 0; k < 3; ++k) {
        if (std::fabs(es.eigenvectors().col(k).imag().norm()) > 1e-9) continue;
        Eigen::Vector3d v = es.eigenvectors().col(k).real();
        const double cond = 4.0 * v(0) * v(2) - v(1) * v(1);
        if (cond > 0) best = k;
    }
    if (best < 0) throw ConfigError("ellipse_fit: no elliptical solution (degenerate input)");
    Eigen::Vector3d a1 = es.eigenvectors().col(best).real();
    Eigen::Vector3d a2 = t_mat * a1;

    Conic conic{a1(0), a1(1), a1(2), a2(0), a2(1), a2(2)};
    double norm = conic.a + conic.c;
    if (norm == 0.0) throw ConfigError("ellipse_fit: degenerate conic");
    if (norm < 0) norm = -norm, conic = {-conic.a, -conic.b, -conic.c, -conic.d, -conic.e, -conic.f};
    conic.a /= norm;
    conic.b /= norm;
    conic.c /= norm;
    conic.d /= norm;
    conic.e /= norm;
    conic.f /= norm;
    return conic;
}

struct EllipseAxes {
    double semi_major = 0, semi_minor = 0;
    double center_x = 0, center_y = 0;
};

inline EllipseAxes ellipse_axes(const Conic& k) {
    Eigen::Matrix2d m2;
    m2 << k.a, k.b / 2.0, k.b / 2.0, k.c;
    Eigen::Vector2d rhs(-k.d / 2.0, -k.e / 2.0);
    Eigen::Vector2d center = m2.colPivHouseholderQr().solve(rhs);
    const double f0 = k.f + 0.5 * (k.d * center(0) + k.e * center(1));
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m2);
    EllipseAxes out;
    out.center_x = center(0);
    out.center_y = center(1);
    const double s0 = -f0 / es.eigenvalues()(0), s1 = -f0 / es.eigenvalues()(1);
    if (s0 <= 0 || s1 <= 0) throw ConfigError("ellipse_axes: conic is not an ellipse");
    out.semi_major = std::sqrt(std::max(s0, s1));
    out.semi_minor = std::sqrt(std::min(s0, s1));
    return out;
}

}  // namespace lad::metrics
