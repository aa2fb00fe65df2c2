#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lad/core/rng.hpp"
#include "lad/core/tape.hpp"

namespace lad::nn {

using NamedParams = std::vector<std::pair<std::string, Var>>;

inline Var param(std::vector<int> shape) { return make_leaf(Tensor(std::move(shape)), true); }

inline void init_normal(Var p, Rng& rng, double stddev) {
    for (auto& x : p->val.v) x = static_cast<float>(rng.normal() * stddev);
}

// Kaiming-style init for conv/linear weights: stddev = gain / sqrt(fan_in).
inline void init_kaiming(Var w, Rng& rng, i64 fan_in, double gain = 1.0) {
    init_normal(w, rng, gain / std::sqrt(static_cast<double>(fan_in)));
}

struct Conv3d {
    Var w, b;
    int stride = 1, pad = 1;

    Conv3d() = default;
    Conv3d(int cin, int cout, int k, int stride_, int pad_, Rng& rng, double gain = 1.0)
        : w(param({cout, cin, k, k, k})), b(param({cout})), stride(stride_), pad(pad_) {
        init_kaiming(w, rng, static_cast<i64>(cin) * k * k * k, gain);
    }
    Var operator()(Tape& tp, Var x) const { return ops::conv3d(tp, x, w, b, stride, pad); }
    void collect(const std::string& name, NamedParams& out) const {
        out.emplace_back(name + ".w", w);
        out.emplace_back(name + ".b", b);
    }
};

struct ConvT3d {
    Var w, b;  // w is {Ci,Co,k,k,k}
    int stride = 2, pad = 1;

    ConvT3d() = default;
    ConvT3d(int cin, int cout, int k, int stride_, int pad_, Rng& rng, double gain = 1.0)
        : w(param({cin, cout, k, k, k})), b(param({cout})), stride(stride_), pad(pad_) {
        init_kaiming(w, rng, static_cast<i64>(cin) * k * k * k / (stride_ * stride_ * stride_), gain);
    }
    Var operator()(Tape& tp, Var x) const { return ops::convT3d(tp, x, w, b, stride, pad); }
    void collect(const std::string& name, NamedParams& out) const {
        out.emplace_back(name + ".w", w);
        out.emplace_back(name + ".b", b);
    }
};

struct Linear {
    Var w, b;

    Linear() = default;
    Linear(int nin, int nout, Rng& rng, double gain = 1.0) : w(param({nout, nin})), b(param({nout})) {
        init_kaiming(w, rng, nin, gain);
    }
    Var operator()(Tape& tp, Var x) const { return ops::linear(tp, x, w, b); }
    void collect(const std::string& name, NamedParams& out) const {
        out.emplace_back(name + ".w", w);
        out.emplace_back(name + ".b", b);
    }
};

struct GroupNorm {
    Var gamma, beta;
    int groups = 4;

    GroupNorm() = default;
    GroupNorm(int channels, int groups_) : gamma(param({channels})), beta(param({channels})), groups(groups_) {
        gamma->val.fill(1.0f);
    }
    Var operator()(Tape& tp, Var x) const { return ops::group_norm(tp, x, gamma, beta, groups); }
    void collect(const std::string& name, NamedParams& out) const {
        out.emplace_back(name + ".gamma", gamma);
        out.emplace_back(name + ".beta", beta);
    }
};

// ---------------------------------------------------------------------- Adam

struct Adam {
    double lr = 3e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step_count = 0;
    std::vector<Var> params;
    std::vector<Tensor> m, v;

    explicit Adam(std::vector<Var> ps, double lr_ = 3e-4) : lr(lr_), params(std::move(ps)) {
        for (const auto& p : params) {
            m.emplace_back(p->val.shape);
            v.emplace_back(p->val.shape);
        }
    }

    void zero_grad() {
        for (auto& p : params) p->zero_grad();
    }

    void step() {
        ++step_count;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (size_t k = 0; k < params.size(); ++k) {
            auto& p = params[k];
            if (!p->has_grad()) continue;  // parameter unused this step
            float* pv = p->val.data();
            const float* g = p->grad.data();
            float* mv = m[k].data();
            float* vv = v[k].data();
            const i64 n = p->val.numel();
            for (i64 i = 0; i < n; ++i) {
                mv[i] = static_cast<float>(beta1 * mv[i] + (1.0 - beta1) * g[i]);
                vv[i] = static_cast<float>(beta2 * vv[i] + (1.0 - beta2) * static_cast<double>(g[i]) * g[i]);
                const double mhat = mv[i] / bc1;
                const double vhat = vv[i] / bc2;
                pv[i] = static_cast<float>(pv[i] - lr * mhat / (std::sqrt(vhat) + eps));
            }
        }
    }
};

}  // namespace lad::nn
