#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "lad/core/kernels.hpp"
#include "lad/core/tensor.hpp"

// Reverse-mode autodiff on a per-step tape. Ops compute eagerly and, while the
// tape is recording, push a backward closure; Tape::backward replays closures
// in reverse creation order. Parameters are long-lived leaf nodes owned by the
// modules; their grads accumulate across samples until the optimizer clears
// them, which is what makes gradient-accumulation batching work.

namespace lad {

struct TapeNode;
using Var = std::shared_ptr<TapeNode>;

struct TapeNode {
    Tensor val;
    Tensor grad;  // allocated on first touch; empty means "all zeros, never visited"
    bool requires_grad = false;
    std::function<void(TapeNode&)> back;

    Tensor& g() {
        if (grad.v.empty()) grad = Tensor(val.shape);
        return grad;
    }
    bool has_grad() const { return !grad.v.empty(); }
    void zero_grad() { grad = Tensor(); }
};

inline Var make_leaf(Tensor t, bool requires_grad = false) {
    auto n = std::make_shared<TapeNode>();
    n->val = std::move(t);
    n->requires_grad = requires_grad;
    return n;
}

struct Tape {
    std::vector<Var> order;
    bool recording = true;

    Var emit(Tensor val, bool req, std::function<void(TapeNode&)> back_fn) {
        auto n = std::make_shared<TapeNode>();
        n->val = std::move(val);
        if (recording && req) {
            n->requires_grad = true;
            n->back = std::move(back_fn);
            order.push_back(n);
        }
        return n;
    }

    // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be a scalar node.
    void backward(const Var& loss) {
        if (loss->val.numel() != 1) throw ShapeError("backward: loss must be scalar, got " + loss->val.shape_str());
        loss->g().v[0] = 1.0f;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            TapeNode& n = **it;
            if (n.has_grad() && n.back) n.back(n);
        }
    }

    void clear() { order.clear(); }
};

// RAII guard to run a section without recording (inference / frozen paths).
struct NoGrad {
    Tape& tp;
    bool prev;
    explicit NoGrad(Tape& t) : tp(t), prev(t.recording) { tp.recording = false; }
    ~NoGrad() { tp.recording = prev; }
};

// ---------------------------------------------------------------- elementwise

namespace ops {

inline Var add(Tape& tp, Var a, Var b) {
    check_same_shape(a->val, b->val, "add");
    Tensor out(a->val.shape);
    for (i64 i = 0; i < out.numel(); ++i) out.v[i] = a->val.v[i] + b->val.v[i];
    return tp.emit(std::move(out), a->requires_grad || b->requires_grad, [a, b](TapeNode& n) {
        if (a->requires_grad) {
            auto& g = a->g();
            for (i64 i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i];
        }
        if (b->requires_grad) {
            auto& g = b->g();
            for (i64 i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i];
        }
    });
}

inline Var sub(Tape& tp, Var a, Var b) {
    check_same_shape(a->val, b->val, "sub");
    Tensor out(a->val.shape);
    for (i64 i = 0; i < out.numel(); ++i) out.v[i] = a->val.v[i] - b->val.v[i];
    return tp.emit(std::move(out), a->requires_grad || b->requires_grad, [a, b](TapeNode& n) {
        if (a->requires_grad) {
            auto& g = a->g();
            for (i64 i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i];
        }
        if (b->requires_grad) {
            auto& g = b->g();
            for (i64 i = 0; i < g.numel(); ++i) g.v[i] -= n.grad.v[i];
        }
    });
}

inline Var mul(Tape& tp, Var a, Var b) {
    check_same_shape(a->val, b->val, "mul");
    Tensor out(a->val.shape);
    for (i64 i = 0; i < out.numel(); ++i) out.v[i] = a->val.v[i] * b->val.v[i];
    return tp.emit(std::move(out), a->requires_grad || b->requires_grad, [a, b](TapeNode& n) {
        if (a->requires_grad) {
            auto& g = a->g();
            for (i64 i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i] * b->val.v[i];
        }
        if (b->requires_grad) {
            auto& g = b->g();
            for (i64 i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i] * a->val.v[i];
        }
    });
}

// alpha*x + beta, elementwise
inline Var affine(Tape& tp, Var x, float alpha, float beta = 0.0f) {
    Tensor out(x->val.shape);
    for (i64 i = 0; i < out.numel(); ++i) out.v[i] = alpha * x->val.v[i] + beta;
    return tp.emit(std::move(out), x->requires_grad, [x, alpha](TapeNode& n) {
        auto& g = x->g();
        for (i64 i = 0; i < g.numel(); ++i) g.v[i] += alpha * n.grad.v[i];
    });
}

inline Var detach(Tape& tp, Var x) {
    (void)tp;
    return make_leaf(x->val, false);
}

// Value is exactly q; gradient passes through to z untouched (and never to q).
inline Var straight_through(Tape& tp, Var z, Var q) {
    check_same_shape(z->val, q->val, "straight_through");
    Tensor out = q->val;
    return tp.emit(std::move(out), z->requires_grad, [z](TapeNode& n) {
        auto& g = z->g();
        for (i64 i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i];
    });
}

inline Var relu(Tape& tp, Var x) {
    Tensor out(x->val.shape);
    for (i64 i = 0; i < out.numel(); ++i) out.v[i] = x->val.v[i] > 0.0f ? x->val.v[i] : 0.0f;
    return tp.emit(std::move(out), x->requires_grad, [x](TapeNode& n) {
        auto& g = x->g();
        for (i64 i = 0; i < g.numel(); ++i)
            if (x->val.v[i] > 0.0f) g.v[i] += n.grad.v[i];
    });
}

inline Var leaky_relu(Tape& tp, Var x, float slope = 0.2f) {
    Tensor out(x->val.shape);
    for (i64 i = 0; i < out.numel(); ++i) out.v[i] = x->val.v[i] > 0.0f ? x->val.v[i] : slope * x->val.v[i];
    return tp.emit(std::move(out), x->requires_grad, [x, slope](TapeNode& n) {
        auto& g = x->g();
        for (i64 i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i] * (x->val.v[i] > 0.0f ? 1.0f : slope);
    });
}

inline Var silu(Tape& tp, Var x) {
    Tensor out(x->val.shape);
    for (i64 i = 0; i < out.numel(); ++i) {
        const float s = 1.0f / (1.0f + std::exp(-x->val.v[i]));
        out.v[i] = x->val.v[i] * s;
    }
    return tp.emit(std::move(out), x->requires_grad, [x](TapeNode& n) {
        auto& g = x->g();
        for (i64 i = 0; i < g.numel(); ++i) {
            const float s = 1.0f / (1.0f + std::exp(-x->val.v[i]));
            g.v[i] += n.grad.v[i] * s * (1.0f + x->val.v[i] * (1.0f - s));
        }
    });
}

inline Var sigmoid(Tape& tp, Var x) {
    Tensor out(x->val.shape);
    for (i64 i = 0; i < out.numel(); ++i) out.v[i] = 1.0f / (1.0f + std::exp(-x->val.v[i]));
    Tensor yv = out;  // keep a copy for the backward closure
    return tp.emit(std::move(out), x->requires_grad, [x, yv = std::move(yv)](TapeNode& n) {
        auto& g = x->g();
        for (i64 i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i] * yv.v[i] * (1.0f - yv.v[i]);
    });
}

inline Var tanh_op(Tape& tp, Var x) {
    Tensor out(x->val.shape);
    for (i64 i = 0; i < out.numel(); ++i) out.v[i] = std::tanh(x->val.v[i]);
    Tensor yv = out;
    return tp.emit(std::move(out), x->requires_grad, [x, yv = std::move(yv)](TapeNode& n) {
        auto& g = x->g();
        for (i64 i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i] * (1.0f - yv.v[i] * yv.v[i]);
    });
}

inline Var abs_op(Tape& tp, Var x) {
    Tensor out(x->val.shape);
    for (i64 i = 0; i < out.numel(); ++i) out.v[i] = std::fabs(x->val.v[i]);
    return tp.emit(std::move(out), x->requires_grad, [x](TapeNode& n) {
        auto& g = x->g();
        for (i64 i = 0; i < g.numel(); ++i) {
            const float s = x->val.v[i] > 0.0f ? 1.0f : (x->val.v[i] < 0.0f ? -1.0f : 0.0f);
            g.v[i] += n.grad.v[i] * s;
        }
    });
}

inline Var square(Tape& tp, Var x) {
    Tensor out(x->val.shape);
    for (i64 i = 0; i < out.numel(); ++i) out.v[i] = x->val.v[i] * x->val.v[i];
    return tp.emit(std::move(out), x->requires_grad, [x](TapeNode& n) {
        auto& g = x->g();
        for (i64 i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i] * 2.0f * x->val.v[i];
    });
}

// ---------------------------------------------------------------- reductions

inline Var mean_all(Tape& tp, Var x) {
    double acc = 0.0;
    for (i64 i = 0; i < x->val.numel(); ++i) acc += x->val.v[i];
    const i64 n_el = x->val.numel();
    Tensor out({1});
    out.v[0] = static_cast<float>(acc / static_cast<double>(n_el));
    return tp.emit(std::move(out), x->requires_grad, [x, n_el](TapeNode& n) {
        auto& g = x->g();
        const float gi = n.grad.v[0] / static_cast<float>(n_el);
        for (i64 i = 0; i < g.numel(); ++i) g.v[i] += gi;
    });
}

inline Var sum_all(Tape& tp, Var x) {
    double acc = 0.0;
    for (i64 i = 0; i < x->val.numel(); ++i) acc += x->val.v[i];
    Tensor out({1});
    out.v[0] = static_cast<float>(acc);
    return tp.emit(std::move(out), x->requires_grad, [x](TapeNode& n) {
        auto& g = x->g();
        for (i64 i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[0];
    });
}

inline Var mse(Tape& tp, Var a, Var b) { return mean_all(tp, square(tp, sub(tp, a, b))); }
inline Var l1(Tape& tp, Var a, Var b) { return mean_all(tp, abs_op(tp, sub(tp, a, b))); }

// --------------------------------------------------------------- shape tools

inline Var concat_channels(Tape& tp, Var a, Var b) {
    const auto& sa = a->val.shape;
    const auto& sb = b->val.shape;
    if (sa.size() != 4 || sb.size() != 4 || sa[1] != sb[1] || sa[2] != sb[2] || sa[3] != sb[3])
        throw ShapeError("concat_channels: spatial dims differ " + a->val.shape_str() + " vs " + b->val.shape_str());
    const int Ca = sa[0], Cb = sb[0];
    const i64 spatial = static_cast<i64>(sa[1]) * sa[2] * sa[3];
    Tensor out({Ca + Cb, sa[1], sa[2], sa[3]});
    std::memcpy(out.v.data(), a->val.v.data(), sizeof(float) * static_cast<size_t>(Ca * spatial));
    std::memcpy(out.v.data() + Ca * spatial, b->val.v.data(), sizeof(float) * static_cast<size_t>(Cb * spatial));
    return tp.emit(std::move(out), a->requires_grad || b->requires_grad, [a, b, Ca, Cb, spatial](TapeNode& n) {
        if (a->requires_grad) {
            auto& g = a->g();
            for (i64 i = 0; i < Ca * spatial; ++i) g.v[i] += n.grad.v[i];
        }
        if (b->requires_grad) {
            auto& g = b->g();
            for (i64 i = 0; i < Cb * spatial; ++i) g.v[i] += n.grad.v[Ca * spatial + i];
        }
    });
}

// Crop spatial box [lo,hi) out of a {C,D,H,W} grid, all channels.
inline Var crop3d(Tape& tp, Var x, int zlo, int zhi, int ylo, int yhi, int xlo, int xhi) {
    const int C = x->val.dim(0), D = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    if (zlo < 0 || zhi > D || ylo < 0 || yhi > H || xlo < 0 || xhi > W || zlo >= zhi || ylo >= yhi || xlo >= xhi)
        throw ShapeError("crop3d: box out of bounds");
    const int Dc = zhi - zlo, Hc = yhi - ylo, Wc = xhi - xlo;
    Tensor out({C, Dc, Hc, Wc});
    for (int c = 0; c < C; ++c)
        for (int z = 0; z < Dc; ++z)
            for (int y = 0; y < Hc; ++y) {
                const float* src = &x->val.v[((static_cast<size_t>(c) * D + z + zlo) * H + y + ylo) * W + xlo];
                float* dst = &out.v[((static_cast<size_t>(c) * Dc + z) * Hc + y) * Wc];
                std::memcpy(dst, src, sizeof(float) * static_cast<size_t>(Wc));
            }
    return tp.emit(std::move(out), x->requires_grad, [x, zlo, ylo, xlo, C, D, H, W, Dc, Hc, Wc](TapeNode& n) {
        auto& g = x->g();
        for (int c = 0; c < C; ++c)
            for (int z = 0; z < Dc; ++z)
                for (int y = 0; y < Hc; ++y) {
                    const float* src = &n.grad.v[((static_cast<size_t>(c) * Dc + z) * Hc + y) * Wc];
                    float* dst = &g.v[((static_cast<size_t>(c) * D + z + zlo) * H + y + ylo) * W + xlo];
                    for (int xx = 0; xx < Wc; ++xx) dst[xx] += src[xx];
                }
    });
}

// Broadcast-add a per-channel vector {C} onto a {C,D,H,W} grid.
inline Var add_channel_bias(Tape& tp, Var x, Var v) {
    const int C = x->val.dim(0);
    if (v->val.rank() != 1 || v->val.dim(0) != C) throw ShapeError("add_channel_bias: vector length != C");
    const i64 spatial = x->val.numel() / C;
    Tensor out(x->val.shape);
    for (int c = 0; c < C; ++c) {
        const float b = v->val.v[static_cast<size_t>(c)];
        const float* src = &x->val.v[static_cast<size_t>(c) * spatial];
        float* dst = &out.v[static_cast<size_t>(c) * spatial];
        for (i64 i = 0; i < spatial; ++i) dst[i] = src[i] + b;
    }
    return tp.emit(std::move(out), x->requires_grad || v->requires_grad, [x, v, C, spatial](TapeNode& n) {
        if (x->requires_grad) {
            auto& g = x->g();
            for (i64 i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i];
        }
        if (v->requires_grad) {
            auto& g = v->g();
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                const float* src = &n.grad.v[static_cast<size_t>(c) * spatial];
                for (i64 i = 0; i < spatial; ++i) acc += src[i];
                g.v[static_cast<size_t>(c)] += static_cast<float>(acc);
            }
        }
    });
}

// ------------------------------------------------------------------- layers

inline Var conv3d(Tape& tp, Var x, Var w, Var b, int stride, int pad) {
    Tensor out = kernels::conv3d_forward(x->val, w->val, b ? &b->val : nullptr, stride, pad);
    const bool req = x->requires_grad || w->requires_grad || (b && b->requires_grad);
    return tp.emit(std::move(out), req, [x, w, b, stride, pad](TapeNode& n) {
        if (x->requires_grad) kernels::conv3d_backward_input(n.grad, w->val, stride, pad, x->g());
        if (w->requires_grad)
            kernels::conv3d_backward_weight(n.grad, x->val, stride, pad, w->g(),
                                            (b && b->requires_grad) ? &b->g() : nullptr);
        else if (b && b->requires_grad) {
            Tensor dummy(w->val.shape);
            kernels::conv3d_backward_weight(n.grad, x->val, stride, pad, dummy, &b->g());
        }
    });
}

inline Var convT3d(Tape& tp, Var x, Var w, Var b, int stride, int pad) {
    Tensor out = kernels::convT3d_forward(x->val, w->val, b ? &b->val : nullptr, stride, pad);
    const bool req = x->requires_grad || w->requires_grad || (b && b->requires_grad);
    return tp.emit(std::move(out), req, [x, w, b, stride, pad](TapeNode& n) {
        if (x->requires_grad) kernels::convT3d_backward_input(n.grad, w->val, stride, pad, x->g());
        if (w->requires_grad)
            kernels::convT3d_backward_weight(n.grad, x->val, stride, pad, w->g(),
                                             (b && b->requires_grad) ? &b->g() : nullptr);
        else if (b && b->requires_grad) {
            Tensor dummy(w->val.shape);
            kernels::convT3d_backward_weight(n.grad, x->val, stride, pad, dummy, &b->g());
        }
    });
}

// y = W x + b for 1-D x. W is {M,N}, x {N}, b {M}.
inline Var linear(Tape& tp, Var x, Var w, Var b) {
    const int N = x->val.dim(0);
    const int M = w->val.dim(0);
    if (w->val.rank() != 2 || w->val.dim(1) != N) throw ShapeError("linear: weight shape mismatch");
    Tensor out({M});
    for (int m = 0; m < M; ++m) {
        const float* wr = &w->val.v[static_cast<size_t>(m) * N];
        float acc = b ? b->val.v[static_cast<size_t>(m)] : 0.0f;
        for (int i = 0; i < N; ++i) acc += wr[i] * x->val.v[static_cast<size_t>(i)];
        out.v[static_cast<size_t>(m)] = acc;
    }
    const bool req = x->requires_grad || w->requires_grad || (b && b->requires_grad);
    return tp.emit(std::move(out), req, [x, w, b, M, N](TapeNode& n) {
        if (x->requires_grad) {
            auto& g = x->g();
            for (int m = 0; m < M; ++m) {
                const float gm = n.grad.v[static_cast<size_t>(m)];
                const float* wr = &w->val.v[static_cast<size_t>(m) * N];
                for (int i = 0; i < N; ++i) g.v[static_cast<size_t>(i)] += gm * wr[i];
            }
        }
        if (w->requires_grad) {
            auto& g = w->g();
            for (int m = 0; m < M; ++m) {
                const float gm = n.grad.v[static_cast<size_t>(m)];
                float* gr = &g.v[static_cast<size_t>(m) * N];
                for (int i = 0; i < N; ++i) gr[i] += gm * x->val.v[static_cast<size_t>(i)];
            }
        }
        if (b && b->requires_grad) {
            auto& g = b->g();
            for (int m = 0; m < M; ++m) g.v[static_cast<size_t>(m)] += n.grad.v[static_cast<size_t>(m)];
        }
    });
}

// GroupNorm over a {C,D,H,W} grid (no batch dim; statistics per group of channels).
inline Var group_norm(Tape& tp, Var x, Var gamma, Var beta, int groups, float eps = 1e-5f) {
    const int C = x->val.dim(0);
    if (C % groups != 0) throw ShapeError("group_norm: C not divisible by groups");
    const i64 spatial = x->val.numel() / C;
    const int cg = C / groups;
    const i64 gsize = cg * spatial;

    Tensor out(x->val.shape);
    std::vector<float> mean_g(static_cast<size_t>(groups)), rstd_g(static_cast<size_t>(groups));
    for (int g = 0; g < groups; ++g) {
        const float* xs = &x->val.v[static_cast<size_t>(g) * gsize];
        double m = 0.0;
        for (i64 i = 0; i < gsize; ++i) m += xs[i];
        m /= static_cast<double>(gsize);
        double var = 0.0;
        for (i64 i = 0; i < gsize; ++i) {
            const double d = xs[i] - m;
            var += d * d;
        }
        var /= static_cast<double>(gsize);
        mean_g[static_cast<size_t>(g)] = static_cast<float>(m);
        rstd_g[static_cast<size_t>(g)] = static_cast<float>(1.0 / std::sqrt(var + eps));
    }
    for (int c = 0; c < C; ++c) {
        const int g = c / cg;
        const float m = mean_g[static_cast<size_t>(g)], r = rstd_g[static_cast<size_t>(g)];
        const float ga = gamma->val.v[static_cast<size_t>(c)], be = beta->val.v[static_cast<size_t>(c)];
        const float* xs = &x->val.v[static_cast<size_t>(c) * spatial];
        float* ys = &out.v[static_cast<size_t>(c) * spatial];
        for (i64 i = 0; i < spatial; ++i) ys[i] = (xs[i] - m) * r * ga + be;
    }
    const bool req = x->requires_grad || gamma->requires_grad || beta->requires_grad;
    return tp.emit(std::move(out), req,
                   [x, gamma, beta, groups, cg, spatial, gsize, mean_g, rstd_g](TapeNode& n) {
        const int C = x->val.dim(0);
        if (gamma->requires_grad || beta->requires_grad) {
            for (int c = 0; c < C; ++c) {
                const int g = c / cg;
                const float m = mean_g[static_cast<size_t>(g)], r = rstd_g[static_cast<size_t>(g)];
                const float* xs = &x->val.v[static_cast<size_t>(c) * spatial];
                const float* gy = &n.grad.v[static_cast<size_t>(c) * spatial];
                double dg = 0.0, db = 0.0;
                for (i64 i = 0; i < spatial; ++i) {
                    dg += gy[i] * (xs[i] - m) * r;
                    db += gy[i];
                }
                if (gamma->requires_grad) gamma->g().v[static_cast<size_t>(c)] += static_cast<float>(dg);
                if (beta->requires_grad) beta->g().v[static_cast<size_t>(c)] += static_cast<float>(db);
            }
        }
        if (x->requires_grad) {
            auto& gx = x->g();
            for (int g = 0; g < groups; ++g) {
                const float m = mean_g[static_cast<size_t>(g)], r = rstd_g[static_cast<size_t>(g)];
                // s1 = mean(gy*gamma), s2 = mean(gy*gamma*xhat) over the group
                double s1 = 0.0, s2 = 0.0;
                for (int cc = 0; cc < cg; ++cc) {
                    const int c = g * cg + cc;
                    const float ga = gamma->val.v[static_cast<size_t>(c)];
                    const float* xs = &x->val.v[static_cast<size_t>(c) * spatial];
                    const float* gy = &n.grad.v[static_cast<size_t>(c) * spatial];
                    for (i64 i = 0; i < spatial; ++i) {
                        const float xh = (xs[i] - m) * r;
                        s1 += gy[i] * ga;
                        s2 += gy[i] * ga * xh;
                    }
                }
                const float a1 = static_cast<float>(s1 / static_cast<double>(gsize));
                const float a2 = static_cast<float>(s2 / static_cast<double>(gsize));
                for (int cc = 0; cc < cg; ++cc) {
                    const int c = g * cg + cc;
                    const float ga = gamma->val.v[static_cast<size_t>(c)];
                    const float* xs = &x->val.v[static_cast<size_t>(c) * spatial];
                    const float* gy = &n.grad.v[static_cast<size_t>(c) * spatial];
                    float* gd = &gx.v[static_cast<size_t>(c) * spatial];
                    for (i64 i = 0; i < spatial; ++i) {
                        const float xh = (xs[i] - m) * r;
                        gd[i] += r * (gy[i] * ga - a1 - xh * a2);
                    }
                }
            }
        }
    });
}

// Gather codebook rows into a {C,D,H,W} grid from per-voxel indices.
// codebook is {K,C}; backward scatter-adds into the codebook grad.
inline Var codebook_lookup(Tape& tp, Var codebook, const std::vector<int>& idx, int D, int H, int W) {
    const int C = codebook->val.dim(1);
    const i64 spatial = static_cast<i64>(D) * H * W;
    if (static_cast<i64>(idx.size()) != spatial) throw ShapeError("codebook_lookup: index count mismatch");
    Tensor out({C, D, H, W});
    for (i64 p = 0; p < spatial; ++p) {
        const float* e = &codebook->val.v[static_cast<size_t>(idx[static_cast<size_t>(p)]) * C];
        for (int c = 0; c < C; ++c) out.v[static_cast<size_t>(c) * spatial + p] = e[c];
    }
    return tp.emit(std::move(out), codebook->requires_grad, [codebook, idx, C, spatial](TapeNode& n) {
        auto& g = codebook->g();
        for (i64 p = 0; p < spatial; ++p) {
            float* ge = &g.v[static_cast<size_t>(idx[static_cast<size_t>(p)]) * C];
            for (int c = 0; c < C; ++c) ge[c] += n.grad.v[static_cast<size_t>(c) * spatial + p];
        }
    });
}

// Global average pool {C,D,H,W} -> {C}.
inline Var global_avg_pool(Tape& tp, Var x) {
    const int C = x->val.dim(0);
    const i64 spatial = x->val.numel() / C;
    Tensor out({C});
    for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        const float* xs = &x->val.v[static_cast<size_t>(c) * spatial];
        for (i64 i = 0; i < spatial; ++i) acc += xs[i];
        out.v[static_cast<size_t>(c)] = static_cast<float>(acc / static_cast<double>(spatial));
    }
    return tp.emit(std::move(out), x->requires_grad, [x, C, spatial](TapeNode& n) {
        auto& g = x->g();
        for (int c = 0; c < C; ++c) {
            const float gi = n.grad.v[static_cast<size_t>(c)] / static_cast<float>(spatial);
            float* gs = &g.v[static_cast<size_t>(c) * spatial];
            for (i64 i = 0; i < spatial; ++i) gs[i] += gi;
        }
    });
}

}  // namespace ops
}  // namespace lad
