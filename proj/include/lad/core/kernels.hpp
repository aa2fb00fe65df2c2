#pragma once

#include <cstring>

#include "lad/core/tensor.hpp"

// Raw dense kernels for the small 3D conv nets. Everything is single threaded
// and written so the innermost loop runs over the contiguous W axis (the
// compiler turns those into FMA loops). Feature grids are {C,D,H,W}; conv
// weights are {Co,Ci,k,k,k}; transposed-conv weights are {Ci,Co,k,k,k}.

namespace lad::kernels {

inline int conv_out_dim(int in, int k, int stride, int pad) {
    int out = (in + 2 * pad - k) / stride + 1;
    if (out < 1) throw ShapeError("conv output dim < 1 (in=" + std::to_string(in) + ", k=" + std::to_string(k) + ")");
    return out;
}

inline int convT_out_dim(int in, int k, int stride, int pad) {
    int out = (in - 1) * stride + k - 2 * pad;
    if (out < 1) throw ShapeError("conv_transpose output dim < 1");
    return out;
}

// Zero-padded copy of x, pad voxels on each side of D/H/W.
inline Tensor pad3d(const Tensor& x, int pad) {
    if (pad == 0) return x;
    const int C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor xp({C, D + 2 * pad, H + 2 * pad, W + 2 * pad});
    const int Hp = H + 2 * pad, Wp = W + 2 * pad, Dp = D + 2 * pad;
    for (int c = 0; c < C; ++c)
        for (int z = 0; z < D; ++z)
            for (int y = 0; y < H; ++y) {
                const float* src = &x.v[((static_cast<size_t>(c) * D + z) * H + y) * W];
                float* dst = &xp.v[((static_cast<size_t>(c) * Dp + z + pad) * Hp + y + pad) * Wp + pad];
                std::memcpy(dst, src, sizeof(float) * static_cast<size_t>(W));
            }
    return xp;
}

// Crop pad voxels back off each side (adjoint of pad3d), accumulating into out.
inline void unpad3d_acc(const Tensor& xp, int pad, Tensor& out) {
    const int C = out.dim(0), D = out.dim(1), H = out.dim(2), W = out.dim(3);
    const int Dp = xp.dim(1), Hp = xp.dim(2), Wp = xp.dim(3);
    for (int c = 0; c < C; ++c)
        for (int z = 0; z < D; ++z)
            for (int y = 0; y < H; ++y) {
                const float* src = &xp.v[((static_cast<size_t>(c) * Dp + z + pad) * Hp + y + pad) * Wp + pad];
                float* dst = &out.v[((static_cast<size_t>(c) * D + z) * H + y) * W];
                for (int x = 0; x < W; ++x) dst[x] += src[x];
            }
}

inline Tensor conv3d_forward(const Tensor& x, const Tensor& w, const Tensor* bias, int stride, int pad) {
    const int Ci = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = w.dim(0), k = w.dim(2);
    if (w.dim(1) != Ci) throw ShapeError("conv3d: weight Ci " + std::to_string(w.dim(1)) + " != input C " + std::to_string(Ci));
    const int Do = conv_out_dim(D, k, stride, pad);
    const int Ho = conv_out_dim(H, k, stride, pad);
    const int Wo = conv_out_dim(W, k, stride, pad);

    Tensor xp = pad3d(x, pad);
    const int Hp = H + 2 * pad, Wp = W + 2 * pad;
    Tensor out({Co, Do, Ho, Wo});

    for (int co = 0; co < Co; ++co) {
        float* oc = &out.v[static_cast<size_t>(co) * Do * Ho * Wo];
        const float bv = bias ? bias->v[static_cast<size_t>(co)] : 0.0f;
        for (i64 i = 0; i < static_cast<i64>(Do) * Ho * Wo; ++i) oc[i] = bv;
        for (int ci = 0; ci < Ci; ++ci) {
            const float* xc = &xp.v[static_cast<size_t>(ci) * (D + 2 * pad) * Hp * Wp];
            const float* wc = &w.v[(static_cast<size_t>(co) * Ci + ci) * k * k * k];
            for (int kz = 0; kz < k; ++kz)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const float wv = wc[(kz * k + ky) * k + kx];
                        if (wv == 0.0f) continue;
                        for (int zo = 0; zo < Do; ++zo) {
                            const int zi = zo * stride + kz;
                            for (int yo = 0; yo < Ho; ++yo) {
                                const int yi = yo * stride + ky;
                                const float* src = &xc[(static_cast<size_t>(zi) * Hp + yi) * Wp + kx];
                                float* dst = &oc[(static_cast<size_t>(zo) * Ho + yo) * Wo];
                                if (stride == 1) {
                                    for (int xo = 0; xo < Wo; ++xo) dst[xo] += wv * src[xo];
                                } else {
                                    for (int xo = 0; xo < Wo; ++xo) dst[xo] += wv * src[xo * stride];
                                }
                            }
                        }
                    }
        }
    }
    return out;
}

// d loss / d x accumulated into gx (same shape as x).
inline void conv3d_backward_input(const Tensor& gout, const Tensor& w, int stride, int pad, Tensor& gx) {
    const int Ci = gx.dim(0), D = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
    const int Co = w.dim(0), k = w.dim(2);
    const int Do = gout.dim(1), Ho = gout.dim(2), Wo = gout.dim(3);
    Tensor gxp({Ci, D + 2 * pad, H + 2 * pad, W + 2 * pad});
    const int Hp = H + 2 * pad, Wp = W + 2 * pad;

    for (int co = 0; co < Co; ++co) {
        const float* gc = &gout.v[static_cast<size_t>(co) * Do * Ho * Wo];
        for (int ci = 0; ci < Ci; ++ci) {
            float* gxc = &gxp.v[static_cast<size_t>(ci) * (D + 2 * pad) * Hp * Wp];
            const float* wc = &w.v[(static_cast<size_t>(co) * Ci + ci) * k * k * k];
            for (int kz = 0; kz < k; ++kz)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const float wv = wc[(kz * k + ky) * k + kx];
                        if (wv == 0.0f) continue;
                        for (int zo = 0; zo < Do; ++zo) {
                            const int zi = zo * stride + kz;
                            for (int yo = 0; yo < Ho; ++yo) {
                                const int yi = yo * stride + ky;
                                const float* src = &gc[(static_cast<size_t>(zo) * Ho + yo) * Wo];
                                float* dst = &gxc[(static_cast<size_t>(zi) * Hp + yi) * Wp + kx];
                                if (stride == 1) {
                                    for (int xo = 0; xo < Wo; ++xo) dst[xo] += wv * src[xo];
                                } else {
                                    for (int xo = 0; xo < Wo; ++xo) dst[xo * stride] += wv * src[xo];
                                }
                            }
                        }
                    }
        }
    }
    if (pad == 0) {
        for (i64 i = 0; i < gx.numel(); ++i) gx.v[static_cast<size_t>(i)] += gxp.v[static_cast<size_t>(i)];
    } else {
        unpad3d_acc(gxp, pad, gx);
    }
}

// d loss / d w accumulated into gw; d loss / d bias into gb when non-null.
inline void conv3d_backward_weight(const Tensor& gout, const Tensor& x, int stride, int pad, Tensor& gw, Tensor* gb) {
    const int Ci = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = gw.dim(0), k = gw.dim(2);
    const int Do = gout.dim(1), Ho = gout.dim(2), Wo = gout.dim(3);
    Tensor xp = pad3d(x, pad);
    const int Hp = H + 2 * pad, Wp = W + 2 * pad;

    for (int co = 0; co < Co; ++co) {
        const float* gc = &gout.v[static_cast<size_t>(co) * Do * Ho * Wo];
        if (gb) {
            double acc = 0.0;
            for (i64 i = 0; i < static_cast<i64>(Do) * Ho * Wo; ++i) acc += gc[i];
            gb->v[static_cast<size_t>(co)] += static_cast<float>(acc);
        }
        for (int ci = 0; ci < Ci; ++ci) {
            const float* xc = &xp.v[static_cast<size_t>(ci) * (D + 2 * pad) * Hp * Wp];
            float* gwc = &gw.v[(static_cast<size_t>(co) * Ci + ci) * k * k * k];
            for (int kz = 0; kz < k; ++kz)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        double acc = 0.0;
                        for (int zo = 0; zo < Do; ++zo) {
                            const int zi = zo * stride + kz;
                            for (int yo = 0; yo < Ho; ++yo) {
                                const int yi = yo * stride + ky;
                                const float* src = &xc[(static_cast<size_t>(zi) * Hp + yi) * Wp + kx];
                                const float* g = &gc[(static_cast<size_t>(zo) * Ho + yo) * Wo];
                                float rowacc = 0.0f;
                                if (stride == 1) {
                                    for (int xo = 0; xo < Wo; ++xo) rowacc += g[xo] * src[xo];
                                } else {
                                    for (int xo = 0; xo < Wo; ++xo) rowacc += g[xo] * src[xo * stride];
                                }
                                acc += rowacc;
                            }
                        }
                        gwc[(kz * k + ky) * k + kx] += static_cast<float>(acc);
                    }
        }
    }
}

// Transposed conv: out[(zi*s+kz-p)...] += w * x[zi...]. Weight layout {Ci,Co,k,k,k}.
inline Tensor convT3d_forward(const Tensor& x, const Tensor& w, const Tensor* bias, int stride, int pad) {
    const int Ci = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (w.dim(0) != Ci) throw ShapeError("convT3d: weight Ci mismatch");
    const int Co = w.dim(1), k = w.dim(2);
    const int Do = convT_out_dim(D, k, stride, pad);
    const int Ho = convT_out_dim(H, k, stride, pad);
    const int Wo = convT_out_dim(W, k, stride, pad);

    // scatter into a full (unpadded) buffer, then crop `pad` from each side
    const int Df = (D - 1) * stride + k, Hf = (H - 1) * stride + k, Wf = (W - 1) * stride + k;
    Tensor full({Co, Df, Hf, Wf});
    for (int ci = 0; ci < Ci; ++ci) {
        const float* xc = &x.v[static_cast<size_t>(ci) * D * H * W];
        for (int co = 0; co < Co; ++co) {
            float* oc = &full.v[static_cast<size_t>(co) * Df * Hf * Wf];
            const float* wc = &w.v[(static_cast<size_t>(ci) * Co + co) * k * k * k];
            for (int kz = 0; kz < k; ++kz)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const float wv = wc[(kz * k + ky) * k + kx];
                        if (wv == 0.0f) continue;
                        for (int zi = 0; zi < D; ++zi) {
                            const int zo = zi * stride + kz;
                            for (int yi = 0; yi < H; ++yi) {
                                const int yo = yi * stride + ky;
                                const float* src = &xc[(static_cast<size_t>(zi) * H + yi) * W];
                                float* dst = &oc[(static_cast<size_t>(zo) * Hf + yo) * Wf + kx];
                                if (stride == 1) {
                                    for (int xi = 0; xi < W; ++xi) dst[xi] += wv * src[xi];
                                } else {
                                    for (int xi = 0; xi < W; ++xi) dst[xi * stride] += wv * src[xi];
                                }
                            }
                        }
                    }
        }
    }
    Tensor out({Co, Do, Ho, Wo});
    for (int co = 0; co < Co; ++co) {
        const float bv = bias ? bias->v[static_cast<size_t>(co)] : 0.0f;
        for (int z = 0; z < Do; ++z)
            for (int y = 0; y < Ho; ++y) {
                const float* src = &full.v[((static_cast<size_t>(co) * Df + z + pad) * Hf + y + pad) * Wf + pad];
                float* dst = &out.v[((static_cast<size_t>(co) * Do + z) * Ho + y) * Wo];
                for (int x2 = 0; x2 < Wo; ++x2) dst[x2] = src[x2] + bv;
            }
    }
    return out;
}

inline void convT3d_backward_input(const Tensor& gout, const Tensor& w, int stride, int pad, Tensor& gx) {
    // adjoint of scatter = gather: gx[ci][zi] += sum w * gout_padded[co][zi*s+kz]
    const int Ci = gx.dim(0), D = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
    const int Co = w.dim(1), k = w.dim(2);
    const int Df = (D - 1) * stride + k, Hf = (H - 1) * stride + k, Wf = (W - 1) * stride + k;
    // re-embed gout into the full buffer coordinates
    Tensor gfull({Co, Df, Hf, Wf});
    const int Do = gout.dim(1), Ho = gout.dim(2), Wo = gout.dim(3);
    for (int co = 0; co < Co; ++co)
        for (int z = 0; z < Do; ++z)
            for (int y = 0; y < Ho; ++y) {
                const float* src = &gout.v[((static_cast<size_t>(co) * Do + z) * Ho + y) * Wo];
                float* dst = &gfull.v[((static_cast<size_t>(co) * Df + z + pad) * Hf + y + pad) * Wf + pad];
                std::memcpy(dst, src, sizeof(float) * static_cast<size_t>(Wo));
            }
    for (int ci = 0; ci < Ci; ++ci) {
        float* gxc = &gx.v[static_cast<size_t>(ci) * D * H * W];
        for (int co = 0; co < Co; ++co) {
            const float* gc = &gfull.v[static_cast<size_t>(co) * Df * Hf * Wf];
            const float* wc = &w.v[(static_cast<size_t>(ci) * Co + co) * k * k * k];
            for (int kz = 0; kz < k; ++kz)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const float wv = wc[(kz * k + ky) * k + kx];
                        if (wv == 0.0f) continue;
                        for (int zi = 0; zi < D; ++zi) {
                            const int zo = zi * stride + kz;
                            for (int yi = 0; yi < H; ++yi) {
                                const int yo = yi * stride + ky;
                                const float* src = &gc[(static_cast<size_t>(zo) * Hf + yo) * Wf + kx];
                                float* dst = &gxc[(static_cast<size_t>(zi) * H + yi) * W];
                                if (stride == 1) {
                                    for (int xi = 0; xi < W; ++xi) dst[xi] += wv * src[xi];
                                } else {
                                    for (int xi = 0; xi < W; ++xi) dst[xi] += wv * src[xi * stride];
                                }
                            }
                        }
                    }
        }
    }
}

inline void convT3d_backward_weight(const Tensor& gout, const Tensor& x, int stride, int pad, Tensor& gw, Tensor* gb) {
    const int Ci = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = gw.dim(1), k = gw.dim(2);
    const int Df = (D - 1) * stride + k, Hf = (H - 1) * stride + k, Wf = (W - 1) * stride + k;
    Tensor gfull({Co, Df, Hf, Wf});
    const int Do = gout.dim(1), Ho = gout.dim(2), Wo = gout.dim(3);
    for (int co = 0; co < Co; ++co) {
        if (gb) {
            double acc = 0.0;
            const float* gc = &gout.v[static_cast<size_t>(co) * Do * Ho * Wo];
            for (i64 i = 0; i < static_cast<i64>(Do) * Ho * Wo; ++i) acc += gc[i];
            gb->v[static_cast<size_t>(co)] += static_cast<float>(acc);
        }
        for (int z = 0; z < Do; ++z)
            for (int y = 0; y < Ho; ++y) {
                const float* src = &gout.v[((static_cast<size_t>(co) * Do + z) * Ho + y) * Wo];
                float* dst = &gfull.v[((static_cast<size_t>(co) * Df + z + pad) * Hf + y + pad) * Wf + pad];
                std::memcpy(dst, src, sizeof(float) * static_cast<size_t>(Wo));
            }
    }
    for (int ci = 0; ci < Ci; ++ci) {
        const float* xc = &x.v[static_cast<size_t>(ci) * D * H * W];
        for (int co = 0; co < Co; ++co) {
            const float* gc = &gfull.v[static_cast<size_t>(co) * Df * Hf * Wf];
            float* gwc = &gw.v[(static_cast<size_t>(ci) * Co + co) * k * k * k];
            for (int kz = 0; kz < k; ++kz)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        double acc = 0.0;
                        for (int zi = 0; zi < D; ++zi) {
                            const int zo = zi * stride + kz;
                            for (int yi = 0; yi < H; ++yi) {
                                const int yo = yi * stride + ky;
                                const float* g = &gc[(static_cast<size_t>(zo) * Hf + yo) * Wf + kx];
                                const float* src = &xc[(static_cast<size_t>(zi) * H + yi) * W];
                                float rowacc = 0.0f;
                                if (stride == 1) {
                                    for (int xi = 0; xi < W; ++xi) rowacc += g[xi] * src[xi];
                                } else {
                                    for (int xi = 0; xi < W; ++xi) rowacc += g[xi * stride] * src[xi];
                                }
                                acc += rowacc;
                            }
                        }
                        gwc[(kz * k + ky) * k + kx] += static_cast<float>(acc);
                    }
        }
    }
}

}  // namespace lad::kernels
