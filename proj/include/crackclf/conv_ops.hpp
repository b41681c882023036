#pragma once

#include <Eigen/Core>

#include "crackclf/autograd.hpp"

namespace crackclf {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

namespace detail {

// Patch matrix for output columns [n0,n1): K = Cin*kh*kw rows, one column
// per output pixel, zero padding outside the image.
inline void im2col_range(const Tensor& x, int64_t kh, int64_t kw, int64_t stride, int64_t pad,
                         int64_t Wo, int64_t n0, int64_t n1, double* col) {
    int64_t Cin = x.dim(0), H = x.dim(1), W = x.dim(2), nc = n1 - n0;
    for (int64_t ci = 0; ci < Cin; ++ci)
        for (int64_t a = 0; a < kh; ++a)
            for (int64_t b = 0; b < kw; ++b) {
                double* dst = col + ((ci * kh + a) * kw + b) * nc;
                for (int64_t n = n0; n < n1; ++n) {
                    int64_t oh = n / Wo, ow = n % Wo;
                    int64_t ih = oh * stride + a - pad, iw = ow * stride + b - pad;
                    dst[n - n0] = (ih >= 0 && ih < H && iw >= 0 && iw < W) ? x.at3(ci, ih, iw) : 0.0;
                }
            }
}

inline void col2im_range(const double* col, int64_t kh, int64_t kw, int64_t stride, int64_t pad,
                         int64_t Wo, int64_t n0, int64_t n1, Tensor& dx) {
    int64_t Cin = dx.dim(0), H = dx.dim(1), W = dx.dim(2), nc = n1 - n0;
    for (int64_t ci = 0; ci < Cin; ++ci)
        for (int64_t a = 0; a < kh; ++a)
            for (int64_t b = 0; b < kw; ++b) {
                const double* src = col + ((ci * kh + a) * kw + b) * nc;
                for (int64_t n = n0; n < n1; ++n) {
                    int64_t oh = n / Wo, ow = n % Wo;
                    int64_t ih = oh * stride + a - pad, iw = ow * stride + b - pad;
                    if (ih >= 0 && ih < H && iw >= 0 && iw < W) dx.at3(ci, ih, iw) += src[n - n0];
                }
            }
}

constexpr int64_t kColChunk = 8192; // output pixels per im2col GEMM slab

} // namespace detail

// Cross-correlation with zero padding; W:[Cout,Cin,kh,kw], x:[Cin,H,W].
// The patch matrix is rebuilt chunk by chunk in backward rather than kept
// alive, so peak memory stays bounded at full resolution.
inline VarPtr conv2d(const VarPtr& x, const VarPtr& W, const VarPtr& b, int64_t stride, int64_t pad) {
    expect_chw(x, "conv2d");
    expect(W->value.rank() == 4, "conv2d: weight must be [Cout,Cin,kh,kw], got " + W->value.shape_str());
    expect(stride >= 1 && pad >= 0, "conv2d: stride must be >=1 and pad >=0");
    int64_t Cout = W->value.dim(0), Cin = W->value.dim(1), kh = W->value.dim(2), kw = W->value.dim(3);
    int64_t H = x->value.dim(1), Wd = x->value.dim(2);
    expect(x->value.dim(0) == Cin,
           "conv2d: input has " + std::to_string(x->value.dim(0)) + " channels, weight expects " + std::to_string(Cin));
    int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    int64_t Wo = (Wd + 2 * pad - kw) / stride + 1;
    expect(H + 2 * pad >= kh && Wd + 2 * pad >= kw, "conv2d: kernel larger than padded input");
    if (b) expect(b->value.rank() == 1 && b->value.dim(0) == Cout,
                  "conv2d: bias must be [" + std::to_string(Cout) + "], got " + b->value.shape_str());

    int64_t K = Cin * kh * kw, N = Ho * Wo;
    Tensor y({Cout, Ho, Wo});
    {
        CMapM Wmat(W->value.data(), Cout, K);
        MapM Ymat(y.data(), Cout, N);
        std::vector<double> colbuf;
        for (int64_t n0 = 0; n0 < N; n0 += detail::kColChunk) {
            int64_t n1 = std::min(N, n0 + detail::kColChunk), nc = n1 - n0;
            colbuf.resize(static_cast<size_t>(K * nc));
            detail::im2col_range(x->value, kh, kw, stride, pad, Wo, n0, n1, colbuf.data());
            CMapM colM(colbuf.data(), K, nc);
            Ymat.block(0, n0, Cout, nc).noalias() = Wmat * colM;
        }
    }
    if (b)
        for (int64_t c = 0; c < Cout; ++c)
            for (int64_t i = 0; i < N; ++i) y[c * N + i] += b->value[c];

    Var *px = x.get(), *pw = W.get(), *pb = b ? b.get() : nullptr;
    std::vector<VarPtr> parents{x, W};
    if (b) parents.push_back(b);
    return make_op(std::move(y), std::move(parents),
                   [px, pw, pb, stride, pad, Cout, Cin, kh, kw, Wo, K, N](Var& self) {
        CMapM dY(self.grad.data(), Cout, N);
        CMapM Wmat(pw->value.data(), Cout, K);
        MapM dW(pw->grad.data(), Cout, K);
        std::vector<double> colbuf, dcolbuf;
        for (int64_t n0 = 0; n0 < N; n0 += detail::kColChunk) {
            int64_t n1 = std::min(N, n0 + detail::kColChunk), nc = n1 - n0;
            if (pw->requires_grad) {
                colbuf.resize(static_cast<size_t>(K * nc));
                detail::im2col_range(px->value, kh, kw, stride, pad, Wo, n0, n1, colbuf.data());
                CMapM colM(colbuf.data(), K, nc);
                dW.noalias() += dY.block(0, n0, Cout, nc) * colM.transpose();
            }
            if (px->requires_grad) {
                dcolbuf.resize(static_cast<size_t>(K * nc));
                MapM dcol(dcolbuf.data(), K, nc);
                dcol.noalias() = Wmat.transpose() * dY.block(0, n0, Cout, nc);
                detail::col2im_range(dcolbuf.data(), kh, kw, stride, pad, Wo, n0, n1, px->grad);
            }
        }
        if (pb)
            for (int64_t c = 0; c < Cout; ++c) {
                double s = 0.0;
                for (int64_t i = 0; i < N; ++i) s += self.grad[c * N + i];
                pb->grad[c] += s;
            }
    });
}

// Fractionally-strided counterpart; W:[Cin,Cout,kh,kw], output
// [(H-1)*stride+kh, (W-1)*stride+kw]. Overlapping taps accumulate.
inline VarPtr conv_transpose2d(const VarPtr& x, const VarPtr& W, const VarPtr& b, int64_t stride) {
    expect_chw(x, "conv_transpose2d");
    expect(W->value.rank() == 4, "conv_transpose2d: weight must be [Cin,Cout,kh,kw], got " + W->value.shape_str());
    expect(stride >= 1, "conv_transpose2d: stride must be >= 1");
    int64_t Cin = W->value.dim(0), Cout = W->value.dim(1), kh = W->value.dim(2), kw = W->value.dim(3);
    int64_t H = x->value.dim(1), Wd = x->value.dim(2);
    expect(x->value.dim(0) == Cin,
           "conv_transpose2d: input has " + std::to_string(x->value.dim(0)) + " channels, weight expects " +
               std::to_string(Cin));
    if (b) expect(b->value.rank() == 1 && b->value.dim(0) == Cout,
                  "conv_transpose2d: bias must be [" + std::to_string(Cout) + "], got " + b->value.shape_str());
    int64_t Ho = (H - 1) * stride + kh, Wo = (Wd - 1) * stride + kw;
    int64_t R = Cout * kh * kw, HW = H * Wd;

    // M = W' X with W viewed as [Cin, R]; M[(co,a,b), (i,j)] scatters to
    // output pixel (i*stride+a, j*stride+b).
    Tensor y({Cout, Ho, Wo});
    {
        std::vector<double> M(static_cast<size_t>(R * HW));
        CMapM Wmat(W->value.data(), Cin, R);
        CMapM X(x->value.data(), Cin, HW);
        MapM Mm(M.data(), R, HW);
        Mm.noalias() = Wmat.transpose() * X;
        for (int64_t co = 0; co < Cout; ++co)
            for (int64_t a = 0; a < kh; ++a)
                for (int64_t bb = 0; bb < kw; ++bb) {
                    const double* src = M.data() + ((co * kh + a) * kw + bb) * HW;
                    for (int64_t i = 0; i < H; ++i)
                        for (int64_t j = 0; j < Wd; ++j)
                            y.at3(co, i * stride + a, j * stride + bb) += src[i * Wd + j];
                }
        if (b)
            for (int64_t co = 0; co < Cout; ++co)
                for (int64_t i = 0; i < Ho * Wo; ++i) y[co * Ho * Wo + i] += b->value[co];
    }

    Var *px = x.get(), *pw = W.get(), *pb = b ? b.get() : nullptr;
    std::vector<VarPtr> parents{x, W};
    if (b) parents.push_back(b);
    return make_op(std::move(y), std::move(parents),
                   [px, pw, pb, stride, Cin, Cout, kh, kw, H, Wd, R, HW](Var& self) {
        std::vector<double> dM(static_cast<size_t>(R * HW));
        for (int64_t co = 0; co < Cout; ++co)
            for (int64_t a = 0; a < kh; ++a)
                for (int64_t bb = 0; bb < kw; ++bb) {
                    double* dst = dM.data() + ((co * kh + a) * kw + bb) * HW;
                    for (int64_t i = 0; i < H; ++i)
                        for (int64_t j = 0; j < Wd; ++j)
                            dst[i * Wd + j] = self.grad.at3(co, i * stride + a, j * stride + bb);
                }
        CMapM dMm(dM.data(), R, HW);
        if (px->requires_grad) {
            CMapM Wmat(pw->value.data(), Cin, R);
            MapM dX(px->grad.data(), Cin, HW);
            dX.noalias() += Wmat * dMm;
        }
        if (pw->requires_grad) {
            CMapM X(px->value.data(), Cin, HW);
            MapM dW(pw->grad.data(), Cin, R);
            dW.noalias() += X * dMm.transpose();
        }
        if (pb) {
            int64_t No = self.grad.numel() / Cout;
            for (int64_t co = 0; co < Cout; ++co) {
                double s = 0.0;
                for (int64_t i = 0; i < No; ++i) s += self.grad[co * No + i];
                pb->grad[co] += s;
            }
        }
    });
}

// 2x2 window, stride 2; even spatial dims required. Gradient routes to the
// first maximal element of each window.
inline VarPtr maxpool2d_2x2(const VarPtr& x) {
    expect_chw(x, "maxpool2d_2x2");
    int64_t C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    expect(H % 2 == 0 && W % 2 == 0, "maxpool2d_2x2: spatial dims must be even, got " + x->value.shape_str());
    int64_t Ho = H / 2, Wo = W / 2;
    Tensor y({C, Ho, Wo});
    auto arg = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(C * Ho * Wo));
    for (int64_t c = 0; c < C; ++c)
        for (int64_t oh = 0; oh < Ho; ++oh)
            for (int64_t ow = 0; ow < Wo; ++ow) {
                int64_t best = -1;
                double bv = 0.0;
                for (int64_t a = 0; a < 2; ++a)
                    for (int64_t bb = 0; bb < 2; ++bb) {
                        int64_t k = (c * H + 2 * oh + a) * W + 2 * ow + bb;
                        double v = x->value[k];
                        if (best < 0 || v > bv) { best = k; bv = v; }
                    }
                (*arg)[static_cast<size_t>((c * Ho + oh) * Wo + ow)] = best;
                y.at3(c, oh, ow) = bv;
            }
    Var* px = x.get();
    return make_op(std::move(y), {x}, [px, arg](Var& self) {
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            px->grad[(*arg)[static_cast<size_t>(i)]] += self.grad[i];
    });
}

namespace detail {

struct LerpAxis {
    std::vector<int64_t> i0, i1;
    std::vector<double> w1; // weight of i1; i0 carries 1-w1
};

// Half-pixel-center source mapping (align_corners = false).
inline LerpAxis lerp_axis(int64_t in_n, int64_t out_n) {
    LerpAxis ax;
    ax.i0.resize(static_cast<size_t>(out_n));
    ax.i1.resize(static_cast<size_t>(out_n));
    ax.w1.resize(static_cast<size_t>(out_n));
    double r = static_cast<double>(in_n) / static_cast<double>(out_n);
    for (int64_t o = 0; o < out_n; ++o) {
        double s = (static_cast<double>(o) + 0.5) * r - 0.5;
        double f = std::floor(s);
        double t = s - f;
        int64_t lo = static_cast<int64_t>(f);
        ax.i0[static_cast<size_t>(o)] = std::clamp<int64_t>(lo, 0, in_n - 1);
        ax.i1[static_cast<size_t>(o)] = std::clamp<int64_t>(lo + 1, 0, in_n - 1);
        ax.w1[static_cast<size_t>(o)] = (s <= 0.0 || ax.i0[static_cast<size_t>(o)] == ax.i1[static_cast<size_t>(o)]) ? 0.0 : t;
    }
    return ax;
}

} // namespace detail

inline VarPtr bilinear_upsample(const VarPtr& x, int64_t Ho, int64_t Wo) {
    expect_chw(x, "bilinear_upsample");
    expect(Ho >= 1 && Wo >= 1, "bilinear_upsample: target dims must be positive");
    int64_t C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    auto ay = std::make_shared<detail::LerpAxis>(detail::lerp_axis(H, Ho));
    auto axx = std::make_shared<detail::LerpAxis>(detail::lerp_axis(W, Wo));
    Tensor y({C, Ho, Wo});
    for (int64_t c = 0; c < C; ++c)
        for (int64_t oy = 0; oy < Ho; ++oy) {
            int64_t y0 = ay->i0[static_cast<size_t>(oy)], y1 = ay->i1[static_cast<size_t>(oy)];
            double ty = ay->w1[static_cast<size_t>(oy)];
            for (int64_t ox = 0; ox < Wo; ++ox) {
                int64_t x0 = axx->i0[static_cast<size_t>(ox)], x1 = axx->i1[static_cast<size_t>(ox)];
                double tx = axx->w1[static_cast<size_t>(ox)];
                y.at3(c, oy, ox) = (1 - ty) * ((1 - tx) * x->value.at3(c, y0, x0) + tx * x->value.at3(c, y0, x1)) +
                                   ty * ((1 - tx) * x->value.at3(c, y1, x0) + tx * x->value.at3(c, y1, x1));
            }
        }
    Var* px = x.get();
    return make_op(std::move(y), {x}, [px, ay, axx, C, Ho, Wo](Var& self) {
        for (int64_t c = 0; c < C; ++c)
            for (int64_t oy = 0; oy < Ho; ++oy) {
                int64_t y0 = ay->i0[static_cast<size_t>(oy)], y1 = ay->i1[static_cast<size_t>(oy)];
                double ty = ay->w1[static_cast<size_t>(oy)];
                for (int64_t ox = 0; ox < Wo; ++ox) {
                    int64_t x0 = axx->i0[static_cast<size_t>(ox)], x1 = axx->i1[static_cast<size_t>(ox)];
                    double tx = axx->w1[static_cast<size_t>(ox)];
                    double g = self.grad.at3(c, oy, ox);
                    px->grad.at3(c, y0, x0) += (1 - ty) * (1 - tx) * g;
                    px->grad.at3(c, y0, x1) += (1 - ty) * tx * g;
                    px->grad.at3(c, y1, x0) += ty * (1 - tx) * g;
                    px->grad.at3(c, y1, x1) += ty * tx * g;
                }
            }
    });
}

} // namespace crackclf
