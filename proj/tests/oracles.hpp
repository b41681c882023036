#pragma once

// Independent reference implementations used as test oracles. Everything
// here is deliberately naive: direct loops, no shared code with the library
// beyond the Tensor container.

#include <cmath>
#include <vector>

#include "crackclf/nn.hpp"

namespace oracles {

using crackclf::Rng;
using crackclf::Tensor;
using crackclf::VarPtr;

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-6);
}

inline Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, scale);
    return t;
}

inline Tensor random_binary_mask(int64_t h, int64_t w, Rng& rng, double p_on = 0.3) {
    Tensor t({1, h, w});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform() < p_on ? 1.0 : 0.0;
    return t;
}

// Central finite differences against the analytic gradients of `leaves`.
// `forward` must rebuild the graph from the leaves' current values. When
// max_coords >= 0, that many coordinates per leaf are sampled with `pick`.
template <class F>
double max_grad_rel_err(F&& forward, const std::vector<VarPtr>& leaves, double eps = 1e-4,
                        int64_t max_coords = -1, Rng* pick = nullptr) {
    VarPtr loss = forward();
    crackclf::backward(loss);
    std::vector<Tensor> analytic;
    analytic.reserve(leaves.size());
    for (const auto& l : leaves) analytic.push_back(l->grad);

    double worst = 0.0;
    for (size_t k = 0; k < leaves.size(); ++k) {
        Tensor& v = leaves[k]->value;
        std::vector<int64_t> coords;
        if (max_coords < 0 || v.numel() <= max_coords) {
            for (int64_t i = 0; i < v.numel(); ++i) coords.push_back(i);
        } else {
            for (int64_t j = 0; j < max_coords; ++j) coords.push_back(pick->below(v.numel()));
        }
        for (int64_t i : coords) {
            double saved = v[i];
            v[i] = saved + eps;
            double fp = forward()->value[0];
            v[i] = saved - eps;
            double fm = forward()->value[0];
            v[i] = saved;
            double numeric = (fp - fm) / (2.0 * eps);
            worst = std::max(worst, rel_err(analytic[k][i], numeric));
        }
    }
    return worst;
}

inline Tensor naive_conv2d(const Tensor& x, const Tensor& W, const Tensor* b, int64_t stride, int64_t pad) {
    int64_t Cout = W.dim(0), Cin = W.dim(1), kh = W.dim(2), kw = W.dim(3);
    int64_t H = x.dim(1), Wd = x.dim(2);
    int64_t Ho = (H + 2 * pad - kh) / stride + 1, Wo = (Wd + 2 * pad - kw) / stride + 1;
    Tensor y({Cout, Ho, Wo});
    for (int64_t co = 0; co < Cout; ++co)
        for (int64_t oh = 0; oh < Ho; ++oh)
            for (int64_t ow = 0; ow < Wo; ++ow) {
                double acc = b ? (*b)[co] : 0.0;
                for (int64_t ci = 0; ci < Cin; ++ci)
                    for (int64_t a = 0; a < kh; ++a)
                        for (int64_t bb = 0; bb < kw; ++bb) {
                            int64_t ih = oh * stride + a - pad, iw = ow * stride + bb - pad;
                            if (ih >= 0 && ih < H && iw >= 0 && iw < Wd)
                                acc += x.at3(ci, ih, iw) * W[((co * Cin + ci) * kh + a) * kw + bb];
                        }
                y.at3(co, oh, ow) = acc;
            }
    return y;
}

inline Tensor naive_conv_transpose2d(const Tensor& x, const Tensor& W, const Tensor* b, int64_t stride) {
    int64_t Cin = W.dim(0), Cout = W.dim(1), kh = W.dim(2), kw = W.dim(3);
    int64_t H = x.dim(1), Wd = x.dim(2);
    int64_t Ho = (H - 1) * stride + kh, Wo = (Wd - 1) * stride + kw;
    Tensor y({Cout, Ho, Wo});
    for (int64_t ci = 0; ci < Cin; ++ci)
        for (int64_t co = 0; co < Cout; ++co)
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < Wd; ++j)
                    for (int64_t a = 0; a < kh; ++a)
                        for (int64_t bb = 0; bb < kw; ++bb)
                            y.at3(co, i * stride + a, j * stride + bb) +=
                                x.at3(ci, i, j) * W[((ci * Cout + co) * kh + a) * kw + bb];
    if (b)
        for (int64_t co = 0; co < Cout; ++co)
            for (int64_t i = 0; i < Ho * Wo; ++i) y[co * Ho * Wo + i] += (*b)[co];
    return y;
}

} // namespace oracles
