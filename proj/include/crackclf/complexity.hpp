#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "crackclf/adversary.hpp"
#include "crackclf/common.hpp"
#include "crackclf/nn.hpp"
#include "crackclf/segnet.hpp"

namespace crackclf {

// Accounting convention: 2 FLOPs per multiply-accumulate, counted for
// convolutions, transposed convolutions, and linear maps only; bias adds
// count 1 FLOP per output element; activations, pooling, softmax,
// elementwise gates, and interpolation are excluded. Any comparison against
// published numbers is only meaningful under the same convention.

struct LayerCost {
    std::string name;
    int64_t params = 0;
    int64_t flops = 0;
};

struct CostReport {
    std::vector<LayerCost> layers;
    int64_t params = 0;
    int64_t flops = 0;

    void add(LayerCost c) {
        params += c.params;
        flops += c.flops;
        layers.push_back(std::move(c));
    }
    void extend(const CostReport& other) {
        for (const auto& c : other.layers) add(c);
    }
};

inline LayerCost conv_cost(std::string name, int64_t cin, int64_t cout, int64_t k, int64_t h_out,
                           int64_t w_out, bool bias) {
    LayerCost c;
    c.name = std::move(name);
    c.params = cout * cin * k * k + (bias ? cout : 0);
    c.flops = 2 * cin * k * k * cout * h_out * w_out + (bias ? cout * h_out * w_out : 0);
    return c;
}

// stride-k transposed conv: each input position applies the full kernel once
inline LayerCost deconv_cost(std::string name, int64_t cin, int64_t cout, int64_t k, int64_t h_in,
                             int64_t w_in, bool bias) {
    LayerCost c;
    c.name = std::move(name);
    c.params = cin * cout * k * k + (bias ? cout : 0);
    c.flops = 2 * cin * cout * k * k * h_in * w_in + (bias ? cout * (h_in * k) * (w_in * k) : 0);
    return c;
}

inline LayerCost linear_cost(std::string name, int64_t nin, int64_t nout) {
    LayerCost c;
    c.name = std::move(name);
    c.params = nin * nout;
    c.flops = 2 * nin * nout;
    return c;
}

// one attention site on a [C,h,w] feature map: pooling-logit 1x1 conv, the
// shared channel MLP applied to two descriptors, and the 3x3 spatial gate
inline CostReport attention_cost(const std::string& prefix, int64_t C, int64_t r, int64_t h,
                                 int64_t w) {
    CostReport rep;
    rep.add(conv_cost(prefix + ".wk", C, 1, 1, h, w, false));
    LayerCost mlp0 = linear_cost(prefix + ".w0", C, C / r);
    LayerCost mlp1 = linear_cost(prefix + ".w1", C / r, C);
    // the MLP runs once per descriptor (attention-pooled and max-pooled)
    mlp0.flops *= 2;
    mlp1.flops *= 2;
    rep.add(mlp0);
    rep.add(mlp1);
    rep.add(conv_cost(prefix + ".sa", 2, 1, 3, h, w, true));
    return rep;
}

// mirrors SegNet::forward layer by layer at the given input size; the params
// total of this walk must equal the parameter count of a constructed net
inline CostReport segnet_cost(const SegNetConfig& cfg, int64_t h, int64_t w) {
    cfg.validate();
    expect(h >= 16 && w >= 16 && h % 16 == 0 && w % 16 == 0,
           "segnet_cost: input H and W must be multiples of 16");
    const auto& ch = cfg.stage_channels;
    CostReport rep;

    int64_t ph = h, pw = w;
    int64_t cin = cfg.in_channels;
    for (size_t k = 0; k < 5; ++k) {
        const std::string base = "enc" + std::to_string(k + 1);
        rep.add(conv_cost(base + ".conv1", cin, ch[k], 3, ph, pw, true));
        rep.add(conv_cost(base + ".conv2", ch[k], ch[k], 3, ph, pw, true));
        cin = ch[k];
        if (k < 4) {
            ph /= 2;
            pw /= 2;
        }
    }

    // decoders run coarse-to-fine from the bottleneck resolution, doubling
    // the spatial size at each step
    int64_t dh = ph, dw = pw;
    for (int k = 3; k >= 0; --k) {
        const int64_t C = ch[static_cast<size_t>(k)];
        const std::string base = "dec" + std::to_string(k + 1);
        rep.add(deconv_cost(base + ".up", 2 * C, C, 2, dh, dw, true));
        dh *= 2;
        dw *= 2;
        if (cfg.concat_fusion) rep.add(conv_cost(base + ".proj", 2 * C, C, 1, dh, dw, true));
        rep.extend(attention_cost(base + ".att", C, cfg.reduction_ratio, dh, dw));
    }

    const std::vector<int64_t> tap_ch = {ch[4], ch[3], ch[2], ch[1], ch[0]};
    int64_t th = ph, tw = pw;
    for (size_t m = 0; m < 5; ++m) {
        rep.add(conv_cost("side" + std::to_string(m + 1), tap_ch[m], 1, 1, th, tw, true));
        if (m < 4) {
            th *= 2;
            tw *= 2;
        }
    }
    rep.add(conv_cost("fuse", 5, 1, 1, h, w, true));
    return rep;
}

inline CostReport critic_cost(const CriticConfig& cfg, int64_t h, int64_t w) {
    cfg.validate();
    const int64_t div = int64_t(1) << cfg.feature_layers();
    expect(h % div == 0 && w % div == 0,
           "critic_cost: input H and W must be divisible by " + std::to_string(div));
    CostReport rep;
    int64_t cin = cfg.in_channels;
    int64_t ph = h, pw = w;
    for (size_t k = 0; k < cfg.block_channels.size(); ++k) {
        ph /= cfg.stride;
        pw /= cfg.stride;
        rep.add(conv_cost("block" + std::to_string(k + 1), cin, cfg.block_channels[k], cfg.kernel,
                          ph, pw, true));
        cin = cfg.block_channels[k];
    }
    return rep;
}

struct FpsReport {
    double fps = 0.0;
    double median_ms = 0.0;
    int64_t passes = 0;
    int64_t warmups = 0;
};

// median over timed passes; the median is robust to scheduler hiccups that
// would skew a mean
inline FpsReport measure_fps(const std::function<void()>& pass, int64_t passes = 50,
                             int64_t warmups = 5) {
    expect(passes >= 1 && warmups >= 0, "measure_fps: need at least one timed pass");
    for (int64_t k = 0; k < warmups; ++k) pass();
    std::vector<double> ms;
    ms.reserve(static_cast<size_t>(passes));
    for (int64_t k = 0; k < passes; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        pass();
        const auto t1 = std::chrono::steady_clock::now();
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(ms.begin(), ms.end());
    const size_t n = ms.size();
    const double median = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
    FpsReport rep;
    rep.median_ms = median;
    rep.fps = median > 0.0 ? 1000.0 / median : 0.0;
    rep.passes = passes;
    rep.warmups = warmups;
    return rep;
}

}  // namespace crackclf
