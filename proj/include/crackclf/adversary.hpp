#pragma once

#include "crackclf/nn.hpp"

namespace crackclf {

struct CriticConfig {
    int64_t in_channels = 3;
    std::vector<int64_t> block_channels = {64, 128, 256, 512};
    int64_t kernel = 3;
    int64_t stride = 2;
    double leaky_slope = 0.2;
    std::string tap = "post"; // features taken after each block's nonlinearity

    int64_t feature_layers() const { return static_cast<int64_t>(block_channels.size()); }

    void validate() const {
        expect(in_channels >= 1, "CriticConfig: in_channels must be >= 1");
        expect(block_channels.size() >= 2, "CriticConfig: at least 2 blocks required");
        for (int64_t c : block_channels) expect(c >= 1, "CriticConfig: block channels must be positive");
        expect(kernel >= 1 && stride >= 1, "CriticConfig: kernel and stride must be >= 1");
        expect(tap == "post", "CriticConfig: only post-nonlinearity taps are supported");
    }
};

// Strided conv pyramid with leaky-ReLU and no normalization; each block
// halves the spatial size under the default kernel 3 / stride 2 / pad 1.
class Critic {
  public:
    Critic() = default;

    Critic(const CriticConfig& config, Rng& rng) : cfg(config) {
        cfg.validate();
        int64_t cin = cfg.in_channels;
        for (int64_t cout : cfg.block_channels) {
            blocks.emplace_back(cin, cout, cfg.kernel, cfg.stride, (cfg.kernel - 1) / 2, true, rng);
            cin = cout;
        }
    }

    // One feature tensor per block, tapped post-nonlinearity.
    std::vector<VarPtr> features(const VarPtr& img) const {
        expect_chw(img, "Critic::features");
        int64_t div = int64_t(1) << cfg.feature_layers();
        expect(img->value.dim(1) % div == 0 && img->value.dim(2) % div == 0,
               "Critic::features: H and W must be divisible by " + std::to_string(div) + ", got " +
                   img->value.shape_str());
        std::vector<VarPtr> feats;
        feats.reserve(blocks.size());
        VarPtr x = img;
        for (const auto& b : blocks) {
            x = leaky_relu(b(x), cfg.leaky_slope);
            feats.push_back(x);
        }
        return feats;
    }

    void collect(ParamList& out) const {
        for (size_t k = 0; k < blocks.size(); ++k) blocks[k].collect("block" + std::to_string(k + 1), out);
    }

    ParamList parameters() const {
        ParamList out;
        collect(out);
        return out;
    }

    CriticConfig cfg;
    std::vector<Conv2d> blocks;
};

// Per-channel broadcast of the mask over the image: out[c] = x[c] * m.
inline VarPtr mask_input(const VarPtr& x, const VarPtr& m) { return mul_spatial(x, m); }

// (1/N) sum_i mean|a_i - b_i|: per-layer elementwise mean so no layer
// dominates by element count, then the mean over layers.
inline VarPtr multiscale_l1(const std::vector<VarPtr>& a, const std::vector<VarPtr>& b) {
    expect(!a.empty() && a.size() == b.size(),
           "multiscale_l1: feature lists must be nonempty and the same length");
    VarPtr total = make_const(Tensor::scalar(0.0));
    for (size_t i = 0; i < a.size(); ++i) {
        expect(a[i]->value.same_shape(b[i]->value),
               "multiscale_l1: layer " + std::to_string(i) + " shape mismatch " + a[i]->value.shape_str() +
                   " vs " + b[i]->value.shape_str());
        total = add(total, mean_all(abs_diff(a[i], b[i])));
    }
    return scale(total, 1.0 / static_cast<double>(a.size()));
}

// multiscale_l1 between critic features of the image masked by the
// prediction and by the ground truth. The prediction mask stays soft so
// gradients flow through it; the ground-truth side enters as a constant.
inline VarPtr adversarial_loss(const VarPtr& x, const VarPtr& s_pred, const Tensor& y, const Critic& critic) {
    expect(s_pred->value.rank() == 3 && s_pred->value.dim(0) == 1,
           "adversarial_loss: prediction must be [1,H,W], got " + s_pred->value.shape_str());
    expect(s_pred->value.same_shape(y),
           "adversarial_loss: prediction " + s_pred->value.shape_str() + " vs ground truth " + y.shape_str());
    auto fa = critic.features(mask_input(x, s_pred));
    auto fb = critic.features(mask_input(x, make_const(y)));
    return multiscale_l1(fa, fb);
}

} // namespace crackclf
