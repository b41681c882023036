#pragma once

#include "crackclf/nn.hpp"

namespace crackclf {

// Parameters for one attention site: the pooling logit map w_k, the shared
// channel MLP (no bias), and the 3x3 spatial-gate conv (2 -> 1, with bias).
struct AttentionParams {
    int64_t channels = 0, reduction = 1;
    VarPtr wk;  // [1,C,1,1]
    VarPtr w0;  // [C/r, C]
    VarPtr w1;  // [C, C/r]
    Conv2d sa;  // 3x3, 2 -> 1, pad 1

    AttentionParams() = default;
    AttentionParams(int64_t C, int64_t r, Rng& rng) : channels(C), reduction(r) {
        expect(C >= 1 && r >= 1, "AttentionParams: channels and reduction must be positive");
        expect(C % r == 0, "AttentionParams: reduction " + std::to_string(r) + " must divide channels " +
                               std::to_string(C));
        wk = param_tensor({1, C, 1, 1}, C, rng);
        w0 = param_tensor({C / r, C}, C, rng);
        w1 = param_tensor({C, C / r}, C / r, rng);
        sa = Conv2d(2, 1, 3, 1, 1, true, rng);
    }

    void collect(const std::string& prefix, ParamList& out) const {
        out.push_back({prefix + ".wk", wk});
        out.push_back({prefix + ".w0", w0});
        out.push_back({prefix + ".w1", w1});
        sa.collect(prefix + ".sa", out);
    }
};

inline void expect_att_compat(const VarPtr& f, const AttentionParams& p, const char* who) {
    expect_chw(f, who);
    expect(f->value.dim(0) == p.channels, std::string(who) + ": feature has " +
                                              std::to_string(f->value.dim(0)) + " channels, params expect " +
                                              std::to_string(p.channels));
}

// Softmax-weighted spatial pooling: alpha = softmax over all H*W positions
// of (w_k . x_j), output is the alpha-weighted sum of position vectors.
// With w_k = 0 this is exactly global average pooling.
inline VarPtr global_attention_pooling(const VarPtr& f, const AttentionParams& p) {
    expect_att_compat(f, p, "global_attention_pooling");
    VarPtr alpha = softmax_flat(conv2d(f, p.wk, nullptr, 1, 0)); // [1,H,W]
    return sum_over_spatial(mul_spatial(f, alpha));              // [C]
}

// sigma(MLP(F_gap) + MLP(F_max)) with the MLP (w0, ReLU, w1) shared across
// both descriptors.
inline VarPtr channel_attention(const VarPtr& f, const AttentionParams& p) {
    expect_att_compat(f, p, "channel_attention");
    auto mlp = [&p](const VarPtr& v) { return linear(relu(linear(v, p.w0)), p.w1); };
    return sigmoid(add(mlp(global_attention_pooling(f, p)), mlp(spatial_max(f))));
}

// sigma(Conv3x3([channel-mean; channel-max])), spatial size preserved.
inline VarPtr spatial_attention(const VarPtr& f, const AttentionParams& p) {
    expect_att_compat(f, p, "spatial_attention");
    return sigmoid(p.sa(concat_channels({mean_over_channels(f), max_over_channels(f)})));
}

// Channel gate first (broadcast over H,W), then spatial gate on the
// channel-weighted map (broadcast over C). Shape preserved.
inline VarPtr cbam_plus(const VarPtr& f, const AttentionParams& p) {
    expect_att_compat(f, p, "cbam_plus");
    VarPtr cw = mul_channel(f, channel_attention(f, p));
    return mul_spatial(cw, spatial_attention(cw, p));
}

// Decoder block: transposed-conv upsampling (halves channels, doubles H,W),
// skip fusion, then the attention pair. Fusion is elementwise addition by
// default; the concatenation variant routes [up; skip] through a 1x1
// projection back to skip's channel count.
struct UcbamBlock {
    ConvTranspose2d up; // 2C -> C, k=2, s=2
    Conv2d proj;        // concat mode only: 2C -> C, 1x1
    AttentionParams att;
    bool concat_fusion = false;

    UcbamBlock() = default;
    UcbamBlock(int64_t out_channels, int64_t reduction, bool concat, Rng& rng) : concat_fusion(concat) {
        up = ConvTranspose2d(2 * out_channels, out_channels, 2, 2, true, rng);
        if (concat) proj = Conv2d(2 * out_channels, out_channels, 1, 1, 0, true, rng);
        att = AttentionParams(out_channels, reduction, rng);
    }

    VarPtr operator()(const VarPtr& skip, const VarPtr& below) const {
        expect_chw(skip, "ucbam");
        expect_chw(below, "ucbam");
        expect(below->value.dim(0) == 2 * skip->value.dim(0) &&
                   2 * below->value.dim(1) == skip->value.dim(1) &&
                   2 * below->value.dim(2) == skip->value.dim(2),
               "ucbam: below " + below->value.shape_str() + " must have 2x the channels and half the spatial size of skip " +
                   skip->value.shape_str());
        expect(skip->value.dim(0) == att.channels, "ucbam: block built for " + std::to_string(att.channels) +
                                                       " channels, skip has " + std::to_string(skip->value.dim(0)));
        VarPtr u = up(below);
        VarPtr fused = concat_fusion ? proj(concat_channels({u, skip})) : add(u, skip);
        return cbam_plus(fused, att);
    }

    void collect(const std::string& prefix, ParamList& out) const {
        up.collect(prefix + ".up", out);
        if (concat_fusion) proj.collect(prefix + ".proj", out);
        att.collect(prefix + ".att", out);
    }
};

inline VarPtr ucbam(const VarPtr& skip, const VarPtr& below, const UcbamBlock& block) {
    return block(skip, below);
}

} // namespace crackclf
