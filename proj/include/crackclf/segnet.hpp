#pragma once

#include "crackclf/attention.hpp"

namespace crackclf {

struct SegNetConfig {
    int64_t in_channels = 3;
    std::vector<int64_t> stage_channels = {64, 128, 256, 512, 1024};
    int64_t reduction_ratio = 16;
    int64_t side_count = 5; // bottleneck + 4 decoder taps
    bool concat_fusion = false;

    void validate() const {
        expect(in_channels >= 1, "SegNetConfig: in_channels must be >= 1");
        expect(stage_channels.size() == 5, "SegNetConfig: stage_channels must list 5 stages");
        expect(stage_channels[0] >= 1, "SegNetConfig: stage_channels must be positive");
        for (size_t k = 1; k < 5; ++k)
            expect(stage_channels[k] == 2 * stage_channels[k - 1],
                   "SegNetConfig: stage_channels must double stage over stage");
        expect(side_count == 5, "SegNetConfig: side_count is fixed at 5");
        expect(reduction_ratio >= 1 && stage_channels[0] % reduction_ratio == 0,
               "SegNetConfig: reduction_ratio must divide stage_channels[0]");
    }
};

// Two padded 3x3 conv+ReLU layers; pooling is applied by the caller so the
// pre-pool features remain available as the skip connection.
struct EncoderBlock {
    Conv2d c1, c2;

    EncoderBlock() = default;
    EncoderBlock(int64_t cin, int64_t cout, Rng& rng)
        : c1(cin, cout, 3, 1, 1, true, rng), c2(cout, cout, 3, 1, 1, true, rng) {}

    VarPtr operator()(const VarPtr& x) const { return relu(c2(relu(c1(x)))); }

    void collect(const std::string& prefix, ParamList& out) const {
        c1.collect(prefix + ".conv1", out);
        c2.collect(prefix + ".conv2", out);
    }
};

// (pre_pool, pooled) pair; H and W must be even for the pool.
inline std::pair<VarPtr, VarPtr> encoder_block(const VarPtr& f, const EncoderBlock& block) {
    VarPtr pre = block(f);
    expect(pre->value.dim(1) % 2 == 0 && pre->value.dim(2) % 2 == 0,
           "encoder_block: spatial dims must be even to pool, got " + pre->value.shape_str());
    return {pre, maxpool2d_2x2(pre)};
}

struct ModelOutputs {
    std::vector<VarPtr> sides; // probability maps [1,H,W]
    VarPtr fused;              // probability map [1,H,W]

    // optional named intermediate activations for inspection tooling;
    // models without introspection leave these empty
    std::vector<std::string> feature_names;
    std::vector<VarPtr> features;
};

// U-shape front end: 5 encoder stages (4 pools), 4 attention decoder
// blocks, and a deeply supervised head. Side taps sit at the bottleneck and
// every decoder output; each is reduced to one channel, bilinearly
// upsampled to input resolution, and sigmoid-squashed. The fused map is a
// 1x1 conv over the 5 concatenated side logits.
class SegNet {
  public:
    SegNet() = default;

    SegNet(const SegNetConfig& config, Rng& rng) : cfg(config) {
        cfg.validate();
        const auto& ch = cfg.stage_channels;
        enc.reserve(5);
        for (size_t k = 0; k < 5; ++k)
            enc.emplace_back(k == 0 ? cfg.in_channels : ch[k - 1], ch[k], rng);
        dec.reserve(4);
        for (int k = 3; k >= 0; --k) // decoder channels 512 -> 64 under the default ladder
            dec.emplace_back(ch[static_cast<size_t>(k)], cfg.reduction_ratio, cfg.concat_fusion, rng);
        // tap channels: bottleneck then decoder outputs coarse-to-fine
        std::vector<int64_t> tap_ch = {ch[4], ch[3], ch[2], ch[1], ch[0]};
        side.reserve(5);
        for (int64_t c : tap_ch) side.emplace_back(c, 1, 1, 1, 0, true, rng);
        fuse = Conv2d(5, 1, 1, 1, 0, true, rng);
    }

    ModelOutputs forward(const VarPtr& image) const {
        expect_chw(image, "SegNet::forward");
        expect(image->value.dim(0) == cfg.in_channels,
               "SegNet::forward: expected " + std::to_string(cfg.in_channels) + " input channels, got " +
                   std::to_string(image->value.dim(0)));
        int64_t H = image->value.dim(1), W = image->value.dim(2);
        expect(H % 16 == 0 && W % 16 == 0 && H >= 16 && W >= 16,
               "SegNet::forward: input H and W must be multiples of 16, got " + image->value.shape_str());

        std::vector<VarPtr> skips; // pre-pool features of stages 1..4
        VarPtr x = image;
        for (size_t k = 0; k < 4; ++k) {
            auto [pre, pooled] = encoder_block(x, enc[k]);
            skips.push_back(pre);
            x = pooled;
        }
        VarPtr bottleneck = enc[4](x); // stage 5, no pool

        std::vector<VarPtr> taps = {bottleneck};
        VarPtr d = bottleneck;
        for (size_t k = 0; k < 4; ++k) {
            d = dec[k](skips[3 - k], d);
            taps.push_back(d);
        }

        std::vector<VarPtr> logits;
        logits.reserve(5);
        for (size_t m = 0; m < 5; ++m) logits.push_back(bilinear_upsample(side[m](taps[m]), H, W));

        ModelOutputs out;
        out.sides.reserve(5);
        for (const auto& l : logits) out.sides.push_back(sigmoid(l));
        out.fused = sigmoid(fuse(concat_channels(logits)));
        // numbering follows the parameter names: dec4 is the coarsest block
        out.feature_names = {"bottleneck", "ucbam4", "ucbam3", "ucbam2", "ucbam1"};
        out.features = taps;
        return out;
    }

    // Thresholded fused map; ties count as crack.
    Tensor predict(const Tensor& image, double threshold) const {
        expect(threshold > 0.0 && threshold < 1.0, "SegNet::predict: threshold must lie in (0,1)");
        ModelOutputs out = forward(make_const(image));
        Tensor mask(out.fused->value.shape());
        for (int64_t i = 0; i < mask.numel(); ++i) mask[i] = out.fused->value[i] >= threshold ? 1.0 : 0.0;
        return mask;
    }

    void collect(ParamList& out) const {
        for (size_t k = 0; k < enc.size(); ++k) enc[k].collect("enc" + std::to_string(k + 1), out);
        for (size_t k = 0; k < dec.size(); ++k) dec[k].collect("dec" + std::to_string(4 - k), out);
        for (size_t m = 0; m < side.size(); ++m) side[m].collect("side" + std::to_string(m + 1), out);
        fuse.collect("fuse", out);
    }

    ParamList parameters() const {
        ParamList out;
        collect(out);
        return out;
    }

    SegNetConfig cfg;
    std::vector<EncoderBlock> enc;
    std::vector<UcbamBlock> dec;
    std::vector<Conv2d> side;
    Conv2d fuse;
};

} // namespace crackclf
