#include <catch2/catch_amalgamated.hpp>

#include "crackclf/adversary.hpp"
#include "crackclf/complexity.hpp"
#include "crackclf/segnet.hpp"

using namespace crackclf;

TEST_CASE("conv cost closed form", "[complexity]") {
    // 3x3 conv, 3->64 channels, 256x256 output, no bias
    const LayerCost c = conv_cost("probe", 3, 64, 3, 256, 256, false);
    CHECK(c.params == 1728);
    CHECK(c.flops == 2LL * 1728 * 256 * 256);

    const LayerCost cb = conv_cost("probe", 3, 64, 3, 256, 256, true);
    CHECK(cb.params == 1728 + 64);
    CHECK(cb.flops == 2LL * 1728 * 256 * 256 + 64LL * 256 * 256);
}

TEST_CASE("conv flops linear in pixel count", "[complexity]") {
    const LayerCost base = conv_cost("c", 8, 16, 3, 64, 64, true);
    const LayerCost wide = conv_cost("c", 8, 16, 3, 64, 128, true);   // double the area
    const LayerCost both = conv_cost("c", 8, 16, 3, 128, 128, true);  // quadruple
    CHECK(wide.flops == 2 * base.flops);
    CHECK(both.flops == 4 * base.flops);
    CHECK(wide.params == base.params);  // params do not depend on resolution
}

TEST_CASE("linear cost", "[complexity]") {
    const LayerCost l = linear_cost("fc", 32, 8);
    CHECK(l.params == 256);
    CHECK(l.flops == 512);
}

TEST_CASE("segmenter cost walker matches real parameter count", "[complexity]") {
    SegNetConfig small;
    small.stage_channels = {4, 8, 16, 32, 64};
    small.reduction_ratio = 2;

    SegNetConfig cat = small;
    cat.concat_fusion = true;

    SegNetConfig full;  // defaults: 64..1024, ratio 16

    for (const SegNetConfig& cfg : {small, cat, full}) {
        Rng rng(5);
        SegNet net(cfg, rng);
        const CostReport rep = segnet_cost(cfg, 32, 32);
        INFO("stage0 " << cfg.stage_channels[0] << " concat " << cfg.concat_fusion);
        CHECK(rep.params == param_count(net.parameters()));
        CHECK(rep.flops > 0);

        int64_t sum = 0;
        for (const LayerCost& lc : rep.layers) sum += lc.params;
        CHECK(sum == rep.params);  // report totals are exactly the layer sums
    }
}

TEST_CASE("critic cost walker matches real parameter count", "[complexity]") {
    CriticConfig cfg;
    cfg.in_channels = 3;
    cfg.block_channels = {4, 8, 16};
    Rng rng(9);
    Critic critic(cfg, rng);
    const CostReport rep = critic_cost(cfg, 32, 32);
    CHECK(rep.params == param_count(critic.parameters()));
    CHECK(rep.layers.size() == 3);
}

TEST_CASE("segmenter flops scale linearly with input area", "[complexity]") {
    SegNetConfig cfg;
    cfg.stage_channels = {4, 8, 16, 32, 64};
    cfg.reduction_ratio = 2;
    const CostReport a = segnet_cost(cfg, 32, 32);
    const CostReport b = segnet_cost(cfg, 32, 64);
    // every counted op (conv/deconv/linear over feature maps) is linear in pixels
    // except the attention channel MLPs, which are resolution independent
    int64_t mlp_flops = 0;
    for (const LayerCost& lc : a.layers)
        if (lc.name.ends_with(".att.w0") || lc.name.ends_with(".att.w1")) mlp_flops += lc.flops;
    CHECK(b.flops - mlp_flops == 2 * (a.flops - mlp_flops));
    CHECK(a.params == b.params);
}

TEST_CASE("fps measurement counts passes", "[complexity]") {
    int64_t calls = 0;
    const FpsReport rep = measure_fps([&] { ++calls; }, 7, 2);
    CHECK(calls == 9);
    CHECK(rep.passes == 7);
    CHECK(rep.warmups == 2);
    CHECK(rep.median_ms >= 0.0);
    CHECK(rep.fps > 0.0);
    CHECK_THROWS_AS(measure_fps([] {}, 0, 0), ContractViolation);
}
