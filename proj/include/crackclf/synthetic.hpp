#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "crackclf/common.hpp"
#include "crackclf/data_io.hpp"
#include "crackclf/nn.hpp"
#include "crackclf/tensor.hpp"

namespace crackclf {

// Procedural pavement-like pairs: dark polyline cracks over a light textured
// background. Used for smoke training, demos, and generated test fixtures.
struct SyntheticConfig {
    int64_t height = 64;
    int64_t width = 64;
    int min_cracks = 1;
    int max_cracks = 3;
    double background_level = 0.78;
    double background_noise = 0.045;
    double crack_level = 0.17;
    double crack_noise = 0.04;
    double thick_crack_prob = 0.3;  // 3x3 stroke instead of single-pixel

    void validate() const {
        expect(height >= 8 && width >= 8, "synthetic images must be at least 8x8");
        expect(min_cracks >= 1 && max_cracks >= min_cracks, "crack count range is invalid");
        expect(background_level > crack_level, "cracks must be darker than the background");
        expect(thick_crack_prob >= 0.0 && thick_crack_prob <= 1.0, "probability out of range");
    }
};

namespace detail {

inline void stamp(Tensor& mask, int64_t y, int64_t x, int radius) {
    const int64_t h = mask.shape()[0];
    const int64_t w = mask.shape()[1];
    for (int64_t dy = -radius; dy <= radius; ++dy)
        for (int64_t dx = -radius; dx <= radius; ++dx) {
            const int64_t yy = y + dy;
            const int64_t xx = x + dx;
            if (yy >= 0 && yy < h && xx >= 0 && xx < w) mask[yy * w + xx] = 1.0;
        }
}

// random walk reflected at the borders, so every step lands in bounds
inline void walk_crack(Tensor& mask, Rng& rng, int radius) {
    const auto h = static_cast<double>(mask.shape()[0]);
    const auto w = static_cast<double>(mask.shape()[1]);
    double y = 2.0 + rng.uniform() * (h - 4.0);
    double x = 2.0 + rng.uniform() * (w - 4.0);
    double theta = rng.uniform() * 2.0 * std::numbers::pi;
    const int length = static_cast<int>(0.5 * std::min(h, w) + rng.uniform() * 0.7 * std::min(h, w));
    for (int s = 0; s < length; ++s) {
        stamp(mask, static_cast<int64_t>(y), static_cast<int64_t>(x), radius);
        double ny = y + std::sin(theta);
        double nx = x + std::cos(theta);
        if (ny < 0.0 || ny >= h) {
            theta = -theta;
            ny = y + std::sin(theta);
        }
        if (nx < 0.0 || nx >= w) {
            theta = std::numbers::pi - theta;
            nx = x + std::cos(theta);
        }
        y = std::clamp(ny, 0.0, h - 1.0);
        x = std::clamp(nx, 0.0, w - 1.0);
        theta += rng.normal(0.0, 0.22);
    }
}

}  // namespace detail

// Image values are quantized to the 8-bit grid (k/255), so writing the pair
// as PNG and loading it back reproduces the tensors exactly.
inline LoadedPair make_synthetic_pair(Rng& rng, const SyntheticConfig& cfg = {}) {
    cfg.validate();
    const int64_t h = cfg.height;
    const int64_t w = cfg.width;

    Tensor mask({h, w});
    const int n_cracks =
        cfg.min_cracks + static_cast<int>(rng.below(cfg.max_cracks - cfg.min_cracks + 1));
    for (int k = 0; k < n_cracks; ++k) {
        const int radius = rng.uniform() < cfg.thick_crack_prob ? 1 : 0;
        detail::walk_crack(mask, rng, radius);
    }

    // low-frequency shading keeps the background from being flat
    const double fy = 1.0 + std::floor(rng.uniform() * 3.0);
    const double fx = 1.0 + std::floor(rng.uniform() * 3.0);
    const double py = rng.uniform() * 2.0 * std::numbers::pi;
    const double px = rng.uniform() * 2.0 * std::numbers::pi;

    Tensor image({3, h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const bool crack = mask[y * w + x] == 1.0;
            double v;
            if (crack) {
                v = cfg.crack_level + rng.normal(0.0, cfg.crack_noise);
            } else {
                const double shade =
                    0.03 * std::cos(2.0 * std::numbers::pi * fy * static_cast<double>(y) / static_cast<double>(h) + py) *
                    std::cos(2.0 * std::numbers::pi * fx * static_cast<double>(x) / static_cast<double>(w) + px);
                v = cfg.background_level + shade + rng.normal(0.0, cfg.background_noise);
            }
            for (int64_t c = 0; c < 3; ++c) {
                const double tinted = std::clamp(v + rng.normal(0.0, 0.008), 0.0, 1.0);
                image.at3(c, y, x) = std::lround(tinted * 255.0) / 255.0;
            }
        }
    return {std::move(image), std::move(mask)};
}

// Writes img_NNN.png / mask_NNN.png plus manifest.txt (relative paths) into
// dir; split labels follow the given fractions under the same seed household.
inline std::string write_synthetic_dataset(const std::string& dir, int n_images, uint64_t seed,
                                           const SyntheticConfig& cfg = {},
                                           const SplitFractions& fractions = {1.0, 0.0, 0.0}) {
    expect(n_images >= 1, "need at least one image");
    std::filesystem::create_directories(dir);

    Rng rng(seed);
    DatasetManifest manifest;
    manifest.dataset_name = "synthetic";
    for (int i = 0; i < n_images; ++i) {
        const LoadedPair pair = make_synthetic_pair(rng, cfg);
        char img_name[32];
        char mask_name[32];
        std::snprintf(img_name, sizeof img_name, "img_%03d.png", i);
        std::snprintf(mask_name, sizeof mask_name, "mask_%03d.png", i);
        write_image_png((std::filesystem::path(dir) / img_name).string(), pair.image);
        write_mask_png((std::filesystem::path(dir) / mask_name).string(), pair.mask);
        manifest.entries.push_back({img_name, mask_name, Split::Train});
    }
    manifest = split(manifest, fractions, seed + 1);

    const std::string manifest_path = (std::filesystem::path(dir) / "manifest.txt").string();
    save_manifest(manifest, manifest_path);
    return manifest_path;
}

}  // namespace crackclf
