#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "crackclf/common.hpp"
#include "crackclf/nn.hpp"
#include "crackclf/tensor.hpp"

namespace crackclf {

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    throw ContractViolation("unreachable split value");
}

inline Split split_from_name(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw ContractViolation("unknown split label '" + s + "' (expected train, val, or test)");
}

struct ManifestEntry {
    std::string image_path;
    std::string mask_path;
    Split split = Split::Train;
};

struct DatasetManifest {
    std::string dataset_name;
    std::optional<int64_t> tile_size;
    std::vector<ManifestEntry> entries;
};

// Manifest text format: one tab-separated record per line
// (image_path, mask_path, split). Lines starting with "#!" carry metadata
// ("#! name <dataset>", "#! tile <pixels>"); other "#" lines are comments.
inline DatasetManifest parse_manifest(std::istream& in) {
    DatasetManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = "manifest line " + std::to_string(lineno);
        if (line.rfind("#!", 0) == 0) {
            std::istringstream dir(line.substr(2));
            std::string key;
            dir >> key;
            if (key == "name") {
                dir >> m.dataset_name;
                expect(!m.dataset_name.empty(), where + ": '#! name' needs a value");
            } else if (key == "tile") {
                int64_t t = 0;
                expect(static_cast<bool>(dir >> t) && t > 0, where + ": '#! tile' needs a positive integer");
                m.tile_size = t;
            } else {
                throw ContractViolation(where + ": unknown directive '" + key + "'");
            }
            continue;
        }
        if (line[0] == '#') continue;

        ManifestEntry e;
        std::string field;
        std::vector<std::string> fields;
        std::istringstream ls(line);
        while (std::getline(ls, field, '\t')) fields.push_back(field);
        expect(fields.size() == 3, where + ": expected 3 tab-separated fields, got " + std::to_string(fields.size()));
        expect(!fields[0].empty() && !fields[1].empty(), where + ": empty path field");
        e.image_path = fields[0];
        e.mask_path = fields[1];
        e.split = split_from_name(fields[2]);
        m.entries.push_back(std::move(e));
    }
    return m;
}

inline void serialize_manifest(const DatasetManifest& m, std::ostream& out) {
    if (!m.dataset_name.empty()) out << "#! name " << m.dataset_name << "\n";
    if (m.tile_size) out << "#! tile " << *m.tile_size << "\n";
    for (const auto& e : m.entries)
        out << e.image_path << '\t' << e.mask_path << '\t' << split_name(e.split) << '\n';
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open manifest for writing: " + path);
    serialize_manifest(m, out);
    if (!out) throw IoError("failed writing manifest: " + path);
}

// Parses the file, resolves relative entry paths against its directory, and
// verifies every referenced file exists.
inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    DatasetManifest m = parse_manifest(in);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    for (auto& e : m.entries) {
        for (std::string* p : {&e.image_path, &e.mask_path}) {
            std::filesystem::path fp(*p);
            if (fp.is_relative()) *p = (base / fp).string();
            if (!std::filesystem::exists(*p))
                throw IoError("manifest " + path + " references missing file: " + *p);
        }
    }
    return m;
}

struct LoadedPair {
    Tensor image;  // [3,H,W], values in [0,1]
    Tensor mask;   // [H,W], values exactly 0 or 1
};

inline Tensor load_image(const std::string& path) {
    const cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) throw IoError("cannot read image: " + path);
    Tensor t({3, bgr.rows, bgr.cols});
    for (int y = 0; y < bgr.rows; ++y)
        for (int x = 0; x < bgr.cols; ++x) {
            const cv::Vec3b px = bgr.at<cv::Vec3b>(y, x);
            t.at3(0, y, x) = px[2] / 255.0;  // stored RGB
            t.at3(1, y, x) = px[1] / 255.0;
            t.at3(2, y, x) = px[0] / 255.0;
        }
    return t;
}

// 8-bit grayscale thresholded at 128: values >= 128 are crack pixels
inline Tensor load_mask(const std::string& path) {
    const cv::Mat gray = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (gray.empty()) throw IoError("cannot read mask: " + path);
    Tensor t({gray.rows, gray.cols});
    for (int y = 0; y < gray.rows; ++y)
        for (int x = 0; x < gray.cols; ++x)
            t[static_cast<int64_t>(y) * gray.cols + x] = gray.at<uint8_t>(y, x) >= 128 ? 1.0 : 0.0;
    return t;
}

inline LoadedPair load_pair(const ManifestEntry& e) {
    LoadedPair p{load_image(e.image_path), load_mask(e.mask_path)};
    expect(p.image.shape()[1] == p.mask.shape()[0] && p.image.shape()[2] == p.mask.shape()[1],
           "image/mask dimensions differ for " + e.image_path + " (" + p.image.shape_str() +
               ") vs " + e.mask_path + " (" + p.mask.shape_str() + ")");
    return p;
}

inline void write_image_png(const std::string& path, const Tensor& image) {
    expect(image.shape().size() == 3 && image.shape()[0] == 3,
           "image must be [3,H,W], got " + image.shape_str());
    const int h = static_cast<int>(image.shape()[1]);
    const int w = static_cast<int>(image.shape()[2]);
    cv::Mat bgr(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto q = [&](int c) {
                const double v = std::clamp(image.at3(c, y, x), 0.0, 1.0);
                return static_cast<uint8_t>(std::lround(v * 255.0));
            };
            bgr.at<cv::Vec3b>(y, x) = cv::Vec3b(q(2), q(1), q(0));
        }
    if (!cv::imwrite(path, bgr)) throw IoError("cannot write image: " + path);
}

inline void write_mask_png(const std::string& path, const Tensor& mask) {
    expect(mask.shape().size() == 2, "mask must be [H,W], got " + mask.shape_str());
    const int h = static_cast<int>(mask.shape()[0]);
    const int w = static_cast<int>(mask.shape()[1]);
    cv::Mat gray(h, w, CV_8UC1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = mask[static_cast<int64_t>(y) * w + x];
            expect(v == 0.0 || v == 1.0, "mask must be exactly binary");
            gray.at<uint8_t>(y, x) = v == 1.0 ? 255 : 0;
        }
    if (!cv::imwrite(path, gray)) throw IoError("cannot write mask: " + path);
}

// Grayscale probability map quantized to 8 bits, for inspection output.
inline void write_prob_png(const std::string& path, const Tensor& prob) {
    expect(prob.shape().size() == 2, "probability map must be [H,W], got " + prob.shape_str());
    const int h = static_cast<int>(prob.shape()[0]);
    const int w = static_cast<int>(prob.shape()[1]);
    cv::Mat gray(h, w, CV_8UC1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = std::clamp(prob[static_cast<int64_t>(y) * w + x], 0.0, 1.0);
            gray.at<uint8_t>(y, x) = static_cast<uint8_t>(std::lround(v * 255.0));
        }
    if (!cv::imwrite(path, gray)) throw IoError("cannot write probability map: " + path);
}

namespace detail {

inline Tensor crop_chw(const Tensor& t, int64_t y0, int64_t x0, int64_t h, int64_t w) {
    const int64_t c = t.shape()[0];
    Tensor out({c, h, w});
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) out.at3(ci, y, x) = t.at3(ci, y0 + y, x0 + x);
    return out;
}

inline Tensor crop_hw(const Tensor& t, int64_t y0, int64_t x0, int64_t h, int64_t w) {
    const int64_t tw = t.shape()[1];
    Tensor out({h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) out[y * w + x] = t[(y0 + y) * tw + (x0 + x)];
    return out;
}

}  // namespace detail

// Center-crops to the largest size divisible by `grid` in both dimensions,
// then cuts a grid x grid partition in row-major order.
inline std::vector<LoadedPair> tile(const Tensor& image, const Tensor& mask, int64_t grid = 4) {
    expect(grid >= 1, "tile grid must be positive");
    expect(image.shape().size() == 3, "image must be [C,H,W], got " + image.shape_str());
    expect(mask.shape().size() == 2, "mask must be [H,W], got " + mask.shape_str());
    const int64_t h = image.shape()[1];
    const int64_t w = image.shape()[2];
    expect(h == mask.shape()[0] && w == mask.shape()[1], "image/mask dimensions differ");
    expect(h >= grid && w >= grid,
           "image " + image.shape_str() + " too small for a " + std::to_string(grid) + "x" +
               std::to_string(grid) + " tiling");

    const int64_t hc = (h / grid) * grid;
    const int64_t wc = (w / grid) * grid;
    const int64_t y0 = (h - hc) / 2;
    const int64_t x0 = (w - wc) / 2;
    const int64_t th = hc / grid;
    const int64_t tw = wc / grid;

    std::vector<LoadedPair> tiles;
    tiles.reserve(static_cast<size_t>(grid * grid));
    for (int64_t r = 0; r < grid; ++r)
        for (int64_t c = 0; c < grid; ++c)
            tiles.push_back({detail::crop_chw(image, y0 + r * th, x0 + c * tw, th, tw),
                             detail::crop_hw(mask, y0 + r * th, x0 + c * tw, th, tw)});
    return tiles;
}

inline bool mask_has_positives(const Tensor& mask) {
    for (int64_t i = 0; i < mask.numel(); ++i)
        if (mask[i] == 1.0) return true;
    return false;
}

// Tiles whose mask is entirely background carry no supervision signal for
// crack datasets built by cropping large photos; dropping them is optional.
inline std::vector<LoadedPair> drop_empty_mask_tiles(std::vector<LoadedPair> tiles) {
    std::erase_if(tiles, [](const LoadedPair& t) { return !mask_has_positives(t.mask); });
    return tiles;
}

struct SplitFractions {
    double train = 0.0;
    double val = 0.0;
    double test = 0.0;
};

// The published two-way split of the 118-image CFD set: 72 train, 46 test.
inline SplitFractions cfd_fractions() { return {72.0 / 118.0, 0.0, 46.0 / 118.0}; }

// Deterministic shuffled assignment; boundaries follow rounded cumulative
// fractions so counts match the fractions within rounding. Entry order in the
// returned manifest is unchanged, only labels move.
inline DatasetManifest split(const DatasetManifest& manifest, const SplitFractions& fractions,
                             uint64_t seed) {
    expect(!manifest.entries.empty(), "cannot split an empty manifest");
    expect(fractions.train >= 0.0 && fractions.val >= 0.0 && fractions.test >= 0.0,
           "split fractions must be non-negative");
    expect(std::abs(fractions.train + fractions.val + fractions.test - 1.0) <= 1e-9,
           "split fractions must sum to 1");

    const int64_t n = static_cast<int64_t>(manifest.entries.size());
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(order);

    const int64_t n_train = std::llround(fractions.train * static_cast<double>(n));
    const int64_t n_train_val =
        std::llround((fractions.train + fractions.val) * static_cast<double>(n));

    DatasetManifest out = manifest;
    for (int64_t rank = 0; rank < n; ++rank) {
        const auto idx = static_cast<size_t>(order[static_cast<size_t>(rank)]);
        out.entries[idx].split =
            rank < n_train ? Split::Train : (rank < n_train_val ? Split::Val : Split::Test);
    }
    return out;
}

inline Tensor flip_horizontal(const Tensor& t) {
    expect(t.shape().size() == 2 || t.shape().size() == 3,
           "flip expects [H,W] or [C,H,W], got " + t.shape_str());
    Tensor out(t.shape());
    const bool chw = t.shape().size() == 3;
    const int64_t c = chw ? t.shape()[0] : 1;
    const int64_t h = t.shape()[chw ? 1 : 0];
    const int64_t w = t.shape()[chw ? 2 : 1];
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                out[(ci * h + y) * w + (w - 1 - x)] = t[(ci * h + y) * w + x];
    return out;
}

inline Tensor flip_vertical(const Tensor& t) {
    expect(t.shape().size() == 2 || t.shape().size() == 3,
           "flip expects [H,W] or [C,H,W], got " + t.shape_str());
    Tensor out(t.shape());
    const bool chw = t.shape().size() == 3;
    const int64_t c = chw ? t.shape()[0] : 1;
    const int64_t h = t.shape()[chw ? 1 : 0];
    const int64_t w = t.shape()[chw ? 2 : 1];
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                out[(ci * h + (h - 1 - y)) * w + x] = t[(ci * h + y) * w + x];
    return out;
}

}  // namespace crackclf
