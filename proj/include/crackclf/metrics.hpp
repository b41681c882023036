#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "crackclf/common.hpp"
#include "crackclf/tensor.hpp"

namespace crackclf {

// Evaluation follows the crack-benchmark convention: a predicted pixel counts
// as correct when a ground-truth pixel lies within a small spatial tolerance,
// and a ground-truth pixel is missed only when no prediction lies within that
// tolerance. Matching is many-to-one (dilation), not bipartite assignment.

enum class DistanceKind { Euclidean, Chebyshev };

struct ConfusionCounts {
    int64_t tp = 0;
    int64_t fp = 0;
    int64_t fn = 0;

    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }
};

struct PrfScores {
    double pr = 0.0;
    double re = 0.0;
    double f1 = 0.0;
};

// Degenerate conventions: an undefined ratio 0/0 scores 1 (nothing predicted
// and nothing to predict is not an error); F1 is 0 whenever Pr + Re = 0.
inline PrfScores prf(const ConfusionCounts& c) {
    expect(c.tp >= 0 && c.fp >= 0 && c.fn >= 0, "confusion counts must be non-negative");
    PrfScores s;
    s.pr = (c.tp + c.fp == 0) ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    s.re = (c.tp + c.fn == 0) ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    s.f1 = (s.pr + s.re == 0.0) ? 0.0 : 2.0 * s.pr * s.re / (s.pr + s.re);
    return s;
}

namespace detail {

inline void check_mask_2d(const Tensor& m, const char* what) {
    expect(m.shape().size() == 2, std::string(what) + " must be [H,W], got " + m.shape_str());
    for (int64_t i = 0; i < m.numel(); ++i)
        expect(m[i] == 0.0 || m[i] == 1.0, std::string(what) + " must be exactly binary");
}

inline void check_prob_2d(const Tensor& p) {
    expect(p.shape().size() == 2, "probability map must be [H,W], got " + p.shape_str());
    for (int64_t i = 0; i < p.numel(); ++i)
        expect(p[i] >= 0.0 && p[i] <= 1.0, "probabilities must lie in [0,1]");
}

inline std::vector<std::pair<int, int>> disk_offsets(double tol, DistanceKind dist) {
    expect(tol >= 0.0, "matching tolerance must be non-negative");
    const int r = static_cast<int>(std::floor(tol));
    std::vector<std::pair<int, int>> offs;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            const bool inside = dist == DistanceKind::Chebyshev
                ? true  // the r-box already enforces max(|dy|,|dx|) <= tol
                : static_cast<double>(dy) * dy + static_cast<double>(dx) * dx <= tol * tol;
            if (inside) offs.emplace_back(dy, dx);
        }
    return offs;
}

// mask dilated by the offset disk, as 0/1 bytes
inline std::vector<uint8_t> dilate(const Tensor& m, const std::vector<std::pair<int, int>>& offs) {
    const int64_t h = m.shape()[0];
    const int64_t w = m.shape()[1];
    std::vector<uint8_t> out(static_cast<size_t>(h * w), 0);
    for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
            if (m[i * w + j] == 0.0) continue;
            for (const auto& [dy, dx] : offs) {
                const int64_t y = i + dy;
                const int64_t x = j + dx;
                if (y >= 0 && y < h && x >= 0 && x < w) out[static_cast<size_t>(y * w + x)] = 1;
            }
        }
    return out;
}

}  // namespace detail

inline ConfusionCounts tolerant_confusion(const Tensor& pred, const Tensor& gt, double tol = 2.0,
                                          DistanceKind dist = DistanceKind::Euclidean) {
    detail::check_mask_2d(pred, "prediction mask");
    detail::check_mask_2d(gt, "ground-truth mask");
    expect(pred.same_shape(gt), "mask shapes differ: " + pred.shape_str() + " vs " + gt.shape_str());

    const auto offs = detail::disk_offsets(tol, dist);
    const auto gt_near = detail::dilate(gt, offs);
    const auto pred_near = detail::dilate(pred, offs);

    ConfusionCounts c;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        if (pred[i] == 1.0) (gt_near[static_cast<size_t>(i)] ? c.tp : c.fp)++;
        if (gt[i] == 1.0 && !pred_near[static_cast<size_t>(i)]) c.fn++;
    }
    return c;
}

constexpr int kSweepSteps = 999;  // thresholds k/1000 for k = 1..999

inline double sweep_threshold(int k) {
    expect(k >= 1 && k <= kSweepSteps, "threshold index out of range");
    return static_cast<double>(k) / 1000.0;
}

// Largest k in [0,999] with k/1000 <= p, under the same double arithmetic the
// binarization uses; a pixel with probability p is positive at exactly the
// thresholds 1..k. The correction loops absorb rounding in floor(p*1000).
inline int threshold_index(double p) {
    int k = static_cast<int>(std::floor(p * 1000.0));
    k = std::clamp(k, 0, kSweepSteps);
    while (k < kSweepSteps && static_cast<double>(k + 1) / 1000.0 <= p) ++k;
    while (k > 0 && static_cast<double>(k) / 1000.0 > p) --k;
    return k;
}

struct ThresholdSweep {
    std::vector<double> thresholds;                       // 999 ascending values
    std::vector<std::vector<ConfusionCounts>> per_image;  // [image][threshold]
    std::vector<ConfusionCounts> aggregate;               // [threshold]
};

// One pass over each image classifies every pixel once (matched or not is
// threshold-independent), then histogram suffix sums resolve all 999
// thresholds: a pixel is predicted positive at thresholds 1..threshold_index(p),
// and a ground-truth pixel is covered at thresholds 1..threshold_index(m) where
// m is the max probability within its tolerance disk.
inline ThresholdSweep threshold_sweep(const std::vector<Tensor>& probs,
                                      const std::vector<Tensor>& gts, double tol = 2.0,
                                      DistanceKind dist = DistanceKind::Euclidean) {
    expect(!probs.empty(), "threshold sweep needs at least one image");
    expect(probs.size() == gts.size(), "probability and ground-truth lists differ in length");

    ThresholdSweep sweep;
    sweep.thresholds.resize(kSweepSteps);
    for (int k = 1; k <= kSweepSteps; ++k) sweep.thresholds[static_cast<size_t>(k - 1)] = sweep_threshold(k);
    sweep.per_image.resize(probs.size());
    sweep.aggregate.assign(kSweepSteps, ConfusionCounts{});

    const auto offs = detail::disk_offsets(tol, dist);

    for (size_t n = 0; n < probs.size(); ++n) {
        const Tensor& p = probs[n];
        const Tensor& g = gts[n];
        detail::check_prob_2d(p);
        detail::check_mask_2d(g, "ground-truth mask");
        expect(p.same_shape(g), "map shapes differ: " + p.shape_str() + " vs " + g.shape_str());

        const int64_t h = p.shape()[0];
        const int64_t w = p.shape()[1];
        const auto gt_near = detail::dilate(g, offs);

        // histograms over threshold_index, bins 0..999
        std::array<int64_t, kSweepSteps + 1> matched{};
        std::array<int64_t, kSweepSteps + 1> unmatched{};
        std::array<int64_t, kSweepSteps + 1> covered{};
        int64_t n_gt = 0;

        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                const int64_t idx = i * w + j;
                const int k0 = threshold_index(p[idx]);
                (gt_near[static_cast<size_t>(idx)] ? matched : unmatched)[static_cast<size_t>(k0)]++;
                if (g[idx] == 1.0) {
                    ++n_gt;
                    double m = 0.0;
                    for (const auto& [dy, dx] : offs) {
                        const int64_t y = i + dy;
                        const int64_t x = j + dx;
                        if (y >= 0 && y < h && x >= 0 && x < w) m = std::max(m, p[y * w + x]);
                    }
                    covered[static_cast<size_t>(threshold_index(m))]++;
                }
            }

        auto& counts = sweep.per_image[n];
        counts.resize(kSweepSteps);
        int64_t tp_suffix = 0;
        int64_t fp_suffix = 0;
        int64_t cover_suffix = 0;
        for (int k = kSweepSteps; k >= 1; --k) {
            tp_suffix += matched[static_cast<size_t>(k)];
            fp_suffix += unmatched[static_cast<size_t>(k)];
            cover_suffix += covered[static_cast<size_t>(k)];
            ConfusionCounts& c = counts[static_cast<size_t>(k - 1)];
            c.tp = tp_suffix;
            c.fp = fp_suffix;
            c.fn = n_gt - cover_suffix;
            sweep.aggregate[static_cast<size_t>(k - 1)] += c;
        }
    }
    return sweep;
}

struct PrCurvePoint {
    double t = 0.0;
    double pr = 0.0;
    double re = 0.0;
};

struct OdsResult {
    double ods = 0.0;
    double best_t = 0.0;
    std::vector<PrCurvePoint> pr_curve;  // one row per threshold
};

// Best dataset-level F1 over the threshold grid: counts are summed across
// images per threshold before Pr/Re/F1. Ties resolve to the lowest threshold.
inline OdsResult ods(const ThresholdSweep& sweep) {
    expect(sweep.aggregate.size() == kSweepSteps, "sweep must cover the full threshold grid");
    OdsResult r;
    r.pr_curve.resize(kSweepSteps);
    r.ods = -1.0;
    for (int k = 1; k <= kSweepSteps; ++k) {
        const PrfScores s = prf(sweep.aggregate[static_cast<size_t>(k - 1)]);
        r.pr_curve[static_cast<size_t>(k - 1)] = {sweep.thresholds[static_cast<size_t>(k - 1)], s.pr, s.re};
        if (s.f1 > r.ods) {
            r.ods = s.f1;
            r.best_t = sweep.thresholds[static_cast<size_t>(k - 1)];
        }
    }
    return r;
}

inline OdsResult ods(const std::vector<Tensor>& probs, const std::vector<Tensor>& gts,
                     double tol = 2.0, DistanceKind dist = DistanceKind::Euclidean) {
    return ods(threshold_sweep(probs, gts, tol, dist));
}

// Mean over images of the per-image best F1 across the threshold grid.
inline double ois(const ThresholdSweep& sweep) {
    expect(!sweep.per_image.empty(), "sweep must cover at least one image");
    double sum = 0.0;
    for (const auto& counts : sweep.per_image) {
        expect(counts.size() == kSweepSteps, "sweep must cover the full threshold grid");
        double best = -1.0;
        for (const auto& c : counts) best = std::max(best, prf(c).f1);
        sum += best;
    }
    return sum / static_cast<double>(sweep.per_image.size());
}

inline double ois(const std::vector<Tensor>& probs, const std::vector<Tensor>& gts,
                  double tol = 2.0, DistanceKind dist = DistanceKind::Euclidean) {
    return ois(threshold_sweep(probs, gts, tol, dist));
}

struct MetricsReport {
    double fixed_threshold = 0.5;
    double pr = 0.0;
    double re = 0.0;
    double f1 = 0.0;
    double ods = 0.0;
    double ods_best_t = 0.0;
    double ois = 0.0;
    std::vector<PrCurvePoint> pr_curve;
};

inline Tensor binarize(const Tensor& prob, double threshold) {
    detail::check_prob_2d(prob);
    Tensor out(prob.shape());
    for (int64_t i = 0; i < prob.numel(); ++i) out[i] = prob[i] >= threshold ? 1.0 : 0.0;
    return out;
}

inline MetricsReport evaluate_dataset(const std::vector<Tensor>& probs,
                                      const std::vector<Tensor>& gts, double fixed_threshold = 0.5,
                                      double tol = 2.0, DistanceKind dist = DistanceKind::Euclidean) {
    expect(fixed_threshold > 0.0 && fixed_threshold < 1.0, "fixed threshold must lie in (0,1)");
    const ThresholdSweep sweep = threshold_sweep(probs, gts, tol, dist);

    MetricsReport rep;
    rep.fixed_threshold = fixed_threshold;
    ConfusionCounts fixed;
    for (size_t n = 0; n < probs.size(); ++n)
        fixed += tolerant_confusion(binarize(probs[n], fixed_threshold), gts[n], tol, dist);
    const PrfScores s = prf(fixed);
    rep.pr = s.pr;
    rep.re = s.re;
    rep.f1 = s.f1;

    const OdsResult o = ods(sweep);
    rep.ods = o.ods;
    rep.ods_best_t = o.best_t;
    rep.pr_curve = o.pr_curve;
    rep.ois = ois(sweep);
    return rep;
}

}  // namespace crackclf
