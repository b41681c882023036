#pragma once

#include "crackclf/segnet.hpp"

namespace crackclf {

struct LossWeights {
    std::vector<double> alpha = {1, 1, 1, 1, 1}; // per-side weights
    double beta = 1.0, gamma = 1.0;              // used when balance == fixed
    enum class Balance { fixed, per_batch } balance = Balance::per_batch;

    void validate() const {
        for (double a : alpha) expect(a >= 0.0, "LossWeights: alpha entries must be >= 0");
        expect(beta >= 0.0 && gamma >= 0.0, "LossWeights: beta and gamma must be >= 0");
    }
};

struct LossReport {
    std::vector<double> side_losses;
    double l_side_total = 0.0, l_fuse = 0.0, l_total = 0.0;
};

// beta = N_neg/N, gamma = N_pos/N; a positive-free mask yields (1, 0).
inline std::pair<double, double> class_balance(const Tensor& gt) {
    expect(gt.numel() > 0, "class_balance: empty mask");
    double n = static_cast<double>(gt.numel());
    double pos = gt.sum();
    return {(n - pos) / n, pos / n};
}

// -(1/N) sum_i [beta*y_i*log(p_i) + gamma*(1-y_i)*log(1-p_i)], with p
// clamped to [eps, 1-eps]. Gradient is zero where the clamp is active.
inline VarPtr weighted_bce(const VarPtr& pred, const Tensor& gt, double beta, double gamma,
                           double eps = 1e-7) {
    expect(pred->value.same_shape(gt),
           "weighted_bce: pred " + pred->value.shape_str() + " vs gt " + gt.shape_str());
    int64_t n = gt.numel();
    double inv_n = 1.0 / static_cast<double>(n);
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double p = std::clamp(pred->value[i], eps, 1.0 - eps);
        double y = gt[i];
        acc += beta * y * std::log(p) + gamma * (1.0 - y) * std::log(1.0 - p);
    }
    Tensor out({1}, {-acc * inv_n});
    Var* pp = pred.get();
    Tensor gt_copy = gt;
    return make_op(std::move(out), {pred}, [pp, gt_copy = std::move(gt_copy), beta, gamma, eps, inv_n](Var& self) {
        double g = self.grad[0];
        for (int64_t i = 0; i < gt_copy.numel(); ++i) {
            double p = pp->value[i];
            if (p <= eps || p >= 1.0 - eps) continue;
            double y = gt_copy[i];
            pp->grad[i] += g * inv_n * (gamma * (1.0 - y) / (1.0 - p) - beta * y / p);
        }
    });
}

struct SupervisedLossResult {
    VarPtr total; // scalar, attached to the model graph
    LossReport report;
};

// L_side = sum_m alpha_m * l_m over the side maps, L_fuse on the fused map,
// l_total = L_side + L_fuse. An output with no side maps degrades to the
// fused term alone.
inline SupervisedLossResult total_loss(const ModelOutputs& out, const Tensor& gt, const LossWeights& w) {
    w.validate();
    expect(out.fused != nullptr, "total_loss: missing fused map");
    expect(w.alpha.size() == out.sides.size() || out.sides.empty(),
           "total_loss: " + std::to_string(w.alpha.size()) + " alpha weights for " +
               std::to_string(out.sides.size()) + " side maps");

    auto [beta, gamma] = w.balance == LossWeights::Balance::per_batch ? class_balance(gt)
                                                                      : std::make_pair(w.beta, w.gamma);
    SupervisedLossResult res;
    VarPtr l_side = make_const(Tensor::scalar(0.0));
    for (size_t m = 0; m < out.sides.size(); ++m) {
        VarPtr lm = weighted_bce(out.sides[m], gt, beta, gamma);
        res.report.side_losses.push_back(lm->value[0]);
        l_side = add(l_side, scale(lm, w.alpha[m]));
    }
    VarPtr l_fuse = weighted_bce(out.fused, gt, beta, gamma);
    res.total = add(l_side, l_fuse);
    res.report.l_side_total = l_side->value[0];
    res.report.l_fuse = l_fuse->value[0];
    res.report.l_total = res.total->value[0];
    return res;
}

} // namespace crackclf
