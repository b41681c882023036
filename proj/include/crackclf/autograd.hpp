#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "crackclf/tensor.hpp"

namespace crackclf {

// Reverse-mode tape node. Interior nodes hold a closure that routes the
// node's gradient into its parents; leaves have no closure. Closures hold
// raw parent pointers, ownership stays in `parents`, so graphs never form
// shared_ptr cycles.
class Var {
  public:
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Var>> parents;
    std::function<void(Var&)> backfn;

    explicit Var(Tensor v, bool rg = false) : value(std::move(v)), requires_grad(rg) {}

    void ensure_zero_grad() {
        if (!grad.same_shape(value)) grad = Tensor(value.shape());
        else grad.fill(0.0);
    }
};

using VarPtr = std::shared_ptr<Var>;

inline VarPtr make_leaf(Tensor v, bool requires_grad = false) {
    return std::make_shared<Var>(std::move(v), requires_grad);
}

inline VarPtr make_const(Tensor v) { return make_leaf(std::move(v), false); }

// Interior node; drops the tape when no parent needs gradients so pure
// inference builds no graph.
inline VarPtr make_op(Tensor value, std::vector<VarPtr> parents, std::function<void(Var&)> backfn) {
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    auto v = std::make_shared<Var>(std::move(value), rg);
    if (rg) {
        v->parents = std::move(parents);
        v->backfn = std::move(backfn);
    }
    return v;
}

// Accumulates d(root)/d(node) into .grad of every node reachable from root.
// Reachable grads are zeroed first, so each call reports exactly this
// graph's gradients.
inline void backward(const VarPtr& root) {
    expect(root != nullptr, "backward: null root");
    expect(root->value.numel() == 1, "backward: root must be scalar, got " + root->value.shape_str());
    expect(root->requires_grad, "backward: root does not depend on any parameter");

    std::vector<Var*> order;
    std::unordered_set<Var*> visited;
    std::vector<std::pair<Var*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        Var* v = stack.back().first;
        size_t i = stack.back().second;
        if (i < v->parents.size()) {
            ++stack.back().second;
            Var* p = v->parents[i].get();
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(v);
            stack.pop_back();
        }
    }

    for (Var* v : order) v->ensure_zero_grad();
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backfn) (*it)->backfn(**it);
    }
}

// ---- elementwise ----

inline VarPtr add(const VarPtr& a, const VarPtr& b) {
    expect(a->value.same_shape(b->value),
           "add: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
    Tensor out = a->value;
    out.add_(b->value);
    Var *pa = a.get(), *pb = b.get();
    return make_op(std::move(out), {a, b}, [pa, pb](Var& self) {
        pa->grad.add_(self.grad);
        pb->grad.add_(self.grad);
    });
}

inline VarPtr sub(const VarPtr& a, const VarPtr& b) {
    expect(a->value.same_shape(b->value),
           "sub: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    Var *pa = a.get(), *pb = b.get();
    return make_op(std::move(out), {a, b}, [pa, pb](Var& self) {
        for (int64_t i = 0; i < self.grad.numel(); ++i) {
            pa->grad[i] += self.grad[i];
            pb->grad[i] -= self.grad[i];
        }
    });
}

inline VarPtr mul(const VarPtr& a, const VarPtr& b) {
    expect(a->value.same_shape(b->value),
           "mul: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    Var *pa = a.get(), *pb = b.get();
    return make_op(std::move(out), {a, b}, [pa, pb](Var& self) {
        for (int64_t i = 0; i < self.grad.numel(); ++i) {
            pa->grad[i] += self.grad[i] * pb->value[i];
            pb->grad[i] += self.grad[i] * pa->value[i];
        }
    });
}

inline VarPtr scale(const VarPtr& a, double s) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
    Var* pa = a.get();
    return make_op(std::move(out), {a}, [pa, s](Var& self) {
        for (int64_t i = 0; i < self.grad.numel(); ++i) pa->grad[i] += s * self.grad[i];
    });
}

inline VarPtr relu(const VarPtr& a) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    Var* pa = a.get();
    return make_op(std::move(out), {a}, [pa](Var& self) {
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            if (pa->value[i] > 0.0) pa->grad[i] += self.grad[i];
    });
}

inline VarPtr leaky_relu(const VarPtr& a, double slope) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : slope * out[i];
    Var* pa = a.get();
    return make_op(std::move(out), {a}, [pa, slope](Var& self) {
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            pa->grad[i] += (pa->value[i] > 0.0 ? 1.0 : slope) * self.grad[i];
    });
}

inline VarPtr sigmoid(const VarPtr& a) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    Var* pa = a.get();
    return make_op(std::move(out), {a}, [pa](Var& self) {
        for (int64_t i = 0; i < self.grad.numel(); ++i) {
            double s = self.value[i];
            pa->grad[i] += self.grad[i] * s * (1.0 - s);
        }
    });
}

// |a - b| with subgradient 0 at ties.
inline VarPtr abs_diff(const VarPtr& a, const VarPtr& b) {
    expect(a->value.same_shape(b->value),
           "abs_diff: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
    Tensor out(a->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::abs(a->value[i] - b->value[i]);
    Var *pa = a.get(), *pb = b.get();
    return make_op(std::move(out), {a, b}, [pa, pb](Var& self) {
        for (int64_t i = 0; i < self.grad.numel(); ++i) {
            double d = pa->value[i] - pb->value[i];
            double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            pa->grad[i] += s * self.grad[i];
            pb->grad[i] -= s * self.grad[i];
        }
    });
}

// ---- reductions ----

inline VarPtr sum_all(const VarPtr& a) {
    Tensor out({1}, {a->value.sum()});
    Var* pa = a.get();
    return make_op(std::move(out), {a}, [pa](Var& self) {
        for (int64_t i = 0; i < pa->grad.numel(); ++i) pa->grad[i] += self.grad[0];
    });
}

inline VarPtr mean_all(const VarPtr& a) {
    double n = static_cast<double>(a->value.numel());
    Tensor out({1}, {a->value.sum() / n});
    Var* pa = a.get();
    return make_op(std::move(out), {a}, [pa, n](Var& self) {
        double g = self.grad[0] / n;
        for (int64_t i = 0; i < pa->grad.numel(); ++i) pa->grad[i] += g;
    });
}

// Softmax over every element of the tensor, shape preserved. Stabilized by
// max subtraction.
inline VarPtr softmax_flat(const VarPtr& a) {
    Tensor out = a->value;
    double m = out[0];
    for (int64_t i = 1; i < out.numel(); ++i) m = std::max(m, out[i]);
    double z = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) {
        out[i] = std::exp(out[i] - m);
        z += out[i];
    }
    for (int64_t i = 0; i < out.numel(); ++i) out[i] /= z;
    Var* pa = a.get();
    return make_op(std::move(out), {a}, [pa](Var& self) {
        double dot = 0.0;
        for (int64_t i = 0; i < self.grad.numel(); ++i) dot += self.grad[i] * self.value[i];
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            pa->grad[i] += self.value[i] * (self.grad[i] - dot);
    });
}

// ---- [C,H,W] structured ops ----

inline void expect_chw(const VarPtr& x, const char* who) {
    expect(x->value.rank() == 3, std::string(who) + ": expected [C,H,W], got " + x->value.shape_str());
}

// Per-channel spatial maximum, [C,H,W] -> [C]. Gradient flows to one argmax
// site per channel (first in row-major order on ties).
inline VarPtr spatial_max(const VarPtr& x) {
    expect_chw(x, "spatial_max");
    int64_t C = x->value.dim(0), HW = x->value.dim(1) * x->value.dim(2);
    Tensor out({C});
    auto arg = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(C));
    for (int64_t c = 0; c < C; ++c) {
        const double* row = x->value.data() + c * HW;
        int64_t best = 0;
        for (int64_t i = 1; i < HW; ++i)
            if (row[i] > row[best]) best = i;
        (*arg)[static_cast<size_t>(c)] = best;
        out[c] = row[best];
    }
    Var* px = x.get();
    return make_op(std::move(out), {x}, [px, arg, HW](Var& self) {
        for (int64_t c = 0; c < self.grad.numel(); ++c)
            px->grad[c * HW + (*arg)[static_cast<size_t>(c)]] += self.grad[c];
    });
}

// Per-channel spatial sum, [C,H,W] -> [C].
inline VarPtr sum_over_spatial(const VarPtr& x) {
    expect_chw(x, "sum_over_spatial");
    int64_t C = x->value.dim(0), HW = x->value.dim(1) * x->value.dim(2);
    Tensor out({C});
    for (int64_t c = 0; c < C; ++c) {
        const double* row = x->value.data() + c * HW;
        double s = 0.0;
        for (int64_t i = 0; i < HW; ++i) s += row[i];
        out[c] = s;
    }
    Var* px = x.get();
    return make_op(std::move(out), {x}, [px, HW](Var& self) {
        for (int64_t c = 0; c < self.grad.numel(); ++c) {
            double g = self.grad[c];
            double* row = px->grad.data() + c * HW;
            for (int64_t i = 0; i < HW; ++i) row[i] += g;
        }
    });
}

// Channel-wise mean, [C,H,W] -> [1,H,W].
inline VarPtr mean_over_channels(const VarPtr& x) {
    expect_chw(x, "mean_over_channels");
    int64_t C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2), HW = H * W;
    Tensor out({1, H, W});
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < HW; ++i) out[i] += x->value[c * HW + i];
    for (int64_t i = 0; i < HW; ++i) out[i] /= static_cast<double>(C);
    Var* px = x.get();
    return make_op(std::move(out), {x}, [px, C, HW](Var& self) {
        for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < HW; ++i)
                px->grad[c * HW + i] += self.grad[i] / static_cast<double>(C);
    });
}

// Channel-wise max, [C,H,W] -> [1,H,W]; ties resolve to the lowest channel.
inline VarPtr max_over_channels(const VarPtr& x) {
    expect_chw(x, "max_over_channels");
    int64_t C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2), HW = H * W;
    Tensor out({1, H, W});
    auto arg = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(HW));
    for (int64_t i = 0; i < HW; ++i) {
        int64_t best = 0;
        for (int64_t c = 1; c < C; ++c)
            if (x->value[c * HW + i] > x->value[best * HW + i]) best = c;
        (*arg)[static_cast<size_t>(i)] = best;
        out[i] = x->value[best * HW + i];
    }
    Var* px = x.get();
    return make_op(std::move(out), {x}, [px, arg, HW](Var& self) {
        for (int64_t i = 0; i < HW; ++i)
            px->grad[(*arg)[static_cast<size_t>(i)] * HW + i] += self.grad[i];
    });
}

// x[c,h,w] * g[c]; the channel-attention gate.
inline VarPtr mul_channel(const VarPtr& x, const VarPtr& g) {
    expect_chw(x, "mul_channel");
    expect(g->value.rank() == 1 && g->value.dim(0) == x->value.dim(0),
           "mul_channel: gate must be [C]=" + std::to_string(x->value.dim(0)) + ", got " + g->value.shape_str());
    int64_t C = x->value.dim(0), HW = x->value.dim(1) * x->value.dim(2);
    Tensor out = x->value;
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < HW; ++i) out[c * HW + i] *= g->value[c];
    Var *px = x.get(), *pg = g.get();
    return make_op(std::move(out), {x, g}, [px, pg, C, HW](Var& self) {
        for (int64_t c = 0; c < C; ++c) {
            double gc = pg->value[c], acc = 0.0;
            for (int64_t i = 0; i < HW; ++i) {
                int64_t k = c * HW + i;
                px->grad[k] += self.grad[k] * gc;
                acc += self.grad[k] * px->value[k];
            }
            pg->grad[c] += acc;
        }
    });
}

// x[c,h,w] * s[0,h,w]; the spatial-attention gate and the image*mask product.
inline VarPtr mul_spatial(const VarPtr& x, const VarPtr& s) {
    expect_chw(x, "mul_spatial");
    expect(s->value.rank() == 3 && s->value.dim(0) == 1 && s->value.dim(1) == x->value.dim(1) &&
               s->value.dim(2) == x->value.dim(2),
           "mul_spatial: gate must be [1," + std::to_string(x->value.dim(1)) + "," +
               std::to_string(x->value.dim(2)) + "], got " + s->value.shape_str());
    int64_t C = x->value.dim(0), HW = x->value.dim(1) * x->value.dim(2);
    Tensor out = x->value;
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < HW; ++i) out[c * HW + i] *= s->value[i];
    Var *px = x.get(), *ps = s.get();
    return make_op(std::move(out), {x, s}, [px, ps, C, HW](Var& self) {
        for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < HW; ++i) {
                int64_t k = c * HW + i;
                px->grad[k] += self.grad[k] * ps->value[i];
                ps->grad[i] += self.grad[k] * px->value[k];
            }
    });
}

inline VarPtr concat_channels(const std::vector<VarPtr>& xs) {
    expect(!xs.empty(), "concat_channels: empty input list");
    for (const auto& x : xs) expect_chw(x, "concat_channels");
    int64_t H = xs[0]->value.dim(1), W = xs[0]->value.dim(2), C = 0;
    for (const auto& x : xs) {
        expect(x->value.dim(1) == H && x->value.dim(2) == W,
               "concat_channels: spatial mismatch " + x->value.shape_str());
        C += x->value.dim(0);
    }
    Tensor out({C, H, W});
    int64_t off = 0;
    for (const auto& x : xs) {
        std::copy(x->value.data(), x->value.data() + x->value.numel(), out.data() + off);
        off += x->value.numel();
    }
    std::vector<Var*> raw;
    raw.reserve(xs.size());
    for (const auto& x : xs) raw.push_back(x.get());
    return make_op(std::move(out), xs, [raw](Var& self) {
        int64_t off = 0;
        for (Var* p : raw) {
            for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += self.grad[off + i];
            off += p->grad.numel();
        }
    });
}

// y = W x (+ b), W:[out,in], x:[in].
inline VarPtr linear(const VarPtr& x, const VarPtr& W, const VarPtr& b = nullptr) {
    expect(x->value.rank() == 1, "linear: input must be rank 1, got " + x->value.shape_str());
    expect(W->value.rank() == 2 && W->value.dim(1) == x->value.dim(0),
           "linear: weight " + W->value.shape_str() + " does not accept input " + x->value.shape_str());
    int64_t out_n = W->value.dim(0), in_n = W->value.dim(1);
    if (b) expect(b->value.rank() == 1 && b->value.dim(0) == out_n,
                  "linear: bias must be [" + std::to_string(out_n) + "], got " + b->value.shape_str());
    Tensor out({out_n});
    for (int64_t o = 0; o < out_n; ++o) {
        const double* wrow = W->value.data() + o * in_n;
        double s = b ? b->value[o] : 0.0;
        for (int64_t i = 0; i < in_n; ++i) s += wrow[i] * x->value[i];
        out[o] = s;
    }
    Var *px = x.get(), *pw = W.get(), *pb = b ? b.get() : nullptr;
    std::vector<VarPtr> parents{x, W};
    if (b) parents.push_back(b);
    return make_op(std::move(out), std::move(parents), [px, pw, pb, out_n, in_n](Var& self) {
        for (int64_t o = 0; o < out_n; ++o) {
            double g = self.grad[o];
            const double* wrow = pw->value.data() + o * in_n;
            double* dwrow = pw->grad.data() + o * in_n;
            for (int64_t i = 0; i < in_n; ++i) {
                px->grad[i] += g * wrow[i];
                dwrow[i] += g * px->value[i];
            }
            if (pb) pb->grad[o] += g;
        }
    });
}

} // namespace crackclf
