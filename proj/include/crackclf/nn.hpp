#pragma once

#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "crackclf/conv_ops.hpp"

namespace crackclf {

inline uint64_t splitmix64(uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Deterministic across platforms and serializable mid-stream: the normal
// draw and the shuffle are implemented here because the std::distributions
// are implementation-defined, and std::normal_distribution caches a spare
// value that a state string could not capture.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) : seed_(seed), eng_(seed) {}

    uint64_t seed() const { return seed_; }

    // Independent child stream; two distinct stream ids never collide with
    // each other or with the parent.
    Rng derive(uint64_t stream) const { return Rng(splitmix64(seed_ ^ splitmix64(stream))); }

    uint64_t next_u64() { return eng_(); }

    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; } // [0,1)

    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1;
        do { u1 = uniform(); } while (u1 <= 0.0);
        double u2 = uniform();
        return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform on [0,n) by rejection; unbiased for any n.
    int64_t below(int64_t n) {
        expect(n > 0, "Rng::below: n must be positive");
        uint64_t un = static_cast<uint64_t>(n);
        uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t r;
        do { r = eng_(); } while (r >= limit);
        return static_cast<int64_t>(r % un);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[static_cast<size_t>(below(static_cast<int64_t>(i)))]);
    }

    std::string state() const {
        std::ostringstream os;
        os << seed_ << ' ' << eng_;
        return os.str();
    }

    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> seed_ >> eng_;
        expect(!is.fail(), "Rng::set_state: malformed state string");
    }

  private:
    uint64_t seed_;
    std::mt19937_64 eng_;
};

struct Param {
    std::string name;
    VarPtr var;
};
using ParamList = std::vector<Param>;

inline int64_t param_count(const ParamList& params) {
    int64_t n = 0;
    for (const auto& p : params) n += p.var->value.numel();
    return n;
}

inline void zero_grads(const ParamList& params) {
    for (const auto& p : params) p.var->ensure_zero_grad();
}

// He-normal leaf parameter.
inline VarPtr param_tensor(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, sd);
    return make_leaf(std::move(t), true);
}

struct Conv2d {
    VarPtr W, b;
    int64_t stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(int64_t cin, int64_t cout, int64_t k, int64_t stride_, int64_t pad_, bool bias, Rng& rng)
        : stride(stride_), pad(pad_) {
        W = param_tensor({cout, cin, k, k}, cin * k * k, rng);
        if (bias) b = make_leaf(Tensor({cout}), true);
    }

    VarPtr operator()(const VarPtr& x) const { return conv2d(x, W, b, stride, pad); }

    void collect(const std::string& prefix, ParamList& out) const {
        out.push_back({prefix + ".weight", W});
        if (b) out.push_back({prefix + ".bias", b});
    }
};

struct ConvTranspose2d {
    VarPtr W, b;
    int64_t stride = 1;

    ConvTranspose2d() = default;
    ConvTranspose2d(int64_t cin, int64_t cout, int64_t k, int64_t stride_, bool bias, Rng& rng)
        : stride(stride_) {
        W = param_tensor({cin, cout, k, k}, cin * k * k, rng);
        if (bias) b = make_leaf(Tensor({cout}), true);
    }

    VarPtr operator()(const VarPtr& x) const { return conv_transpose2d(x, W, b, stride); }

    void collect(const std::string& prefix, ParamList& out) const {
        out.push_back({prefix + ".weight", W});
        if (b) out.push_back({prefix + ".bias", b});
    }
};

// Adam with bias correction; moments live here, aligned with the attached
// parameter order.
class Adam {
  public:
    Adam() = default;
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        expect(lr > 0.0, "Adam: lr must be positive");
    }

    void attach(const ParamList& params) {
        m_.clear();
        v_.clear();
        names_.clear();
        for (const auto& p : params) {
            m_.emplace_back(p.var->value.shape());
            v_.emplace_back(p.var->value.shape());
            names_.push_back(p.name);
        }
        t_ = 0;
    }

    void step(const ParamList& params) {
        expect(params.size() == m_.size(), "Adam::step: parameter list does not match attached state");
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (size_t k = 0; k < params.size(); ++k) {
            Var& p = *params[k].var;
            expect(p.grad.same_shape(p.value), "Adam::step: no gradient for " + params[k].name);
            Tensor& m = m_[k];
            Tensor& v = v_[k];
            for (int64_t i = 0; i < p.value.numel(); ++i) {
                double g = p.grad[i];
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                p.value[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
            }
        }
    }

    double lr() const { return lr_; }
    int64_t steps_taken() const { return t_; }
    const std::vector<std::string>& names() const { return names_; }
    const std::vector<Tensor>& moments_m() const { return m_; }
    const std::vector<Tensor>& moments_v() const { return v_; }

    void restore(std::vector<Tensor> m, std::vector<Tensor> v, int64_t t) {
        expect(m.size() == names_.size() && v.size() == names_.size(),
               "Adam::restore: moment count does not match attached parameters");
        for (size_t k = 0; k < m.size(); ++k)
            expect(m[k].same_shape(m_[k]) && v[k].same_shape(v_[k]),
                   "Adam::restore: moment shape mismatch for " + names_[k]);
        m_ = std::move(m);
        v_ = std::move(v);
        t_ = t;
    }

  private:
    double lr_ = 0.001, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
    std::vector<std::string> names_;
};

} // namespace crackclf
