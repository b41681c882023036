#pragma once

#include <string>

#include "crackclf/common.hpp"
#include "crackclf/container.hpp"
#include "crackclf/nn.hpp"

namespace crackclf {

// Checkpoint archives are tensor containers with namespaced entries:
// "segmenter/<param>", "critic/<param>", "optim/<who>/<param>.m" and ".v"
// plus "optim/<who>/steps". Values are stored f64, so a restored run
// continues bit-for-bit.

inline void add_param_tensors(Container& c, const std::string& prefix, const ParamList& params) {
    for (const auto& p : params) c.add(prefix + p.name, p.var->value);
}

inline void restore_param_tensors(const Container& c, const std::string& prefix,
                                  const ParamList& params) {
    for (const auto& p : params) {
        const Tensor& stored = c.at(prefix + p.name);
        expect(stored.same_shape(p.var->value),
               "checkpoint shape mismatch for " + prefix + p.name + ": stored " +
                   stored.shape_str() + ", model " + p.var->value.shape_str());
        p.var->value = stored;
    }
}

inline void add_adam_state(Container& c, const std::string& prefix, const Adam& opt) {
    const auto& names = opt.names();
    for (size_t k = 0; k < names.size(); ++k) {
        c.add(prefix + names[k] + ".m", opt.moments_m()[k]);
        c.add(prefix + names[k] + ".v", opt.moments_v()[k]);
    }
    c.add(prefix + "steps", Tensor::scalar(static_cast<double>(opt.steps_taken())));
}

// opt must already be attached to the same parameter list it was saved from
inline void restore_adam_state(const Container& c, const std::string& prefix, Adam& opt) {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    for (const auto& name : opt.names()) {
        m.push_back(c.at(prefix + name + ".m"));
        v.push_back(c.at(prefix + name + ".v"));
    }
    const Tensor& steps = c.at(prefix + "steps");
    expect(steps.numel() == 1, "checkpoint optimizer step count must be a scalar");
    opt.restore(std::move(m), std::move(v), static_cast<int64_t>(steps[0]));
}

}  // namespace crackclf
