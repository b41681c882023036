#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <vector>

#include "crackclf/common.hpp"

namespace crackclf {

// Dense row-major tensor of doubles. Rank is dynamic; most of the library
// works with [C,H,W] activations and [Cout,Cin,kh,kw] kernels.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape, double fill = 0.0)
        : shape_(std::move(shape)) {
        for (int64_t d : shape_) expect(d > 0, "Tensor: dims must be positive, got " + shape_str());
        data_.assign(static_cast<size_t>(numel_of(shape_)), fill);
    }

    Tensor(std::vector<int64_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        for (int64_t d : shape_) expect(d > 0, "Tensor: dims must be positive, got " + shape_str());
        expect(static_cast<int64_t>(data_.size()) == numel_of(shape_),
               "Tensor: data size " + std::to_string(data_.size()) + " does not match shape " + shape_str());
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    int64_t dim(int64_t i) const {
        expect(i >= 0 && i < rank(), "Tensor::dim: index out of range");
        return shape_[static_cast<size_t>(i)];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // [C,H,W] accessor; used throughout the conv and attention paths.
    double& at3(int64_t c, int64_t h, int64_t w) {
        return data_[static_cast<size_t>((c * shape_[1] + h) * shape_[2] + w)];
    }
    double at3(int64_t c, int64_t h, int64_t w) const {
        return data_[static_cast<size_t>((c * shape_[1] + h) * shape_[2] + w)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    void add_(const Tensor& o) {
        expect(same_shape(o), "Tensor::add_: shape mismatch " + shape_str() + " vs " + o.shape_str());
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    }

    double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
        os << ']';
        return os.str();
    }

    static int64_t numel_of(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }

  private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

} // namespace crackclf
