#pragma once

#include <cassert>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "jscc/error.hpp"

namespace jscc {

// Dense row-major double tensor. Shapes are small vectors of extents;
// rank 0 is a scalar holding one element.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    static Tensor from_data(std::vector<size_t> shape, std::vector<double> data) {
        Tensor t;
        if (count(shape) != data.size()) throw ConfigError("Tensor::from_data: shape/data mismatch");
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        return t;
    }

    static Tensor scalar(double v) { return from_data({}, {v}); }

    const std::vector<size_t>& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    size_t dim(size_t i) const { return shape_.at(i); }
    size_t size() const { return data_.size(); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double& at4(size_t a, size_t b, size_t c, size_t d) {
        assert(rank() == 4);
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    double at4(size_t a, size_t b, size_t c, size_t d) const {
        return const_cast<Tensor*>(this)->at4(a, b, c, d);
    }
    double& at2(size_t a, size_t b) {
        assert(rank() == 2);
        return data_[a * shape_[1] + b];
    }
    double at2(size_t a, size_t b) const { return const_cast<Tensor*>(this)->at2(a, b); }

    double item() const {
        if (size() != 1) throw ConfigError("Tensor::item: not a single-element tensor");
        return data_[0];
    }

    Tensor reshaped(std::vector<size_t> new_shape) const {
        if (count(new_shape) != size()) throw ConfigError("Tensor::reshaped: element count mismatch");
        Tensor t = *this;
        t.shape_ = std::move(new_shape);
        return t;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < shape_.size(); ++i) s += (i ? "," : "") + std::to_string(shape_[i]);
        return s + ")";
    }

    static size_t count(const std::vector<size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), size_t{1}, std::multiplies<>());
    }

  private:
    std::vector<size_t> shape_;
    std::vector<double> data_;
};

}  // namespace jscc
