#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "styleam/common.hpp"

namespace styleam {

// Dense row-major tensor. Rank is dynamic; the code paths here only use
// rank 1 (vectors), 2 (batched vectors) and 4 (batched feature maps).
template <typename T>
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(count(shape_), T(0));
    }

    Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

    static Tensor full(std::vector<int> shape, T v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor from(std::vector<int> shape, std::vector<T> values) {
        if (count(shape) != static_cast<int64_t>(values.size()))
            throw ShapeError("Tensor::from: value count does not match shape");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(values);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // (b, c) indexing for rank-2 tensors.
    T& at(int b, int c) { return data_[static_cast<size_t>(b) * shape_[1] + c]; }
    const T& at(int b, int c) const { return data_[static_cast<size_t>(b) * shape_[1] + c]; }

    // (b, c, h, w) indexing for rank-4 tensors.
    T& at(int b, int c, int h, int w) {
        return data_[offset4(b, c, h, w)];
    }
    const T& at(int b, int c, int h, int w) const {
        return data_[offset4(b, c, h, w)];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
        os << ")";
        return os.str();
    }

    static int64_t count(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw ShapeError("negative tensor dimension");
            n *= d;
        }
        return n;
    }

  private:
    size_t offset4(int b, int c, int h, int w) const {
        return ((static_cast<size_t>(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }

    std::vector<int> shape_;
    std::vector<T> data_;
};

template <typename T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape() == b.shape();
}

}  // namespace styleam
