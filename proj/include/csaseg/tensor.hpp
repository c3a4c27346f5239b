#pragma once

#include "csaseg/errors.hpp"

#include <cstdint>
#include <vector>

namespace csaseg {

// Dense row-major float32 tensor. There is no broadcasting anywhere in the
// engine; every op checks extents explicitly and throws ShapeError on
// mismatch so errors surface at the call site instead of three layers down.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, std::vector<float> values);

    static Tensor full(std::vector<int64_t> shape, float value);
    static Tensor identity(int64_t n);

    const std::vector<int64_t>& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    int64_t extent(size_t axis) const;
    int64_t numel() const { return int64_t(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& operator()(int64_t i) { return data_[size_t(i)]; }
    float operator()(int64_t i) const { return data_[size_t(i)]; }
    float& operator()(int64_t i, int64_t j) { return data_[size_t(i * shape_[1] + j)]; }
    float operator()(int64_t i, int64_t j) const { return data_[size_t(i * shape_[1] + j)]; }
    float& operator()(int64_t i, int64_t j, int64_t k) {
        return data_[size_t((i * shape_[1] + j) * shape_[2] + k)];
    }
    float operator()(int64_t i, int64_t j, int64_t k) const {
        return data_[size_t((i * shape_[1] + j) * shape_[2] + k)];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    std::vector<int64_t> shape_;
    std::vector<float> data_;
};

// c = a * b for a [m x k], b [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);

// c = a * b^T for a [m x k], b [n x k]; avoids materializing the transpose
// and keeps both operands streaming row-major
Tensor matmul_bt(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

// elementwise sum, identical shapes
Tensor add(const Tensor& a, const Tensor& b);

// adds a length-n bias vector to every row of [m x n]
Tensor add_row_bias(const Tensor& a, const Tensor& bias);

Tensor scale(const Tensor& a, float s);

// softmax over the last axis with max-shift stabilization; rejects NaN input
Tensor softmax_rows(const Tensor& s);

// normalization over the last axis, then per-coordinate gain and bias
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  float eps = 1e-5f);

// exact erf-based gelu
Tensor gelu(const Tensor& x);

// unit L2 norm per row of [m x d]; zero rows are rejected
Tensor l2_normalize_rows(const Tensor& x);

// channelwise bilinear resampling of [c x h x w] with half-pixel centers;
// resizing to the input size returns a bit-identical copy
Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w);

} // namespace csaseg
