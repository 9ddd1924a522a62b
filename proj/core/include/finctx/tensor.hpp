#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "finctx/rng.hpp"

namespace finctx {

// Dense row-major tensor of 64-bit floats. Rank is 1 or 2 in practice;
// shape [r, c] indexes as data[i * c + j].
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double value);
    static Tensor scalar(double value) { return Tensor({1}, {value}); }
    static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0);
    // 2D helper from nested initializer data
    static Tensor from_rows(const std::vector<std::vector<double>>& rows);
    static Tensor identity(int n);

    const std::vector<int>& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape_.size()); }
    // rows/cols with 1D tensors treated as a single row
    int rows() const { return rank() == 2 ? shape_[0] : 1; }
    int cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& at(int i) { return data_[static_cast<size_t>(i)]; }
    double at(int i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int i, int j) { return data_[static_cast<size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return data_[static_cast<size_t>(i) * cols() + j]; }

    double item() const;  // value of a single-element tensor

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void fill(double v);
    void zero() { fill(0.0); }

    std::string shape_str() const;

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::string shape_to_string(const std::vector<int>& shape);

}  // namespace finctx
