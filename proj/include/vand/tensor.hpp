#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vand {

/// Dense row-major array of 64-bit floats.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double v);

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool is_scalar() const { return data_.size() == 1; }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 2-D accessors (require ndim() == 2)
    int rows() const;
    int cols() const;
    double& at(int r, int c);
    double at(int r, int c) const;

    double item() const; // scalar value; throws ShapeError otherwise
    bool all_finite() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::string shape_str(const std::vector<int>& shape);
std::string shape_str(const Tensor& t);

// Raw matrix kernels used by the autodiff layer and the fused LSTM cell.
// C (+)= A·B, A·Bᵀ, Aᵀ·B respectively; when accumulate is false C is overwritten.
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate);
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate);
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate);

} // namespace vand
