#include "vand/tensor.hpp"

#include <cmath>
#include <sstream>

#include "vand/error.hpp"

namespace vand {

namespace {

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

} // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size())) {
        throw ShapeError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = v;
    return t;
}

int Tensor::rows() const {
    if (ndim() != 2) throw ShapeError("rows() requires a 2-D tensor, got " + shape_str(*this));
    return shape_[0];
}

int Tensor::cols() const {
    if (ndim() != 2) throw ShapeError("cols() requires a 2-D tensor, got " + shape_str(*this));
    return shape_[1];
}

double& Tensor::at(int r, int c) {
    return data_[static_cast<size_t>(r) * static_cast<size_t>(shape_[1]) + static_cast<size_t>(c)];
}

double Tensor::at(int r, int c) const {
    return data_[static_cast<size_t>(r) * static_cast<size_t>(shape_[1]) + static_cast<size_t>(c)];
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() requires a scalar, got " + shape_str(*this));
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

std::string shape_str(const Tensor& t) { return shape_str(t.shape()); }

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k || c.rows() != m || c.cols() != n) {
        throw ShapeError("gemm_nn shape mismatch " + shape_str(a) + " x " + shape_str(b));
    }
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    if (!accumulate) {
        for (int64_t i = 0; i < c.numel(); ++i) pc[i] = 0.0;
    }
    for (int i = 0; i < m; ++i) {
        double* crow = pc + static_cast<int64_t>(i) * n;
        const double* arow = pa + static_cast<int64_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = pb + static_cast<int64_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    const int m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k || c.rows() != m || c.cols() != n) {
        throw ShapeError("gemm_nt shape mismatch " + shape_str(a) + " x " + shape_str(b) + "^T");
    }
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (int i = 0; i < m; ++i) {
        const double* arow = pa + static_cast<int64_t>(i) * k;
        double* crow = pc + static_cast<int64_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = pb + static_cast<int64_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    const int k = a.rows(), m = a.cols(), n = b.cols();
    if (b.rows() != k || c.rows() != m || c.cols() != n) {
        throw ShapeError("gemm_tn shape mismatch " + shape_str(a) + "^T x " + shape_str(b));
    }
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    if (!accumulate) {
        for (int64_t i = 0; i < c.numel(); ++i) pc[i] = 0.0;
    }
    for (int p = 0; p < k; ++p) {
        const double* arow = pa + static_cast<int64_t>(p) * m;
        const double* brow = pb + static_cast<int64_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            double* crow = pc + static_cast<int64_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

} // namespace vand
