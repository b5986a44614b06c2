#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "emic/errors.hpp"

namespace emic {

// Dense row-major array of 64-bit floats. Every forward primitive in this
// project produces finite values; a NaN/Inf result raises NumericError at
// the op that created it.
class NumArray {
  public:
    NumArray() = default;

    explicit NumArray(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    NumArray(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (count(shape_) != data_.size()) {
            throw DimError("NumArray: shape/data length mismatch");
        }
    }

    static NumArray scalar(double v) { return NumArray({1}, {v}); }

    static NumArray full(std::vector<std::size_t> shape, double v) {
        NumArray a(std::move(shape));
        for (double& x : a.data_) x = v;
        return a;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t extent(std::size_t i) const { return shape_.at(i); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-D / 3-D element access, row-major.
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

    bool same_shape(const NumArray& o) const { return shape_ == o.shape_; }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        return shape.empty() ? 0 : n;
    }

  private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_str(const NumArray& a);

// Throws NumericError naming `op` if any element is NaN/Inf.
void ensure_finite(const NumArray& a, const char* op);

// ---- forward primitives (pure; shared by taped and untaped paths) ----

NumArray matmul(const NumArray& a, const NumArray& b);
NumArray transpose2d(const NumArray& a);
// [A,B,d] -> [B,A,d]
NumArray transpose01(const NumArray& a);
NumArray add(const NumArray& a, const NumArray& b);
// x[L,D] + b[D] broadcast over rows
NumArray add_rowvec(const NumArray& x, const NumArray& b);
NumArray sub(const NumArray& a, const NumArray& b);
NumArray mul(const NumArray& a, const NumArray& b);
NumArray scale(const NumArray& a, double s);
NumArray softmax_rows(const NumArray& a);
NumArray layer_norm(const NumArray& x, const NumArray& gain, const NumArray& bias, double eps);
NumArray gelu(const NumArray& x);
NumArray softplus(const NumArray& x);
NumArray clamp(const NumArray& x, double lo, double hi);
double sum_all(const NumArray& a);

// Batched decayed attention over [B,N,d] operands with a shared N-by-N decay
// matrix: out_b = (softmax_rows(q_b k_b^T * scale) .* decay) v_b.
// Rows are not renormalized after the decay product. If `save_softmax` is
// non-null, the pre-decay softmax matrices [B,N,N] are stored there for the
// backward pass.
NumArray decayed_attention_fwd(const NumArray& q, const NumArray& k, const NumArray& v,
                               const NumArray& decay, double scale,
                               NumArray* save_softmax = nullptr);

// Stable P(lo < X <= hi) for X ~ N(0,1); exact tails (lo=-inf / hi=+inf ok).
double normal_cdf_diff(double lo, double hi);
// Standard normal pdf.
double normal_pdf(double x);

}  // namespace emic
