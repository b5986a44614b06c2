#include "emic/num_array.hpp"

#include <Eigen/Core>

#include <cmath>
#include <sstream>

namespace emic {

namespace {

using EigenRowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapConst = Eigen::Map<const EigenRowMat>;
using Map = Eigen::Map<EigenRowMat>;

void require(bool cond, const char* msg) {
    if (!cond) throw DimError(msg);
}

}  // namespace

std::string shape_str(const NumArray& a) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < a.rank(); ++i) {
        if (i) os << ",";
        os << a.shape()[i];
    }
    os << "]";
    return os.str();
}

void ensure_finite(const NumArray& a, const char* op) {
    for (double v : a.vec()) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op) + ": non-finite value produced");
        }
    }
}

NumArray matmul(const NumArray& a, const NumArray& b) {
    require(a.rank() == 2 && b.rank() == 2, "matmul: operands must be 2-D");
    require(a.extent(1) == b.extent(0), "matmul: inner extents disagree");
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    NumArray out({m, n});
    if (m && n && k) {
        MapConst ma(a.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
        MapConst mb(b.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
        Map mo(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        mo.noalias() = ma * mb;
    }
    ensure_finite(out, "matmul");
    return out;
}

NumArray transpose2d(const NumArray& a) {
    require(a.rank() == 2, "transpose2d: operand must be 2-D");
    const std::size_t m = a.extent(0), n = a.extent(1);
    NumArray out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

NumArray transpose01(const NumArray& a) {
    require(a.rank() == 3, "transpose01: operand must be 3-D");
    const std::size_t A = a.extent(0), B = a.extent(1), d = a.extent(2);
    NumArray out({B, A, d});
    for (std::size_t i = 0; i < A; ++i)
        for (std::size_t j = 0; j < B; ++j)
            for (std::size_t c = 0; c < d; ++c) out.at(j, i, c) = a.at(i, j, c);
    return out;
}

NumArray add(const NumArray& a, const NumArray& b) {
    require(a.same_shape(b), "add: shape mismatch");
    NumArray out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
    ensure_finite(out, "add");
    return out;
}

NumArray add_rowvec(const NumArray& x, const NumArray& b) {
    require(x.rank() == 2, "add_rowvec: x must be 2-D");
    require(b.numel() == x.extent(1), "add_rowvec: vector length mismatch");
    NumArray out = x;
    const std::size_t L = x.extent(0), D = x.extent(1);
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < D; ++j) out.at(i, j) += b[j];
    ensure_finite(out, "add_rowvec");
    return out;
}

NumArray sub(const NumArray& a, const NumArray& b) {
    require(a.same_shape(b), "sub: shape mismatch");
    NumArray out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
    ensure_finite(out, "sub");
    return out;
}

NumArray mul(const NumArray& a, const NumArray& b) {
    require(a.same_shape(b), "mul: shape mismatch");
    NumArray out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
    ensure_finite(out, "mul");
    return out;
}

NumArray scale(const NumArray& a, double s) {
    NumArray out = a;
    for (double& v : out.vec()) v *= s;
    ensure_finite(out, "scale");
    return out;
}

NumArray softmax_rows(const NumArray& a) {
    require(a.rank() == 2, "softmax_rows: operand must be 2-D");
    const std::size_t m = a.extent(0), n = a.extent(1);
    NumArray out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double mx = a.at(i, 0);
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, a.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double e = std::exp(a.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= sum;
    }
    ensure_finite(out, "softmax_rows");
    return out;
}

NumArray layer_norm(const NumArray& x, const NumArray& gain, const NumArray& bias, double eps) {
    require(x.rank() == 2, "layer_norm: x must be 2-D");
    const std::size_t L = x.extent(0), D = x.extent(1);
    require(gain.numel() == D && bias.numel() == D, "layer_norm: affine length mismatch");
    if (eps <= 0) throw ConfigError("layer_norm: eps must be positive");
    NumArray out({L, D});
    for (std::size_t i = 0; i < L; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < D; ++j) mean += x.at(i, j);
        mean /= static_cast<double>(D);
        double var = 0.0;
        for (std::size_t j = 0; j < D; ++j) {
            const double d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(D);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < D; ++j) {
            out.at(i, j) = (x.at(i, j) - mean) * inv * gain[j] + bias[j];
        }
    }
    ensure_finite(out, "layer_norm");
    return out;
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

NumArray gelu(const NumArray& x) {
    NumArray out = x;
    for (double& v : out.vec()) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    ensure_finite(out, "gelu");
    return out;
}

NumArray softplus(const NumArray& x) {
    NumArray out = x;
    for (double& v : out.vec()) {
        // log1p(exp(v)) without overflow for large v
        v = v > 30.0 ? v : std::log1p(std::exp(v));
    }
    ensure_finite(out, "softplus");
    return out;
}

NumArray clamp(const NumArray& x, double lo, double hi) {
    NumArray out = x;
    for (double& v : out.vec()) v = std::min(std::max(v, lo), hi);
    return out;
}

double sum_all(const NumArray& a) {
    double s = 0.0;
    for (double v : a.vec()) s += v;
    return s;
}

NumArray decayed_attention_fwd(const NumArray& q, const NumArray& k, const NumArray& v,
                               const NumArray& decay, double scale, NumArray* save_softmax) {
    require(q.rank() == 3 && k.rank() == 3 && v.rank() == 3, "decayed_attention: operands must be 3-D");
    require(q.same_shape(k) && q.same_shape(v), "decayed_attention: q/k/v shapes disagree");
    const std::size_t B = q.extent(0), N = q.extent(1), d = q.extent(2);
    require(decay.rank() == 2 && decay.extent(0) == N && decay.extent(1) == N,
            "decayed_attention: decay matrix extent mismatch");
    NumArray out({B, N, d});
    if (save_softmax) *save_softmax = NumArray({B, N, N});
    NumArray scores({N, N});
    for (std::size_t b = 0; b < B; ++b) {
        MapConst mq(q.data() + b * N * d, static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(d));
        MapConst mk(k.data() + b * N * d, static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(d));
        Map ms(scores.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
        ms.noalias() = mq * mk.transpose() * scale;
        NumArray p = softmax_rows(scores);
        if (save_softmax) {
            std::copy(p.vec().begin(), p.vec().end(), save_softmax->data() + b * N * N);
        }
        for (std::size_t i = 0; i < N * N; ++i) p[i] *= decay[i];
        MapConst mp(p.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
        MapConst mv(v.data() + b * N * d, static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(d));
        Map mo(out.data() + b * N * d, static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(d));
        mo.noalias() = mp * mv;
    }
    ensure_finite(out, "decayed_attention");
    return out;
}

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_cdf_diff(double lo, double hi) {
    // Phi(hi) - Phi(lo), computed in the tail with erfc to avoid cancellation.
    if (lo >= hi) return 0.0;
    if (lo >= 0.0) {
        return 0.5 * (std::erfc(lo * kInvSqrt2) - std::erfc(hi * kInvSqrt2));
    }
    if (hi <= 0.0) {
        return 0.5 * (std::erfc(-hi * kInvSqrt2) - std::erfc(-lo * kInvSqrt2));
    }
    return 0.5 * (std::erf(hi * kInvSqrt2) - std::erf(lo * kInvSqrt2));
}

}  // namespace emic
