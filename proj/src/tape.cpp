#include "emic/tape.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace emic {

namespace {

using EigenRowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapConst = Eigen::Map<const EigenRowMat>;
using Map = Eigen::Map<EigenRowMat>;

MapConst emap(const NumArray& a, std::size_t r, std::size_t c, std::size_t off = 0) {
    return MapConst(a.data() + off, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

Map emap(NumArray& a, std::size_t r, std::size_t c, std::size_t off = 0) {
    return Map(a.data() + off, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvLn2 = 1.4426950408889634074;
constexpr double kPmin = 1e-300;

}  // namespace

ValueRef Tape::push(Node n) {
    for (ValueRef i : n.in) {
        if (node(i).needs_grad) {
            n.needs_grad = true;
            break;
        }
    }
    nodes_.push_back(std::move(n));
    return static_cast<ValueRef>(nodes_.size() - 1);
}

const NumArray& Tape::value(ValueRef r) const { return node(r).value; }

ValueRef Tape::constant(NumArray v) {
    Node n;
    n.op = Op::kConstant;
    n.value = std::move(v);
    return push(std::move(n));
}

ValueRef Tape::param(const std::string& name, const NumArray& v) {
    auto it = params_.find(name);
    if (it != params_.end()) return it->second;
    Node n;
    n.op = Op::kParam;
    n.value = v;
    n.pname = name;
    n.needs_grad = true;
    ValueRef r = push(std::move(n));
    params_.emplace(name, r);
    return r;
}

ValueRef Tape::add(ValueRef a, ValueRef b) {
    Node n;
    n.op = Op::kAdd;
    n.in = {a, b};
    n.value = emic::add(value(a), value(b));
    return push(std::move(n));
}

ValueRef Tape::add_rowvec(ValueRef x, ValueRef b) {
    Node n;
    n.op = Op::kAddRowVec;
    n.in = {x, b};
    n.value = emic::add_rowvec(value(x), value(b));
    return push(std::move(n));
}

ValueRef Tape::sub(ValueRef a, ValueRef b) {
    Node n;
    n.op = Op::kSub;
    n.in = {a, b};
    n.value = emic::sub(value(a), value(b));
    return push(std::move(n));
}

ValueRef Tape::mul(ValueRef a, ValueRef b) {
    Node n;
    n.op = Op::kMul;
    n.in = {a, b};
    n.value = emic::mul(value(a), value(b));
    return push(std::move(n));
}

ValueRef Tape::scale(ValueRef a, double s) {
    Node n;
    n.op = Op::kScale;
    n.in = {a};
    n.s0 = s;
    n.value = emic::scale(value(a), s);
    return push(std::move(n));
}

ValueRef Tape::matmul(ValueRef a, ValueRef b) {
    Node n;
    n.op = Op::kMatMul;
    n.in = {a, b};
    n.value = emic::matmul(value(a), value(b));
    return push(std::move(n));
}

ValueRef Tape::transpose2d(ValueRef a) {
    Node n;
    n.op = Op::kTranspose2D;
    n.in = {a};
    n.value = emic::transpose2d(value(a));
    return push(std::move(n));
}

ValueRef Tape::transpose01(ValueRef a) {
    Node n;
    n.op = Op::kTranspose01;
    n.in = {a};
    n.value = emic::transpose01(value(a));
    return push(std::move(n));
}

ValueRef Tape::softmax_rows(ValueRef a) {
    Node n;
    n.op = Op::kSoftmaxRows;
    n.in = {a};
    n.value = emic::softmax_rows(value(a));
    return push(std::move(n));
}

ValueRef Tape::layer_norm(ValueRef x, ValueRef gain, ValueRef bias, double eps) {
    Node n;
    n.op = Op::kLayerNorm;
    n.in = {x, gain, bias};
    n.s0 = eps;
    n.value = emic::layer_norm(value(x), value(gain), value(bias), eps);
    return push(std::move(n));
}

ValueRef Tape::gelu(ValueRef x) {
    Node n;
    n.op = Op::kGelu;
    n.in = {x};
    n.value = emic::gelu(value(x));
    return push(std::move(n));
}

ValueRef Tape::softplus(ValueRef x) {
    Node n;
    n.op = Op::kSoftplus;
    n.in = {x};
    n.value = emic::softplus(value(x));
    return push(std::move(n));
}

ValueRef Tape::clamp(ValueRef x, double lo, double hi) {
    Node n;
    n.op = Op::kClamp;
    n.in = {x};
    n.s0 = lo;
    n.s1 = hi;
    n.value = emic::clamp(value(x), lo, hi);
    return push(std::move(n));
}

ValueRef Tape::reshape(ValueRef x, std::vector<std::size_t> shape) {
    if (NumArray::count(shape) != value(x).numel()) {
        throw DimError("reshape: element count mismatch");
    }
    Node n;
    n.op = Op::kReshape;
    n.in = {x};
    n.value = NumArray(std::move(shape), value(x).vec());
    return push(std::move(n));
}

ValueRef Tape::gather_rows(ValueRef x, std::vector<std::uint32_t> rows) {
    const NumArray& v = value(x);
    if (v.rank() != 2) throw DimError("gather_rows: operand must be 2-D");
    const std::size_t D = v.extent(1);
    Node n;
    n.op = Op::kGatherRows;
    n.in = {x};
    n.value = NumArray({rows.size(), D});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= v.extent(0)) throw DimError("gather_rows: row index out of range");
        std::copy_n(v.data() + rows[i] * D, D, n.value.data() + i * D);
    }
    n.idx = std::move(rows);
    return push(std::move(n));
}

ValueRef Tape::pad_rows(ValueRef x, std::size_t count) {
    const NumArray& v = value(x);
    if (v.rank() != 2) throw DimError("pad_rows: operand must be 2-D");
    Node n;
    n.op = Op::kPadRows;
    n.in = {x};
    n.value = NumArray({v.extent(0) + count, v.extent(1)});
    std::copy(v.vec().begin(), v.vec().end(), n.value.data());
    return push(std::move(n));
}

ValueRef Tape::slice_cols(ValueRef x, std::size_t c0, std::size_t c1) {
    const NumArray& v = value(x);
    if (v.rank() != 2 || c0 >= c1 || c1 > v.extent(1)) {
        throw DimError("slice_cols: bad column range");
    }
    const std::size_t L = v.extent(0), D = v.extent(1), W = c1 - c0;
    Node n;
    n.op = Op::kSliceCols;
    n.in = {x};
    n.s0 = static_cast<double>(c0);
    n.value = NumArray({L, W});
    for (std::size_t i = 0; i < L; ++i) {
        std::copy_n(v.data() + i * D + c0, W, n.value.data() + i * W);
    }
    return push(std::move(n));
}

ValueRef Tape::concat_cols(const std::vector<ValueRef>& xs) {
    if (xs.empty()) throw DimError("concat_cols: no operands");
    const std::size_t L = value(xs[0]).extent(0);
    std::size_t W = 0;
    for (ValueRef r : xs) {
        const NumArray& v = value(r);
        if (v.rank() != 2 || v.extent(0) != L) throw DimError("concat_cols: row count mismatch");
        W += v.extent(1);
    }
    Node n;
    n.op = Op::kConcatCols;
    n.in = xs;
    n.value = NumArray({L, W});
    std::size_t off = 0;
    for (ValueRef r : xs) {
        const NumArray& v = value(r);
        const std::size_t w = v.extent(1);
        for (std::size_t i = 0; i < L; ++i) {
            std::copy_n(v.data() + i * w, w, n.value.data() + i * W + off);
        }
        off += w;
    }
    return push(std::move(n));
}

ValueRef Tape::repeat_row(ValueRef x, std::size_t count) {
    const NumArray& v = value(x);
    const std::size_t D = v.numel();
    if (v.rank() > 2 || (v.rank() == 2 && v.extent(0) != 1)) {
        throw DimError("repeat_row: operand must be a row vector");
    }
    Node n;
    n.op = Op::kRepeatRow;
    n.in = {x};
    n.value = NumArray({count, D});
    for (std::size_t i = 0; i < count; ++i) std::copy_n(v.data(), D, n.value.data() + i * D);
    return push(std::move(n));
}

ValueRef Tape::sum_all(ValueRef x) {
    Node n;
    n.op = Op::kSumAll;
    n.in = {x};
    n.value = NumArray::scalar(emic::sum_all(value(x)));
    ensure_finite(n.value, "sum_all");
    return push(std::move(n));
}

ValueRef Tape::decayed_attention(ValueRef q, ValueRef k, ValueRef v, NumArray decay, double scale) {
    Node n;
    n.op = Op::kDecayedAttention;
    n.in = {q, k, v};
    n.s0 = scale;
    n.value = decayed_attention_fwd(value(q), value(k), value(v), decay, scale, &n.aux);
    n.aux2 = std::move(decay);
    return push(std::move(n));
}

ValueRef Tape::gaussian_bits(ValueRef v, ValueRef mu, ValueRef sigma) {
    const NumArray& vv = value(v);
    if (!vv.same_shape(value(mu)) || !vv.same_shape(value(sigma))) {
        throw DimError("gaussian_bits: shape mismatch");
    }
    Node n;
    n.op = Op::kGaussianBits;
    n.in = {v, mu, sigma};
    n.value = NumArray(vv.shape());
    for (std::size_t i = 0; i < vv.numel(); ++i) {
        const double s = value(sigma)[i];
        const double c = (vv[i] - value(mu)[i]) / s;
        const double p = std::max(normal_cdf_diff(c - 0.5 / s, c + 0.5 / s), kPmin);
        n.value[i] = -std::log2(p);
    }
    ensure_finite(n.value, "gaussian_bits");
    return push(std::move(n));
}

NumArray& Tape::grad_buf(ValueRef r) {
    Node& n = node(r);
    if (n.grad.numel() == 0) n.grad = NumArray(n.value.shape());
    return n.grad;
}

void Tape::accumulate(ValueRef r, const NumArray& g) {
    NumArray& buf = grad_buf(r);
    for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] += g[i];
}

GradMap Tape::backward(ValueRef loss) {
    if (value(loss).numel() != 1) {
        throw UsageError("backward: loss must be a scalar node");
    }
    grad_buf(loss)[0] = 1.0;
    for (std::size_t i = static_cast<std::size_t>(loss) + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.grad.numel() == 0) continue;
        backward_node(i);
    }
    GradMap out;
    for (const auto& [name, ref] : params_) {
        Node& n = node(ref);
        out[name] = n.grad.numel() ? n.grad : NumArray(n.value.shape());
    }
    // Release gradient buffers so a tape can be probed repeatedly in tests.
    for (Node& n : nodes_) n.grad = NumArray();
    return out;
}

void Tape::backward_node(std::size_t i) {
    Node& n = nodes_[i];
    const NumArray& g = n.grad;
    auto wants = [&](std::size_t slot) { return node(n.in[slot]).needs_grad; };

    switch (n.op) {
        case Op::kConstant:
        case Op::kParam:
            return;
        case Op::kAdd: {
            if (wants(0)) accumulate(n.in[0], g);
            if (wants(1)) accumulate(n.in[1], g);
            return;
        }
        case Op::kAddRowVec: {
            if (wants(0)) accumulate(n.in[0], g);
            if (wants(1)) {
                const std::size_t L = n.value.extent(0), D = n.value.extent(1);
                NumArray& bg = grad_buf(n.in[1]);
                for (std::size_t r = 0; r < L; ++r)
                    for (std::size_t c = 0; c < D; ++c) bg[c] += g[r * D + c];
            }
            return;
        }
        case Op::kSub: {
            if (wants(0)) accumulate(n.in[0], g);
            if (wants(1)) {
                NumArray& bg = grad_buf(n.in[1]);
                for (std::size_t j = 0; j < bg.numel(); ++j) bg[j] -= g[j];
            }
            return;
        }
        case Op::kMul: {
            if (wants(0)) {
                NumArray& ag = grad_buf(n.in[0]);
                const NumArray& b = value(n.in[1]);
                for (std::size_t j = 0; j < ag.numel(); ++j) ag[j] += g[j] * b[j];
            }
            if (wants(1)) {
                NumArray& bg = grad_buf(n.in[1]);
                const NumArray& a = value(n.in[0]);
                for (std::size_t j = 0; j < bg.numel(); ++j) bg[j] += g[j] * a[j];
            }
            return;
        }
        case Op::kScale: {
            if (wants(0)) {
                NumArray& ag = grad_buf(n.in[0]);
                for (std::size_t j = 0; j < ag.numel(); ++j) ag[j] += g[j] * n.s0;
            }
            return;
        }
        case Op::kMatMul: {
            const NumArray& a = value(n.in[0]);
            const NumArray& b = value(n.in[1]);
            const std::size_t m = a.extent(0), k = a.extent(1), c = b.extent(1);
            if (wants(0)) {
                NumArray& ag = grad_buf(n.in[0]);
                emap(ag, m, k).noalias() += emap(g, m, c) * emap(b, k, c).transpose();
            }
            if (wants(1)) {
                NumArray& bg = grad_buf(n.in[1]);
                emap(bg, k, c).noalias() += emap(a, m, k).transpose() * emap(g, m, c);
            }
            return;
        }
        case Op::kTranspose2D: {
            if (wants(0)) accumulate(n.in[0], emic::transpose2d(g));
            return;
        }
        case Op::kTranspose01: {
            if (wants(0)) accumulate(n.in[0], emic::transpose01(g));
            return;
        }
        case Op::kSoftmaxRows: {
            if (!wants(0)) return;
            const NumArray& p = n.value;
            const std::size_t m = p.extent(0), c = p.extent(1);
            NumArray& ag = grad_buf(n.in[0]);
            for (std::size_t r = 0; r < m; ++r) {
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * p[r * c + j];
                for (std::size_t j = 0; j < c; ++j) {
                    ag[r * c + j] += p[r * c + j] * (g[r * c + j] - dot);
                }
            }
            return;
        }
        case Op::kLayerNorm: {
            const NumArray& x = value(n.in[0]);
            const NumArray& gain = value(n.in[1]);
            const std::size_t L = x.extent(0), D = x.extent(1);
            const double eps = n.s0;
            const bool wx = wants(0), wg = wants(1), wb = wants(2);
            for (std::size_t r = 0; r < L; ++r) {
                double mean = 0.0;
                for (std::size_t j = 0; j < D; ++j) mean += x[r * D + j];
                mean /= static_cast<double>(D);
                double var = 0.0;
                for (std::size_t j = 0; j < D; ++j) {
                    const double d = x[r * D + j] - mean;
                    var += d * d;
                }
                var /= static_cast<double>(D);
                const double inv = 1.0 / std::sqrt(var + eps);
                double mw = 0.0, mwx = 0.0;
                for (std::size_t j = 0; j < D; ++j) {
                    const double xh = (x[r * D + j] - mean) * inv;
                    const double w = g[r * D + j] * gain[j];
                    mw += w;
                    mwx += w * xh;
                    if (wg) grad_buf(n.in[1])[j] += g[r * D + j] * xh;
                    if (wb) grad_buf(n.in[2])[j] += g[r * D + j];
                }
                if (wx) {
                    mw /= static_cast<double>(D);
                    mwx /= static_cast<double>(D);
                    NumArray& xg = grad_buf(n.in[0]);
                    for (std::size_t j = 0; j < D; ++j) {
                        const double xh = (x[r * D + j] - mean) * inv;
                        const double w = g[r * D + j] * gain[j];
                        xg[r * D + j] += (w - mw - xh * mwx) * inv;
                    }
                }
            }
            return;
        }
        case Op::kGelu: {
            if (!wants(0)) return;
            const NumArray& x = value(n.in[0]);
            NumArray& ag = grad_buf(n.in[0]);
            for (std::size_t j = 0; j < x.numel(); ++j) {
                const double v = x[j];
                const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                ag[j] += g[j] * (cdf + v * normal_pdf(v));
            }
            return;
        }
        case Op::kSoftplus: {
            if (!wants(0)) return;
            const NumArray& x = value(n.in[0]);
            NumArray& ag = grad_buf(n.in[0]);
            for (std::size_t j = 0; j < x.numel(); ++j) {
                ag[j] += g[j] / (1.0 + std::exp(-x[j]));
            }
            return;
        }
        case Op::kClamp: {
            if (!wants(0)) return;
            const NumArray& x = value(n.in[0]);
            NumArray& ag = grad_buf(n.in[0]);
            for (std::size_t j = 0; j < x.numel(); ++j) {
                if (x[j] > n.s0 && x[j] < n.s1) ag[j] += g[j];
            }
            return;
        }
        case Op::kReshape: {
            if (wants(0)) {
                NumArray& ag = grad_buf(n.in[0]);
                for (std::size_t j = 0; j < ag.numel(); ++j) ag[j] += g[j];
            }
            return;
        }
        case Op::kGatherRows: {
            if (!wants(0)) return;
            NumArray& ag = grad_buf(n.in[0]);
            const std::size_t D = n.value.extent(1);
            for (std::size_t r = 0; r < n.idx.size(); ++r) {
                for (std::size_t c = 0; c < D; ++c) ag[n.idx[r] * D + c] += g[r * D + c];
            }
            return;
        }
        case Op::kPadRows: {
            if (!wants(0)) return;
            NumArray& ag = grad_buf(n.in[0]);
            for (std::size_t j = 0; j < ag.numel(); ++j) ag[j] += g[j];
            return;
        }
        case Op::kSliceCols: {
            if (!wants(0)) return;
            NumArray& ag = grad_buf(n.in[0]);
            const std::size_t L = n.value.extent(0), W = n.value.extent(1);
            const std::size_t D = ag.numel() / ag.shape()[0];
            const std::size_t c0 = static_cast<std::size_t>(n.s0);
            for (std::size_t r = 0; r < L; ++r)
                for (std::size_t c = 0; c < W; ++c) ag[r * D + c0 + c] += g[r * W + c];
            return;
        }
        case Op::kConcatCols: {
            const std::size_t L = n.value.extent(0), W = n.value.extent(1);
            std::size_t off = 0;
            for (std::size_t s = 0; s < n.in.size(); ++s) {
                const std::size_t w = value(n.in[s]).extent(1);
                if (node(n.in[s]).needs_grad) {
                    NumArray& ag = grad_buf(n.in[s]);
                    for (std::size_t r = 0; r < L; ++r)
                        for (std::size_t c = 0; c < w; ++c) ag[r * w + c] += g[r * W + off + c];
                }
                off += w;
            }
            return;
        }
        case Op::kRepeatRow: {
            if (!wants(0)) return;
            NumArray& ag = grad_buf(n.in[0]);
            const std::size_t L = n.value.extent(0), D = n.value.extent(1);
            for (std::size_t r = 0; r < L; ++r)
                for (std::size_t c = 0; c < D; ++c) ag[c] += g[r * D + c];
            return;
        }
        case Op::kSumAll: {
            if (!wants(0)) return;
            NumArray& ag = grad_buf(n.in[0]);
            for (std::size_t j = 0; j < ag.numel(); ++j) ag[j] += g[0];
            return;
        }
        case Op::kDecayedAttention: {
            const NumArray& q = value(n.in[0]);
            const NumArray& k = value(n.in[1]);
            const NumArray& v = value(n.in[2]);
            const std::size_t B = q.extent(0), N = q.extent(1), d = q.extent(2);
            const NumArray& P = n.aux;        // pre-decay softmax [B,N,N]
            const NumArray& decay = n.aux2;   // [N,N]
            const double sc = n.s0;
            const bool wq = wants(0), wk = wants(1), wv = wants(2);
            NumArray A({N, N}), dP({N, N});
            for (std::size_t b = 0; b < B; ++b) {
                const std::size_t o3 = b * N * d, o2 = b * N * N;
                for (std::size_t j = 0; j < N * N; ++j) A[j] = P[o2 + j] * decay[j];
                if (wv) {
                    NumArray& vg = grad_buf(n.in[2]);
                    emap(vg, N, d, o3).noalias() +=
                        emap(A, N, N).transpose() * emap(g, N, d, o3);
                }
                if (!wq && !wk) continue;
                // dA = dOut V^T ; dP = dA .* decay ; dS = softmax backward
                emap(dP, N, N).noalias() = emap(g, N, d, o3) * emap(v, N, d, o3).transpose();
                for (std::size_t j = 0; j < N * N; ++j) dP[j] *= decay[j];
                for (std::size_t r = 0; r < N; ++r) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < N; ++c) dot += dP[r * N + c] * P[o2 + r * N + c];
                    for (std::size_t c = 0; c < N; ++c) {
                        dP[r * N + c] = P[o2 + r * N + c] * (dP[r * N + c] - dot);
                    }
                }
                if (wq) {
                    NumArray& qg = grad_buf(n.in[0]);
                    emap(qg, N, d, o3).noalias() += emap(dP, N, N) * emap(k, N, d, o3) * sc;
                }
                if (wk) {
                    NumArray& kg = grad_buf(n.in[1]);
                    emap(kg, N, d, o3).noalias() +=
                        emap(dP, N, N).transpose() * emap(q, N, d, o3) * sc;
                }
            }
            return;
        }
        case Op::kGaussianBits: {
            const NumArray& v = value(n.in[0]);
            const NumArray& mu = value(n.in[1]);
            const NumArray& sg = value(n.in[2]);
            const bool w0 = wants(0), w1 = wants(1), w2 = wants(2);
            for (std::size_t j = 0; j < v.numel(); ++j) {
                const double s = sg[j];
                const double hi = (v[j] - mu[j] + 0.5) / s;
                const double lo = (v[j] - mu[j] - 0.5) / s;
                const double p = std::max(normal_cdf_diff(lo, hi), kPmin);
                const double phi_hi = normal_pdf(hi), phi_lo = normal_pdf(lo);
                const double common = g[j] * kInvLn2 / p;
                const double dv = -common * (phi_hi - phi_lo) / s;
                if (w0) grad_buf(n.in[0])[j] += dv;
                if (w1) grad_buf(n.in[1])[j] -= dv;
                if (w2) grad_buf(n.in[2])[j] += common * (hi * phi_hi - lo * phi_lo) / s;
            }
            return;
        }
    }
}

}  // namespace emic
