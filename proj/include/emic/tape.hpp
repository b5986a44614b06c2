#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "emic/num_array.hpp"

namespace emic {

using ValueRef = std::int32_t;
using GradMap = std::map<std::string, NumArray>;

// Records array-level operations; backward() replays the local gradient
// rules in reverse creation order. Forward values are computed by the same
// free functions as the untaped path, so taped and untaped results are
// identical. One tape per training example; single-threaded.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Untracked leaf.
    ValueRef constant(NumArray v);
    // Tracked leaf; repeated registration of a name returns the same node.
    ValueRef param(const std::string& name, const NumArray& v);

    ValueRef add(ValueRef a, ValueRef b);
    ValueRef add_rowvec(ValueRef x, ValueRef b);
    ValueRef sub(ValueRef a, ValueRef b);
    ValueRef mul(ValueRef a, ValueRef b);
    ValueRef scale(ValueRef a, double s);
    ValueRef matmul(ValueRef a, ValueRef b);
    ValueRef transpose2d(ValueRef a);
    ValueRef transpose01(ValueRef a);
    ValueRef softmax_rows(ValueRef a);
    ValueRef layer_norm(ValueRef x, ValueRef gain, ValueRef bias, double eps);
    ValueRef gelu(ValueRef x);
    ValueRef softplus(ValueRef x);
    ValueRef clamp(ValueRef x, double lo, double hi);
    ValueRef reshape(ValueRef x, std::vector<std::size_t> shape);
    ValueRef gather_rows(ValueRef x, std::vector<std::uint32_t> rows);
    // Appends n zero rows to a 2-D array.
    ValueRef pad_rows(ValueRef x, std::size_t n);
    ValueRef slice_cols(ValueRef x, std::size_t c0, std::size_t c1);
    ValueRef concat_cols(const std::vector<ValueRef>& xs);
    // Tiles a [1,D] (or [D]) row vector into [n,D].
    ValueRef repeat_row(ValueRef x, std::size_t n);
    ValueRef sum_all(ValueRef x);
    // Batched decayed attention; decay is a constant (not differentiated).
    ValueRef decayed_attention(ValueRef q, ValueRef k, ValueRef v, NumArray decay, double scale);
    // Elementwise - log2(P(round lands in the unit bin around v-mu)) under
    // N(mu, sigma^2); the train-mode continuous rate term.
    ValueRef gaussian_bits(ValueRef v, ValueRef mu, ValueRef sigma);

    // References stay valid for the tape's lifetime (node storage is a deque).
    const NumArray& value(ValueRef r) const;
    std::size_t size() const { return nodes_.size(); }

    // Gradients of a scalar loss for every parameter registered on this
    // tape; parameters never touched by the loss get zero gradients.
    GradMap backward(ValueRef loss);

  private:
    enum class Op : std::uint8_t {
        kConstant,
        kParam,
        kAdd,
        kAddRowVec,
        kSub,
        kMul,
        kScale,
        kMatMul,
        kTranspose2D,
        kTranspose01,
        kSoftmaxRows,
        kLayerNorm,
        kGelu,
        kSoftplus,
        kClamp,
        kReshape,
        kGatherRows,
        kPadRows,
        kSliceCols,
        kConcatCols,
        kRepeatRow,
        kSumAll,
        kDecayedAttention,
        kGaussianBits,
    };

    struct Node {
        Op op{Op::kConstant};
        NumArray value;
        NumArray grad;            // allocated during backward
        bool needs_grad{false};   // reachable from a param
        std::vector<ValueRef> in;
        NumArray aux;             // op-specific saved state (softmax, decay, ...)
        NumArray aux2;
        double s0{0.0}, s1{0.0};  // op-specific scalars
        std::vector<std::uint32_t> idx;
        std::string pname;
    };

    ValueRef push(Node n);
    Node& node(ValueRef r) { return nodes_[static_cast<std::size_t>(r)]; }
    const Node& node(ValueRef r) const { return nodes_[static_cast<std::size_t>(r)]; }
    NumArray& grad_buf(ValueRef r);
    void accumulate(ValueRef r, const NumArray& g);
    void backward_node(std::size_t i);

    std::deque<Node> nodes_;
    std::map<std::string, ValueRef> params_;
};

}  // namespace emic
