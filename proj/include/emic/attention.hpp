#pragma once

#include <string>
#include <vector>

#include "emic/geometry.hpp"
#include "emic/model_params.hpp"
#include "emic/num_array.hpp"
#include "emic/tape.hpp"

namespace emic {

struct AttentionConfig {
    enum class Level { kSingle, kDecomposed };

    int heads{2};
    int head_dim{16};
    std::vector<double> gammas;  // per-head decay rate, each in (0,1)
    Level level{Level::kSingle};

    int channels() const { return heads * head_dim; }
};

// gamma_h = 1 - 2^-(3+h)
std::vector<double> default_gammas(int heads);

// L x L matrix of gamma^(Manhattan distance) between the listed attention
// units; row/col of index i come from the list's r1.
NumArray decay_from_indices(const IndexList& list, double gamma);

// M x M decay between the mask units represented by the list (coordinates on
// the mask-unit grid).
NumArray mask_unit_decay(const IndexList& list, double gamma);

// S x S decay between within-unit slots (S = r2^2); identical for all units.
NumArray within_unit_decay(const IndexList& list, double gamma);

// out = (softmax_rows(q k^T / sqrt(d)) .* decay) v. Rows are not
// renormalized after the decay product.
NumArray pisa(const NumArray& q, const NumArray& k, const NumArray& v, const NumArray& decay);

// Two-pass decomposed attention over [M,S,d] operands: mask-unit mixing per
// slot under d_mu, then within-unit mixing under d_au.
NumArray dpisa(const NumArray& q, const NumArray& k, const NumArray& v, const NumArray& d_mu,
               const NumArray& d_au);

// Multi-head block: per-head q/k/v projections, per-head decay, single or
// decomposed attention, concat, output projection. Parameter names live
// under `prefix` (".q.w", ".q.b", ..., ".o.w", ".o.b").
ValueRef mha_block(Tape& tape, ValueRef x, const IndexList& list, const AttentionConfig& cfg,
                   const ModelParams& params, const std::string& prefix);

}  // namespace emic
