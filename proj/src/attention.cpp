#include "emic/attention.hpp"

#include <cmath>

namespace emic {

namespace {

void check_gamma(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw ConfigError("decay rate gamma must be in (0,1)");
    }
}

NumArray decay_from_coords(const std::vector<std::uint32_t>& rows,
                           const std::vector<std::uint32_t>& cols, double gamma) {
    const std::size_t n = rows.size();
    NumArray d({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        d.at(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dist =
                std::abs(static_cast<double>(rows[i]) - static_cast<double>(rows[j])) +
                std::abs(static_cast<double>(cols[i]) - static_cast<double>(cols[j]));
            const double v = std::pow(gamma, dist);
            d.at(i, j) = v;
            d.at(j, i) = v;
        }
    }
    return d;
}

}  // namespace

std::vector<double> default_gammas(int heads) {
    std::vector<double> g(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        g[static_cast<std::size_t>(h)] = 1.0 - std::pow(2.0, -(3.0 + h));
    }
    return g;
}

NumArray decay_from_indices(const IndexList& list, double gamma) {
    check_gamma(gamma);
    std::vector<std::uint32_t> rows(list.size()), cols(list.size());
    for (std::size_t i = 0; i < list.size(); ++i) {
        if (list.indices[i] >= list.r1 * list.rows) {
            throw DimError("decay_from_indices: index outside grid");
        }
        rows[i] = list.row_of(list.indices[i]);
        cols[i] = list.col_of(list.indices[i]);
    }
    return decay_from_coords(rows, cols, gamma);
}

NumArray mask_unit_decay(const IndexList& list, double gamma) {
    check_gamma(gamma);
    const std::size_t group = static_cast<std::size_t>(list.r2) * list.r2;
    const std::size_t m = list.size() / group;
    std::vector<std::uint32_t> rows(m), cols(m);
    for (std::size_t u = 0; u < m; ++u) {
        const std::uint32_t idx = list.indices[u * group];
        rows[u] = list.row_of(idx) / list.r2;
        cols[u] = list.col_of(idx) / list.r2;
    }
    return decay_from_coords(rows, cols, gamma);
}

NumArray within_unit_decay(const IndexList& list, double gamma) {
    check_gamma(gamma);
    const std::size_t s = static_cast<std::size_t>(list.r2) * list.r2;
    std::vector<std::uint32_t> rows(s), cols(s);
    for (std::size_t i = 0; i < s; ++i) {
        rows[i] = static_cast<std::uint32_t>(i) / list.r2;
        cols[i] = static_cast<std::uint32_t>(i) % list.r2;
    }
    return decay_from_coords(rows, cols, gamma);
}

NumArray pisa(const NumArray& q, const NumArray& k, const NumArray& v, const NumArray& decay) {
    if (q.rank() != 2) throw DimError("pisa: operands must be 2-D");
    const std::size_t L = q.extent(0), d = q.extent(1);
    const NumArray q3({1, L, d}, q.vec());
    const NumArray k3({1, L, d}, k.vec());
    const NumArray v3({1, L, d}, v.vec());
    NumArray out = decayed_attention_fwd(q3, k3, v3, decay, 1.0 / std::sqrt(static_cast<double>(d)));
    return NumArray({L, d}, std::move(out.vec()));
}

NumArray dpisa(const NumArray& q, const NumArray& k, const NumArray& v, const NumArray& d_mu,
               const NumArray& d_au) {
    if (q.rank() != 3) throw DimError("dpisa: operands must be [M,S,d]");
    const std::size_t d = q.extent(2);
    const double sc = 1.0 / std::sqrt(static_cast<double>(d));
    // pass 1: mask-unit mixing per slot
    const NumArray qs = transpose01(q), ks = transpose01(k), vs = transpose01(v);
    const NumArray h1 = transpose01(decayed_attention_fwd(qs, ks, vs, d_mu, sc));
    // pass 2: within-unit mixing
    return decayed_attention_fwd(q, k, h1, d_au, sc);
}

namespace {

ValueRef linear(Tape& tape, ValueRef x, const ModelParams& params, const std::string& prefix) {
    return tape.add_rowvec(tape.matmul(x, tape.param(prefix + ".w", params.at(prefix + ".w"))),
                           tape.param(prefix + ".b", params.at(prefix + ".b")));
}

}  // namespace

ValueRef mha_block(Tape& tape, ValueRef x, const IndexList& list, const AttentionConfig& cfg,
                   const ModelParams& params, const std::string& prefix) {
    const NumArray& xv = tape.value(x);
    if (xv.rank() != 2 || xv.extent(1) != static_cast<std::size_t>(cfg.channels())) {
        throw ConfigError("mha_block: channel width must equal heads * head_dim");
    }
    if (cfg.gammas.size() != static_cast<std::size_t>(cfg.heads)) {
        throw ConfigError("mha_block: one decay rate per head required");
    }
    const std::size_t L = xv.extent(0);
    const std::size_t d = static_cast<std::size_t>(cfg.head_dim);
    const double sc = 1.0 / std::sqrt(static_cast<double>(d));
    const bool decomposed = cfg.level == AttentionConfig::Level::kDecomposed;
    const std::size_t S = static_cast<std::size_t>(list.r2) * list.r2;
    const std::size_t M = list.size() / std::max<std::size_t>(S, 1);
    if (list.size() != L) throw DimError("mha_block: token count does not match index list");

    const ValueRef q = linear(tape, x, params, prefix + ".q");
    const ValueRef k = linear(tape, x, params, prefix + ".k");
    const ValueRef v = linear(tape, x, params, prefix + ".v");

    std::vector<ValueRef> head_out;
    head_out.reserve(static_cast<std::size_t>(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * d;
        const double gamma = cfg.gammas[static_cast<std::size_t>(h)];
        ValueRef qh = tape.slice_cols(q, c0, c0 + d);
        ValueRef kh = tape.slice_cols(k, c0, c0 + d);
        ValueRef vh = tape.slice_cols(v, c0, c0 + d);
        ValueRef oh;
        if (decomposed && S > 1) {
            qh = tape.reshape(qh, {M, S, d});
            kh = tape.reshape(kh, {M, S, d});
            vh = tape.reshape(vh, {M, S, d});
            const ValueRef h1 = tape.transpose01(tape.decayed_attention(
                tape.transpose01(qh), tape.transpose01(kh), tape.transpose01(vh),
                mask_unit_decay(list, gamma), sc));
            oh = tape.decayed_attention(qh, kh, h1, within_unit_decay(list, gamma), sc);
            oh = tape.reshape(oh, {L, d});
        } else {
            const NumArray decay = decomposed ? mask_unit_decay(list, gamma)
                                              : decay_from_indices(list, gamma);
            oh = tape.decayed_attention(tape.reshape(qh, {1, L, d}), tape.reshape(kh, {1, L, d}),
                                        tape.reshape(vh, {1, L, d}), decay, sc);
            oh = tape.reshape(oh, {L, d});
        }
        head_out.push_back(oh);
    }
    const ValueRef cat = cfg.heads == 1 ? head_out[0] : tape.concat_cols(head_out);
    return linear(tape, cat, params, prefix + ".o");
}

}  // namespace emic
