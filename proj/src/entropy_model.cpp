#include "emic/entropy_model.hpp"

#include <cmath>

namespace emic {

namespace {

ValueRef linear(Tape& tape, ValueRef x, const ModelParams& params, const std::string& prefix) {
    return tape.add_rowvec(tape.matmul(x, tape.param(prefix + ".w", params.at(prefix + ".w"))),
                           tape.param(prefix + ".b", params.at(prefix + ".b")));
}

TokenSeq attn_block(Tape& tape, TokenSeq x, const ModelParams& params, const StageConfig& cfg,
                    const std::string& prefix) {
    const int channels = static_cast<int>(tape.value(x.feats).extent(1));
    const AttentionConfig attn = stage_attention(cfg, channels, x.list);
    return emic_block(tape, x, attn, params, cfg, prefix);
}

}  // namespace

void add_entropy_params(const StageConfig& cfg, ModelParams& params) {
    cfg.validate();
    const std::size_t d = static_cast<std::size_t>(cfg.latent_channels);
    const std::size_t dz = d / 2, dr = d / 8, w = d / kNumSlices;
    for (int b = 0; b < 2; ++b) {
        init_block(params, "hyper.enc.b" + std::to_string(b), d, cfg.ffn_ratio);
    }
    init_linear(params, "hyper.enc.down", d, dr);
    for (int b = 0; b < 2; ++b) {
        init_block(params, "hyper.dec.b" + std::to_string(b), dr, cfg.ffn_ratio);
    }
    init_linear(params, "hyper.dec.up1", dr, d);
    init_block(params, "hyper.dec.b2", d, cfg.ffn_ratio);
    init_linear(params, "hyper.dec.up2", d, 2 * d);
    for (int i = 0; i < kNumSlices; ++i) {
        const std::string prefix = "slice" + std::to_string(i);
        init_linear(params, prefix + ".1", 2 * d + static_cast<std::size_t>(i) * w, d);
        init_linear(params, prefix + ".2", d, 2 * w);
    }
    params.values["prior.mu"] = NumArray({dz});
    // softplus(0.5413) ~= 1.0: unit-scale prior at the start
    params.values["prior.sigma_raw"] = NumArray::full({dz}, 0.5413);
}

HyperLatent hyper_encode(Tape& tape, const TokenSeq& y, const ModelParams& params,
                         const StageConfig& cfg) {
    if (y.list.r2 != 1) throw DimError("hyper_encode: y must be at mask-unit resolution");
    TokenSeq x = y;
    for (int b = 0; b < 2; ++b) {
        x = attn_block(tape, x, params, cfg, "hyper.enc.b" + std::to_string(b));
    }
    ValueRef z = linear(tape, x.feats, params, "hyper.enc.down");
    HyperLatent out;
    out.true_len = tape.value(z).extent(0);
    out.padded_len = (out.true_len + 3) / 4 * 4;
    if (out.padded_len != out.true_len) z = tape.pad_rows(z, out.padded_len - out.true_len);
    const std::size_t dr = tape.value(z).extent(1);
    out.z = tape.reshape(z, {out.padded_len / 4, 4 * dr});
    return out;
}

ValueRef hyper_decode(Tape& tape, ValueRef zhat, std::size_t true_len, const IndexList& y_list,
                      const ModelParams& params, const StageConfig& cfg) {
    const NumArray& zv = tape.value(zhat);
    if (zv.rank() != 2) throw DimError("hyper_decode: z must be 2-D");
    const std::size_t dr = zv.extent(1) / 4;
    ValueRef x = tape.reshape(zhat, {zv.extent(0) * 4, dr});
    if (true_len < zv.extent(0) * 4) {
        std::vector<std::uint32_t> keep(true_len);
        for (std::size_t i = 0; i < true_len; ++i) keep[i] = static_cast<std::uint32_t>(i);
        x = tape.gather_rows(x, std::move(keep));
    }
    TokenSeq t{x, y_list};
    for (int b = 0; b < 2; ++b) {
        t = attn_block(tape, t, params, cfg, "hyper.dec.b" + std::to_string(b));
    }
    t.feats = linear(tape, t.feats, params, "hyper.dec.up1");
    t = attn_block(tape, t, params, cfg, "hyper.dec.b2");
    return linear(tape, t.feats, params, "hyper.dec.up2");
}

SliceGaussians slice_params(Tape& tape, ValueRef ctx, const std::vector<ValueRef>& prev_slices,
                            int slice, const ModelParams& params, const StageConfig& cfg) {
    if (slice < 0 || slice >= kNumSlices) throw UsageError("slice_params: slice out of range");
    if (prev_slices.size() != static_cast<std::size_t>(slice)) {
        throw UsageError("slice_params: need exactly the preceding slices");
    }
    const std::size_t w = static_cast<std::size_t>(cfg.latent_channels) / kNumSlices;
    std::vector<ValueRef> in{ctx};
    in.insert(in.end(), prev_slices.begin(), prev_slices.end());
    const ValueRef cat = in.size() == 1 ? in[0] : tape.concat_cols(in);
    const std::string prefix = "slice" + std::to_string(slice);
    const ValueRef h = tape.gelu(linear(tape, cat, params, prefix + ".1"));
    const ValueRef o = linear(tape, h, params, prefix + ".2");
    SliceGaussians g;
    g.mu = tape.slice_cols(o, 0, w);
    g.sigma = tape.clamp(tape.softplus(tape.slice_cols(o, w, 2 * w)), kSigmaMin, kSigmaMax);
    return g;
}

SliceGaussians prior_params(Tape& tape, std::size_t rows, const ModelParams& params,
                            const StageConfig& cfg) {
    const std::size_t dz = static_cast<std::size_t>(cfg.latent_channels) / 2;
    (void)dz;
    SliceGaussians g;
    g.mu = tape.repeat_row(tape.param("prior.mu", params.at("prior.mu")), rows);
    g.sigma = tape.repeat_row(
        tape.clamp(tape.softplus(tape.param("prior.sigma_raw", params.at("prior.sigma_raw"))),
                   kSigmaMin, kSigmaMax),
        rows);
    return g;
}

NumArray quantize(const NumArray& v, const NumArray& mu, QuantizeMode mode, CounterRng* rng) {
    if (!v.same_shape(mu)) throw DimError("quantize: shape mismatch");
    NumArray out = v;
    if (mode == QuantizeMode::kTrain) {
        if (!rng) throw UsageError("quantize: train mode needs a generator");
        for (double& x : out.vec()) x += rng->next_uniform() - 0.5;
    } else {
        for (std::size_t i = 0; i < out.numel(); ++i) {
            out[i] = std::round(v[i] - mu[i]) + mu[i];
        }
    }
    return out;
}

QuantizedTensor quantize_symbols(const NumArray& v, const NumArray& mu) {
    if (!v.same_shape(mu)) throw DimError("quantize_symbols: shape mismatch");
    QuantizedTensor q;
    q.symbols.resize(v.numel());
    q.vhat = NumArray(v.shape());
    for (std::size_t i = 0; i < v.numel(); ++i) {
        double k = std::round(v[i] - mu[i]);
        k = std::min(std::max(k, -static_cast<double>(kSymbolSupport)),
                     static_cast<double>(kSymbolSupport));
        q.symbols[i] = static_cast<std::int32_t>(k);
        q.vhat[i] = k + mu[i];
    }
    return q;
}

NumArray dequantize_symbols(const std::vector<std::int32_t>& symbols, const NumArray& mu) {
    if (symbols.size() != mu.numel()) throw DimError("dequantize_symbols: count mismatch");
    NumArray out(mu.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] = static_cast<double>(symbols[i]) + mu[i];
    }
    return out;
}

std::vector<double> gaussian_pmf(double mu_offset, double sigma, int support) {
    if (!(sigma > 0.0)) throw ConfigError("gaussian_pmf: sigma must be positive");
    const int n = 2 * support + 1;
    std::vector<double> pmf(static_cast<std::size_t>(n));
    for (int k = -support; k <= support; ++k) {
        const double lo = k == -support ? -HUGE_VAL : (k - 0.5 - mu_offset) / sigma;
        const double hi = k == support ? HUGE_VAL : (k + 0.5 - mu_offset) / sigma;
        pmf[static_cast<std::size_t>(k + support)] = normal_cdf_diff(lo, hi);
    }
    return pmf;
}

double rate_estimate(const std::vector<std::int32_t>& symbols,
                     const std::vector<std::vector<double>>& pmfs) {
    if (symbols.size() != pmfs.size()) throw DimError("rate_estimate: count mismatch");
    double bits = 0.0;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        const auto& pmf = pmfs[i];
        const int support = (static_cast<int>(pmf.size()) - 1) / 2;
        int k = std::min(std::max(symbols[i], -support), support);
        bits += -std::log2(std::max(pmf[static_cast<std::size_t>(k + support)], 1e-300));
    }
    return bits;
}

ValueRef rate_bits(Tape& tape, ValueRef noisy, ValueRef mu, ValueRef sigma) {
    return tape.gaussian_bits(noisy, mu, sigma);
}

}  // namespace emic
