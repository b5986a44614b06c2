#pragma once

#include <cstdint>
#include <vector>

#include "emic/codec_net.hpp"
#include "emic/rng.hpp"

namespace emic {

inline constexpr int kNumSlices = 4;
inline constexpr double kSigmaMin = 0.11;
inline constexpr double kSigmaMax = 256.0;
inline constexpr int kSymbolSupport = 127;  // symbols in [-127, 127]

// Hyper latent z plus the padding bookkeeping needed to undo the grouping.
struct HyperLatent {
    ValueRef z{-1};         // [ceil(L/4), D/2]
    std::size_t true_len{0};
    std::size_t padded_len{0};
};

void add_entropy_params(const StageConfig& cfg, ModelParams& params);

// Two attention blocks on y's indices, linear D -> D/8, zero-pad the length
// to a multiple of four, then concatenate each run of four tokens along the
// channel axis.
HyperLatent hyper_encode(Tape& tape, const TokenSeq& y, const ModelParams& params,
                         const StageConfig& cfg);

// Inverse grouping, padding dropped, then attention blocks and linear maps
// up to the conditioning context of width 2*D. One more layer than the
// encoder side.
ValueRef hyper_decode(Tape& tape, ValueRef zhat, std::size_t true_len, const IndexList& y_list,
                      const ModelParams& params, const StageConfig& cfg);

struct SliceGaussians {
    ValueRef mu{-1};
    ValueRef sigma{-1};  // clamped to [kSigmaMin, kSigmaMax]
};

// Per-token conditional for channel slice i given the hyper context and the
// already-decoded slices 0..i-1.
SliceGaussians slice_params(Tape& tape, ValueRef ctx, const std::vector<ValueRef>& prev_slices,
                            int slice, const ModelParams& params, const StageConfig& cfg);

// Learned factorized prior for the hyper latent, broadcast to [rows, D/2].
SliceGaussians prior_params(Tape& tape, std::size_t rows, const ModelParams& params,
                            const StageConfig& cfg);

enum class QuantizeMode { kEval, kTrain };

// Eval: round(v - mu) + mu. Train: v + U(-0.5, 0.5) from `rng`.
NumArray quantize(const NumArray& v, const NumArray& mu, QuantizeMode mode,
                  CounterRng* rng = nullptr);

// Integer symbols k = round(v - mu) folded into [-support, support], plus
// the dequantized values k + mu the decoder will reproduce exactly.
struct QuantizedTensor {
    std::vector<std::int32_t> symbols;
    NumArray vhat;
};
QuantizedTensor quantize_symbols(const NumArray& v, const NumArray& mu);

NumArray dequantize_symbols(const std::vector<std::int32_t>& symbols, const NumArray& mu);

// Discretized Gaussian over [-support, support]; tails folded into the edge
// bins, so the mass sums to one.
std::vector<double> gaussian_pmf(double mu_offset, double sigma, int support = kSymbolSupport);

// Sum of -log2 p(symbol) over the stream; symbols outside the support fold
// to the edge bins.
double rate_estimate(const std::vector<std::int32_t>& symbols,
                     const std::vector<std::vector<double>>& pmfs);

// Taped train-mode rate: elementwise continuous bits at noisy values.
ValueRef rate_bits(Tape& tape, ValueRef noisy, ValueRef mu, ValueRef sigma);

}  // namespace emic
