#pragma once

#include <array>
#include <string>

#include "emic/attention.hpp"
#include "emic/geometry.hpp"
#include "emic/model_params.hpp"
#include "emic/tape.hpp"

namespace emic {

struct StageConfig {
    int base_channels{32};                 // C
    std::array<int, 4> enc_blocks{2, 2, 6, 2};
    int latent_channels{128};              // width of y
    int ffn_ratio{2};
    int head_dim{16};
    double norm_eps{1e-5};

    std::array<int, 4> stage_channels() const {
        return {base_channels, 2 * base_channels, 4 * base_channels, 8 * base_channels};
    }
    // Decoder depths mirror the encoder.
    std::array<int, 4> dec_blocks() const {
        return {enc_blocks[3], enc_blocks[2], enc_blocks[1], enc_blocks[0]};
    }
    void validate() const;
};

// Features row j corresponds to index-list entry j at all times.
struct TokenSeq {
    ValueRef feats{-1};
    IndexList list;
};

// Fresh encoder/decoder parameters: linear weights N(0, 0.02^2), biases
// zero, norm gain 1 / bias 0. Each tensor's draw is keyed by (seed, name),
// so initialization is independent of creation order.
ModelParams init_codec_params(const StageConfig& cfg, std::uint64_t seed);

void init_linear(ModelParams& p, const std::string& prefix, std::size_t din, std::size_t dout);
void init_norm(ModelParams& p, const std::string& prefix, std::size_t d);
void init_block(ModelParams& p, const std::string& prefix, std::size_t d, int ffn_ratio);

// Linear 12 -> C per visible patch.
ValueRef patch_embed(Tape& tape, const NumArray& patches, const ModelParams& params,
                     const StageConfig& cfg);

// Pre-norm residual block: x + attn(norm(x)), then x + ffn(norm(x)).
TokenSeq emic_block(Tape& tape, TokenSeq x, const AttentionConfig& attn,
                    const ModelParams& params, const StageConfig& cfg,
                    const std::string& prefix);

// Concatenate each 2x2 child group (tl, tr, bl, br) and map 4C -> 2C;
// index list advances by merge_indices.
TokenSeq patch_merge(Tape& tape, TokenSeq x, const ModelParams& params,
                     const std::string& prefix);

// Linear C -> 2C then partition into four C/2 children in (tl, tr, bl, br)
// order on the doubled grid; index list advances by split_indices.
TokenSeq patch_split(Tape& tape, TokenSeq x, const ModelParams& params,
                     const std::string& prefix);

// gather -> embed -> [stage blocks -> merge] x3 -> stage-4 blocks -> linear
// to latent width. Output is at mask-unit resolution (r2 == 1).
TokenSeq encode_net(Tape& tape, const NumArray& image, const MaskMap& mask,
                    const ModelParams& params, const StageConfig& cfg);

// Latent tokens back to stage-1 pixel patches ([L1, 12], raw head output).
TokenSeq decode_net_tokens(Tape& tape, TokenSeq yhat, const ModelParams& params,
                           const StageConfig& cfg);

// Full decode including zero-filled scatter to an HxWx3 image (padded dims).
NumArray decode_net(Tape& tape, TokenSeq yhat, const ModelParams& params,
                    const StageConfig& cfg, int height_px, int width_px);

// Attention config for a stage of the image codec at a given channel width;
// decomposed whenever the list still has within-unit structure (r2 > 1).
AttentionConfig stage_attention(const StageConfig& cfg, int channels, const IndexList& list);

}  // namespace emic
