#include "emic/codec_net.hpp"

#include <cmath>

namespace emic {

namespace {

constexpr double kInitStd = 0.02;

std::uint64_t name_seed(std::uint64_t seed, const std::string& name) {
    std::uint32_t h = 0x811C9DC5u;
    for (char c : name) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x01000193u;
    }
    return seed + 0x9E3779B97F4A7C15ULL * h;
}

}  // namespace

void StageConfig::validate() const {
    if (base_channels <= 0 || latent_channels <= 0 || ffn_ratio < 1 || head_dim <= 0) {
        throw ConfigError("StageConfig: sizes must be positive");
    }
    for (int ch : stage_channels()) {
        if (ch % head_dim != 0) throw ConfigError("StageConfig: stage width not divisible by head_dim");
    }
    if (latent_channels % 8 != 0 || latent_channels % 4 != 0) {
        throw ConfigError("StageConfig: latent width must be divisible by 8");
    }
    if (latent_channels % head_dim != 0 || (latent_channels / 8) % head_dim != 0) {
        throw ConfigError("StageConfig: hyper widths not divisible by head_dim");
    }
    for (int n : enc_blocks) {
        if (n < 1) throw ConfigError("StageConfig: block counts must be positive");
    }
}

void init_linear(ModelParams& p, const std::string& prefix, std::size_t din, std::size_t dout) {
    p.values[prefix + ".w"] = prng_normal(name_seed(p.seed, prefix + ".w"), {din, dout}, kInitStd);
    p.values[prefix + ".b"] = NumArray({dout});
}

void init_norm(ModelParams& p, const std::string& prefix, std::size_t d) {
    p.values[prefix + ".g"] = NumArray::full({d}, 1.0);
    p.values[prefix + ".b"] = NumArray({d});
}

void init_block(ModelParams& p, const std::string& prefix, std::size_t d, int ffn_ratio) {
    init_norm(p, prefix + ".norm1", d);
    init_linear(p, prefix + ".attn.q", d, d);
    init_linear(p, prefix + ".attn.k", d, d);
    init_linear(p, prefix + ".attn.v", d, d);
    init_linear(p, prefix + ".attn.o", d, d);
    init_norm(p, prefix + ".norm2", d);
    init_linear(p, prefix + ".ffn.1", d, d * static_cast<std::size_t>(ffn_ratio));
    init_linear(p, prefix + ".ffn.2", d * static_cast<std::size_t>(ffn_ratio), d);
}

ModelParams init_codec_params(const StageConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.seed = seed;
    const auto ch = cfg.stage_channels();
    init_linear(p, "embed", 12, static_cast<std::size_t>(ch[0]));
    for (int s = 0; s < 4; ++s) {
        const auto d = static_cast<std::size_t>(ch[s]);
        for (int b = 0; b < cfg.enc_blocks[static_cast<std::size_t>(s)]; ++b) {
            init_block(p, "enc.s" + std::to_string(s + 1) + ".b" + std::to_string(b), d,
                       cfg.ffn_ratio);
        }
        if (s < 3) init_linear(p, "enc.merge" + std::to_string(s + 1), 4 * d, 2 * d);
    }
    init_linear(p, "enc.out", static_cast<std::size_t>(ch[3]),
                static_cast<std::size_t>(cfg.latent_channels));
    init_linear(p, "dec.in", static_cast<std::size_t>(cfg.latent_channels),
                static_cast<std::size_t>(ch[3]));
    const auto dec_ch = std::array<int, 4>{ch[3], ch[2], ch[1], ch[0]};
    const auto dec_blocks = cfg.dec_blocks();
    for (int s = 0; s < 4; ++s) {
        const auto d = static_cast<std::size_t>(dec_ch[static_cast<std::size_t>(s)]);
        for (int b = 0; b < dec_blocks[static_cast<std::size_t>(s)]; ++b) {
            init_block(p, "dec.s" + std::to_string(s + 1) + ".b" + std::to_string(b), d,
                       cfg.ffn_ratio);
        }
        if (s < 3) init_linear(p, "dec.split" + std::to_string(s + 1), d, 2 * d);
    }
    init_linear(p, "dec.head", static_cast<std::size_t>(ch[0]), 12);
    return p;
}

AttentionConfig stage_attention(const StageConfig& cfg, int channels, const IndexList& list) {
    AttentionConfig a;
    a.head_dim = cfg.head_dim;
    a.heads = channels / cfg.head_dim;
    a.gammas = default_gammas(a.heads);
    a.level = list.r2 > 1 ? AttentionConfig::Level::kDecomposed : AttentionConfig::Level::kSingle;
    return a;
}

namespace {

ValueRef linear(Tape& tape, ValueRef x, const ModelParams& params, const std::string& prefix) {
    return tape.add_rowvec(tape.matmul(x, tape.param(prefix + ".w", params.at(prefix + ".w"))),
                           tape.param(prefix + ".b", params.at(prefix + ".b")));
}

ValueRef norm(Tape& tape, ValueRef x, const ModelParams& params, const std::string& prefix,
              double eps) {
    return tape.layer_norm(x, tape.param(prefix + ".g", params.at(prefix + ".g")),
                           tape.param(prefix + ".b", params.at(prefix + ".b")), eps);
}

}  // namespace

ValueRef patch_embed(Tape& tape, const NumArray& patches, const ModelParams& params,
                     const StageConfig& cfg) {
    if (patches.rank() != 2 || patches.extent(1) != 12) {
        throw DimError("patch_embed: expected [L,12] patches");
    }
    (void)cfg;
    return linear(tape, tape.constant(patches), params, "embed");
}

TokenSeq emic_block(Tape& tape, TokenSeq x, const AttentionConfig& attn,
                    const ModelParams& params, const StageConfig& cfg,
                    const std::string& prefix) {
    const ValueRef n1 = norm(tape, x.feats, params, prefix + ".norm1", cfg.norm_eps);
    const ValueRef a = mha_block(tape, n1, x.list, attn, params, prefix + ".attn");
    const ValueRef x1 = tape.add(x.feats, a);
    const ValueRef n2 = norm(tape, x1, params, prefix + ".norm2", cfg.norm_eps);
    const ValueRef f = linear(tape, tape.gelu(linear(tape, n2, params, prefix + ".ffn.1")), params,
                              prefix + ".ffn.2");
    x.feats = tape.add(x1, f);
    return x;
}

TokenSeq patch_merge(Tape& tape, TokenSeq x, const ModelParams& params,
                     const std::string& prefix) {
    const IndexList& list = x.list;
    if (list.r2 < 2) throw ConfigError("patch_merge: attention unit already at mask-unit size");
    const std::size_t r2 = list.r2, group = r2 * r2;
    const std::size_t units = list.size() / group;
    const std::size_t C = tape.value(x.feats).extent(1);
    // children of each coarse position in (tl, tr, bl, br) order
    std::vector<std::uint32_t> order;
    order.reserve(list.size());
    for (std::size_t u = 0; u < units; ++u) {
        for (std::size_t lr = 0; lr < r2; lr += 2) {
            for (std::size_t lc = 0; lc < r2; lc += 2) {
                const std::size_t base = u * group;
                order.push_back(static_cast<std::uint32_t>(base + lr * r2 + lc));
                order.push_back(static_cast<std::uint32_t>(base + lr * r2 + lc + 1));
                order.push_back(static_cast<std::uint32_t>(base + (lr + 1) * r2 + lc));
                order.push_back(static_cast<std::uint32_t>(base + (lr + 1) * r2 + lc + 1));
            }
        }
    }
    ValueRef g = tape.gather_rows(x.feats, std::move(order));
    g = tape.reshape(g, {list.size() / 4, 4 * C});
    TokenSeq out;
    out.feats = linear(tape, g, params, prefix);
    out.list = merge_indices(list);
    return out;
}

TokenSeq patch_split(Tape& tape, TokenSeq x, const ModelParams& params,
                     const std::string& prefix) {
    const IndexList& list = x.list;
    const std::size_t C = tape.value(x.feats).extent(1);
    if (C % 2 != 0) throw ConfigError("patch_split: channel width must be even");
    const std::size_t r2 = list.r2, group = r2 * r2;
    const std::size_t units = list.size() / group;
    ValueRef up = linear(tape, x.feats, params, prefix);          // [L, 2C]
    up = tape.reshape(up, {list.size() * 4, C / 2});              // parent-major child rows
    // canonical within-unit raster on the doubled grid
    std::vector<std::uint32_t> order;
    order.reserve(list.size() * 4);
    for (std::size_t u = 0; u < units; ++u) {
        for (std::size_t lr = 0; lr < 2 * r2; ++lr) {
            for (std::size_t lc = 0; lc < 2 * r2; ++lc) {
                const std::size_t parent = u * group + (lr / 2) * r2 + lc / 2;
                const std::size_t child = (lr % 2) * 2 + lc % 2;
                order.push_back(static_cast<std::uint32_t>(parent * 4 + child));
            }
        }
    }
    TokenSeq out;
    out.feats = tape.gather_rows(up, std::move(order));
    out.list = split_indices(list);
    return out;
}

TokenSeq encode_net(Tape& tape, const NumArray& image, const MaskMap& mask,
                    const ModelParams& params, const StageConfig& cfg) {
    const NumArray patches = gather_visible(image, mask);
    TokenSeq x;
    x.list = initial_index_list(mask);
    x.feats = patch_embed(tape, patches, params, cfg);
    const auto ch = cfg.stage_channels();
    for (int s = 0; s < 4; ++s) {
        const AttentionConfig attn = stage_attention(cfg, ch[static_cast<std::size_t>(s)], x.list);
        for (int b = 0; b < cfg.enc_blocks[static_cast<std::size_t>(s)]; ++b) {
            x = emic_block(tape, x, attn, params, cfg,
                           "enc.s" + std::to_string(s + 1) + ".b" + std::to_string(b));
        }
        if (s < 3) x = patch_merge(tape, x, params, "enc.merge" + std::to_string(s + 1));
    }
    x.feats = linear(tape, x.feats, params, "enc.out");
    return x;
}

TokenSeq decode_net_tokens(Tape& tape, TokenSeq yhat, const ModelParams& params,
                           const StageConfig& cfg) {
    if (yhat.list.r2 != 1) throw DimError("decode_net: latent must be at mask-unit resolution");
    TokenSeq x = yhat;
    x.feats = linear(tape, x.feats, params, "dec.in");
    const auto ch = cfg.stage_channels();
    const auto dec_ch = std::array<int, 4>{ch[3], ch[2], ch[1], ch[0]};
    const auto dec_blocks = cfg.dec_blocks();
    for (int s = 0; s < 4; ++s) {
        const AttentionConfig attn =
            stage_attention(cfg, dec_ch[static_cast<std::size_t>(s)], x.list);
        for (int b = 0; b < dec_blocks[static_cast<std::size_t>(s)]; ++b) {
            x = emic_block(tape, x, attn, params, cfg,
                           "dec.s" + std::to_string(s + 1) + ".b" + std::to_string(b));
        }
        if (s < 3) x = patch_split(tape, x, params, "dec.split" + std::to_string(s + 1));
    }
    x.feats = linear(tape, x.feats, params, "dec.head");
    return x;
}

NumArray decode_net(Tape& tape, TokenSeq yhat, const ModelParams& params,
                    const StageConfig& cfg, int height_px, int width_px) {
    const TokenSeq patches = decode_net_tokens(tape, yhat, params, cfg);
    return scatter_zero_fill(tape.value(patches.feats), patches.list, height_px, width_px);
}

}  // namespace emic
