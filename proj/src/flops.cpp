#include "emic/flops.hpp"

#include <cmath>

#include "emic/entropy_model.hpp"

namespace emic {

double FlopsReport::total() const {
    double t = 0;
    for (const auto& it : items) t += it.flops;
    return t;
}

double FlopsReport::linear_total() const {
    double t = 0;
    for (const auto& it : items) {
        if (it.token_linear) t += it.flops;
    }
    return t;
}

double FlopsReport::attention_total() const { return total() - linear_total(); }

double FlopsReport::stage_total(const std::string& prefix) const {
    double t = 0;
    for (const auto& it : items) {
        if (it.name.rfind(prefix, 0) == 0) t += it.flops;
    }
    return t;
}

namespace {

struct Counter {
    FlopsReport& rep;

    void linear(const std::string& name, double L, double din, double dout) {
        rep.items.push_back({name, 2.0 * L * din * dout, true});
    }
    void elementwise(const std::string& name, double n) {
        rep.items.push_back({name, 8.0 * n, true});
    }
    void attention(const std::string& name, double n2_sum, double d, double heads) {
        rep.items.push_back({name, 2.0 * n2_sum * d * heads, false});
    }
    // One transformer block at L tokens, D channels; decomposed over (M,S)
    // when S > 1.
    void block(const std::string& name, const StageConfig& cfg, double L, double D, double M,
               double S) {
        const double heads = D / cfg.head_dim;
        elementwise(name + ".norms", 2.0 * L * D);
        linear(name + ".qkvo", L, D, 4.0 * D);
        if (S > 1.0) {
            attention(name + ".attn", M * M + S * S, cfg.head_dim, heads);
        } else {
            attention(name + ".attn", L * L, cfg.head_dim, heads);
        }
        linear(name + ".ffn", L, D, cfg.ffn_ratio * D);
        elementwise(name + ".gelu", L * cfg.ffn_ratio * D);
        linear(name + ".ffn2", L, cfg.ffn_ratio * D, D);
    }
};

}  // namespace

namespace {

FlopsReport count_flops_units(const StageConfig& cfg, int total_units, int m) {
    cfg.validate();
    FlopsReport rep;
    rep.total_units = total_units;
    rep.visible_units = m;
    rep.visible_ratio = static_cast<double>(m) / total_units;
    Counter cnt{rep};

    const auto ch = cfg.stage_channels();
    const double M = m;
    const double dlat = cfg.latent_channels;
    const std::array<double, 4> S{64, 16, 4, 1};

    cnt.linear("enc.embed", M * 64, 12, ch[0]);
    for (int s = 0; s < 4; ++s) {
        const double D = ch[static_cast<std::size_t>(s)];
        const double L = M * S[static_cast<std::size_t>(s)];
        const std::string pre = "enc.stage" + std::to_string(s + 1);
        for (int b = 0; b < cfg.enc_blocks[static_cast<std::size_t>(s)]; ++b) {
            cnt.block(pre + ".b" + std::to_string(b), cfg, L, D, M, S[static_cast<std::size_t>(s)]);
        }
        if (s < 3) cnt.linear(pre + ".merge", L / 4, 4 * D, 2 * D);
    }
    cnt.linear("enc.out", M, ch[3], dlat);

    cnt.linear("dec.in", M, dlat, ch[3]);
    const std::array<double, 4> decS{1, 4, 16, 64};
    const std::array<int, 4> dec_ch{ch[3], ch[2], ch[1], ch[0]};
    const auto dec_blocks = cfg.dec_blocks();
    for (int s = 0; s < 4; ++s) {
        const double D = dec_ch[static_cast<std::size_t>(s)];
        const double L = M * decS[static_cast<std::size_t>(s)];
        const std::string pre = "dec.stage" + std::to_string(s + 1);
        for (int b = 0; b < dec_blocks[static_cast<std::size_t>(s)]; ++b) {
            cnt.block(pre + ".b" + std::to_string(b), cfg, L, D, M, decS[static_cast<std::size_t>(s)]);
        }
        if (s < 3) cnt.linear(pre + ".split", L, D, 2 * D);
    }
    cnt.linear("dec.head", M * 64, ch[0], 12);

    for (int b = 0; b < 2; ++b) {
        cnt.block("hyper.enc.b" + std::to_string(b), cfg, M, dlat, M, 1);
    }
    cnt.linear("hyper.enc.down", M, dlat, dlat / 8);
    for (int b = 0; b < 2; ++b) {
        cnt.block("hyper.dec.b" + std::to_string(b), cfg, M, dlat / 8, M, 1);
    }
    cnt.linear("hyper.dec.up1", M, dlat / 8, dlat);
    cnt.block("hyper.dec.b2", cfg, M, dlat, M, 1);
    cnt.linear("hyper.dec.up2", M, dlat, 2 * dlat);

    const double w = dlat / kNumSlices;
    for (int i = 0; i < kNumSlices; ++i) {
        const std::string pre = "slice" + std::to_string(i);
        cnt.linear(pre + ".1", M, 2 * dlat + i * w, dlat);
        cnt.elementwise(pre + ".gelu", M * dlat);
        cnt.linear(pre + ".2", M, dlat, 2 * w);
    }
    return rep;
}

}  // namespace

FlopsReport count_flops(const StageConfig& cfg, int height_px, int width_px,
                        double visible_ratio) {
    const int uh = (height_px + kMaskUnitPx - 1) / kMaskUnitPx;
    const int uw = (width_px + kMaskUnitPx - 1) / kMaskUnitPx;
    const int total_units = uh * uw;
    const int m = std::max(1, static_cast<int>(std::lround(visible_ratio * total_units)));
    return count_flops_units(cfg, total_units, m);
}

FlopsReport count_flops(const StageConfig& cfg, const MaskMap& mask) {
    return count_flops_units(cfg, mask.unit_count(), mask.visible_count());
}

}  // namespace emic
