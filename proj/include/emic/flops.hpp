#pragma once

#include <string>
#include <vector>

#include "emic/codec_net.hpp"
#include "emic/geometry.hpp"

namespace emic {

// Analytic multiply-add counts x2 for one compress+decompress pass.
// Conventions: a linear layer over L tokens costs 2*L*Din*Dout; the
// attention score/value matmul pair costs 2*N^2*d per head per level, where
// N^2 is L^2 for single-level attention and M^2 (mask-unit pass) plus S^2
// (within-unit pass) for decomposed attention; norms and activations count
// as 8 FLOPs per element. Quantization and entropy coding are not network
// FLOPs and are excluded.
struct FlopsItem {
    std::string name;
    double flops{0};
    bool token_linear{true};  // scales exactly linearly with visible units
};

struct FlopsReport {
    std::vector<FlopsItem> items;
    double visible_ratio{0};
    int visible_units{0};
    int total_units{0};

    double total() const;
    double linear_total() const;     // token-linear part
    double attention_total() const;  // quadratic attention part
    double stage_total(const std::string& prefix) const;
};

FlopsReport count_flops(const StageConfig& cfg, const MaskMap& mask);
// Analytic variant: visible unit count = round(ratio * total units).
FlopsReport count_flops(const StageConfig& cfg, int height_px, int width_px, double visible_ratio);

}  // namespace emic
