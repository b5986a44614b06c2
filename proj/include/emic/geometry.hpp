#pragma once

#include <cstdint>
#include <vector>

#include "emic/num_array.hpp"
#include "emic/rng.hpp"

namespace emic {

inline constexpr int kMaskUnitPx = 16;
inline constexpr int kPatchPx = 2;  // stage-1 attention unit edge, pixels

// Visibility at 16x16 mask-unit granularity over a padded pixel grid.
// height_px/width_px are multiples of 16; the original (pre-padding) pixel
// dimensions ride along for the bitstream header.
struct MaskMap {
    int height_px{0};
    int width_px{0};
    int orig_height_px{0};
    int orig_width_px{0};
    std::vector<std::uint8_t> unit_visible;  // row-major unit grid

    int units_h() const { return height_px / kMaskUnitPx; }
    int units_w() const { return width_px / kMaskUnitPx; }
    int unit_count() const { return units_h() * units_w(); }
    int visible_count() const;
};

// Ordered global raster indices of the visible attention units at one stage.
// r1 is the attention-unit grid width, r2 the attention units per mask-unit
// side. Canonical ordering: visible mask units in raster order, and within
// each unit its r2 x r2 attention units in raster order.
struct IndexList {
    std::vector<std::uint32_t> indices;
    std::uint32_t r1{0};
    std::uint32_t rows{0};  // attention-unit grid height
    std::uint32_t r2{0};
    int stage{1};

    std::uint32_t row_of(std::uint32_t idx) const { return idx / r1; }
    std::uint32_t col_of(std::uint32_t idx) const { return idx % r1; }
    std::size_t size() const { return indices.size(); }
    // Number of mask units represented (indices.size() / r2^2).
    std::size_t unit_count() const { return indices.size() / (static_cast<std::size_t>(r2) * r2); }
};

// A mask unit is visible iff any pixel inside it is nonzero. Dimensions are
// padded up to multiples of 16; padded pixels contribute no visibility.
// Throws DataError on an all-zero mask.
MaskMap build_mask(const std::vector<std::uint8_t>& pixel_mask, int height_px, int width_px);

// Rebuild a MaskMap from original dims + a padded-grid visibility array.
MaskMap mask_from_units(int orig_h_px, int orig_w_px, std::vector<std::uint8_t> unit_visible);

// Stage-1 list: attention unit = 2x2 px, r2 = 8.
IndexList initial_index_list(const MaskMap& mask);

// Keep the top-left member of each 2x2 child group per mask unit, then map
// each kept index onto the halved grid. r2 must be >= 2.
IndexList merge_indices(const IndexList& list);

// Expand each index into its four children on the doubled grid and restore
// canonical ordering; exact inverse of merge_indices.
IndexList split_indices(const IndexList& list);

// Visible 2x2x3 pixel patches in canonical stage-1 order, flattened to
// [L, 12] with (py, px, channel) layout. Masked pixels are never read.
NumArray gather_visible(const NumArray& image, const MaskMap& mask);

// Inverse of gather_visible; every pixel outside `list` is exactly zero.
NumArray scatter_zero_fill(const NumArray& patches, const IndexList& list, int height_px,
                           int width_px);

// Random union of 1..10 axis-aligned rectangles, grown/shrunk until the
// unit-level visible fraction is within +-0.05 of the target (or exactly
// 1.0). Deterministic per seed.
MaskMap gen_group_mask(int height_px, int width_px, double visible_ratio, std::uint64_t seed);

// Bottom/right replicate padding up to multiples of 16 for an HxWx3 image.
NumArray pad_image_to_units(const NumArray& image);

}  // namespace emic
