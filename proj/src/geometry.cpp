#include "emic/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace emic {

namespace {

int pad_up(int v, int unit) { return (v + unit - 1) / unit * unit; }

}  // namespace

int MaskMap::visible_count() const {
    int n = 0;
    for (std::uint8_t v : unit_visible) n += v ? 1 : 0;
    return n;
}

MaskMap build_mask(const std::vector<std::uint8_t>& pixel_mask, int height_px, int width_px) {
    if (height_px <= 0 || width_px <= 0) throw DimError("build_mask: dimensions must be positive");
    if (pixel_mask.size() != static_cast<std::size_t>(height_px) * static_cast<std::size_t>(width_px)) {
        throw DimError("build_mask: pixel mask size mismatch");
    }
    MaskMap m;
    m.orig_height_px = height_px;
    m.orig_width_px = width_px;
    m.height_px = pad_up(height_px, kMaskUnitPx);
    m.width_px = pad_up(width_px, kMaskUnitPx);
    m.unit_visible.assign(static_cast<std::size_t>(m.unit_count()), 0);
    for (int y = 0; y < height_px; ++y) {
        for (int x = 0; x < width_px; ++x) {
            if (pixel_mask[static_cast<std::size_t>(y) * width_px + x]) {
                m.unit_visible[static_cast<std::size_t>(y / kMaskUnitPx) * m.units_w() +
                               x / kMaskUnitPx] = 1;
            }
        }
    }
    if (m.visible_count() == 0) throw DataError("build_mask: mask has no visible pixels");
    return m;
}

MaskMap mask_from_units(int orig_h_px, int orig_w_px, std::vector<std::uint8_t> unit_visible) {
    MaskMap m;
    m.orig_height_px = orig_h_px;
    m.orig_width_px = orig_w_px;
    m.height_px = pad_up(orig_h_px, kMaskUnitPx);
    m.width_px = pad_up(orig_w_px, kMaskUnitPx);
    if (unit_visible.size() != static_cast<std::size_t>(m.unit_count())) {
        throw DimError("mask_from_units: unit grid size mismatch");
    }
    m.unit_visible = std::move(unit_visible);
    if (m.visible_count() == 0) throw DataError("mask_from_units: mask has no visible units");
    return m;
}

IndexList initial_index_list(const MaskMap& mask) {
    IndexList list;
    list.stage = 1;
    list.r2 = kMaskUnitPx / kPatchPx;  // 8
    list.r1 = static_cast<std::uint32_t>(mask.width_px / kPatchPx);
    list.rows = static_cast<std::uint32_t>(mask.height_px / kPatchPx);
    list.indices.reserve(static_cast<std::size_t>(mask.visible_count()) * list.r2 * list.r2);
    const int uw = mask.units_w();
    for (int u = 0; u < mask.unit_count(); ++u) {
        if (!mask.unit_visible[static_cast<std::size_t>(u)]) continue;
        const std::uint32_t r0 = static_cast<std::uint32_t>(u / uw) * list.r2;
        const std::uint32_t c0 = static_cast<std::uint32_t>(u % uw) * list.r2;
        for (std::uint32_t dr = 0; dr < list.r2; ++dr) {
            for (std::uint32_t dc = 0; dc < list.r2; ++dc) {
                list.indices.push_back((r0 + dr) * list.r1 + (c0 + dc));
            }
        }
    }
    return list;
}

IndexList merge_indices(const IndexList& list) {
    if (list.r2 < 2) throw ConfigError("merge_indices: attention unit already at mask-unit size");
    const std::size_t group = static_cast<std::size_t>(list.r2) * list.r2;
    if (list.indices.size() % group != 0) throw DimError("merge_indices: non-canonical list length");
    IndexList out;
    out.stage = list.stage + 1;
    out.r1 = list.r1 / 2;
    out.rows = list.rows / 2;
    out.r2 = list.r2 / 2;
    out.indices.reserve(list.indices.size() / 4);
    const std::size_t units = list.indices.size() / group;
    for (std::size_t u = 0; u < units; ++u) {
        const std::uint32_t* block = list.indices.data() + u * group;
        // local r2 x r2 raster, keep [::2, ::2]
        for (std::uint32_t lr = 0; lr < list.r2; lr += 2) {
            for (std::uint32_t lc = 0; lc < list.r2; lc += 2) {
                const std::uint32_t idx = block[lr * list.r2 + lc];
                out.indices.push_back(idx / (2 * list.r1) * out.r1 + (idx % list.r1) / 2);
            }
        }
    }
    return out;
}

IndexList split_indices(const IndexList& list) {
    const std::size_t group = static_cast<std::size_t>(list.r2) * list.r2;
    if (group == 0 || list.indices.size() % group != 0) {
        throw DimError("split_indices: non-canonical list length");
    }
    if (static_cast<int>(list.r2) >= kMaskUnitPx / kPatchPx) {
        throw ConfigError("split_indices: attention unit already at minimum size");
    }
    IndexList out;
    out.stage = list.stage + 1;
    out.r1 = list.r1 * 2;
    out.rows = list.rows * 2;
    out.r2 = list.r2 * 2;
    out.indices.reserve(list.indices.size() * 4);
    const std::size_t units = list.indices.size() / group;
    std::vector<std::uint32_t> children;
    children.reserve(group * 4);
    for (std::size_t u = 0; u < units; ++u) {
        children.clear();
        for (std::size_t j = 0; j < group; ++j) {
            const std::uint32_t idx = list.indices[u * group + j];
            const std::uint32_t base = idx / list.r1 * 2 * out.r1 + idx % list.r1 * 2;
            children.push_back(base);
            children.push_back(base + 1);
            children.push_back(base + out.r1);
            children.push_back(base + out.r1 + 1);
        }
        // Within one mask unit, ascending global index is within-unit raster
        // order, which restores canonicality on the doubled grid.
        std::sort(children.begin(), children.end());
        out.indices.insert(out.indices.end(), children.begin(), children.end());
    }
    return out;
}

NumArray gather_visible(const NumArray& image, const MaskMap& mask) {
    if (image.rank() != 3 || image.extent(2) != 3 ||
        image.extent(0) != static_cast<std::size_t>(mask.height_px) ||
        image.extent(1) != static_cast<std::size_t>(mask.width_px)) {
        throw DimError("gather_visible: image dims do not match mask");
    }
    const IndexList list = initial_index_list(mask);
    NumArray out({list.size(), 12});
    for (std::size_t t = 0; t < list.size(); ++t) {
        const std::size_t y0 = list.row_of(list.indices[t]) * kPatchPx;
        const std::size_t x0 = list.col_of(list.indices[t]) * kPatchPx;
        double* dst = out.data() + t * 12;
        for (std::size_t py = 0; py < kPatchPx; ++py) {
            for (std::size_t px = 0; px < kPatchPx; ++px) {
                for (std::size_t c = 0; c < 3; ++c) {
                    *dst++ = image.at(y0 + py, x0 + px, c);
                }
            }
        }
    }
    return out;
}

NumArray scatter_zero_fill(const NumArray& patches, const IndexList& list, int height_px,
                           int width_px) {
    if (patches.rank() != 2 || patches.extent(1) != 12 || patches.extent(0) != list.size()) {
        throw DimError("scatter_zero_fill: patch count does not match index list");
    }
    NumArray out({static_cast<std::size_t>(height_px), static_cast<std::size_t>(width_px), 3});
    for (std::size_t t = 0; t < list.size(); ++t) {
        const std::size_t y0 = list.row_of(list.indices[t]) * kPatchPx;
        const std::size_t x0 = list.col_of(list.indices[t]) * kPatchPx;
        const double* src = patches.data() + t * 12;
        for (std::size_t py = 0; py < kPatchPx; ++py) {
            for (std::size_t px = 0; px < kPatchPx; ++px) {
                for (std::size_t c = 0; c < 3; ++c) {
                    out.at(y0 + py, x0 + px, c) = *src++;
                }
            }
        }
    }
    return out;
}

namespace {

struct Rect {
    int r0, c0, r1, c1;  // half-open, unit coordinates
};

void paint(const std::vector<Rect>& rects, std::vector<std::uint8_t>& grid, int uh, int uw) {
    std::fill(grid.begin(), grid.end(), 0);
    for (const Rect& r : rects) {
        const int rr0 = std::clamp(r.r0, 0, uh), rr1 = std::clamp(r.r1, 0, uh);
        const int cc0 = std::clamp(r.c0, 0, uw), cc1 = std::clamp(r.c1, 0, uw);
        for (int y = rr0; y < rr1; ++y) {
            for (int x = cc0; x < cc1; ++x) grid[static_cast<std::size_t>(y) * uw + x] = 1;
        }
    }
}

double fraction(const std::vector<std::uint8_t>& grid) {
    std::size_t n = 0;
    for (std::uint8_t v : grid) n += v ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(grid.size());
}

}  // namespace

MaskMap gen_group_mask(int height_px, int width_px, double visible_ratio, std::uint64_t seed) {
    if (visible_ratio <= 0.0 || visible_ratio > 1.0) {
        throw ConfigError("gen_group_mask: visible_ratio must be in (0, 1]");
    }
    const int ph = pad_up(height_px, kMaskUnitPx), pw = pad_up(width_px, kMaskUnitPx);
    const int uh = ph / kMaskUnitPx, uw = pw / kMaskUnitPx;
    std::vector<std::uint8_t> grid(static_cast<std::size_t>(uh) * uw, 0);
    if (visible_ratio == 1.0) {
        std::fill(grid.begin(), grid.end(), 1);
        return mask_from_units(height_px, width_px, std::move(grid));
    }
    CounterRng rng(seed);
    // side lengths log-uniform between one unit and half the image extent
    auto sample_side = [&](int full_units) {
        const double lo = std::log(1.0);
        const double hi = std::log(std::max(1.0, full_units / 2.0));
        const double s = std::exp(lo + (hi - lo) * rng.next_uniform());
        return std::max(1, static_cast<int>(std::lround(s)));
    };
    const int k = 1 + static_cast<int>(rng.next_below(10));
    std::vector<Rect> rects;
    for (int i = 0; i < k; ++i) {
        const int sh = sample_side(uh), sw = sample_side(uw);
        const int cr = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(uh)));
        const int cc = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(uw)));
        rects.push_back({cr - sh / 2, cc - sw / 2, cr - sh / 2 + sh, cc - sw / 2 + sw});
    }
    paint(rects, grid, uh, uw);
    constexpr double kTol = 0.05;
    const int max_iter = 20 * uh * uw + 200;
    double best_err = std::abs(fraction(grid) - visible_ratio);
    std::vector<std::uint8_t> best = grid;
    for (int it = 0; it < max_iter && best_err > kTol; ++it) {
        const double f = fraction(grid);
        Rect& r = rects[rng.next_below(rects.size())];
        const int side = static_cast<int>(rng.next_below(4));
        if (f < visible_ratio) {
            // grow one edge by a unit, or add a rectangle
            if (rects.size() < 10 && rng.next_below(8) == 0) {
                const int sh = sample_side(uh), sw = sample_side(uw);
                const int cr = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(uh)));
                const int cc = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(uw)));
                rects.push_back({cr - sh / 2, cc - sw / 2, cr - sh / 2 + sh, cc - sw / 2 + sw});
            } else {
                (side == 0   ? r.r0 = r.r0 - 1
                 : side == 1 ? r.r1 = r.r1 + 1
                 : side == 2 ? r.c0 = r.c0 - 1
                             : r.c1 = r.c1 + 1);
            }
        } else {
            if ((r.r1 - r.r0 <= 1 || r.c1 - r.c0 <= 1) && rects.size() > 1) {
                rects.erase(rects.begin() +
                            static_cast<std::ptrdiff_t>(&r - rects.data()));
            } else if (r.r1 - r.r0 > 1 && (side < 2 || r.c1 - r.c0 <= 1)) {
                (side % 2 == 0 ? r.r0 = r.r0 + 1 : r.r1 = r.r1 - 1);
            } else if (r.c1 - r.c0 > 1) {
                (side % 2 == 0 ? r.c0 = r.c0 + 1 : r.c1 = r.c1 - 1);
            }
        }
        paint(rects, grid, uh, uw);
        const double err = std::abs(fraction(grid) - visible_ratio);
        if (err < best_err && fraction(grid) > 0.0) {
            best_err = err;
            best = grid;
        }
    }
    if (fraction(best) == 0.0) {
        best[0] = 1;  // smallest-image fallback: keep one unit
    }
    return mask_from_units(height_px, width_px, std::move(best));
}

NumArray pad_image_to_units(const NumArray& image) {
    if (image.rank() != 3 || image.extent(2) != 3) {
        throw DimError("pad_image_to_units: expected HxWx3 image");
    }
    const std::size_t h = image.extent(0), w = image.extent(1);
    const std::size_t ph = static_cast<std::size_t>(pad_up(static_cast<int>(h), kMaskUnitPx));
    const std::size_t pw = static_cast<std::size_t>(pad_up(static_cast<int>(w), kMaskUnitPx));
    if (ph == h && pw == w) return image;
    NumArray out({ph, pw, 3});
    for (std::size_t y = 0; y < ph; ++y) {
        const std::size_t sy = std::min(y, h - 1);
        for (std::size_t x = 0; x < pw; ++x) {
            const std::size_t sx = std::min(x, w - 1);
            for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = image.at(sy, sx, c);
        }
    }
    return out;
}

}  // namespace emic
