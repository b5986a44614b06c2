#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "emic/geometry.hpp"
#include "emic/rng.hpp"
#include "test_util.hpp"

using namespace emic;

namespace {

MaskMap mask_32(std::vector<std::uint8_t> units) {
    return mask_from_units(32, 32, std::move(units));
}

// From-scratch canonical enumeration at a given attention-unit size.
std::vector<std::uint32_t> canonical_oracle(const MaskMap& mask, int unit_px) {
    const std::uint32_t r1 = static_cast<std::uint32_t>(mask.width_px / unit_px);
    const std::uint32_t r2 = static_cast<std::uint32_t>(kMaskUnitPx / unit_px);
    std::vector<std::uint32_t> out;
    for (int u = 0; u < mask.unit_count(); ++u) {
        if (!mask.unit_visible[static_cast<std::size_t>(u)]) continue;
        const std::uint32_t r0 = static_cast<std::uint32_t>(u / mask.units_w()) * r2;
        const std::uint32_t c0 = static_cast<std::uint32_t>(u % mask.units_w()) * r2;
        for (std::uint32_t dr = 0; dr < r2; ++dr) {
            for (std::uint32_t dc = 0; dc < r2; ++dc) out.push_back((r0 + dr) * r1 + c0 + dc);
        }
    }
    return out;
}

MaskMap random_mask(CounterRng& rng, int h, int w, double p = 0.5) {
    const int uh = (h + 15) / 16, uw = (w + 15) / 16;
    std::vector<std::uint8_t> grid(static_cast<std::size_t>(uh) * uw);
    int vis = 0;
    for (auto& u : grid) {
        u = rng.next_uniform() < p ? 1 : 0;
        vis += u;
    }
    if (vis == 0) grid[rng.next_below(grid.size())] = 1;
    return mask_from_units(h, w, std::move(grid));
}

}  // namespace

TEST_CASE("build_mask unit rules") {
    std::vector<std::uint8_t> all1(32 * 32, 1);
    const MaskMap m = build_mask(all1, 32, 32);
    CHECK(m.unit_count() == 4);
    CHECK(m.visible_count() == 4);

    std::vector<std::uint8_t> one(32 * 32, 0);
    one[0] = 1;
    const MaskMap m1 = build_mask(one, 32, 32);
    CHECK(m1.visible_count() == 1);
    CHECK(m1.unit_visible[0] == 1);

    std::vector<std::uint8_t> zero(32 * 32, 0);
    CHECK_THROWS_AS(build_mask(zero, 32, 32), DataError);
}

TEST_CASE("build_mask pads odd dimensions") {
    std::vector<std::uint8_t> pm(static_cast<std::size_t>(20) * 35, 0);
    pm[0] = 1;
    pm[static_cast<std::size_t>(19) * 35 + 34] = 1;  // bottom-right corner
    const MaskMap m = build_mask(pm, 20, 35);
    CHECK(m.height_px == 32);
    CHECK(m.width_px == 48);
    CHECK(m.orig_height_px == 20);
    CHECK(m.orig_width_px == 35);
    CHECK(m.units_h() == 2);
    CHECK(m.units_w() == 3);
    CHECK(m.unit_visible[0] == 1);
    CHECK(m.unit_visible[static_cast<std::size_t>(1 * 3 + 2)] == 1);
    CHECK(m.visible_count() == 2);
}

TEST_CASE("build_mask visible count matches per-unit enumeration oracle") {
    CounterRng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const int h = 512, w = 512;
        std::vector<std::uint8_t> pm(static_cast<std::size_t>(h) * w, 0);
        for (int r = 0; r < 6; ++r) {
            const int y0 = static_cast<int>(rng.next_below(h - 64)), x0 = static_cast<int>(rng.next_below(w - 64));
            const int ry = 16 + static_cast<int>(rng.next_below(160));
            const int rx = 16 + static_cast<int>(rng.next_below(160));
            for (int y = y0; y < std::min(h, y0 + ry); ++y) {
                for (int x = x0; x < std::min(w, x0 + rx); ++x) pm[static_cast<std::size_t>(y) * w + x] = 1;
            }
        }
        const MaskMap m = build_mask(pm, h, w);
        int expect = 0;
        for (int uy = 0; uy < 32; ++uy) {
            for (int ux = 0; ux < 32; ++ux) {
                bool any = false;
                for (int dy = 0; dy < 16 && !any; ++dy) {
                    for (int dx = 0; dx < 16 && !any; ++dx) {
                        any = pm[static_cast<std::size_t>(uy * 16 + dy) * w + ux * 16 + dx] != 0;
                    }
                }
                expect += any ? 1 : 0;
            }
        }
        CHECK(m.visible_count() == expect);
    }
}

TEST_CASE("initial_index_list") {
    const MaskMap tiny = mask_from_units(16, 16, {1});
    const IndexList l0 = initial_index_list(tiny);
    CHECK(l0.r1 == 8);
    CHECK(l0.r2 == 8);
    CHECK(l0.size() == 64);
    for (std::uint32_t i = 0; i < 64; ++i) CHECK(l0.indices[i] == i);

    const IndexList all4 = initial_index_list(mask_32({1, 1, 1, 1}));
    CHECK(all4.size() == 256);
    const std::vector<std::uint32_t> first9{0, 1, 2, 3, 4, 5, 6, 7, 16};
    for (std::size_t i = 0; i < first9.size(); ++i) CHECK(all4.indices[i] == first9[i]);

    // visible units {0,3} on the 2x2 unit grid: unit 3 starts at row 8, col 8
    const IndexList diag = initial_index_list(mask_32({1, 0, 0, 1}));
    CHECK(diag.size() == 128);
    CHECK(diag.indices[64] == 8 * 16 + 8);
    CHECK(diag.indices[65] == 8 * 16 + 9);
    CHECK(diag.indices[66] == 8 * 16 + 10);
    CHECK(diag.indices[67] == 8 * 16 + 11);

    // visible units {0,1}: unit 1 starts at row 0, col 8
    const IndexList top = initial_index_list(mask_32({1, 1, 0, 0}));
    CHECK(top.size() == 128);
    CHECK(top.indices[64] == 8);
    CHECK(top.indices[65] == 9);
    CHECK(top.indices[66] == 10);
    CHECK(top.indices[67] == 11);

    // enumeration oracle across random masks
    CounterRng rng(32);
    for (int trial = 0; trial < 25; ++trial) {
        const MaskMap m = random_mask(rng, 64, 96);
        CHECK(initial_index_list(m).indices == canonical_oracle(m, 2));
    }
}

TEST_CASE("merge_indices hand trace") {
    // 32x32 image, 8-px attention units: r1=4, r2=2; mask units {0,3}
    IndexList list;
    list.indices = {0, 1, 4, 5, 10, 11, 14, 15};
    list.r1 = 4;
    list.rows = 4;
    list.r2 = 2;
    list.stage = 3;
    const IndexList merged = merge_indices(list);
    CHECK(merged.indices == std::vector<std::uint32_t>{0, 3});
    CHECK(merged.r1 == 2);
    CHECK(merged.r2 == 1);
    CHECK_THROWS_AS(merge_indices(merged), ConfigError);
}

TEST_CASE("merge equals canonical enumeration at the coarser resolution") {
    CounterRng rng(33);
    for (int trial = 0; trial < 25; ++trial) {
        const MaskMap m = random_mask(rng, 96, 64);
        IndexList list = initial_index_list(m);
        const int unit_px[3] = {4, 8, 16};
        for (int s = 0; s < 3; ++s) {
            list = merge_indices(list);
            CHECK(list.indices == canonical_oracle(m, unit_px[s]));
        }
        // after three merges: raster indices of visible mask units, r2 == 1
        CHECK(list.r2 == 1);
        std::vector<std::uint32_t> units;
        for (int u = 0; u < m.unit_count(); ++u) {
            if (m.unit_visible[static_cast<std::size_t>(u)]) units.push_back(static_cast<std::uint32_t>(u));
        }
        CHECK(list.indices == units);
    }
}

TEST_CASE("split_indices hand trace and inverse") {
    IndexList coarse;
    coarse.indices = {0, 3};
    coarse.r1 = 2;
    coarse.rows = 2;
    coarse.r2 = 1;
    coarse.stage = 4;
    const IndexList split = split_indices(coarse);
    CHECK(split.indices == std::vector<std::uint32_t>{0, 1, 4, 5, 10, 11, 14, 15});
    CHECK(split.r1 == 4);
    CHECK(split.r2 == 2);

    IndexList single;
    single.indices = {0};
    single.r1 = 5;
    single.rows = 5;
    single.r2 = 1;
    const IndexList kids = split_indices(single);
    CHECK(kids.indices == std::vector<std::uint32_t>{0, 1, 10, 11});

    // splitting below 2x2-pixel units is not representable
    const MaskMap tiny = mask_from_units(16, 16, {1});
    CHECK_THROWS_AS(split_indices(initial_index_list(tiny)), ConfigError);
}

TEST_CASE("split(merge(x)) round trip over 1000 random masks") {
    CounterRng rng(34);
    for (int trial = 0; trial < 1000; ++trial) {
        const int dims[4] = {32, 48, 64, 96};
        const MaskMap m =
            random_mask(rng, dims[rng.next_below(4)], dims[rng.next_below(4)], 0.3 + 0.5 * rng.next_uniform());
        IndexList list = initial_index_list(m);
        for (int s = 0; s < 3; ++s) {
            const IndexList merged = merge_indices(list);
            const IndexList back = split_indices(merged);
            REQUIRE(back.indices == list.indices);
            REQUIRE(back.r1 == list.r1);
            REQUIRE(back.r2 == list.r2);
            list = merged;
        }
    }
}

TEST_CASE("gather_visible") {
    CounterRng rng(35);
    NumArray img({32, 32, 3});
    for (double& v : img.vec()) v = rng.next_uniform();

    SUBCASE("all-visible raster order") {
        std::vector<std::uint8_t> all1(32 * 32, 1);
        const MaskMap m = build_mask(all1, 32, 32);
        const NumArray patches = gather_visible(img, m);
        CHECK(patches.extent(0) == 256);
        const IndexList list = initial_index_list(m);
        for (std::size_t t = 0; t < list.size(); ++t) {
            const std::size_t y0 = list.row_of(list.indices[t]) * 2;
            const std::size_t x0 = list.col_of(list.indices[t]) * 2;
            for (std::size_t py = 0; py < 2; ++py) {
                for (std::size_t px = 0; px < 2; ++px) {
                    for (std::size_t c = 0; c < 3; ++c) {
                        REQUIRE(patches.at(t, (py * 2 + px) * 3 + c) == img.at(y0 + py, x0 + px, c));
                    }
                }
            }
        }
    }

    SUBCASE("constant image gives identical patches") {
        const MaskMap m = mask_32({1, 0, 1, 0});
        const NumArray patches = gather_visible(NumArray::full({32, 32, 3}, 0.25), m);
        for (double v : patches.vec()) CHECK(v == 0.25);
    }

    SUBCASE("masked pixels are never read (NaN poison)") {
        const MaskMap m = mask_32({1, 0, 0, 1});
        NumArray poisoned = img;
        for (std::size_t y = 0; y < 16; ++y) {
            for (std::size_t x = 16; x < 32; ++x) {
                for (std::size_t c = 0; c < 3; ++c) {
                    poisoned.at(y, x, c) = std::nan("");
                    poisoned.at(y + 16, x - 16, c) = std::nan("");
                }
            }
        }
        const NumArray patches = gather_visible(poisoned, m);
        for (double v : patches.vec()) CHECK(std::isfinite(v));
    }
}

TEST_CASE("scatter_zero_fill") {
    CounterRng rng(36);
    NumArray img({32, 32, 3});
    for (double& v : img.vec()) v = rng.next_uniform();
    const MaskMap m = mask_32({0, 1, 1, 0});
    const IndexList list = initial_index_list(m);
    const NumArray patches = gather_visible(img, m);
    const NumArray back = scatter_zero_fill(patches, list, 32, 32);
    // identity on visible units, zero elsewhere
    for (std::size_t y = 0; y < 32; ++y) {
        for (std::size_t x = 0; x < 32; ++x) {
            const bool visible = (y < 16) != (x < 16);
            for (std::size_t c = 0; c < 3; ++c) {
                REQUIRE(back.at(y, x, c) == (visible ? img.at(y, x, c) : 0.0));
            }
        }
    }
    CHECK_THROWS_AS(scatter_zero_fill(NumArray({3, 12}), list, 32, 32), DimError);

    // full mask: exact identity
    std::vector<std::uint8_t> all1(32 * 32, 1);
    const MaskMap full = build_mask(all1, 32, 32);
    const NumArray round = scatter_zero_fill(gather_visible(img, full), initial_index_list(full), 32, 32);
    CHECK(round.vec() == img.vec());
}

TEST_CASE("gen_group_mask") {
    CHECK_THROWS_AS(gen_group_mask(64, 64, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(gen_group_mask(64, 64, 1.5, 1), ConfigError);

    const MaskMap full = gen_group_mask(64, 64, 1.0, 7);
    CHECK(full.visible_count() == full.unit_count());

    const MaskMap a = gen_group_mask(128, 128, 0.4, 123);
    const MaskMap b = gen_group_mask(128, 128, 0.4, 123);
    CHECK(a.unit_visible == b.unit_visible);
    CHECK(gen_group_mask(128, 128, 0.4, 124).unit_visible != a.unit_visible);

    double mean = 0.0;
    for (int seed = 0; seed < 100; ++seed) {
        const MaskMap m = gen_group_mask(512, 512, 0.4, static_cast<std::uint64_t>(seed));
        mean += static_cast<double>(m.visible_count()) / m.unit_count();
    }
    mean /= 100.0;
    CHECK(mean > 0.35);
    CHECK(mean < 0.45);
}

TEST_CASE("pad_image_to_units replicates edges") {
    NumArray img({17, 20, 3});
    CounterRng rng(37);
    for (double& v : img.vec()) v = rng.next_uniform();
    const NumArray p = pad_image_to_units(img);
    CHECK(p.extent(0) == 32);
    CHECK(p.extent(1) == 32);
    CHECK(p.at(31, 31, 0) == img.at(16, 19, 0));
    CHECK(p.at(5, 25, 1) == img.at(5, 19, 1));
    CHECK(p.at(20, 3, 2) == img.at(16, 3, 2));
}
