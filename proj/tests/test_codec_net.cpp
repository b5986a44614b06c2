#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "emic/codec_net.hpp"
#include "test_util.hpp"

using namespace emic;

namespace {

StageConfig small_cfg() {
    StageConfig cfg;
    cfg.base_channels = 8;
    cfg.head_dim = 4;
    cfg.latent_channels = 32;
    cfg.enc_blocks = {1, 1, 2, 1};
    return cfg;
}

MaskMap checker_mask_64() {
    std::vector<std::uint8_t> units(16);
    for (int i = 0; i < 16; ++i) units[static_cast<std::size_t>(i)] = (i / 4 + i % 4) % 2 == 0;
    return mask_from_units(64, 64, std::move(units));
}

NumArray random_image(CounterRng& rng, std::size_t h, std::size_t w) {
    NumArray img({h, w, 3});
    for (double& v : img.vec()) v = rng.next_uniform();
    return img;
}

}  // namespace

TEST_CASE("stage config") {
    const StageConfig cfg;
    CHECK(cfg.enc_blocks == std::array<int, 4>{2, 2, 6, 2});
    CHECK(cfg.dec_blocks() == std::array<int, 4>{2, 6, 2, 2});
    CHECK(cfg.stage_channels() == std::array<int, 4>{32, 64, 128, 256});
    cfg.validate();

    StageConfig bad = cfg;
    bad.base_channels = 17;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("patch_embed") {
    const StageConfig cfg = small_cfg();
    ModelParams params = init_codec_params(cfg, 1);

    SUBCASE("zero patches map to bias rows") {
        NumArray& bias = params.at("embed.b");
        for (std::size_t i = 0; i < bias.numel(); ++i) bias[i] = 0.25 * static_cast<double>(i);
        Tape tape;
        const ValueRef out = patch_embed(tape, NumArray({5, 12}), params, cfg);
        for (std::size_t t = 0; t < 5; ++t) {
            for (std::size_t c = 0; c < 8; ++c) CHECK(tape.value(out).at(t, c) == bias[c]);
        }
    }

    SUBCASE("identity-like weights copy raw pixels") {
        NumArray w({12, 8});
        for (std::size_t i = 0; i < 8; ++i) w.at(i, i) = 1.0;
        params.at("embed.w") = w;
        params.at("embed.b") = NumArray({8});
        CounterRng rng(2);
        const NumArray patches = test::random_array({3, 12}, rng);
        Tape tape;
        const ValueRef out = patch_embed(tape, patches, params, cfg);
        for (std::size_t t = 0; t < 3; ++t) {
            for (std::size_t c = 0; c < 8; ++c) CHECK(tape.value(out).at(t, c) == patches.at(t, c));
        }
    }

    SUBCASE("random patches match the matmul oracle") {
        CounterRng rng(3);
        const NumArray patches = test::random_array({7, 12}, rng);
        Tape tape;
        const ValueRef out = patch_embed(tape, patches, params, cfg);
        const NumArray expect = add_rowvec(matmul(patches, params.at("embed.w")), params.at("embed.b"));
        CHECK(tape.value(out).vec() == expect.vec());
    }
}

TEST_CASE("emic_block") {
    const StageConfig cfg = small_cfg();
    ModelParams params = init_codec_params(cfg, 4);
    const MaskMap mask = checker_mask_64();
    CounterRng rng(5);

    TokenSeq x;
    x.list = initial_index_list(mask);
    const std::size_t L = x.list.size();
    const NumArray x0 = test::random_array({L, 8}, rng);
    const AttentionConfig attn = stage_attention(cfg, 8, x.list);

    SUBCASE("zero-init output projections give an identity map") {
        ModelParams zp = params;
        zp.at("enc.s1.b0.attn.o.w") = NumArray({8, 8});
        zp.at("enc.s1.b0.attn.o.b") = NumArray({8});
        zp.at("enc.s1.b0.ffn.2.w") = NumArray({16, 8});
        zp.at("enc.s1.b0.ffn.2.b") = NumArray({8});
        Tape tape;
        x.feats = tape.constant(x0);
        const TokenSeq out = emic_block(tape, x, attn, zp, cfg, "enc.s1.b0");
        CHECK(tape.value(out.feats).vec() == x0.vec());
    }

    SUBCASE("shape preserved") {
        Tape tape;
        x.feats = tape.constant(x0);
        const TokenSeq out = emic_block(tape, x, attn, params, cfg, "enc.s1.b0");
        CHECK(tape.value(out.feats).shape() == std::vector<std::size_t>{L, 8});
    }

    SUBCASE("gradient wrt input passes the finite-difference check") {
        test::Inputs in;
        in["x"] = test::random_array({8, 8}, rng, 0.5);  // one visible unit at stage 3
        IndexList small;
        small.indices = {0, 1, 4, 5, 10, 11, 14, 15};
        small.r1 = 4;
        small.rows = 4;
        small.r2 = 2;
        auto graph = [&](Tape& t, const test::Inputs& i) {
            TokenSeq ts;
            ts.feats = t.param("x", i.at("x"));
            ts.list = small;
            const AttentionConfig a = stage_attention(cfg, 8, small);
            const TokenSeq out = emic_block(t, ts, a, params, cfg, "enc.s1.b0");
            return t.sum_all(t.mul(out.feats, out.feats));
        };
        CHECK(test::max_grad_error(graph, in, 20) < 1e-4);
    }
}

TEST_CASE("patch_merge") {
    const StageConfig cfg = small_cfg();
    ModelParams params = init_codec_params(cfg, 6);
    const MaskMap mask = checker_mask_64();
    CounterRng rng(7);

    Tape tape;
    TokenSeq x;
    x.list = initial_index_list(mask);
    const std::size_t L = x.list.size();
    const NumArray x0 = test::random_array({L, 8}, rng);
    x.feats = tape.constant(x0);
    const TokenSeq merged = patch_merge(tape, x, params, "enc.merge1");

    CHECK(tape.value(merged.feats).shape() == std::vector<std::size_t>{L / 4, 16});
    CHECK(merged.list.indices == merge_indices(x.list).indices);

    // each merged row equals linear(concat of its four children)
    const NumArray& w = params.at("enc.merge1.w");
    const NumArray& b = params.at("enc.merge1.b");
    const IndexList& in_list = x.list;
    const std::size_t r2 = in_list.r2, group = r2 * r2;
    for (std::size_t ot = 0; ot < merged.list.size(); ++ot) {
        // locate the four children of output token ot via the index lists
        const std::uint32_t oidx = merged.list.indices[ot];
        const std::uint32_t base =
            oidx / merged.list.r1 * 2 * in_list.r1 + oidx % merged.list.r1 * 2;
        const std::uint32_t kids[4] = {base, base + 1, base + in_list.r1, base + in_list.r1 + 1};
        NumArray cat({1, 32});
        for (int kk = 0; kk < 4; ++kk) {
            std::size_t row = 0;
            bool found = false;
            for (std::size_t t = 0; t < in_list.size(); ++t) {
                if (in_list.indices[t] == kids[kk]) {
                    row = t;
                    found = true;
                    break;
                }
            }
            REQUIRE(found);
            for (std::size_t c = 0; c < 8; ++c) {
                cat.at(0, static_cast<std::size_t>(kk) * 8 + c) = x0.at(row, c);
            }
        }
        const NumArray expect = add_rowvec(matmul(cat, w), b);
        for (std::size_t c = 0; c < 16; ++c) {
            REQUIRE(tape.value(merged.feats).at(ot, c) ==
                    doctest::Approx(expect.at(0, c)).epsilon(1e-12));
        }
        (void)group;
    }
}

TEST_CASE("patch_split") {
    const StageConfig cfg = small_cfg();
    ModelParams params = init_codec_params(cfg, 8);
    CounterRng rng(9);

    // two visible mask units at unit resolution (r2=1) on a 2x2 unit grid
    Tape tape;
    TokenSeq x;
    x.list.indices = {0, 3};
    x.list.r1 = 2;
    x.list.rows = 2;
    x.list.r2 = 1;
    const NumArray x0 = test::random_array({2, 32}, rng);
    x.feats = tape.constant(x0);
    const TokenSeq split = patch_split(tape, x, params, "dec.split2");

    CHECK(tape.value(split.feats).shape() == std::vector<std::size_t>{8, 16});
    CHECK(split.list.indices == split_indices(x.list).indices);

    // children re-gathered per index oracle reproduce the partitioned linear
    const NumArray up = add_rowvec(matmul(x0, params.at("dec.split2.w")), params.at("dec.split2.b"));
    for (std::size_t parent = 0; parent < 2; ++parent) {
        const std::uint32_t pidx = x.list.indices[parent];
        const std::uint32_t base = pidx / x.list.r1 * 2 * split.list.r1 + pidx % x.list.r1 * 2;
        const std::uint32_t kids[4] = {base, base + 1, base + split.list.r1,
                                       base + split.list.r1 + 1};
        for (int kk = 0; kk < 4; ++kk) {
            std::size_t row = 0;
            for (std::size_t t = 0; t < split.list.size(); ++t) {
                if (split.list.indices[t] == kids[kk]) row = t;
            }
            for (std::size_t c = 0; c < 16; ++c) {
                REQUIRE(tape.value(split.feats).at(row, c) ==
                        up.at(parent, static_cast<std::size_t>(kk) * 16 + c));
            }
        }
    }
}

TEST_CASE("encode_net shapes and masked-content invariance") {
    const StageConfig cfg = small_cfg();
    ModelParams params = init_codec_params(cfg, 10);
    CounterRng rng(11);

    SUBCASE("full 64x64 mask gives 16 latent tokens") {
        std::vector<std::uint8_t> pm(64 * 64, 1);
        const MaskMap mask = build_mask(pm, 64, 64);
        Tape tape;
        const TokenSeq y = encode_net(tape, random_image(rng, 64, 64), mask, params, cfg);
        CHECK(tape.value(y.feats).shape() == std::vector<std::size_t>{16, 32});
        CHECK(y.list.r2 == 1);
    }

    SUBCASE("half the units masked halves the token count") {
        const MaskMap mask = checker_mask_64();
        Tape tape;
        const TokenSeq y = encode_net(tape, random_image(rng, 64, 64), mask, params, cfg);
        CHECK(tape.value(y.feats).extent(0) == 8);
    }

    SUBCASE("token-count law across stages") {
        const MaskMap mask = checker_mask_64();
        IndexList list = initial_index_list(mask);
        const int vis = mask.visible_count();
        for (int a : {2, 4, 8}) {
            CHECK(list.size() == static_cast<std::size_t>(vis) * (16 / a) * (16 / a));
            list = merge_indices(list);
        }
        CHECK(list.size() == static_cast<std::size_t>(vis));
    }

    SUBCASE("poisoning masked pixels leaves y bit-identical") {
        const MaskMap mask = checker_mask_64();
        const NumArray img = random_image(rng, 64, 64);
        Tape t1;
        const NumArray y1 = t1.value(encode_net(t1, img, mask, params, cfg).feats);
        NumArray poisoned = img;
        for (int u = 0; u < mask.unit_count(); ++u) {
            if (mask.unit_visible[static_cast<std::size_t>(u)]) continue;
            const std::size_t y0 = static_cast<std::size_t>(u / 4) * 16;
            const std::size_t x0 = static_cast<std::size_t>(u % 4) * 16;
            for (std::size_t dy = 0; dy < 16; ++dy) {
                for (std::size_t dx = 0; dx < 16; ++dx) {
                    for (std::size_t c = 0; c < 3; ++c) {
                        poisoned.at(y0 + dy, x0 + dx, c) = 1e6 * rng.next_normal();
                    }
                }
            }
        }
        Tape t2;
        const NumArray y2 = t2.value(encode_net(t2, poisoned, mask, params, cfg).feats);
        CHECK(y1.vec() == y2.vec());
    }
}

TEST_CASE("decode_net") {
    const StageConfig cfg = small_cfg();
    ModelParams params = init_codec_params(cfg, 12);
    CounterRng rng(13);
    const MaskMap mask = checker_mask_64();

    Tape tape;
    TokenSeq yhat;
    yhat.list = initial_index_list(mask);
    for (int s = 0; s < 3; ++s) yhat.list = merge_indices(yhat.list);
    yhat.feats = tape.constant(test::random_array({yhat.list.size(), 32}, rng, 0.5));

    const NumArray img = decode_net(tape, yhat, params, cfg, mask.height_px, mask.width_px);
    CHECK(img.shape() == std::vector<std::size_t>{64, 64, 3});

    // masked units exactly zero
    for (int u = 0; u < mask.unit_count(); ++u) {
        if (mask.unit_visible[static_cast<std::size_t>(u)]) continue;
        const std::size_t y0 = static_cast<std::size_t>(u / 4) * 16;
        const std::size_t x0 = static_cast<std::size_t>(u % 4) * 16;
        for (std::size_t dy = 0; dy < 16; ++dy) {
            for (std::size_t dx = 0; dx < 16; ++dx) {
                for (std::size_t c = 0; c < 3; ++c) REQUIRE(img.at(y0 + dy, x0 + dx, c) == 0.0);
            }
        }
    }

    // determinism: same latent, fresh tape, identical output
    Tape t2;
    TokenSeq y2 = yhat;
    y2.feats = t2.constant(tape.value(yhat.feats));
    const NumArray img2 = decode_net(t2, y2, params, cfg, mask.height_px, mask.width_px);
    CHECK(img.vec() == img2.vec());

    // channel law: stage widths double through the encoder path
    CHECK(cfg.stage_channels()[3] == 8 * cfg.base_channels);
}
