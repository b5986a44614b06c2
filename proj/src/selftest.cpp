#include "emic/selftest.hpp"

#include <cmath>
#include <iomanip>

#include "emic/pipeline.hpp"
#include "emic/range_coder.hpp"

namespace emic {

namespace {

MaskMap random_mask(CounterRng& rng, int px) {
    const int units = px / kMaskUnitPx;
    std::vector<std::uint8_t> grid(static_cast<std::size_t>(units) * units);
    int vis = 0;
    for (auto& u : grid) {
        u = rng.next_uniform() < 0.5 ? 1 : 0;
        vis += u;
    }
    if (vis == 0) grid[rng.next_below(grid.size())] = 1;
    return mask_from_units(px, px, std::move(grid));
}

bool check_index_algebra() {
    CounterRng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const int px = 32 << rng.next_below(3);
        const MaskMap mask = random_mask(rng, px);
        IndexList list = initial_index_list(mask);
        for (int s = 0; s < 3; ++s) {
            const IndexList merged = merge_indices(list);
            const IndexList back = split_indices(merged);
            if (back.indices != list.indices || back.r1 != list.r1 || back.r2 != list.r2) {
                return false;
            }
            list = merged;
        }
        // after three merges: raster indices of visible mask units
        std::vector<std::uint32_t> expect;
        for (int u = 0; u < mask.unit_count(); ++u) {
            if (mask.unit_visible[static_cast<std::size_t>(u)]) {
                expect.push_back(static_cast<std::uint32_t>(u));
            }
        }
        if (list.indices != expect || list.r2 != 1) return false;
    }
    return true;
}

bool check_decay_sampling() {
    CounterRng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const MaskMap mask = random_mask(rng, 32);
        const IndexList list = initial_index_list(mask);
        const double gamma = 0.5 + 0.4 * rng.next_uniform();
        const NumArray d = decay_from_indices(list, gamma);
        // full-grid restriction
        for (std::size_t i = 0; i < list.size(); ++i) {
            for (std::size_t j = 0; j < list.size(); ++j) {
                const double dist =
                    std::abs(static_cast<double>(list.row_of(list.indices[i])) -
                             static_cast<double>(list.row_of(list.indices[j]))) +
                    std::abs(static_cast<double>(list.col_of(list.indices[i])) -
                             static_cast<double>(list.col_of(list.indices[j])));
                if (d.at(i, j) != std::pow(gamma, dist)) return false;
            }
        }
    }
    return true;
}

bool check_attention_oracles() {
    CounterRng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t L = 2 + rng.next_below(6), d = 1 + rng.next_below(6);
        NumArray q({L, d}), k({L, d}), v({L, d}), decay({L, L});
        for (auto* a : {&q, &k, &v}) {
            for (double& x : a->vec()) x = rng.next_normal();
        }
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t j = 0; j < L; ++j) {
                decay.at(i, j) = std::pow(0.9, std::abs(static_cast<double>(i) - static_cast<double>(j)));
            }
        }
        const NumArray out = pisa(q, k, v, decay);
        // explicit double loop
        const double sc = 1.0 / std::sqrt(static_cast<double>(d));
        for (std::size_t i = 0; i < L; ++i) {
            std::vector<double> row(L);
            double mx = -1e300;
            for (std::size_t j = 0; j < L; ++j) {
                double s = 0;
                for (std::size_t c = 0; c < d; ++c) s += q.at(i, c) * k.at(j, c);
                row[j] = s * sc;
                mx = std::max(mx, row[j]);
            }
            double sum = 0;
            for (std::size_t j = 0; j < L; ++j) sum += std::exp(row[j] - mx);
            for (std::size_t c = 0; c < d; ++c) {
                double o = 0;
                for (std::size_t j = 0; j < L; ++j) {
                    o += std::exp(row[j] - mx) / sum * decay.at(i, j) * v.at(j, c);
                }
                if (std::abs(o - out.at(i, c)) > 1e-12) return false;
            }
        }
    }
    return true;
}

bool check_range_coder() {
    CounterRng rng(14);
    std::vector<std::int32_t> syms;
    std::vector<FrequencyTable> tables;
    for (int i = 0; i < 2000; ++i) {
        const int n = 2 + static_cast<int>(rng.next_below(64));
        std::vector<double> pmf(static_cast<std::size_t>(n));
        double tot = 0;
        for (double& p : pmf) {
            p = rng.next_uniform() + 1e-6;
            tot += p;
        }
        for (double& p : pmf) p /= tot;
        tables.push_back(quantize_pmf(pmf));
        syms.push_back(static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(n))));
    }
    const std::vector<std::uint8_t> bytes = rc_encode(syms, tables);
    return rc_decode(bytes, syms.size(), tables) == syms;
}

bool check_container_roundtrip() {
    CounterRng rng(15);
    BitstreamContainer c;
    c.set_mask(random_mask(rng, 64));
    c.model_id = 0xDEADBEEF;
    c.lambda_index = 3;
    c.z_stream = {1, 2, 3};
    c.y_streams = {{4, 5}, {6}, {}, {7, 8, 9}};
    const BitstreamContainer d = BitstreamContainer::parse(c.serialize());
    return d.serialize() == c.serialize();
}

bool check_params_io() {
    StageConfig cfg;
    cfg.base_channels = 8;
    cfg.head_dim = 4;
    cfg.latent_channels = 32;
    cfg.enc_blocks = {1, 1, 1, 1};
    Model m = init_model(cfg, 7);
    const auto bytes = m.params.serialize();
    const ModelParams back = ModelParams::deserialize(bytes);
    return back.serialize() == bytes && back.seed == 7 && back.prng_name == "splitmix64";
}

bool check_end_to_end(std::ostream& out) {
    StageConfig cfg;
    cfg.base_channels = 8;
    cfg.head_dim = 4;
    cfg.latent_channels = 32;
    cfg.enc_blocks = {1, 1, 1, 1};
    Model model = init_model(cfg, 21);
    CounterRng rng(22);
    NumArray img({48, 48, 3});
    for (double& v : img.vec()) v = rng.next_uniform();
    std::vector<std::uint8_t> pm(48 * 48, 0);
    for (int y = 0; y < 32; ++y) {
        for (int x = 8; x < 44; ++x) pm[static_cast<std::size_t>(y) * 48 + x] = 1;
    }
    CompressResult enc = compress(img, pm, model, 1);
    const DecompressResult dec = decompress(BitstreamContainer::parse(enc.container.serialize()), model);
    if (dec.recon_padded.vec() != enc.recon_padded.vec()) {
        out << "    end-to-end: reconstruction mismatch\n";
        return false;
    }
    if (dec.table_hashes != enc.table_hashes) {
        out << "    end-to-end: frequency tables differ between encoder and decoder\n";
        return false;
    }
    // masked-content invariance
    NumArray img2 = img;
    for (std::size_t y = 36; y < 48; ++y) {
        for (std::size_t x = 0; x < 48; ++x) {
            for (std::size_t c = 0; c < 3; ++c) img2.at(y, x, c) = rng.next_uniform();
        }
    }
    CompressResult enc2 = compress(img2, pm, model, 1);
    if (enc2.container.serialize() != enc.container.serialize()) {
        out << "    end-to-end: bitstream changed with masked content\n";
        return false;
    }
    return true;
}

bool check_gradients() {
    Tape tape;
    CounterRng rng(23);
    NumArray x({3, 4});
    for (double& v : x.vec()) v = rng.next_normal();
    const ValueRef p = tape.param("x", x);
    const ValueRef loss = tape.sum_all(tape.mul(tape.softmax_rows(p), p));
    GradMap g = tape.backward(loss);
    const NumArray& gx = g.at("x");
    const double h = 1e-5;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        auto eval = [&](double delta) {
            NumArray xx = x;
            xx[i] += delta;
            Tape t2;
            const ValueRef pp = t2.param("x", xx);
            return t2.value(t2.sum_all(t2.mul(t2.softmax_rows(pp), pp)))[0];
        };
        const double fd = (eval(h) - eval(-h)) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(gx[i]), 1e-8});
        if (std::abs(fd - gx[i]) / denom > 1e-4) return false;
    }
    return true;
}

}  // namespace

int run_selftest(std::ostream& out) {
    struct Suite {
        const char* name;
        bool ok;
    };
    std::vector<Suite> suites;
    suites.push_back({"index-algebra", check_index_algebra()});
    suites.push_back({"decay-sampling", check_decay_sampling()});
    suites.push_back({"attention-oracle", check_attention_oracles()});
    suites.push_back({"range-coder", check_range_coder()});
    suites.push_back({"container-io", check_container_roundtrip()});
    suites.push_back({"params-io", check_params_io()});
    suites.push_back({"end-to-end", check_end_to_end(out)});
    suites.push_back({"gradients", check_gradients()});
    bool all = true;
    for (const Suite& s : suites) {
        out << (s.ok ? "[ok]   " : "[FAIL] ") << s.name << "\n";
        all = all && s.ok;
    }
    out << (all ? "selftest: all suites passed\n" : "selftest: FAILURES\n");
    return all ? 0 : 1;
}

}  // namespace emic
