// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Exit code is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <vector>

#include "emic/pipeline.hpp"
#include "emic/range_coder.hpp"
#include "test_util.hpp"

using namespace emic;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

MaskMap random_mask(CounterRng& rng, int h, int w, double p) {
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

// ---------------------------------------------------------------- 1
bool criterion_index_algebra() {
    const auto t0 = Clock::now();
    CounterRng rng(201);
    const int sizes[4] = {32, 64, 256, 512};
    for (int trial = 0; trial < 1000; ++trial) {
        const int h = sizes[rng.next_below(4)], w = sizes[rng.next_below(4)];
        const MaskMap mask = random_mask(rng, h, w, 0.2 + 0.6 * rng.next_uniform());
        IndexList list = initial_index_list(mask);
        if (list.indices != canonical_oracle(mask, 2)) return false;
        const int unit_px[3] = {4, 8, 16};
        for (int s = 0; s < 3; ++s) {
            const IndexList merged = merge_indices(list);
            if (merged.indices != canonical_oracle(mask, unit_px[s])) return false;
            const IndexList back = split_indices(merged);
            if (back.indices != list.indices || back.r1 != list.r1 || back.r2 != list.r2 ||
                back.rows != list.rows) {
                return false;
            }
            list = merged;
        }
    }
    return seconds_since(t0) < 10.0;
}

// ---------------------------------------------------------------- 2
bool criterion_decay_sampling() {
    CounterRng rng(202);
    for (int trial = 0; trial < 500; ++trial) {
        const std::uint32_t r1 = 2 + static_cast<std::uint32_t>(rng.next_below(14));
        const std::uint32_t rows = 2 + static_cast<std::uint32_t>(rng.next_below(14));
        const double gamma = 0.2 + 0.75 * rng.next_uniform();
        IndexList full;
        full.r1 = r1;
        full.rows = rows;
        full.r2 = 1;
        full.indices.resize(r1 * rows);
        for (std::uint32_t i = 0; i < full.indices.size(); ++i) full.indices[i] = i;
        const NumArray fd = decay_from_indices(full, gamma);
        IndexList vis;
        vis.r1 = r1;
        vis.rows = rows;
        vis.r2 = 1;
        for (std::uint32_t i = 0; i < r1 * rows; ++i) {
            if (rng.next_uniform() < 0.5) vis.indices.push_back(i);
        }
        if (vis.indices.empty()) vis.indices.push_back(0);
        const NumArray sd = decay_from_indices(vis, gamma);
        for (std::size_t i = 0; i < vis.indices.size(); ++i) {
            for (std::size_t j = 0; j < vis.indices.size(); ++j) {
                if (sd.at(i, j) != fd.at(vis.indices[i], vis.indices[j])) return false;
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------- 3
bool criterion_attention() {
    CounterRng rng(203);
    // pisa double-loop oracle
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t L = 1 + rng.next_below(16), d = 1 + rng.next_below(8);
        const double sc = 1.0 / std::sqrt(static_cast<double>(d));
        const NumArray q = test::random_array({L, d}, rng);
        const NumArray k = test::random_array({L, d}, rng);
        const NumArray v = test::random_array({L, d}, rng);
        NumArray decay({L, L});
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t j = 0; j < L; ++j) {
                decay.at(i, j) = std::pow(0.875, std::abs(double(i) - double(j)));
            }
        }
        const NumArray out = pisa(q, k, v, decay);
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
    // dpisa quadruple-sum oracle, M <= 8, S <= 16, d <= 8
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t M = 1 + rng.next_below(8), S = 1 + rng.next_below(16),
                          d = 1 + rng.next_below(8);
        const double sc = 1.0 / std::sqrt(static_cast<double>(d));
        const NumArray q = test::random_array({M, S, d}, rng);
        const NumArray k = test::random_array({M, S, d}, rng);
        const NumArray v = test::random_array({M, S, d}, rng);
        NumArray dmu({M, M}), dau({S, S});
        for (std::size_t i = 0; i < M; ++i) {
            for (std::size_t j = 0; j < M; ++j) {
                dmu.at(i, j) = std::pow(0.9375, std::abs(double(i) - double(j)));
            }
        }
        for (std::size_t i = 0; i < S; ++i) {
            for (std::size_t j = 0; j < S; ++j) {
                dau.at(i, j) = std::pow(0.875, std::abs(double(i) - double(j)));
            }
        }
        const NumArray out = dpisa(q, k, v, dmu, dau);

        auto attn = [&](const NumArray& qq, const NumArray& kk, const NumArray& dec) {
            const std::size_t N = qq.extent(0);
            NumArray a({N, N});
            for (std::size_t i = 0; i < N; ++i) {
                double mx = -1e300;
                for (std::size_t j = 0; j < N; ++j) {
                    double s = 0;
                    for (std::size_t c = 0; c < d; ++c) s += qq.at(i, c) * kk.at(j, c);
                    a.at(i, j) = s * sc;
                    mx = std::max(mx, a.at(i, j));
                }
                double sum = 0;
                for (std::size_t j = 0; j < N; ++j) sum += std::exp(a.at(i, j) - mx);
                for (std::size_t j = 0; j < N; ++j) {
                    a.at(i, j) = std::exp(a.at(i, j) - mx) / sum * dec.at(i, j);
                }
            }
            return a;
        };
        auto slot_rows = [&](const NumArray& x, std::size_t s) {
            NumArray o({M, d});
            for (std::size_t m = 0; m < M; ++m) {
                for (std::size_t c = 0; c < d; ++c) o.at(m, c) = x.at(m, s, c);
            }
            return o;
        };
        auto unit_rows = [&](const NumArray& x, std::size_t m) {
            NumArray o({S, d});
            for (std::size_t s = 0; s < S; ++s) {
                for (std::size_t c = 0; c < d; ++c) o.at(s, c) = x.at(m, s, c);
            }
            return o;
        };
        std::vector<NumArray> amu;
        for (std::size_t s = 0; s < S; ++s) {
            amu.push_back(attn(slot_rows(q, s), slot_rows(k, s), dmu));
        }
        for (std::size_t m = 0; m < M; ++m) {
            const NumArray aau = attn(unit_rows(q, m), unit_rows(k, m), dau);
            for (std::size_t s = 0; s < S; ++s) {
                for (std::size_t c = 0; c < d; ++c) {
                    double sum = 0;
                    for (std::size_t sp = 0; sp < S; ++sp) {
                        for (std::size_t mp = 0; mp < M; ++mp) {
                            sum += aau.at(s, sp) * amu[sp].at(m, mp) * v.at(mp, sp, c);
                        }
                    }
                    if (std::abs(sum - out.at(m, s, c)) > 1e-12) return false;
                }
            }
        }
    }
    // S = 1: dpisa equals pisa exactly
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t M = 2 + rng.next_below(7), d = 1 + rng.next_below(8);
        const NumArray q = test::random_array({M, 1, d}, rng);
        const NumArray k = test::random_array({M, 1, d}, rng);
        const NumArray v = test::random_array({M, 1, d}, rng);
        NumArray dmu({M, M});
        for (std::size_t i = 0; i < M; ++i) {
            for (std::size_t j = 0; j < M; ++j) {
                dmu.at(i, j) = std::pow(0.9, std::abs(double(i) - double(j)));
            }
        }
        const NumArray a = dpisa(q, k, v, dmu, NumArray::full({1, 1}, 1.0));
        const NumArray b =
            pisa(NumArray({M, d}, q.vec()), NumArray({M, d}, k.vec()), NumArray({M, d}, v.vec()), dmu);
        if (a.vec() != b.vec()) return false;
    }
    return true;
}

// ---------------------------------------------------------------- 4
bool criterion_gradients() {
    CounterRng rng(204);
    test::Inputs in;
    in["a"] = test::random_array({3, 4}, rng);
    in["b"] = test::random_array({4, 5}, rng);
    in["c"] = test::random_array({3, 4}, rng);
    in["g"] = test::random_array({4}, rng, 0.3);
    in["v3"] = test::random_array({2, 3, 4}, rng);
    auto P = [](Tape& t, const test::Inputs& i, const char* n) { return t.param(n, i.at(n)); };
    const std::vector<test::GraphFn> primitive_graphs{
        [&](Tape& t, const test::Inputs& i) {
            return t.sum_all(t.gelu(t.matmul(P(t, i, "a"), P(t, i, "b"))));
        },
        [&](Tape& t, const test::Inputs& i) {
            const ValueRef a = P(t, i, "a"), c = P(t, i, "c");
            return t.sum_all(t.mul(t.add(a, t.scale(c, 0.7)), t.sub(a, c)));
        },
        [&](Tape& t, const test::Inputs& i) {
            return t.sum_all(t.gelu(t.add_rowvec(P(t, i, "a"), P(t, i, "g"))));
        },
        [&](Tape& t, const test::Inputs& i) {
            return t.sum_all(t.mul(t.softmax_rows(P(t, i, "a")), P(t, i, "c")));
        },
        [&](Tape& t, const test::Inputs& i) {
            return t.sum_all(t.mul(t.layer_norm(P(t, i, "a"), P(t, i, "g"),
                                                t.scale(P(t, i, "g"), 0.5), 1e-5),
                                   P(t, i, "c")));
        },
        [&](Tape& t, const test::Inputs& i) {
            return t.sum_all(t.clamp(t.softplus(t.gelu(P(t, i, "a"))), 0.05, 2.5));
        },
        [&](Tape& t, const test::Inputs& i) {
            const ValueRef tr = t.transpose2d(P(t, i, "a"));
            const ValueRef gr = t.gather_rows(tr, {3, 0, 0, 2});
            const ValueRef cc = t.concat_cols({gr, t.slice_cols(tr, 0, 3)});
            return t.sum_all(t.mul(cc, cc));
        },
        [&](Tape& t, const test::Inputs& i) {
            return t.sum_all(t.gelu(t.pad_rows(t.reshape(t.transpose01(P(t, i, "v3")), {6, 4}), 2)));
        },
        [&](Tape& t, const test::Inputs& i) {
            return t.sum_all(t.mul(t.repeat_row(P(t, i, "g"), 3), P(t, i, "a")));
        },
        [&](Tape& t, const test::Inputs& i) {
            NumArray decay({3, 3});
            for (std::size_t r = 0; r < 3; ++r) {
                for (std::size_t c = 0; c < 3; ++c) {
                    decay.at(r, c) = std::pow(0.85, std::abs(double(r) - double(c)));
                }
            }
            return t.sum_all(t.decayed_attention(t.reshape(P(t, i, "v3"), {2, 3, 4}),
                                                 t.reshape(t.scale(P(t, i, "v3"), 0.9), {2, 3, 4}),
                                                 t.reshape(t.gelu(P(t, i, "v3")), {2, 3, 4}), decay,
                                                 0.5));
        },
        [&](Tape& t, const test::Inputs& i) {
            return t.sum_all(t.gaussian_bits(P(t, i, "a"), t.scale(P(t, i, "c"), 0.5),
                                             t.clamp(t.softplus(P(t, i, "c")), 0.2, 8.0)));
        },
    };
    for (const auto& fn : primitive_graphs) {
        if (test::max_grad_error(fn, in, 20) >= 1e-4) return false;
    }

    // end-to-end rate-distortion loss on a 32x32 input at the default config
    Model model = init_model(StageConfig{}, 205);
    const MaskMap mask = mask_from_units(32, 32, {1, 1, 0, 1});
    NumArray img({32, 32, 3});
    for (double& v : img.vec()) v = rng.next_uniform();
    const std::size_t L = 3;
    NumArray z_noise({1, 64}), y_noise({L, 128});
    for (double& v : z_noise.vec()) v = rng.next_uniform() - 0.5;
    for (double& v : y_noise.vec()) v = rng.next_uniform() - 0.5;

    auto loss_fn = [&](ModelParams& params, GradMap* grads) {
        Tape tape;
        const TokenSeq y = encode_net(tape, img, mask, params, model.cfg);
        const HyperLatent hl = hyper_encode(tape, y, params, model.cfg);
        const ValueRef zn = tape.add(hl.z, tape.constant(z_noise));
        const SliceGaussians prior = prior_params(tape, 1, params, model.cfg);
        ValueRef bits = tape.sum_all(rate_bits(tape, zn, prior.mu, prior.sigma));
        const ValueRef ctx = hyper_decode(tape, zn, hl.true_len, y.list, params, model.cfg);
        std::vector<ValueRef> noisy;
        for (int i = 0; i < kNumSlices; ++i) {
            const SliceGaussians g = slice_params(tape, ctx, noisy, i, params, model.cfg);
            const ValueRef ys = tape.slice_cols(y.feats, static_cast<std::size_t>(i) * 32,
                                                static_cast<std::size_t>(i + 1) * 32);
            NumArray n({L, 32});
            for (std::size_t r = 0; r < L; ++r) {
                for (std::size_t c = 0; c < 32; ++c) {
                    n.at(r, c) = y_noise.at(r, static_cast<std::size_t>(i) * 32 + c);
                }
            }
            const ValueRef yn = tape.add(ys, tape.constant(n));
            bits = tape.add(bits, tape.sum_all(rate_bits(tape, yn, g.mu, g.sigma)));
            noisy.push_back(yn);
        }
        TokenSeq yhat{tape.concat_cols(noisy), y.list};
        const TokenSeq recon = decode_net_tokens(tape, yhat, params, model.cfg);
        const ValueRef target = tape.constant(gather_visible(img, mask));
        const ValueRef diff = tape.sub(recon.feats, target);
        const ValueRef dist = tape.scale(tape.sum_all(tape.mul(diff, diff)),
                                         1.0 / static_cast<double>(tape.value(diff).numel()));
        const ValueRef loss =
            tape.add(tape.scale(bits, 1.0 / (3 * 256.0)), tape.scale(dist, 0.01 * 65025.0));
        const double v = tape.value(loss)[0];
        if (grads) *grads = tape.backward(loss);
        return v;
    };
    GradMap grads;
    loss_fn(model.params, &grads);
    std::vector<std::string> names;
    for (const auto& [name, arr] : model.params.values) names.push_back(name);
    CounterRng pick(206);
    int checked = 0, attempts = 0;
    while (checked < 20 && attempts < 4000) {
        ++attempts;
        const std::string& name = names[pick.next_below(names.size())];
        const NumArray& g = grads.at(name);
        const std::size_t i = pick.next_below(g.numel());
        // central differences at h=1e-5 on a loss of this size have an
        // absolute noise floor near 5e-9; only coordinates whose gradient
        // clears it by a wide margin are measurable at the 1e-4 tolerance
        if (std::abs(g[i]) < 1e-3) continue;
        ModelParams& p = model.params;
        const double orig = p.at(name)[i];
        const double h = 1e-5;
        p.at(name)[i] = orig + h;
        const double fp = loss_fn(p, nullptr);
        p.at(name)[i] = orig - h;
        const double fm = loss_fn(p, nullptr);
        p.at(name)[i] = orig;
        const double fd = (fp - fm) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-6});
        if (std::abs(fd - g[i]) / denom >= 1e-4) return false;
        ++checked;
    }
    return checked == 20;
}

// ---------------------------------------------------------------- 5
bool criterion_entropy_coding() {
    CounterRng rng(207);
    std::size_t done = 0;
    while (done < 100000) {
        const std::size_t n = std::min<std::size_t>(1 + rng.next_below(2500), 100000 - done);
        std::vector<FrequencyTable> tables;
        std::vector<std::int32_t> syms;
        double est_bits = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t bins = 2 + rng.next_below(255);
            std::vector<double> pmf(bins);
            double tot = 0;
            for (double& p : pmf) {
                p = std::pow(rng.next_uniform() + 1e-9, 2.0);
                tot += p;
            }
            for (double& p : pmf) p /= tot;
            tables.push_back(quantize_pmf(pmf));
            const auto s = static_cast<std::int32_t>(rng.next_below(bins));
            syms.push_back(s);
            est_bits += -std::log2(static_cast<double>(tables.back().freq(s)) / kFreqTotal);
        }
        const std::vector<std::uint8_t> bytes = rc_encode(syms, tables);
        if (rc_decode(bytes, n, tables) != syms) return false;
        if (static_cast<double>(bytes.size()) > est_bits / 8.0 * 1.01 + 16.0) return false;
        done += n;
    }
    return true;
}

// ---------------------------------------------------------------- 6
bool criterion_bit_exactness() {
    Model model = init_model(StageConfig{}, 208);
    CounterRng rng(209);
    for (int trial = 0; trial < 50; ++trial) {
        const int h = 32 + 16 * static_cast<int>(rng.next_below(3));
        const int w = 32 + 16 * static_cast<int>(rng.next_below(3));
        NumArray img({static_cast<std::size_t>(h), static_cast<std::size_t>(w), 3});
        for (double& v : img.vec()) v = rng.next_uniform();
        const MaskMap m = random_mask(rng, h, w, 0.3 + 0.6 * rng.next_uniform());
        std::vector<std::uint8_t> pm(static_cast<std::size_t>(h) * w, 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int u = (y / 16) * m.units_w() + x / 16;
                pm[static_cast<std::size_t>(y) * w + x] = m.unit_visible[static_cast<std::size_t>(u)];
            }
        }
        CompressResult enc = compress(img, pm, model, static_cast<int>(rng.next_below(5)));
        const DecompressResult dec =
            decompress(BitstreamContainer::parse(enc.container.serialize()), model);
        if (dec.recon_padded.vec() != enc.recon_padded.vec()) return false;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int u = (y / 16) * m.units_w() + x / 16;
                if (m.unit_visible[static_cast<std::size_t>(u)]) continue;
                for (std::size_t c = 0; c < 3; ++c) {
                    if (dec.image.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) != 0.0) {
                        return false;
                    }
                }
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------- 7
bool criterion_masked_invariance() {
    Model model = init_model(StageConfig{}, 210);
    CounterRng rng(211);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = 48, w = 48;
        NumArray img({48, 48, 3});
        for (double& v : img.vec()) v = rng.next_uniform();
        MaskMap m = random_mask(rng, h, w, 0.5);
        if (m.visible_count() == m.unit_count()) m.unit_visible[0] = 0;  // keep a masked region
        std::vector<std::uint8_t> pm(static_cast<std::size_t>(h) * w, 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int u = (y / 16) * m.units_w() + x / 16;
                pm[static_cast<std::size_t>(y) * w + x] = m.unit_visible[static_cast<std::size_t>(u)];
            }
        }
        CompressResult a = compress(img, pm, model, 1);
        NumArray img2 = img;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int u = (y / 16) * m.units_w() + x / 16;
                if (m.unit_visible[static_cast<std::size_t>(u)]) continue;
                for (std::size_t c = 0; c < 3; ++c) {
                    img2.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) =
                        rng.next_normal() * 100.0;
                }
            }
        }
        CompressResult b = compress(img2, pm, model, 1);
        if (a.container.serialize() != b.container.serialize()) return false;
    }
    return true;
}

// ---------------------------------------------------------------- 8
bool criterion_flops_scaling(std::string& detail) {
    const auto t0 = Clock::now();
    const StageConfig cfg;
    const std::array<double, 4> ratios{0.2, 0.4, 0.6, 0.8};
    std::array<double, 4> totals{};
    for (std::size_t i = 0; i < 4; ++i) totals[i] = count_flops(cfg, 512, 512, ratios[i]).total();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        sx += ratios[i];
        sy += totals[i];
        sxx += ratios[i] * ratios[i];
        sxy += ratios[i] * totals[i];
    }
    const double a = (4 * sxy - sx * sy) / (4 * sxx - sx * sx);
    const double b = (sy - a * sx) / 4;
    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        ss_res += std::pow(totals[i] - (a * ratios[i] + b), 2);
        ss_tot += std::pow(totals[i] - sy / 4, 2);
    }
    const double r2 = 1.0 - ss_res / ss_tot;
    const double ratio = totals[0] / totals[3];
    char buf[160];
    std::snprintf(buf, sizeof buf, "R2=%.5f ratio(0.2/0.8)=%.4f totals(G)=%.2f/%.2f/%.2f/%.2f",
                  r2, ratio, totals[0] / 1e9, totals[1] / 1e9, totals[2] / 1e9, totals[3] / 1e9);
    detail = buf;
    return r2 > 0.99 && ratio >= 0.2 && ratio <= 0.35 && seconds_since(t0) < 1.0;
}

// ---------------------------------------------------------------- 9
bool criterion_loss_semantics() {
    CounterRng rng(212);
    const MaskMap mask = mask_from_units(32, 32, {1, 1, 0, 0});
    NumArray x({32, 32, 3});
    for (double& v : x.vec()) v = rng.next_uniform();

    // zero distortion on perfect visible reconstruction
    NumArray xhat = x;
    for (std::size_t y = 16; y < 32; ++y) {
        for (std::size_t c = 0; c < 32 * 3; ++c) xhat.vec()[(y * 32) * 3 + c] = -3.0;
    }
    if (rd_loss(x, xhat, mask, 0, 0, 0.01).distortion != 0.0) return false;

    // bpp arithmetic: 1024 bits over 512 visible pixels
    if (std::abs(rd_loss(x, x, mask, 1024, 0, 0.01).bpp - 2.0) > 1e-12) return false;

    // loss invariant to masked-region corruption
    NumArray a = x, b = x;
    for (std::size_t y = 16; y < 32; ++y) {
        for (std::size_t x2 = 0; x2 < 32; ++x2) {
            for (std::size_t c = 0; c < 3; ++c) {
                a.at(y, x2, c) = 0.0;
                b.at(y, x2, c) = rng.next_normal() * 50.0;
            }
        }
    }
    const RDLossReport ra = rd_loss(x, a, mask, 777, 111, 0.025);
    const RDLossReport rb = rd_loss(x, b, mask, 777, 111, 0.025);
    return ra.total == rb.total && ra.distortion == rb.distortion;
}

// ---------------------------------------------------------------- 10
bool criterion_toy_training(std::string& detail) {
    const auto t0 = Clock::now();
    // crafted 11-epoch stagnant sequence: exactly one reduction 1e-4 -> 3e-5
    TrainState sched;
    for (int e = 0; e < 11; ++e) plateau_schedule(sched, 1.0);
    if (std::abs(sched.lr - 3e-5) > 1e-18 || sched.stall_epochs != 0) return false;

    // sixteen synthetic 64x64 images: smooth gradients plus rectangles
    auto make_images = [](std::uint64_t seed) {
        CounterRng rng(seed);
        std::vector<NumArray> images;
        for (int i = 0; i < 16; ++i) {
            NumArray img({64, 64, 3});
            const double base = 0.2 + 0.6 * rng.next_uniform();
            const double gx = (rng.next_uniform() - 0.5) / 64.0, gy = (rng.next_uniform() - 0.5) / 64.0;
            for (std::size_t y = 0; y < 64; ++y) {
                for (std::size_t x = 0; x < 64; ++x) {
                    for (std::size_t c = 0; c < 3; ++c) {
                        img.at(y, x, c) = std::min(
                            1.0, std::max(0.0, base + gx * static_cast<double>(x) +
                                                   gy * static_cast<double>(y) +
                                                   0.05 * rng.next_normal()));
                    }
                }
            }
            for (int r = 0; r < 3; ++r) {
                const std::size_t y0 = rng.next_below(48), x0 = rng.next_below(48);
                const std::size_t sh = 8 + rng.next_below(16), sw = 8 + rng.next_below(16);
                const double v = rng.next_uniform();
                for (std::size_t y = y0; y < std::min<std::size_t>(64, y0 + sh); ++y) {
                    for (std::size_t x = x0; x < std::min<std::size_t>(64, x0 + sw); ++x) {
                        for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = v;
                    }
                }
            }
            images.push_back(std::move(img));
        }
        return images;
    };

    std::vector<double> initials, finals;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const std::vector<NumArray> images = make_images(seed);
        Model model = init_model(StageConfig{}, seed);
        TrainState state;
        AdamState adam;
        CounterRng rng(seed + 1000);
        double first = 0.0, tail = 0.0;
        int tail_n = 0;
        for (int step = 0; step < 200; ++step) {
            std::vector<NumArray> batch;
            std::vector<MaskMap> masks;
            for (int b = 0; b < 4; ++b) {
                batch.push_back(images[rng.next_below(images.size())]);
                masks.push_back(gen_group_mask(64, 64, 0.3 + 0.5 * rng.next_uniform(),
                                               rng.next_u64()));
            }
            const StepReport rep = train_step(batch, masks, model, 0.01, state, adam, rng);
            if (step == 0) first = rep.loss;
            if (step >= 190) {
                tail += rep.loss;
                ++tail_n;
            }
        }
        initials.push_back(first);
        finals.push_back(tail / tail_n);
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    const double med_init = median(initials), med_final = median(finals);
    char buf[160];
    std::snprintf(buf, sizeof buf, "median initial=%.3f median final=%.3f ratio=%.3f time=%.0fs",
                  med_init, med_final, med_final / med_init, seconds_since(t0));
    detail = buf;
    return med_final <= 0.8 * med_init && seconds_since(t0) < 600.0;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<bool(std::string&)> run;
    };
    auto plain = [](bool (*fn)()) {
        return [fn](std::string&) { return fn(); };
    };
    const std::vector<Criterion> criteria{
        {"1 index algebra (1000 random masks, sizes 32..512)", plain(criterion_index_algebra)},
        {"2 decay sampling equals full-grid restriction (500 cases)", plain(criterion_decay_sampling)},
        {"3 attention matches oracles to 1e-12; dpisa==pisa at S=1", plain(criterion_attention)},
        {"4 gradient suite (primitives + end-to-end rd loss)", plain(criterion_gradients)},
        {"5 range coder lossless on 1e5 pairs with size bound", plain(criterion_entropy_coding)},
        {"6 end-to-end bit-exactness on 50 image/mask pairs", plain(criterion_bit_exactness)},
        {"7 masked-content invariance (20 trials)", plain(criterion_masked_invariance)},
        {"8 FLOPs linear scaling at 512x512", criterion_flops_scaling},
        {"9 masked loss semantics", plain(criterion_loss_semantics)},
        {"10 toy training improves loss; plateau reduces lr once", criterion_toy_training},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = Clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::cout << (ok ? "[PASS] " : "[FAIL] ") << c.name;
        if (!detail.empty()) std::cout << "  (" << detail << ")";
        std::cout << "  [" << std::fixed << std::setprecision(1) << seconds_since(t0) << "s]\n";
        std::cout.unsetf(std::ios::fixed);
        failures += ok ? 0 : 1;
    }
    std::cout << (failures == 0 ? "acceptance: all criteria passed\n"
                                : "acceptance: FAILURES present\n");
    return failures;
}
