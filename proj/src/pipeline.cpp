#include "emic/pipeline.hpp"

#include <cmath>
#include <functional>

#include "emic/range_coder.hpp"

namespace emic {

namespace {

NumArray slice_cols_array(const NumArray& x, std::size_t c0, std::size_t c1) {
    const std::size_t L = x.extent(0), D = x.extent(1), W = c1 - c0;
    NumArray out({L, W});
    for (std::size_t i = 0; i < L; ++i) {
        std::copy_n(x.data() + i * D + c0, W, out.data() + i * W);
    }
    return out;
}

// Per-channel prior tables for the hyper latent.
struct PriorTables {
    NumArray mu;     // [Dz]
    NumArray sigma;  // [Dz]
    std::vector<FrequencyTable> pool;
    std::vector<std::uint32_t> ids;  // channel pattern over rows*Dz symbols
};

PriorTables prior_tables(const ModelParams& params, std::size_t rows) {
    PriorTables t;
    t.mu = params.at("prior.mu");
    t.sigma = clamp(softplus(params.at("prior.sigma_raw")), kSigmaMin, kSigmaMax);
    const std::size_t dz = t.mu.numel();
    t.pool.reserve(dz);
    for (std::size_t c = 0; c < dz; ++c) {
        t.pool.push_back(quantize_pmf(gaussian_pmf(0.0, t.sigma[c])));
    }
    t.ids.resize(rows * dz);
    for (std::size_t i = 0; i < t.ids.size(); ++i) {
        t.ids[i] = static_cast<std::uint32_t>(i % dz);
    }
    return t;
}

double symbol_bits(std::int32_t k, double sigma) {
    const double lo = k == -kSymbolSupport ? -HUGE_VAL : (k - 0.5) / sigma;
    const double hi = k == kSymbolSupport ? HUGE_VAL : (k + 0.5) / sigma;
    return -std::log2(std::max(normal_cdf_diff(lo, hi), 1e-300));
}

std::vector<FrequencyTable> elementwise_tables(const NumArray& sigma) {
    std::vector<FrequencyTable> tables;
    tables.reserve(sigma.numel());
    for (std::size_t i = 0; i < sigma.numel(); ++i) {
        tables.push_back(quantize_pmf(gaussian_pmf(0.0, sigma[i])));
    }
    return tables;
}

std::uint32_t tables_hash(const std::vector<FrequencyTable>& tables) {
    std::uint32_t h = 0x811C9DC5u;
    for (const auto& t : tables) {
        const std::uint32_t th = table_hash(t);
        for (int b = 0; b < 4; ++b) {
            h ^= (th >> (8 * b)) & 0xFF;
            h *= 0x01000193u;
        }
    }
    return h;
}

// Shared encoder/decoder path from quantized hyper latent to yhat. The
// callback supplies each slice's symbols (encoder: rounding against mu;
// decoder: range decoding) given the slice's tables.
struct LatentsOut {
    NumArray yhat;
    double est_bits{0};
    std::vector<double> slice_est_bits;
    std::vector<std::uint32_t> table_hashes;
};

using SliceSymbolsFn = std::function<std::vector<std::int32_t>(
    int slice, const NumArray& mu, const std::vector<FrequencyTable>& tables)>;

LatentsOut reconstruct_y(Tape& tape, const NumArray& zhat, std::size_t true_len,
                         const IndexList& y_list, const Model& model,
                         const SliceSymbolsFn& symbols_for) {
    const ValueRef ctx =
        hyper_decode(tape, tape.constant(zhat), true_len, y_list, model.params, model.cfg);
    const std::size_t w = static_cast<std::size_t>(model.cfg.latent_channels) / kNumSlices;
    LatentsOut out;
    std::vector<ValueRef> decoded;
    std::vector<NumArray> slices;
    for (int i = 0; i < kNumSlices; ++i) {
        const SliceGaussians g = slice_params(tape, ctx, decoded, i, model.params, model.cfg);
        const NumArray& mu = tape.value(g.mu);
        const NumArray& sigma = tape.value(g.sigma);
        const std::vector<FrequencyTable> tables = elementwise_tables(sigma);
        const std::vector<std::int32_t> syms = symbols_for(i, mu, tables);
        double slice_bits = 0.0;
        for (std::size_t e = 0; e < syms.size(); ++e) slice_bits += symbol_bits(syms[e], sigma[e]);
        out.est_bits += slice_bits;
        out.slice_est_bits.push_back(slice_bits);
        out.table_hashes.push_back(tables_hash(tables));
        NumArray yhat_i = dequantize_symbols(syms, mu);
        decoded.push_back(tape.constant(yhat_i));
        slices.push_back(std::move(yhat_i));
    }
    const std::size_t L = slices[0].extent(0);
    out.yhat = NumArray({L, w * kNumSlices});
    for (std::size_t i = 0; i < slices.size(); ++i) {
        for (std::size_t r = 0; r < L; ++r) {
            std::copy_n(slices[i].data() + r * w, w, out.yhat.data() + r * w * kNumSlices + i * w);
        }
    }
    return out;
}

void validate_model_for_cfg(const Model& model) {
    const auto& p = model.params;
    if (!p.has("embed.w") || !p.has("prior.mu")) {
        throw DataError("model: parameter set incomplete");
    }
    if (p.at("embed.w").extent(1) != static_cast<std::size_t>(model.cfg.base_channels) ||
        p.at("prior.mu").numel() != static_cast<std::size_t>(model.cfg.latent_channels) / 2) {
        throw DataError("model: parameters do not match the stage configuration");
    }
}

}  // namespace

Model init_model(const StageConfig& cfg, std::uint64_t seed) {
    Model m;
    m.cfg = cfg;
    m.params = init_codec_params(cfg, seed);
    add_entropy_params(cfg, m.params);
    m.id = fnv1a32(m.params.serialize());
    return m;
}

Model load_model(const std::string& path, const StageConfig& cfg) {
    Model m;
    m.cfg = cfg;
    m.params = ModelParams::load(path);
    m.id = fnv1a32(m.params.serialize());
    validate_model_for_cfg(m);
    return m;
}

void save_model(Model& model, const std::string& path) {
    model.params.save(path);
    model.id = fnv1a32(model.params.serialize());
}

CompressResult compress(const NumArray& image, const std::vector<std::uint8_t>& pixel_mask,
                        const Model& model, int lambda_index) {
    if (lambda_index < 0 || lambda_index >= static_cast<int>(kLambdaSet.size())) {
        throw ConfigError("compress: lambda index out of range");
    }
    if (image.rank() != 3 || image.extent(2) != 3) throw DimError("compress: expected HxWx3 image");
    const int h = static_cast<int>(image.extent(0)), w = static_cast<int>(image.extent(1));
    if (h < kMaskUnitPx || w < kMaskUnitPx) throw DataError("compress: image smaller than 16x16");
    validate_model_for_cfg(model);

    CompressResult res;
    res.mask = build_mask(pixel_mask, h, w);
    if (res.mask.height_px > 0xFFFF || res.mask.width_px > 0xFFFF) {
        throw DataError("compress: image dimensions exceed 65535");
    }
    const NumArray padded = pad_image_to_units(image);

    Tape tape;
    const TokenSeq y = encode_net(tape, padded, res.mask, model.params, model.cfg);
    const HyperLatent hl = hyper_encode(tape, y, model.params, model.cfg);
    const NumArray& z = tape.value(hl.z);

    // hyper latent: factorized prior, one table per channel
    const std::size_t dz = z.extent(1);
    const PriorTables pt = prior_tables(model.params, z.extent(0));
    std::vector<std::int32_t> z_syms(z.numel());
    NumArray zhat(z.shape());
    for (std::size_t i = 0; i < z.numel(); ++i) {
        const std::size_t c = i % dz;
        double k = std::round(z[i] - pt.mu[c]);
        k = std::min(std::max(k, -127.0), 127.0);
        z_syms[i] = static_cast<std::int32_t>(k);
        zhat[i] = k + pt.mu[c];
        res.est_bits_z += symbol_bits(z_syms[i], pt.sigma[c]);
    }
    std::vector<std::int32_t> z_bins(z_syms.size());
    for (std::size_t i = 0; i < z_syms.size(); ++i) z_bins[i] = z_syms[i] + kSymbolSupport;
    res.container.z_stream = rc_encode(z_bins, pt.pool, pt.ids);
    res.table_hashes.push_back(tables_hash(pt.pool));

    // y slices: quantize against the autoregressive mu, then range code
    const std::size_t sw = static_cast<std::size_t>(model.cfg.latent_channels) / kNumSlices;
    const NumArray& yv = tape.value(y.feats);
    res.container.y_streams.resize(kNumSlices);
    LatentsOut lat = reconstruct_y(
        tape, zhat, hl.true_len, y.list, model,
        [&](int slice, const NumArray& mu, const std::vector<FrequencyTable>& tables) {
            const NumArray ys = slice_cols_array(yv, static_cast<std::size_t>(slice) * sw,
                                                 static_cast<std::size_t>(slice + 1) * sw);
            const QuantizedTensor q = quantize_symbols(ys, mu);
            std::vector<std::int32_t> bins(q.symbols.size());
            for (std::size_t i = 0; i < bins.size(); ++i) bins[i] = q.symbols[i] + kSymbolSupport;
            res.container.y_streams[static_cast<std::size_t>(slice)] = rc_encode(bins, tables);
            return q.symbols;
        });
    res.est_bits_y = lat.est_bits;
    res.stream_est_bits.push_back(res.est_bits_z);
    res.stream_est_bits.insert(res.stream_est_bits.end(), lat.slice_est_bits.begin(),
                               lat.slice_est_bits.end());
    res.table_hashes.insert(res.table_hashes.end(), lat.table_hashes.begin(),
                            lat.table_hashes.end());

    // encoder-side reconstruction (the decoder must reproduce this exactly)
    TokenSeq yhat_seq;
    yhat_seq.feats = tape.constant(lat.yhat);
    yhat_seq.list = y.list;
    res.recon_padded =
        decode_net(tape, yhat_seq, model.params, model.cfg, res.mask.height_px, res.mask.width_px);

    res.container.set_mask(res.mask);
    res.container.model_id = model.id;
    res.container.lambda_index = static_cast<std::uint8_t>(lambda_index);
    res.actual_bits_z = static_cast<double>(res.container.z_stream.size()) * 8.0;
    for (const auto& s : res.container.y_streams) {
        res.actual_bits_y += static_cast<double>(s.size()) * 8.0;
    }
    return res;
}

DecompressResult decompress(const BitstreamContainer& container, const Model& model) {
    validate_model_for_cfg(model);
    if (container.model_id != model.id) {
        throw DataError("decompress: container was produced by a different model");
    }
    if (container.y_streams.size() != kNumSlices) {
        throw DataError("decompress: unexpected y segment count");
    }
    DecompressResult res;
    res.mask = container.mask();
    IndexList y_list = initial_index_list(res.mask);
    for (int i = 0; i < 3; ++i) y_list = merge_indices(y_list);

    const std::size_t L = y_list.size();
    const std::size_t padded_len = (L + 3) / 4 * 4;
    const std::size_t dz = static_cast<std::size_t>(model.cfg.latent_channels) / 2;
    const std::size_t z_rows = padded_len / 4;

    const PriorTables pt = prior_tables(model.params, z_rows);
    const std::vector<std::int32_t> z_bins =
        rc_decode(container.z_stream, z_rows * dz, pt.pool, pt.ids);
    NumArray zhat({z_rows, dz});
    for (std::size_t i = 0; i < zhat.numel(); ++i) {
        zhat[i] = static_cast<double>(z_bins[i] - kSymbolSupport) + pt.mu[i % dz];
    }
    res.table_hashes.push_back(tables_hash(pt.pool));

    Tape tape;
    LatentsOut lat = reconstruct_y(
        tape, zhat, L, y_list, model,
        [&](int slice, const NumArray& mu, const std::vector<FrequencyTable>& tables) {
            const std::vector<std::int32_t> bins =
                rc_decode(container.y_streams[static_cast<std::size_t>(slice)], mu.numel(), tables);
            std::vector<std::int32_t> syms(bins.size());
            for (std::size_t i = 0; i < bins.size(); ++i) syms[i] = bins[i] - kSymbolSupport;
            return syms;
        });
    res.table_hashes.insert(res.table_hashes.end(), lat.table_hashes.begin(),
                            lat.table_hashes.end());

    TokenSeq yhat_seq;
    yhat_seq.feats = tape.constant(lat.yhat);
    yhat_seq.list = y_list;
    res.recon_padded =
        decode_net(tape, yhat_seq, model.params, model.cfg, res.mask.height_px, res.mask.width_px);
    res.image = crop_image(res.recon_padded, container.height, container.width);
    return res;
}

RDLossReport rd_loss(const NumArray& x, const NumArray& xhat, const MaskMap& mask, double bits_y,
                     double bits_z, double lambda) {
    if (!x.same_shape(xhat) || x.rank() != 3 ||
        x.extent(0) != static_cast<std::size_t>(mask.height_px) ||
        x.extent(1) != static_cast<std::size_t>(mask.width_px)) {
        throw DimError("rd_loss: images must match the mask's padded dims");
    }
    const double visible_px =
        static_cast<double>(mask.visible_count()) * kMaskUnitPx * kMaskUnitPx;
    if (visible_px == 0) throw DataError("rd_loss: no visible pixels");
    double se = 0.0;
    const int uw = mask.units_w();
    for (int u = 0; u < mask.unit_count(); ++u) {
        if (!mask.unit_visible[static_cast<std::size_t>(u)]) continue;
        const std::size_t y0 = static_cast<std::size_t>(u / uw) * kMaskUnitPx;
        const std::size_t x0 = static_cast<std::size_t>(u % uw) * kMaskUnitPx;
        for (std::size_t dy = 0; dy < kMaskUnitPx; ++dy) {
            for (std::size_t dx = 0; dx < kMaskUnitPx; ++dx) {
                for (std::size_t c = 0; c < 3; ++c) {
                    const double d = x.at(y0 + dy, x0 + dx, c) - xhat.at(y0 + dy, x0 + dx, c);
                    se += d * d;
                }
            }
        }
    }
    RDLossReport r;
    r.lambda = lambda;
    r.distortion = se / (visible_px * 3.0);
    r.bpp = (bits_y + bits_z) / visible_px;
    r.total = r.bpp + lambda * r.distortion * 255.0 * 255.0;
    return r;
}

double masked_psnr(const NumArray& x, const NumArray& xhat, const MaskMap& mask) {
    const RDLossReport r = rd_loss(x, xhat, mask, 0.0, 0.0, 0.0);
    if (r.distortion == 0.0) return 100.0;
    return 10.0 * std::log10(1.0 / r.distortion);
}

StepReport train_step(const std::vector<NumArray>& images, const std::vector<MaskMap>& masks,
                      Model& model, double lambda, TrainState& state, AdamState& adam,
                      CounterRng& noise_rng) {
    bool known = false;
    for (double l : kLambdaSet) known = known || l == lambda;
    if (!known) throw ConfigError("train_step: lambda not in the configured set");
    if (images.empty() || images.size() != masks.size()) {
        throw UsageError("train_step: batch images/masks mismatch");
    }
    const std::size_t sw = static_cast<std::size_t>(model.cfg.latent_channels) / kNumSlices;
    const double inv_batch = 1.0 / static_cast<double>(images.size());
    GradMap accum;
    StepReport rep;
    for (std::size_t b = 0; b < images.size(); ++b) {
        const MaskMap& mask = masks[b];
        const NumArray padded = pad_image_to_units(images[b]);
        Tape tape;
        const TokenSeq y = encode_net(tape, padded, mask, model.params, model.cfg);
        const HyperLatent hl = hyper_encode(tape, y, model.params, model.cfg);

        const NumArray& zv = tape.value(hl.z);
        NumArray z_noise(zv.shape());
        for (double& v : z_noise.vec()) v = noise_rng.next_uniform() - 0.5;
        const ValueRef z_noisy = tape.add(hl.z, tape.constant(z_noise));
        const SliceGaussians prior = prior_params(tape, zv.extent(0), model.params, model.cfg);
        ValueRef bits = tape.sum_all(rate_bits(tape, z_noisy, prior.mu, prior.sigma));

        const ValueRef ctx =
            hyper_decode(tape, z_noisy, hl.true_len, y.list, model.params, model.cfg);
        std::vector<ValueRef> noisy_slices;
        for (int i = 0; i < kNumSlices; ++i) {
            const SliceGaussians g =
                slice_params(tape, ctx, noisy_slices, i, model.params, model.cfg);
            const ValueRef ys = tape.slice_cols(y.feats, static_cast<std::size_t>(i) * sw,
                                                static_cast<std::size_t>(i + 1) * sw);
            NumArray noise({tape.value(ys).extent(0), sw});
            for (double& v : noise.vec()) v = noise_rng.next_uniform() - 0.5;
            const ValueRef y_noisy = tape.add(ys, tape.constant(noise));
            bits = tape.add(bits, tape.sum_all(rate_bits(tape, y_noisy, g.mu, g.sigma)));
            noisy_slices.push_back(y_noisy);
        }
        TokenSeq yhat{tape.concat_cols(noisy_slices), y.list};
        const TokenSeq recon = decode_net_tokens(tape, yhat, model.params, model.cfg);
        const ValueRef target = tape.constant(gather_visible(padded, mask));
        const ValueRef diff = tape.sub(recon.feats, target);
        const double n_comp = static_cast<double>(tape.value(diff).numel());
        const ValueRef dist = tape.scale(tape.sum_all(tape.mul(diff, diff)), 1.0 / n_comp);

        const double visible_px = static_cast<double>(mask.visible_count()) * 256.0;
        const ValueRef bpp = tape.scale(bits, 1.0 / visible_px);
        const ValueRef loss =
            tape.add(bpp, tape.scale(dist, lambda * 255.0 * 255.0));

        const double loss_v = tape.value(loss)[0];
        if (!std::isfinite(loss_v)) {
            throw NumericError("train_step: non-finite loss at step " + std::to_string(state.step));
        }
        rep.loss += loss_v * inv_batch;
        rep.bpp += tape.value(bpp)[0] * inv_batch;
        rep.distortion += tape.value(dist)[0] * inv_batch;

        GradMap g = tape.backward(tape.scale(loss, inv_batch));
        for (auto& [name, grad] : g) {
            auto it = accum.find(name);
            if (it == accum.end()) {
                accum.emplace(name, std::move(grad));
            } else {
                for (std::size_t i = 0; i < grad.numel(); ++i) it->second[i] += grad[i];
            }
        }
    }
    adam_step(model.params, full_grads(model.params, std::move(accum)), adam, state.lr);
    state.step += 1;
    return rep;
}

void plateau_schedule(TrainState& state, double epoch_loss) {
    state.epoch += 1;
    if (state.best_loss - epoch_loss > 1e-4) {
        state.best_loss = epoch_loss;
        state.stall_epochs = 0;
        return;
    }
    state.stall_epochs += 1;
    if (state.stall_epochs >= 10) {
        state.lr *= 0.3;
        state.stall_epochs = 0;
    }
}

NumArray crop_image(const NumArray& padded, int height_px, int width_px) {
    if (padded.rank() != 3) throw DimError("crop_image: expected HxWx3");
    const std::size_t h = static_cast<std::size_t>(height_px), w = static_cast<std::size_t>(width_px);
    if (h > padded.extent(0) || w > padded.extent(1)) throw DimError("crop_image: crop exceeds dims");
    if (h == padded.extent(0) && w == padded.extent(1)) return padded;
    NumArray out({h, w, 3});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = padded.at(y, x, c);
        }
    }
    return out;
}

}  // namespace emic
