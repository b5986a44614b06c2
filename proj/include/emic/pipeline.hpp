#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "emic/container.hpp"
#include "emic/entropy_model.hpp"
#include "emic/flops.hpp"

namespace emic {

// Rate points selectable in the bitstream's 8-bit lambda field.
inline constexpr std::array<double, 5> kLambdaSet{0.004, 0.01, 0.025, 0.05, 0.1};

struct Model {
    StageConfig cfg;
    ModelParams params;
    std::uint32_t id{0};  // FNV-1a of the serialized parameter file
};

Model init_model(const StageConfig& cfg, std::uint64_t seed);
Model load_model(const std::string& path, const StageConfig& cfg = StageConfig{});
void save_model(Model& model, const std::string& path);  // refreshes model.id

struct CompressResult {
    BitstreamContainer container;
    NumArray recon_padded;  // encoder-side reconstruction, raw doubles
    MaskMap mask;
    double actual_bits_y{0};
    double actual_bits_z{0};
    double est_bits_y{0};
    double est_bits_z{0};
    std::vector<double> stream_est_bits;      // z stream, then one per y slice
    std::vector<std::uint32_t> table_hashes;  // z tables + per-slice y tables
};

// image: HxWx3 doubles in [0,1] at original dims; pixel_mask: HxW 0/1.
CompressResult compress(const NumArray& image, const std::vector<std::uint8_t>& pixel_mask,
                        const Model& model, int lambda_index);

struct DecompressResult {
    NumArray image;         // original dims, raw doubles, masked region zero
    NumArray recon_padded;  // padded dims, for bit-exactness checks
    MaskMap mask;
    std::vector<std::uint32_t> table_hashes;
};

DecompressResult decompress(const BitstreamContainer& container, const Model& model);

struct RDLossReport {
    double bpp{0};         // (bits_y + bits_z) / visible pixels
    double distortion{0};  // mean squared error over visible components
    double lambda{0};
    double total{0};       // bpp + lambda * distortion * 255^2
};

// x and xhat at the mask's padded dims.
RDLossReport rd_loss(const NumArray& x, const NumArray& xhat, const MaskMap& mask, double bits_y,
                     double bits_z, double lambda);

double masked_psnr(const NumArray& x, const NumArray& xhat, const MaskMap& mask);

struct TrainState {
    std::int64_t step{0};
    int epoch{0};
    double lr{1e-4};
    double best_loss{1e300};
    int stall_epochs{0};
};

struct StepReport {
    double loss{0};
    double bpp{0};
    double distortion{0};
};

// One optimizer step over a batch: noise-mode quantization, masked
// rate-distortion loss, backward, Adam. Deterministic given the generator.
StepReport train_step(const std::vector<NumArray>& images, const std::vector<MaskMap>& masks,
                      Model& model, double lambda, TrainState& state, AdamState& adam,
                      CounterRng& noise_rng);

// ReduceLROnPlateau: improvement threshold 1e-4, patience 10, factor 0.3.
void plateau_schedule(TrainState& state, double epoch_loss);

NumArray crop_image(const NumArray& padded, int height_px, int width_px);

}  // namespace emic
