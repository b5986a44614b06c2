#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "emic/netpbm.hpp"
#include "emic/pipeline.hpp"
#include "emic/selftest.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw emic::DataError("cannot open: " + path);
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw emic::DataError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw emic::DataError("write failed: " + path);
}

void require_exists(const std::string& path) {
    if (!fs::exists(path)) throw emic::DataError("file not found: " + path);
}

int worker_count() {
    if (const char* env = std::getenv("EMIC_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

emic::Model load_model_file(const std::string& path) {
    require_exists(path);
    return emic::load_model(path);
}

struct RoundtripLine {
    std::string text;
};

RoundtripLine run_roundtrip_one(const std::string& input, const std::string& mask_path,
                                const emic::Model& model, int lambda_index) {
    const emic::NumArray img = emic::read_ppm(input);
    const emic::PixelMask pm = emic::read_pgm_mask(mask_path);
    if (pm.height != static_cast<int>(img.extent(0)) || pm.width != static_cast<int>(img.extent(1))) {
        throw emic::DataError("mask dimensions do not match image: " + mask_path);
    }
    emic::CompressResult enc = emic::compress(img, pm.data, model, lambda_index);
    const emic::BitstreamContainer parsed =
        emic::BitstreamContainer::parse(enc.container.serialize());
    const emic::DecompressResult dec = emic::decompress(parsed, model);
    const bool bitexact = dec.recon_padded.vec() == enc.recon_padded.vec();
    const emic::NumArray padded = emic::pad_image_to_units(img);
    const emic::RDLossReport rd =
        emic::rd_loss(padded, dec.recon_padded, enc.mask, enc.actual_bits_y, enc.actual_bits_z,
                      emic::kLambdaSet[static_cast<std::size_t>(lambda_index)]);
    const double psnr = emic::masked_psnr(padded, dec.recon_padded, enc.mask);
    std::ostringstream os;
    os << "input=" << input << " bpp=" << rd.bpp << " masked_psnr_db=" << psnr
       << " BITEXACT: " << (bitexact ? "yes" : "no");
    RoundtripLine line{os.str()};
    if (!bitexact) throw emic::DataError(line.text + " (round trip mismatch)");
    return line;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"emic: masked-image codec over visible patches"};
    app.require_subcommand(1);

    // encode
    auto* enc = app.add_subcommand("encode", "compress a PPM image under a PGM mask");
    std::string enc_input, enc_mask, enc_model, enc_output;
    int enc_lambda = 1;
    enc->add_option("--input", enc_input, "input image (.ppm)")->required();
    enc->add_option("--mask", enc_mask, "pixel mask (.pgm, 0=masked)")->required();
    enc->add_option("--model", enc_model, "parameter file (.empw)")->required();
    enc->add_option("--lambda-index", enc_lambda, "index into the lambda set")
        ->check(CLI::Range(0, 4));
    enc->add_option("--output", enc_output, "output bitstream (.emic)")->required();

    // decode
    auto* dec = app.add_subcommand("decode", "decompress a bitstream");
    std::string dec_input, dec_model, dec_output;
    dec->add_option("--input", dec_input, "input bitstream (.emic)")->required();
    dec->add_option("--model", dec_model, "parameter file (.empw)")->required();
    dec->add_option("--output", dec_output, "output image (.ppm)")->required();

    // roundtrip
    auto* rt = app.add_subcommand("roundtrip", "encode, decode and verify bit-exactness");
    std::vector<std::string> rt_inputs;
    std::string rt_mask, rt_model, rt_output;
    int rt_lambda = 1;
    rt->add_option("--input", rt_inputs, "input image(s) (.ppm)")->required();
    rt->add_option("--mask", rt_mask, "pixel mask (.pgm)")->required();
    rt->add_option("--model", rt_model, "parameter file (.empw)")->required();
    rt->add_option("--lambda-index", rt_lambda, "index into the lambda set")
        ->check(CLI::Range(0, 4));
    rt->add_option("--output", rt_output, "write the first reconstruction here (.ppm)");

    // maskgen
    auto* mg = app.add_subcommand("maskgen", "generate a random group mask");
    int mg_w = 512, mg_h = 512;
    double mg_ratio = 0.4;
    std::uint64_t mg_seed = 0;
    std::string mg_output;
    mg->add_option("--width", mg_w, "mask width in pixels")->required();
    mg->add_option("--height", mg_h, "mask height in pixels")->required();
    mg->add_option("--ratio", mg_ratio, "target visible fraction (0,1]")->required();
    mg->add_option("--seed", mg_seed, "generator seed");
    mg->add_option("--output", mg_output, "output mask (.pgm)")->required();

    // flops
    auto* fl = app.add_subcommand("flops", "analytic compute cost for a mask or ratio");
    int fl_w = 512, fl_h = 512;
    double fl_ratio = -1.0;
    std::string fl_mask, fl_csv;
    fl->add_option("--width", fl_w, "image width in pixels");
    fl->add_option("--height", fl_h, "image height in pixels");
    fl->add_option("--visible-ratio", fl_ratio, "visible unit fraction");
    fl->add_option("--mask", fl_mask, "pixel mask (.pgm) instead of a ratio");
    fl->add_option("--csv", fl_csv, "also write per-item counts as CSV");

    // train
    auto* tr = app.add_subcommand("train", "toy training loop over a directory of PPMs");
    std::string tr_data, tr_output;
    double tr_lambda = 0.01;
    int tr_steps = 200, tr_batch = 4;
    std::uint64_t tr_seed = 0;
    tr->add_option("--data", tr_data, "directory of .ppm training images")->required();
    tr->add_option("--lambda", tr_lambda, "rate-distortion tradeoff (from the lambda set)");
    tr->add_option("--steps", tr_steps, "optimizer steps");
    tr->add_option("--batch", tr_batch, "images per step");
    tr->add_option("--seed", tr_seed, "generator seed");
    tr->add_option("--output", tr_output, "where to save the trained model (.empw)")->required();

    auto* st = app.add_subcommand("selftest", "run the module invariant suites");
    (void)st;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    if (app.got_subcommand("selftest")) {
        return emic::run_selftest(std::cout) == 0 ? kExitOk : kExitUsage;
    }

    if (app.got_subcommand("encode")) {
        require_exists(enc_input);
        require_exists(enc_mask);
        emic::Model model = load_model_file(enc_model);
        const emic::NumArray img = emic::read_ppm(enc_input);
        const emic::PixelMask pm = emic::read_pgm_mask(enc_mask);
        if (pm.height != static_cast<int>(img.extent(0)) ||
            pm.width != static_cast<int>(img.extent(1))) {
            throw emic::DataError("mask dimensions do not match image: " + enc_mask);
        }
        emic::CompressResult res = emic::compress(img, pm.data, model, enc_lambda);
        const std::vector<std::uint8_t> bytes = res.container.serialize();
        write_file(enc_output, bytes);
        const double visible_px = static_cast<double>(res.mask.visible_count()) * 256.0;
        const double payload = res.actual_bits_y + res.actual_bits_z;
        std::cout << "visible_units=" << res.mask.visible_count() << " payload_bits=" << payload
                  << " header_bits=" << static_cast<double>(bytes.size()) * 8.0 - payload
                  << " bpp=" << payload / visible_px
                  << " est_bits=" << (res.est_bits_y + res.est_bits_z) << "\n";
        return kExitOk;
    }

    if (app.got_subcommand("decode")) {
        require_exists(dec_input);
        emic::Model model = load_model_file(dec_model);
        const emic::BitstreamContainer c = emic::BitstreamContainer::parse(read_file(dec_input));
        const emic::DecompressResult res = emic::decompress(c, model);
        emic::write_ppm(dec_output, res.image);
        std::cout << "height=" << c.height << " width=" << c.width
                  << " visible_units=" << res.mask.visible_count() << "\n";
        return kExitOk;
    }

    if (app.got_subcommand("roundtrip")) {
        for (const auto& p : rt_inputs) require_exists(p);
        require_exists(rt_mask);
        emic::Model model = load_model_file(rt_model);
        const int workers = std::min<int>(worker_count(), static_cast<int>(rt_inputs.size()));
        std::vector<RoundtripLine> lines(rt_inputs.size());
        std::vector<std::string> errors(rt_inputs.size());
        std::atomic<std::size_t> next{0};
        auto work = [&]() {
            for (std::size_t i = next.fetch_add(1); i < rt_inputs.size(); i = next.fetch_add(1)) {
                try {
                    lines[i] = run_roundtrip_one(rt_inputs[i], rt_mask, model, rt_lambda);
                } catch (const std::exception& e) {
                    errors[i] = e.what();
                }
            }
        };
        if (workers <= 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < workers; ++t) pool.emplace_back(work);
            for (auto& t : pool) t.join();
        }
        bool failed = false;
        for (std::size_t i = 0; i < rt_inputs.size(); ++i) {
            if (!errors[i].empty()) {
                std::cerr << "error: " << errors[i] << "\n";
                failed = true;
            } else {
                std::cout << lines[i].text << "\n";
            }
        }
        if (!failed && !rt_output.empty()) {
            const emic::DecompressResult res = emic::decompress(
                emic::BitstreamContainer::parse(
                    emic::compress(emic::read_ppm(rt_inputs[0]),
                                   emic::read_pgm_mask(rt_mask).data, model, rt_lambda)
                        .container.serialize()),
                model);
            emic::write_ppm(rt_output, res.image);
        }
        return failed ? kExitData : kExitOk;
    }

    if (app.got_subcommand("maskgen")) {
        const emic::MaskMap mask = emic::gen_group_mask(mg_h, mg_w, mg_ratio, mg_seed);
        emic::PixelMask pm;
        pm.height = mg_h;
        pm.width = mg_w;
        pm.data.assign(static_cast<std::size_t>(mg_h) * mg_w, 0);
        for (int y = 0; y < mg_h; ++y) {
            for (int x = 0; x < mg_w; ++x) {
                const int u = (y / emic::kMaskUnitPx) * mask.units_w() + x / emic::kMaskUnitPx;
                pm.data[static_cast<std::size_t>(y) * mg_w + x] =
                    mask.unit_visible[static_cast<std::size_t>(u)];
            }
        }
        emic::write_pgm_mask(mg_output, pm);
        std::cout << "visible_units=" << mask.visible_count() << " total_units="
                  << mask.unit_count() << " visible_fraction="
                  << static_cast<double>(mask.visible_count()) / mask.unit_count() << "\n";
        return kExitOk;
    }

    if (app.got_subcommand("flops")) {
        const emic::StageConfig cfg;
        emic::FlopsReport rep;
        if (!fl_mask.empty()) {
            require_exists(fl_mask);
            const emic::PixelMask pm = emic::read_pgm_mask(fl_mask);
            rep = emic::count_flops(cfg, emic::build_mask(pm.data, pm.height, pm.width));
        } else {
            if (fl_ratio <= 0.0 || fl_ratio > 1.0) {
                std::cerr << "flops: provide --visible-ratio in (0,1] or --mask\n";
                return kExitUsage;
            }
            rep = emic::count_flops(cfg, fl_h, fl_w, fl_ratio);
        }
        std::cout << "visible_ratio=" << rep.visible_ratio
                  << " visible_units=" << rep.visible_units << " total_units=" << rep.total_units
                  << "\n";
        for (const char* stage : {"enc.", "dec.", "hyper.", "slice"}) {
            std::cout << "flops." << stage << "total=" << rep.stage_total(stage) << "\n";
        }
        std::cout << "flops.token_linear=" << rep.linear_total()
                  << "\nflops.attention=" << rep.attention_total()
                  << "\nflops.total=" << rep.total() << "\n";
        if (!fl_csv.empty()) {
            std::ofstream csv(fl_csv);
            if (!csv) throw emic::DataError("cannot open for writing: " + fl_csv);
            csv << "item,flops,token_linear\n";
            for (const auto& it : rep.items) {
                csv << it.name << "," << it.flops << "," << (it.token_linear ? 1 : 0) << "\n";
            }
        }
        return kExitOk;
    }

    if (app.got_subcommand("train")) {
        if (!fs::is_directory(tr_data)) throw emic::DataError("not a directory: " + tr_data);
        std::vector<std::string> paths;
        for (const auto& e : fs::directory_iterator(tr_data)) {
            if (e.path().extension() == ".ppm") paths.push_back(e.path().string());
        }
        std::sort(paths.begin(), paths.end());
        if (paths.empty()) throw emic::DataError("no .ppm images in: " + tr_data);
        std::vector<emic::NumArray> images;
        images.reserve(paths.size());
        for (const auto& p : paths) images.push_back(emic::read_ppm(p));

        emic::Model model = emic::init_model(emic::StageConfig{}, tr_seed);
        emic::TrainState state;
        emic::AdamState adam;
        emic::CounterRng rng(tr_seed + 1);
        double epoch_loss = 0.0;
        int epoch_steps = 0;
        const int steps_per_epoch =
            std::max<int>(1, static_cast<int>(images.size()) / std::max(tr_batch, 1));
        for (int s = 0; s < tr_steps; ++s) {
            std::vector<emic::NumArray> batch;
            std::vector<emic::MaskMap> masks;
            for (int b = 0; b < tr_batch; ++b) {
                const auto& img = images[rng.next_below(images.size())];
                batch.push_back(img);
                const double ratio = 0.3 + 0.5 * rng.next_uniform();
                masks.push_back(emic::gen_group_mask(static_cast<int>(img.extent(0)),
                                                     static_cast<int>(img.extent(1)), ratio,
                                                     rng.next_u64()));
            }
            const emic::StepReport rep =
                emic::train_step(batch, masks, model, tr_lambda, state, adam, rng);
            epoch_loss += rep.loss;
            epoch_steps += 1;
            std::cout << "step=" << state.step << " loss=" << rep.loss << " bpp=" << rep.bpp
                      << " distortion=" << rep.distortion << " lr=" << state.lr << "\n";
            if (epoch_steps == steps_per_epoch) {
                emic::plateau_schedule(state, epoch_loss / epoch_steps);
                epoch_loss = 0.0;
                epoch_steps = 0;
            }
        }
        emic::save_model(model, tr_output);
        std::cout << "saved=" << tr_output << " model_id=" << model.id << "\n";
        return kExitOk;
    }

    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const emic::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}
