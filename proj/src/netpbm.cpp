#include "emic/netpbm.hpp"

#include <cmath>
#include <fstream>

namespace emic {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    if (tok.empty()) throw DataError("netpbm: truncated header in " + path);
    return tok;
}

struct Header {
    int width, height, maxval;
};

Header read_header(std::istream& in, const char* magic, const std::string& path) {
    if (next_token(in, path) != magic) {
        throw DataError("netpbm: expected " + std::string(magic) + " in " + path);
    }
    Header h{};
    h.width = std::stoi(next_token(in, path));
    h.height = std::stoi(next_token(in, path));
    h.maxval = std::stoi(next_token(in, path));
    if (h.width <= 0 || h.height <= 0) throw DataError("netpbm: bad dimensions in " + path);
    if (h.maxval <= 0 || h.maxval > 255) {
        throw DataError("netpbm: only 8-bit maxval supported in " + path);
    }
    return h;
}

std::vector<std::uint8_t> read_raster(std::istream& in, std::size_t n, const std::string& path) {
    std::vector<std::uint8_t> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw DataError("netpbm: truncated raster in " + path);
    }
    return buf;
}

std::uint8_t to_byte(double v) {
    const double c = std::min(std::max(v, 0.0), 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

NumArray read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open: " + path);
    const Header h = read_header(f, "P6", path);
    const std::size_t n = static_cast<std::size_t>(h.width) * h.height * 3;
    const std::vector<std::uint8_t> raw = read_raster(f, n, path);
    NumArray img({static_cast<std::size_t>(h.height), static_cast<std::size_t>(h.width), 3});
    const double inv = 1.0 / static_cast<double>(h.maxval);
    for (std::size_t i = 0; i < n; ++i) img[i] = raw[i] * inv;
    return img;
}

void write_ppm(const std::string& path, const NumArray& image) {
    if (image.rank() != 3 || image.extent(2) != 3) throw DimError("write_ppm: expected HxWx3");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << "P6\n" << image.extent(1) << " " << image.extent(0) << "\n255\n";
    std::vector<std::uint8_t> raw(image.numel());
    for (std::size_t i = 0; i < image.numel(); ++i) raw[i] = to_byte(image[i]);
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw DataError("write failed: " + path);
}

PixelMask read_pgm_mask(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open: " + path);
    const Header h = read_header(f, "P5", path);
    const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
    const std::vector<std::uint8_t> raw = read_raster(f, n, path);
    PixelMask m;
    m.height = h.height;
    m.width = h.width;
    m.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) m.data[i] = raw[i] ? 1 : 0;
    return m;
}

void write_pgm_mask(const std::string& path, const PixelMask& mask) {
    if (mask.data.size() != static_cast<std::size_t>(mask.height) * mask.width) {
        throw DimError("write_pgm_mask: size mismatch");
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << "P5\n" << mask.width << " " << mask.height << "\n255\n";
    std::vector<std::uint8_t> raw(mask.data.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = mask.data[i] ? 255 : 0;
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw DataError("write failed: " + path);
}

}  // namespace emic
