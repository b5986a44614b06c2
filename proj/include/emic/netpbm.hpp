#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emic/num_array.hpp"

namespace emic {

// Binary PPM (P6, 8-bit). Pixels come back as HxWx3 doubles in [0,1];
// writing clamps to [0,1] and rounds to 8 bits.
NumArray read_ppm(const std::string& path);
void write_ppm(const std::string& path, const NumArray& image);

// Binary PGM (P5, 8-bit) pixel masks: 0 = masked, nonzero = visible.
struct PixelMask {
    int height{0};
    int width{0};
    std::vector<std::uint8_t> data;  // 0/1
};
PixelMask read_pgm_mask(const std::string& path);
void write_pgm_mask(const std::string& path, const PixelMask& mask);

}  // namespace emic
