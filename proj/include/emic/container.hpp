#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "emic/errors.hpp"
#include "emic/geometry.hpp"

namespace emic {

// Self-describing compressed-image container (".emic"), little-endian:
//   magic "EMIC" | version u8 | H u16 | W u16 (original pixel dims)
//   | mask-unit bitmap over the padded grid, row-major, LSB-first, padded
//   to whole bytes | model id u32 | lambda index u8
//   | z segment (u32 length + bytes) | per-slice y segments (u32 + bytes).
struct BitstreamContainer {
    static constexpr std::array<std::uint8_t, 4> kMagic{'E', 'M', 'I', 'C'};
    static constexpr std::uint8_t kVersion = 1;

    std::uint16_t height{0};
    std::uint16_t width{0};
    std::vector<std::uint8_t> unit_bitmap;
    std::uint32_t model_id{0};
    std::uint8_t lambda_index{0};
    std::vector<std::uint8_t> z_stream;
    std::vector<std::vector<std::uint8_t>> y_streams;

    int units_h() const { return (height + kMaskUnitPx - 1) / kMaskUnitPx; }
    int units_w() const { return (width + kMaskUnitPx - 1) / kMaskUnitPx; }
    std::size_t bitmap_bytes() const {
        return (static_cast<std::size_t>(units_h()) * units_w() + 7) / 8;
    }

    void set_mask(const MaskMap& mask);
    MaskMap mask() const;

    std::size_t payload_bits() const;  // z + y segment bits, header excluded

    std::vector<std::uint8_t> serialize() const;
    static BitstreamContainer parse(const std::vector<std::uint8_t>& bytes);
};

}  // namespace emic
