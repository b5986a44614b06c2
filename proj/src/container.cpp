#include "emic/container.hpp"

#include <cstring>

namespace emic {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

struct Reader {
    const std::vector<std::uint8_t>& b;
    std::size_t pos{0};

    std::uint8_t u8(const char* field) {
        if (pos >= b.size()) throw DataError(std::string("container: truncated at ") + field);
        return b[pos++];
    }
    std::uint16_t u16(const char* field) {
        std::uint16_t v = u8(field);
        return static_cast<std::uint16_t>(v | (u8(field) << 8));
    }
    std::uint32_t u32(const char* field) {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8(field)) << (8 * i);
        return v;
    }
    std::vector<std::uint8_t> bytes(std::size_t n, const char* field) {
        if (pos + n > b.size()) throw DataError(std::string("container: truncated at ") + field);
        std::vector<std::uint8_t> out(b.begin() + static_cast<std::ptrdiff_t>(pos),
                                      b.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
        return out;
    }
};

}  // namespace

void BitstreamContainer::set_mask(const MaskMap& mask) {
    if (mask.orig_height_px > 0xFFFF || mask.orig_width_px > 0xFFFF) {
        throw DataError("container: image dimensions exceed 65535");
    }
    height = static_cast<std::uint16_t>(mask.orig_height_px);
    width = static_cast<std::uint16_t>(mask.orig_width_px);
    unit_bitmap.assign(bitmap_bytes(), 0);
    for (std::size_t u = 0; u < mask.unit_visible.size(); ++u) {
        if (mask.unit_visible[u]) unit_bitmap[u / 8] |= static_cast<std::uint8_t>(1u << (u % 8));
    }
}

MaskMap BitstreamContainer::mask() const {
    const std::size_t n = static_cast<std::size_t>(units_h()) * units_w();
    std::vector<std::uint8_t> units(n, 0);
    for (std::size_t u = 0; u < n; ++u) {
        units[u] = (unit_bitmap[u / 8] >> (u % 8)) & 1u;
    }
    return mask_from_units(height, width, std::move(units));
}

std::size_t BitstreamContainer::payload_bits() const {
    std::size_t bytes = z_stream.size();
    for (const auto& s : y_streams) bytes += s.size();
    return bytes * 8;
}

std::vector<std::uint8_t> BitstreamContainer::serialize() const {
    if (unit_bitmap.size() != bitmap_bytes()) {
        throw DataError("container: bitmap size does not match dimensions");
    }
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic.begin(), kMagic.end());
    out.push_back(kVersion);
    put_u16(out, height);
    put_u16(out, width);
    out.insert(out.end(), unit_bitmap.begin(), unit_bitmap.end());
    put_u32(out, model_id);
    out.push_back(lambda_index);
    put_u32(out, static_cast<std::uint32_t>(z_stream.size()));
    out.insert(out.end(), z_stream.begin(), z_stream.end());
    for (const auto& s : y_streams) {
        put_u32(out, static_cast<std::uint32_t>(s.size()));
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

BitstreamContainer BitstreamContainer::parse(const std::vector<std::uint8_t>& bytes) {
    Reader r{bytes};
    for (std::uint8_t m : kMagic) {
        if (r.u8("magic") != m) throw DataError("container: bad magic");
    }
    if (r.u8("version") != kVersion) throw DataError("container: unsupported version");
    BitstreamContainer c;
    c.height = r.u16("height");
    c.width = r.u16("width");
    if (c.height == 0 || c.width == 0) throw DataError("container: zero dimensions");
    c.unit_bitmap = r.bytes(c.bitmap_bytes(), "mask bitmap");
    c.model_id = r.u32("model id");
    c.lambda_index = r.u8("lambda index");
    c.z_stream = r.bytes(r.u32("z segment length"), "z segment");
    while (r.pos < bytes.size()) {
        c.y_streams.push_back(r.bytes(r.u32("y segment length"), "y segment"));
    }
    if (c.y_streams.empty()) throw DataError("container: no y segments");
    return c;
}

}  // namespace emic
