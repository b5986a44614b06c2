#pragma once

#include <cstdint>
#include <vector>

#include "emic/errors.hpp"

namespace emic {

// Cumulative frequencies over a dense symbol alphabet [0, nsym); total mass
// is exactly 2^16 and every symbol keeps frequency >= 1.
struct FrequencyTable {
    std::vector<std::uint32_t> cum;  // size nsym+1, cum[0]=0, cum[nsym]=65536

    int nsym() const { return static_cast<int>(cum.size()) - 1; }
    std::uint32_t freq(int s) const { return cum[static_cast<std::size_t>(s) + 1] - cum[static_cast<std::size_t>(s)]; }
    std::uint32_t start(int s) const { return cum[static_cast<std::size_t>(s)]; }
    // Symbol whose cumulative range contains `slot`.
    int find(std::uint32_t slot) const;
};

inline constexpr std::uint32_t kFreqTotal = 1u << 16;

// Scale a probability vector to total 2^16 using largest-remainder rounding,
// then lift zero bins to 1 at the expense of the largest bins.
FrequencyTable quantize_pmf(const std::vector<double>& pmf);

// Range coder over per-symbol tables. `table_ids[i]` selects the table for
// symbol i from the pool; an empty id vector means table i codes symbol i.
// Carry-less byte-renormalizing coder with a 64-bit state and a 4-byte
// flush; decode is the exact inverse.
std::vector<std::uint8_t> rc_encode(const std::vector<std::int32_t>& symbols,
                                    const std::vector<FrequencyTable>& pool,
                                    const std::vector<std::uint32_t>& table_ids = {});

std::vector<std::int32_t> rc_decode(const std::vector<std::uint8_t>& bytes, std::size_t count,
                                    const std::vector<FrequencyTable>& pool,
                                    const std::vector<std::uint32_t>& table_ids = {});

// 32-bit FNV-1a over a table's cumulative array; used to cross-check that
// encoder and decoder derived identical tables.
std::uint32_t table_hash(const FrequencyTable& t);

}  // namespace emic
