#include "emic/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace emic {

namespace {

constexpr std::uint64_t kRansL = 1ull << 23;  // state lower bound
constexpr std::uint32_t kProbBits = 16;

const FrequencyTable& table_for(std::size_t i, const std::vector<FrequencyTable>& pool,
                                const std::vector<std::uint32_t>& ids) {
    const std::size_t t = ids.empty() ? i : ids[i];
    if (t >= pool.size()) throw UsageError("range coder: table id out of range");
    return pool[t];
}

}  // namespace

int FrequencyTable::find(std::uint32_t slot) const {
    // first index with cum[index+1] > slot
    int lo = 0, hi = nsym() - 1;
    while (lo < hi) {
        const int mid = (lo + hi) / 2;
        if (cum[static_cast<std::size_t>(mid) + 1] > slot) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    return lo;
}

FrequencyTable quantize_pmf(const std::vector<double>& pmf) {
    const std::size_t n = pmf.size();
    if (n == 0) throw UsageError("quantize_pmf: empty pmf");
    if (n > kFreqTotal) throw UsageError("quantize_pmf: alphabet too large");
    double total = 0.0;
    for (double p : pmf) {
        if (!(p >= 0.0)) throw DataError("quantize_pmf: negative probability");
        total += p;
    }
    if (total <= 0.0) throw DataError("quantize_pmf: zero-mass pmf");

    std::vector<std::uint32_t> freq(n);
    std::vector<std::pair<double, std::size_t>> rema(n);
    std::uint64_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double scaled = pmf[i] / total * static_cast<double>(kFreqTotal);
        freq[i] = static_cast<std::uint32_t>(scaled);
        rema[i] = {scaled - static_cast<double>(freq[i]), i};
        assigned += freq[i];
    }
    // largest remainders first; ties go to the lower index
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::uint64_t deficit = kFreqTotal - assigned;
    for (std::size_t i = 0; deficit > 0; i = (i + 1) % n, --deficit) {
        freq[rema[i].second] += 1;
    }
    // every bin >= 1, stolen from the currently largest bin
    for (std::size_t i = 0; i < n; ++i) {
        while (freq[i] == 0) {
            const std::size_t big =
                static_cast<std::size_t>(std::max_element(freq.begin(), freq.end()) - freq.begin());
            if (freq[big] <= 1) throw DataError("quantize_pmf: cannot keep all bins nonzero");
            freq[big] -= 1;
            freq[i] += 1;
        }
    }
    FrequencyTable t;
    t.cum.resize(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) t.cum[i + 1] = t.cum[i] + freq[i];
    return t;
}

std::vector<std::uint8_t> rc_encode(const std::vector<std::int32_t>& symbols,
                                    const std::vector<FrequencyTable>& pool,
                                    const std::vector<std::uint32_t>& table_ids) {
    if (!table_ids.empty() && table_ids.size() != symbols.size()) {
        throw UsageError("rc_encode: table id count mismatch");
    }
    if (table_ids.empty() && pool.size() < symbols.size()) {
        throw UsageError("rc_encode: not enough tables");
    }
    std::vector<std::uint8_t> tail;  // renormalization bytes, reversed at the end
    std::uint64_t x = kRansL;
    for (std::size_t i = symbols.size(); i-- > 0;) {
        const FrequencyTable& t = table_for(i, pool, table_ids);
        const std::int32_t s = symbols[i];
        if (s < 0 || s >= t.nsym()) throw UsageError("rc_encode: symbol outside table support");
        const std::uint64_t f = t.freq(s);
        const std::uint64_t x_max = ((kRansL >> kProbBits) << 8) * f;
        while (x >= x_max) {
            tail.push_back(static_cast<std::uint8_t>(x & 0xFF));
            x >>= 8;
        }
        x = ((x / f) << kProbBits) + (x % f) + t.start(s);
    }
    std::vector<std::uint8_t> out;
    out.reserve(4 + tail.size());
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>((x >> (8 * b)) & 0xFF));
    out.insert(out.end(), tail.rbegin(), tail.rend());
    return out;
}

std::vector<std::int32_t> rc_decode(const std::vector<std::uint8_t>& bytes, std::size_t count,
                                    const std::vector<FrequencyTable>& pool,
                                    const std::vector<std::uint32_t>& table_ids) {
    if (!table_ids.empty() && table_ids.size() != count) {
        throw UsageError("rc_decode: table id count mismatch");
    }
    if (table_ids.empty() && pool.size() < count) throw UsageError("rc_decode: not enough tables");
    if (bytes.size() < 4) throw DataError("rc_decode: truncated stream");
    std::uint64_t x = 0;
    for (int b = 0; b < 4; ++b) x |= static_cast<std::uint64_t>(bytes[static_cast<std::size_t>(b)]) << (8 * b);
    std::size_t pos = 4;
    std::vector<std::int32_t> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        const FrequencyTable& t = table_for(i, pool, table_ids);
        const std::uint32_t slot = static_cast<std::uint32_t>(x & (kFreqTotal - 1));
        const int s = t.find(slot);
        out[i] = s;
        x = t.freq(s) * (x >> kProbBits) + slot - t.start(s);
        while (x < kRansL) {
            if (pos >= bytes.size()) throw DataError("rc_decode: truncated stream");
            x = (x << 8) | bytes[pos++];
        }
    }
    return out;
}

std::uint32_t table_hash(const FrequencyTable& t) {
    std::uint32_t h = 0x811C9DC5u;
    for (std::uint32_t c : t.cum) {
        for (int b = 0; b < 4; ++b) {
            h ^= (c >> (8 * b)) & 0xFF;
            h *= 0x01000193u;
        }
    }
    return h;
}

}  // namespace emic
