#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "emic/num_array.hpp"
#include "emic/tape.hpp"

namespace emic {

// Named parameter store. Iteration order is the sorted name order, which
// fixes the serialization layout and makes optimizer updates deterministic.
struct ModelParams {
    std::uint64_t seed{0};
    std::string prng_name{"splitmix64"};
    std::map<std::string, NumArray> values;

    NumArray& at(const std::string& name);
    const NumArray& at(const std::string& name) const;
    bool has(const std::string& name) const { return values.count(name) != 0; }

    // EMPW file: magic, version byte, entry count, then per entry a 16-bit
    // name length, the name, an 8-bit rank, 32-bit extents and raw
    // little-endian float32 data. Doubles are narrowed on save and widened
    // on load; a second round trip is byte-exact. The seed and generator id
    // travel as a synthetic "__meta__" entry.
    std::vector<std::uint8_t> serialize() const;
    static ModelParams deserialize(const std::vector<std::uint8_t>& bytes);
    void save(const std::string& path) const;
    static ModelParams load(const std::string& path);
};

// Zero gradients for every parameter missing from `partial`.
GradMap full_grads(const ModelParams& params, GradMap partial);

// FNV-1a 32-bit over a byte buffer; used as the bitstream's model id.
std::uint32_t fnv1a32(const std::vector<std::uint8_t>& bytes);

struct AdamState {
    std::map<std::string, NumArray> m;
    std::map<std::string, NumArray> v;
    std::int64_t t{0};
};

// Standard Adam with bias correction; parameters absent from `grads` are
// treated as zero-gradient.
void adam_step(ModelParams& params, const GradMap& grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace emic
