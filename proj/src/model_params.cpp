#include "emic/model_params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace emic {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'P', 'W'};
constexpr std::uint8_t kVersion = 1;
constexpr const char* kMetaName = "__meta__";
constexpr double kPrngIdSplitmix64 = 1.0;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class Reader {
  public:
    explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
    std::uint8_t u8() {
        if (pos_ >= b_.size()) throw DataError("EMPW: truncated file");
        return b_[pos_++];
    }
    std::uint16_t u16() {
        std::uint16_t v = u8();
        return static_cast<std::uint16_t>(v | (u8() << 8));
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(std::size_t n) {
        if (pos_ + n > b_.size()) throw DataError("EMPW: truncated name");
        std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                      b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

  private:
    const std::vector<std::uint8_t>& b_;
    std::size_t pos_{0};
};

void write_entry(std::vector<std::uint8_t>& out, const std::string& name, const NumArray& a) {
    if (name.size() > 0xFFFF) throw DataError("EMPW: name too long");
    if (a.rank() > 255) throw DataError("EMPW: rank too large");
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(a.rank()));
    for (std::size_t e : a.shape()) {
        if (e > 0xFFFFFFFFULL) throw DataError("EMPW: extent too large");
        put_u32(out, static_cast<std::uint32_t>(e));
    }
    for (double v : a.vec()) put_f32(out, static_cast<float>(v));
}

}  // namespace

NumArray& ModelParams::at(const std::string& name) {
    auto it = values.find(name);
    if (it == values.end()) throw UsageError("ModelParams: unknown parameter " + name);
    return it->second;
}

const NumArray& ModelParams::at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw UsageError("ModelParams: unknown parameter " + name);
    return it->second;
}

std::vector<std::uint8_t> ModelParams::serialize() const {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kVersion);
    put_u32(out, static_cast<std::uint32_t>(values.size() + 1));
    // Seed as four 16-bit chunks plus a generator id; all exact in float32.
    NumArray meta({5});
    for (int i = 0; i < 4; ++i) {
        meta[static_cast<std::size_t>(i)] = static_cast<double>((seed >> (16 * i)) & 0xFFFF);
    }
    meta[4] = prng_name == "splitmix64" ? kPrngIdSplitmix64 : 0.0;
    write_entry(out, kMetaName, meta);
    for (const auto& [name, arr] : values) write_entry(out, name, arr);
    return out;
}

ModelParams ModelParams::deserialize(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("EMPW: bad magic");
    if (r.u8() != kVersion) throw DataError("EMPW: unsupported version");
    const std::uint32_t count = r.u32();
    ModelParams p;
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.str(name_len);
        const std::uint8_t rank = r.u8();
        std::vector<std::size_t> shape(rank);
        for (auto& s : shape) s = r.u32();
        NumArray a(shape);
        for (double& v : a.vec()) v = static_cast<double>(r.f32());
        if (name == kMetaName) {
            if (a.numel() != 5) throw DataError("EMPW: bad meta entry");
            std::uint64_t s = 0;
            for (int i = 0; i < 4; ++i) {
                s |= static_cast<std::uint64_t>(a[static_cast<std::size_t>(i)]) << (16 * i);
            }
            p.seed = s;
            p.prng_name = a[4] == kPrngIdSplitmix64 ? "splitmix64" : "unknown";
        } else {
            if (!p.values.emplace(name, std::move(a)).second) {
                throw DataError("EMPW: duplicate parameter name " + name);
            }
        }
    }
    if (!r.done()) throw DataError("EMPW: trailing bytes");
    return p;
}

void ModelParams::save(const std::string& path) const {
    const std::vector<std::uint8_t> bytes = serialize();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write failed: " + path);
}

ModelParams ModelParams::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

GradMap full_grads(const ModelParams& params, GradMap partial) {
    for (const auto& [name, arr] : params.values) {
        if (partial.find(name) == partial.end()) partial.emplace(name, NumArray(arr.shape()));
    }
    return partial;
}

std::uint32_t fnv1a32(const std::vector<std::uint8_t>& bytes) {
    std::uint32_t h = 0x811C9DC5u;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x01000193u;
    }
    return h;
}

void adam_step(ModelParams& params, const GradMap& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (auto& [name, p] : params.values) {
        NumArray& m = state.m.try_emplace(name, NumArray(p.shape())).first->second;
        NumArray& v = state.v.try_emplace(name, NumArray(p.shape())).first->second;
        const auto git = grads.find(name);
        const NumArray* g = git != grads.end() ? &git->second : nullptr;
        if (g && !g->same_shape(p)) throw DimError("adam_step: gradient shape mismatch for " + name);
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double gi = g ? (*g)[i] : 0.0;
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace emic
