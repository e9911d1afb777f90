#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pgan/errors.hpp"
#include "pgan/training.hpp"

namespace pgan {
namespace {

constexpr uint32_t kVersion = 1;
constexpr char kMagic[4] = {'P', 'G', 'A', 'N'};

void put_u32(std::vector<uint8_t>& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<uint8_t>& buf, float f) {
    uint32_t u;
    std::memcpy(&u, &f, sizeof u);
    put_u32(buf, u);
}

void put_f32s(std::vector<uint8_t>& buf, const float* p, size_t n) {
    for (size_t i = 0; i < n; ++i) put_f32(buf, p[i]);
}

void put_str(std::vector<uint8_t>& buf, const std::string& s) {
    put_u32(buf, static_cast<uint32_t>(s.size()));
    buf.insert(buf.end(), s.begin(), s.end());
}

void put_opt(std::vector<uint8_t>& buf, const AdamState& opt) {
    put_u64(buf, opt.t);
    put_f32(buf, opt.lr);
    put_f32(buf, opt.beta1);
    put_f32(buf, opt.beta2);
    put_f32(buf, opt.eps);
    put_u32(buf, static_cast<uint32_t>(opt.m.size()));
    for (size_t i = 0; i < opt.m.size(); ++i) {
        put_u32(buf, static_cast<uint32_t>(opt.m[i].size()));
        put_f32s(buf, opt.m[i].data(), opt.m[i].size());
        put_f32s(buf, opt.v[i].data(), opt.v[i].size());
    }
}

// Bounds-checked little-endian reader over the whole file image.
struct Cursor {
    const uint8_t* p;
    size_t n;
    size_t at = 0;

    void need(size_t k) {
        if (k > n - at) throw TruncatedError("checkpoint truncated at byte " + std::to_string(at));
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[at + static_cast<size_t>(i)]) << (8 * i);
        at += 4;
        return v;
    }
    uint64_t u64() {
        uint64_t lo = u32();
        uint64_t hi = u32();
        return lo | (hi << 32);
    }
    float f32() {
        uint32_t u = u32();
        float f;
        std::memcpy(&f, &u, sizeof f);
        return f;
    }
    std::string str() {
        uint32_t k = u32();
        need(k);
        std::string s(reinterpret_cast<const char*>(p) + at, k);
        at += k;
        return s;
    }
    std::vector<float> f32s(size_t count) {
        if (count > (n - at) / 4) throw TruncatedError("checkpoint truncated at byte " + std::to_string(at));
        std::vector<float> out(count);
        for (size_t i = 0; i < count; ++i) out[i] = f32();
        return out;
    }
};

AdamState read_opt(Cursor& c) {
    AdamState opt;
    opt.t = c.u64();
    opt.lr = c.f32();
    opt.beta1 = c.f32();
    opt.beta2 = c.f32();
    opt.eps = c.f32();
    uint32_t slots = c.u32();
    opt.m.reserve(slots);
    opt.v.reserve(slots);
    for (uint32_t i = 0; i < slots; ++i) {
        uint32_t count = c.u32();
        opt.m.push_back(c.f32s(count));
        opt.v.push_back(c.f32s(count));
    }
    return opt;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    size_t guess = 64 + ckpt.config_echo.size();
    for (const auto& [name, t] : ckpt.tensors)
        guess += 16 + name.size() + 4 * t.shape().size() + 4 * static_cast<size_t>(t.numel());
    for (const AdamState* opt : {&ckpt.opt_g, &ckpt.opt_d}) {
        guess += 32;
        for (const auto& slot : opt->m) guess += 8 + 8 * slot.size();
    }

    std::vector<uint8_t> buf;
    buf.reserve(guess);
    buf.insert(buf.end(), kMagic, kMagic + 4);
    put_u32(buf, ckpt.version);
    put_u32(buf, ckpt.epoch);
    put_str(buf, ckpt.config_echo);
    put_u32(buf, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        put_str(buf, name);
        put_u32(buf, static_cast<uint32_t>(t.shape().size()));
        for (int64_t dim : t.shape()) put_u32(buf, static_cast<uint32_t>(dim));
        put_f32s(buf, t.data(), static_cast<size_t>(t.numel()));
    }
    put_opt(buf, ckpt.opt_g);
    put_opt(buf, ckpt.opt_d);
    put_u64(buf, ckpt.rng_state);
    put_u64(buf, ckpt.rng_inc);

    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp(path + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    Cursor c{buf.data(), buf.size()};
    c.need(4);
    if (std::memcmp(c.p, kMagic, 4) != 0) throw BadMagicError("bad magic in " + path);
    c.at += 4;

    Checkpoint ckpt;
    ckpt.version = c.u32();
    if (ckpt.version != kVersion)
        throw VersionError("unsupported checkpoint version " + std::to_string(ckpt.version));
    ckpt.epoch = c.u32();
    ckpt.config_echo = c.str();
    uint32_t count = c.u32();
    ckpt.tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = c.str();
        uint32_t ndim = c.u32();
        Shape shape;
        shape.reserve(ndim);
        size_t numel = 1;
        for (uint32_t k = 0; k < ndim; ++k) {
            uint32_t dim = c.u32();
            shape.push_back(static_cast<int64_t>(dim));
            if (dim == 0 || numel > buf.size() / dim)
                throw TruncatedError("checkpoint truncated at byte " + std::to_string(c.at));
            numel *= dim;
        }
        ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), c.f32s(numel)));
    }
    ckpt.opt_g = read_opt(c);
    ckpt.opt_d = read_opt(c);
    ckpt.rng_state = c.u64();
    ckpt.rng_inc = c.u64();
    return ckpt;
}

}  // namespace pgan
