#include "vlbert/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace vlb {

namespace {

constexpr char kMagic[4] = {'V', 'L', 'B', 'C'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
    uint32_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    put_u32(out, bits);
}

void put_tensor_block(std::string& out, const std::map<std::string, RawTensor>& tensors) {
    put_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, rt] : tensors) {  // std::map iterates name-sorted
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.append(name);
        put_u32(out, static_cast<uint32_t>(rt.shape.size()));
        size_t expect = 1;
        for (int e : rt.shape) {
            put_u64(out, static_cast<uint64_t>(e));
            expect *= static_cast<size_t>(e);
        }
        if (expect != rt.values.size()) {
            throw std::invalid_argument("checkpoint: tensor '" + name + "' has " +
                                        std::to_string(rt.values.size()) +
                                        " values but shape implies " + std::to_string(expect));
        }
        for (float v : rt.values) put_f32(out, v);
    }
}

// Cursor over the byte string; every read reports its offset on truncation so
// a corrupt file points at the failing position.
struct Reader {
    const std::string& bytes;
    size_t pos = 0;

    void need(size_t n, const char* what) const {
        if (pos + n > bytes.size()) {
            throw std::invalid_argument("checkpoint: truncated while reading " + std::string(what) +
                                        " at byte " + std::to_string(pos) + " (file has " +
                                        std::to_string(bytes.size()) + " bytes)");
        }
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32(const char* what) {
        uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
    std::string str(size_t n, const char* what) {
        need(n, what);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

std::map<std::string, RawTensor> read_tensor_block(Reader& r, const char* block) {
    std::map<std::string, RawTensor> out;
    const uint32_t count = r.u32("tensor count");
    std::string prev;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = r.u32("tensor name length");
        std::string name = r.str(name_len, "tensor name");
        if (i > 0 && !(prev < name)) {
            throw std::invalid_argument("checkpoint: " + std::string(block) +
                                        " tensors not name-sorted ('" + name + "' after '" + prev +
                                        "')");
        }
        prev = name;
        RawTensor rt;
        const uint32_t rank = r.u32("tensor rank");
        size_t total = 1;
        for (uint32_t a = 0; a < rank; ++a) {
            const uint64_t e = r.u64("tensor extent");
            if (e == 0 || e > (1ull << 32)) {
                throw std::invalid_argument("checkpoint: tensor '" + name +
                                            "' has invalid extent " + std::to_string(e));
            }
            rt.shape.push_back(static_cast<int>(e));
            total *= e;
        }
        rt.values.resize(total);
        for (size_t a = 0; a < total; ++a) rt.values[a] = r.f32("tensor values");
        out[std::move(name)] = std::move(rt);
    }
    return out;
}

}  // namespace

std::string encode_checkpoint(const RawCheckpoint& ckpt) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_tensor_block(out, ckpt.params);
    put_tensor_block(out, ckpt.opt);
    put_u64(out, ckpt.step);
    put_u64(out, ckpt.fingerprint);
    return out;
}

RawCheckpoint decode_checkpoint(const std::string& bytes) {
    Reader r{bytes};
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw std::invalid_argument("checkpoint: bad magic at byte 0 (expected \"VLBC\")");
    }
    r.pos = 4;
    const uint32_t version = r.u32("version");
    if (version != kVersion) {
        throw std::invalid_argument("checkpoint: unsupported version " + std::to_string(version));
    }
    RawCheckpoint ckpt;
    ckpt.params = read_tensor_block(r, "parameter");
    ckpt.opt = read_tensor_block(r, "optimizer");
    ckpt.step = r.u64("step");
    ckpt.fingerprint = r.u64("config fingerprint");
    if (r.pos != bytes.size()) {
        throw std::invalid_argument("checkpoint: " + std::to_string(bytes.size() - r.pos) +
                                    " trailing bytes after byte " + std::to_string(r.pos));
    }
    return ckpt;
}

void save_checkpoint_file(const std::string& path, const RawCheckpoint& ckpt) {
    const std::string bytes = encode_checkpoint(ckpt);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

RawCheckpoint load_checkpoint_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace vlb
