#pragma once

#include <cstring>
#include <map>
#include <string>

#include "vlbert/optim.hpp"
#include "vlbert/tensor.hpp"

namespace vlb {

// Checkpoint payload in its serialized element type (32-bit values).
struct RawTensor {
    std::vector<int> shape;
    std::vector<float> values;
};

struct RawCheckpoint {
    std::map<std::string, RawTensor> params;
    std::map<std::string, RawTensor> opt;  // keys "m:<name>" / "v:<name>"
    uint64_t step = 0;
    uint64_t fingerprint = 0;
};

// Binary VLBC format: magic "VLBC", u32 version, u32 tensor count, per tensor
// {u32 name length, name bytes, u32 rank, u64 extents, f32 values}, then the
// optimizer block in the same encoding, u64 step, u64 config fingerprint.
// All integers and floats little-endian; tensors name-sorted.
std::string encode_checkpoint(const RawCheckpoint& ckpt);
RawCheckpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint_file(const std::string& path, const RawCheckpoint& ckpt);
RawCheckpoint load_checkpoint_file(const std::string& path);

template <typename S>
RawCheckpoint to_raw(const std::map<std::string, Tensor<S>>& params,
                     const OptimizerState<S>& state, uint64_t step, uint64_t fingerprint) {
    RawCheckpoint raw;
    raw.step = step;
    raw.fingerprint = fingerprint;
    for (const auto& [name, t] : params) {
        RawTensor rt;
        rt.shape = t.shape();
        rt.values.assign(t.values().begin(), t.values().end());
        raw.params[name] = std::move(rt);
    }
    auto put_moments = [&](const char* prefix, const std::map<std::string, std::vector<S>>& side) {
        for (const auto& [name, buf] : side) {
            RawTensor rt;
            rt.shape = {static_cast<int>(buf.size())};
            rt.values.assign(buf.begin(), buf.end());
            raw.opt[std::string(prefix) + name] = std::move(rt);
        }
    };
    put_moments("m:", state.m);
    put_moments("v:", state.v);
    return raw;
}

// Loads parameter values only (fine-tuning starts its own optimizer); every
// checkpoint tensor must match a parameter of the same shape and vice versa.
template <typename S>
void load_params(const RawCheckpoint& raw, std::map<std::string, Tensor<S>>& params) {
    for (auto& [name, t] : params) {
        auto it = raw.params.find(name);
        if (it == raw.params.end()) {
            throw std::invalid_argument("checkpoint: missing tensor '" + name + "'");
        }
        if (it->second.shape != t.shape()) {
            throw std::invalid_argument("checkpoint: tensor '" + name + "' has shape " +
                                        shape_str(it->second.shape) + ", model expects " +
                                        shape_str(t.shape()));
        }
        auto& vals = t.values();
        for (size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<S>(it->second.values[i]);
    }
    for (const auto& [name, rt] : raw.params) {
        if (!params.count(name)) {
            throw std::invalid_argument("checkpoint: unexpected tensor '" + name + "'");
        }
        (void)rt;
    }
}

// Full restore: parameters plus optimizer moments and step counter.
template <typename S>
void from_raw(const RawCheckpoint& raw, std::map<std::string, Tensor<S>>& params,
              OptimizerState<S>& state) {
    load_params(raw, params);
    state.m.clear();
    state.v.clear();
    state.t = static_cast<int64_t>(raw.step);
    for (const auto& [key, rt] : raw.opt) {
        if (key.size() < 3 || key[1] != ':' || (key[0] != 'm' && key[0] != 'v')) {
            throw std::invalid_argument("checkpoint: malformed optimizer entry '" + key + "'");
        }
        const std::string pname = key.substr(2);
        if (!params.count(pname)) {
            throw std::invalid_argument("checkpoint: optimizer entry for unknown parameter '" +
                                        pname + "'");
        }
        std::vector<S> buf(rt.values.begin(), rt.values.end());
        if (key[0] == 'm') {
            state.m[pname] = std::move(buf);
        } else {
            state.v[pname] = std::move(buf);
        }
    }
}

}  // namespace vlb
