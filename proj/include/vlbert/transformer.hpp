#pragma once

#include "vlbert/ops.hpp"

namespace vlb {

// One encoder layer: per-head attention projections, head mixers, the
// position-wise feed-forward pair, and the two post-residual layer norms.
template <typename S>
struct LayerParams {
    int d = 0, heads = 0, d_h = 0, d_ff = 0;
    std::vector<Tensor<S>> q, k, v;  // heads × [d × d_h]
    std::vector<Tensor<S>> wo;       // heads × [d_h × d]
    Tensor<S> w1, b1, w2, b2;        // [d × d_ff], [d_ff], [d_ff × d], [d]
    Tensor<S> ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // [d] each
};

template <typename S>
struct AttentionRecord {
    int layer = 0;
    int head = 0;
    Tensor<S> weights;  // [N×N] row-stochastic probabilities, detached
};

// Gaussian(0, init_std) weights, zero biases, identity layer norms.
template <typename S>
LayerParams<S> make_layer(int d, int heads, int d_ff, Rng& rng, double init_std = 0.02) {
    if (heads <= 0 || d % heads != 0) {
        throw std::invalid_argument("make_layer: head count " + std::to_string(heads) +
                                    " must divide hidden size " + std::to_string(d));
    }
    LayerParams<S> p;
    p.d = d;
    p.heads = heads;
    p.d_h = d / heads;
    p.d_ff = d_ff;
    for (int m = 0; m < heads; ++m) {
        p.q.push_back(Tensor<S>::gaussian({d, p.d_h}, rng, 0.0, init_std).set_requires_grad());
        p.k.push_back(Tensor<S>::gaussian({d, p.d_h}, rng, 0.0, init_std).set_requires_grad());
        p.v.push_back(Tensor<S>::gaussian({d, p.d_h}, rng, 0.0, init_std).set_requires_grad());
        p.wo.push_back(Tensor<S>::gaussian({p.d_h, d}, rng, 0.0, init_std).set_requires_grad());
    }
    p.w1 = Tensor<S>::gaussian({d, d_ff}, rng, 0.0, init_std).set_requires_grad();
    p.b1 = Tensor<S>::zeros({d_ff}).set_requires_grad();
    p.w2 = Tensor<S>::gaussian({d_ff, d}, rng, 0.0, init_std).set_requires_grad();
    p.b2 = Tensor<S>::zeros({d}).set_requires_grad();
    p.ln1_gain = Tensor<S>::full({d}, S(1)).set_requires_grad();
    p.ln1_bias = Tensor<S>::zeros({d}).set_requires_grad();
    p.ln2_gain = Tensor<S>::full({d}, S(1)).set_requires_grad();
    p.ln2_bias = Tensor<S>::zeros({d}).set_requires_grad();
    return p;
}

template <typename S>
void register_layer(std::map<std::string, Tensor<S>>& params, const std::string& prefix,
                    LayerParams<S>& p) {
    for (int m = 0; m < p.heads; ++m) {
        const std::string h = prefix + ".attn.h" + std::to_string(m);
        params[h + ".q"] = p.q[m];
        params[h + ".k"] = p.k[m];
        params[h + ".v"] = p.v[m];
        params[h + ".out"] = p.wo[m];
    }
    params[prefix + ".ffn.w1"] = p.w1;
    params[prefix + ".ffn.b1"] = p.b1;
    params[prefix + ".ffn.w2"] = p.w2;
    params[prefix + ".ffn.b2"] = p.b2;
    params[prefix + ".ln1.gain"] = p.ln1_gain;
    params[prefix + ".ln1.bias"] = p.ln1_bias;
    params[prefix + ".ln2.gain"] = p.ln2_gain;
    params[prefix + ".ln2.bias"] = p.ln2_bias;
}

// Multi-head self-attention: out_i = sum_m W_m sum_j A^m_{ij} V_m x_j, with
// A^m row-softmax of (Q_m x_i)·(K_m x_j), optionally scaled by 1/sqrt(d_h).
// `valid`, when given, excludes key positions from every query's softmax.
template <typename S>
Tensor<S> multi_head_attention(const Tensor<S>& x, const LayerParams<S>& p, bool capture,
                               std::vector<AttentionRecord<S>>* records, int layer_index,
                               bool scale_logits = true,
                               const std::vector<uint8_t>* valid = nullptr) {
    detail::require_rank(x, 2, "multi_head_attention");
    if (x.extent(1) != p.d) {
        throw std::invalid_argument("multi_head_attention: input width " +
                                    std::to_string(x.extent(1)) + " != layer width " +
                                    std::to_string(p.d));
    }
    Tensor<S> out;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(p.d_h)));
    for (int m = 0; m < p.heads; ++m) {
        Tensor<S> qm = matmul(x, p.q[m]);
        Tensor<S> km = matmul(x, p.k[m]);
        Tensor<S> vm = matmul(x, p.v[m]);
        Tensor<S> scores = matmul_nt(qm, km);
        if (scale_logits) scores = scalar_mul(scores, scale);
        Tensor<S> probs = softmax(scores, valid);
        if (capture && records) {
            records->push_back({layer_index, m, Tensor<S>::from(probs.shape(), probs.values())});
        }
        Tensor<S> mixed = matmul(matmul(probs, vm), p.wo[m]);
        out = (m == 0) ? mixed : add(out, mixed);
    }
    return out;
}

// Attention, residual+norm, GELU feed-forward, residual+norm — post-norm.
template <typename S>
Tensor<S> transformer_layer(const Tensor<S>& x, const LayerParams<S>& p, bool capture = false,
                            std::vector<AttentionRecord<S>>* records = nullptr,
                            int layer_index = 0, bool scale_logits = true,
                            const std::vector<uint8_t>* valid = nullptr) {
    Tensor<S> attn = multi_head_attention(x, p, capture, records, layer_index, scale_logits, valid);
    Tensor<S> h = layer_norm(add(x, attn), p.ln1_gain, p.ln1_bias);
    Tensor<S> ff = add_rowvec(matmul(gelu(add_rowvec(matmul(h, p.w1), p.b1)), p.w2), p.b2);
    return layer_norm(add(h, ff), p.ln2_gain, p.ln2_bias);
}

template <typename S>
Tensor<S> encoder_forward(const Tensor<S>& x, const std::vector<LayerParams<S>>& layers,
                          bool capture = false, std::vector<AttentionRecord<S>>* records = nullptr,
                          bool scale_logits = true, const std::vector<uint8_t>* valid = nullptr) {
    if (layers.empty()) throw std::invalid_argument("encoder_forward: at least one layer required");
    Tensor<S> h = x;
    for (size_t l = 0; l < layers.size(); ++l) {
        h = transformer_layer(h, layers[l], capture, records, static_cast<int>(l), scale_logits, valid);
    }
    return h;
}

}  // namespace vlb
