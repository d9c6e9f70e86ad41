#pragma once

#include <map>
#include <string>

#include "vlbert/tensor.hpp"

namespace vlb {

// Moment buffers keyed by parameter name, plus the shared step counter.
// Moments are stored at working precision so that checkpoints (which hold
// 32-bit values) round-trip training state exactly.
template <typename S>
struct OptimizerState {
    std::map<std::string, std::vector<S>> m;  // first moment / momentum
    std::map<std::string, std::vector<S>> v;  // second moment (Adam only)
    int64_t t = 0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// One bias-corrected Adam update over every named parameter. Decoupled-style
// weight decay is folded into the gradient as g + wd * theta before the
// moment updates, matching the classic L2 formulation.
template <typename S>
void adam_step(std::map<std::string, Tensor<S>>& params, OptimizerState<S>& state,
               const AdamConfig& cfg) {
    if (cfg.lr <= 0.0) throw std::invalid_argument("adam_step: learning rate must be positive");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (auto& [name, p] : params) {
        auto st = p.store();
        if (!st->requires_grad) continue;
        st->ensure_grad();
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) m.assign(st->size(), S(0));
        if (v.empty()) v.assign(st->size(), S(0));
        if (static_cast<int>(m.size()) != st->size()) {
            throw std::invalid_argument("adam_step: state size mismatch for parameter " + name);
        }
        for (int i = 0; i < st->size(); ++i) {
            const double g = static_cast<double>(st->grad[i]) +
                             cfg.weight_decay * static_cast<double>(st->value[i]);
            m[i] = static_cast<S>(cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g);
            v[i] = static_cast<S>(cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g);
            const double mhat = static_cast<double>(m[i]) / bc1;
            const double vhat = static_cast<double>(v[i]) / bc2;
            st->value[i] -= static_cast<S>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

struct SgdConfig {
    double lr = 1e-2;
    double momentum = 0.9;
    double weight_decay = 0.0;
};

template <typename S>
void sgd_momentum_step(std::map<std::string, Tensor<S>>& params, OptimizerState<S>& state,
                       const SgdConfig& cfg) {
    if (cfg.lr <= 0.0) throw std::invalid_argument("sgd_momentum_step: learning rate must be positive");
    state.t += 1;
    for (auto& [name, p] : params) {
        auto st = p.store();
        if (!st->requires_grad) continue;
        st->ensure_grad();
        auto& vel = state.m[name];
        if (vel.empty()) vel.assign(st->size(), S(0));
        if (static_cast<int>(vel.size()) != st->size()) {
            throw std::invalid_argument("sgd_momentum_step: state size mismatch for parameter " + name);
        }
        for (int i = 0; i < st->size(); ++i) {
            const double g = static_cast<double>(st->grad[i]) +
                             cfg.weight_decay * static_cast<double>(st->value[i]);
            vel[i] = static_cast<S>(cfg.momentum * static_cast<double>(vel[i]) + g);
            st->value[i] -= static_cast<S>(cfg.lr * static_cast<double>(vel[i]));
        }
    }
}

// Linear warmup from zero to `base` over [0, warmup), then linear decay back
// to zero at `total`. Defined for steps 0..total inclusive.
inline double lr_schedule(int64_t step, int64_t warmup, int64_t total, double base) {
    if (total <= 0) throw std::invalid_argument("lr_schedule: total steps must be positive");
    if (warmup < 0 || warmup > total) throw std::invalid_argument("lr_schedule: warmup outside [0,total]");
    if (step < 0 || step > total) {
        throw std::invalid_argument("lr_schedule: step " + std::to_string(step) + " outside [0," +
                                    std::to_string(total) + "]");
    }
    if (step < warmup) return base * static_cast<double>(step) / static_cast<double>(warmup);
    if (total == warmup) return base;
    return base * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

}  // namespace vlb
