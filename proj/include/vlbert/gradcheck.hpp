#pragma once

#include <functional>
#include <map>
#include <string>

#include "vlbert/tensor.hpp"

namespace vlb {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
    int checked = 0;
};

// Central-difference verification of analytic gradients. The loss function
// must rebuild its graph from the parameter values on every call. Intended
// for S = double; the default step 1e-4 balances truncation and round-off
// there. Relative error uses max(1, |a|, |b|) in the denominator so that
// near-zero gradients do not blow up the ratio.
template <typename S>
GradCheckReport grad_check(std::map<std::string, Tensor<S>>& params,
                           const std::function<Tensor<S>()>& loss_fn, double h = 1e-4,
                           int max_coords_per_param = -1) {
    static_assert(std::is_floating_point_v<S>);
    GradCheckReport rep;

    zero_grads(params);
    Tensor<S> loss = loss_fn();
    backward(loss);

    std::map<std::string, std::vector<double>> analytic;
    for (auto& [name, p] : params) {
        auto st = p.store();
        st->ensure_grad();
        analytic[name].assign(st->grad.begin(), st->grad.end());
    }

    for (auto& [name, p] : params) {
        auto st = p.store();
        const int n = st->size();
        const int limit = max_coords_per_param > 0 ? std::min(max_coords_per_param, n) : n;
        for (int i = 0; i < limit; ++i) {
            const S saved = st->value[i];
            st->value[i] = saved + static_cast<S>(h);
            double up, down;
            {
                NoGradGuard ng;
                up = static_cast<double>(loss_fn().item());
                st->value[i] = saved - static_cast<S>(h);
                down = static_cast<double>(loss_fn().item());
            }
            st->value[i] = saved;
            const double num = (up - down) / (2.0 * h);
            const double ana = analytic[name][i];
            const double rel = std::fabs(ana - num) / std::max({1.0, std::fabs(ana), std::fabs(num)});
            ++rep.checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = name;
                rep.worst_index = i;
                rep.analytic = ana;
                rep.numeric = num;
            }
        }
    }
    return rep;
}

}  // namespace vlb
