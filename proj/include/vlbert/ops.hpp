#pragma once

#include <algorithm>
#include <cmath>

#include "vlbert/tensor.hpp"

// Differentiable operations. Every reduction accumulates in double so that
// results are insensitive to summation order at 32-bit; the backbone's
// permutation-equivariance contract depends on this.

namespace vlb {

namespace detail {

template <typename S>
bool track(std::initializer_list<const Tensor<S>*> inputs) {
    if (!grad_mode()) return false;
    for (auto* t : inputs) {
        if ((*t).requires_grad()) return true;
    }
    return false;
}

template <typename S>
void attach(Tensor<S>& out, std::vector<std::shared_ptr<TensorStorage<S>>> parents,
            std::type_identity_t<std::function<void(TensorStorage<S>*)>> fn) {
    out.store()->requires_grad = true;
    out.store()->leaf = false;
    auto node = std::make_shared<TensorNode<S>>();
    node->parents = std::move(parents);
    node->backward = std::move(fn);
    out.store()->node = std::move(node);
}

template <typename S>
void require_rank(const Tensor<S>& t, int r, const char* op) {
    if (t.rank() != r) {
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(r) +
                                    " tensor, got shape " + shape_str(t.shape()));
    }
}

}  // namespace detail

// a[m×k] · b[k×n]
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_rank(a, 2, "matmul");
    detail::require_rank(b, 2, "matmul");
    const int m = a.extent(0), k = a.extent(1), n = b.extent(1);
    if (b.extent(0) != k) {
        throw std::invalid_argument("matmul: inner extents differ, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
    Tensor<S> out = Tensor<S>::zeros({m, n});
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    std::vector<double> row(n);
    for (int i = 0; i < m; ++i) {
        std::fill(row.begin(), row.end(), 0.0);
        for (int p = 0; p < k; ++p) {
            const double av = static_cast<double>(pa[i * k + p]);
            const S* brow = pb + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) row[j] += av * static_cast<double>(brow[j]);
        }
        for (int j = 0; j < n; ++j) po[i * n + j] = static_cast<S>(row[j]);
    }
    if (detail::track<S>({&a, &b})) {
        auto as = a.store(), bs = b.store();
        detail::attach(out, {as, bs}, [as, bs, m, k, n](TensorStorage<S>* os) {
            const S* g = os->grad.data();
            if (as->requires_grad) {
                as->ensure_grad();
                S* ga = as->grad.data();
                const S* pb2 = bs->value.data();
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j)
                            acc += static_cast<double>(g[i * n + j]) * static_cast<double>(pb2[p * n + j]);
                        ga[i * k + p] += static_cast<S>(acc);
                    }
            }
            if (bs->requires_grad) {
                bs->ensure_grad();
                S* gb = bs->grad.data();
                const S* pa2 = as->value.data();
                for (int p = 0; p < k; ++p)
                    for (int j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < m; ++i)
                            acc += static_cast<double>(pa2[i * k + p]) * static_cast<double>(g[i * n + j]);
                        gb[p * n + j] += static_cast<S>(acc);
                    }
            }
        });
    }
    return out;
}

// a[m×k] · b[n×k]ᵀ -> [m×n]; row-dot form used for attention scores
template <typename S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_rank(a, 2, "matmul_nt");
    detail::require_rank(b, 2, "matmul_nt");
    const int m = a.extent(0), k = a.extent(1), n = b.extent(0);
    if (b.extent(1) != k) {
        throw std::invalid_argument("matmul_nt: inner extents differ, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
    Tensor<S> out = Tensor<S>::zeros({m, n});
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p)
                acc += static_cast<double>(pa[i * k + p]) * static_cast<double>(pb[j * k + p]);
            po[i * n + j] = static_cast<S>(acc);
        }
    if (detail::track<S>({&a, &b})) {
        auto as = a.store(), bs = b.store();
        detail::attach(out, {as, bs}, [as, bs, m, k, n](TensorStorage<S>* os) {
            const S* g = os->grad.data();
            if (as->requires_grad) {
                as->ensure_grad();
                S* ga = as->grad.data();
                const S* pb2 = bs->value.data();
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j)
                            acc += static_cast<double>(g[i * n + j]) * static_cast<double>(pb2[j * k + p]);
                        ga[i * k + p] += static_cast<S>(acc);
                    }
            }
            if (bs->requires_grad) {
                bs->ensure_grad();
                S* gb = bs->grad.data();
                const S* pa2 = as->value.data();
                for (int j = 0; j < n; ++j)
                    for (int p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (int i = 0; i < m; ++i)
                            acc += static_cast<double>(g[i * n + j]) * static_cast<double>(pa2[i * k + p]);
                        gb[j * k + p] += static_cast<S>(acc);
                    }
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
    Tensor<S> out = Tensor<S>::zeros(a.shape());
    for (int i = 0; i < a.size(); ++i) out.at(i) = a.at(i) + b.at(i);
    if (detail::track<S>({&a, &b})) {
        auto as = a.store(), bs = b.store();
        detail::attach(out, {as, bs}, [as, bs](TensorStorage<S>* os) {
            const int n = os->size();
            if (as->requires_grad) {
                as->ensure_grad();
                for (int i = 0; i < n; ++i) as->grad[i] += os->grad[i];
            }
            if (bs->requires_grad) {
                bs->ensure_grad();
                for (int i = 0; i < n; ++i) bs->grad[i] += os->grad[i];
            }
        });
    }
    return out;
}

// x[n×d] + row vector v[d] broadcast over rows
template <typename S>
Tensor<S> add_rowvec(const Tensor<S>& x, const Tensor<S>& v) {
    detail::require_rank(x, 2, "add_rowvec");
    const int n = x.extent(0), d = x.extent(1);
    if (v.size() != d) {
        throw std::invalid_argument("add_rowvec: row vector length " + std::to_string(v.size()) +
                                    " does not match width of " + shape_str(x.shape()));
    }
    Tensor<S> out = Tensor<S>::zeros({n, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) = x.at(i, j) + v.at(j);
    if (detail::track<S>({&x, &v})) {
        auto xs = x.store(), vs = v.store();
        detail::attach(out, {xs, vs}, [xs, vs, n, d](TensorStorage<S>* os) {
            if (xs->requires_grad) {
                xs->ensure_grad();
                for (int i = 0; i < n * d; ++i) xs->grad[i] += os->grad[i];
            }
            if (vs->requires_grad) {
                vs->ensure_grad();
                for (int j = 0; j < d; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < n; ++i) acc += static_cast<double>(os->grad[i * d + j]);
                    vs->grad[j] += static_cast<S>(acc);
                }
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
    Tensor<S> out = Tensor<S>::zeros(a.shape());
    for (int i = 0; i < a.size(); ++i) out.at(i) = a.at(i) * b.at(i);
    if (detail::track<S>({&a, &b})) {
        auto as = a.store(), bs = b.store();
        detail::attach(out, {as, bs}, [as, bs](TensorStorage<S>* os) {
            const int n = os->size();
            if (as->requires_grad) {
                as->ensure_grad();
                for (int i = 0; i < n; ++i) as->grad[i] += os->grad[i] * bs->value[i];
            }
            if (bs->requires_grad) {
                bs->ensure_grad();
                for (int i = 0; i < n; ++i) bs->grad[i] += os->grad[i] * as->value[i];
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> scalar_mul(const Tensor<S>& x, S c) {
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    for (int i = 0; i < x.size(); ++i) out.at(i) = x.at(i) * c;
    if (detail::track<S>({&x})) {
        auto xs = x.store();
        detail::attach(out, {xs}, [xs, c](TensorStorage<S>* os) {
            if (!xs->requires_grad) return;
            xs->ensure_grad();
            for (int i = 0; i < os->size(); ++i) xs->grad[i] += os->grad[i] * c;
        });
    }
    return out;
}

// [a | b] along columns
template <typename S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_rank(a, 2, "concat_cols");
    detail::require_rank(b, 2, "concat_cols");
    const int n = a.extent(0), p = a.extent(1), q = b.extent(1);
    if (b.extent(0) != n) {
        throw std::invalid_argument("concat_cols: row counts differ, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
    Tensor<S> out = Tensor<S>::zeros({n, p + q});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) out.at(i, j) = a.at(i, j);
        for (int j = 0; j < q; ++j) out.at(i, p + j) = b.at(i, j);
    }
    if (detail::track<S>({&a, &b})) {
        auto as = a.store(), bs = b.store();
        detail::attach(out, {as, bs}, [as, bs, n, p, q](TensorStorage<S>* os) {
            if (as->requires_grad) {
                as->ensure_grad();
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < p; ++j) as->grad[i * p + j] += os->grad[i * (p + q) + j];
            }
            if (bs->requires_grad) {
                bs->ensure_grad();
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < q; ++j) bs->grad[i * q + j] += os->grad[i * (p + q) + p + j];
            }
        });
    }
    return out;
}

// Stack rank-1 rows (or 1×d rows) into [n×d]. Rows may repeat; gradient
// accumulates into the shared storage.
template <typename S>
Tensor<S> stack_rows(const std::vector<Tensor<S>>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: no rows given");
    const int d = rows[0].size();
    const int n = static_cast<int>(rows.size());
    Tensor<S> out = Tensor<S>::zeros({n, d});
    bool need_grad = false;
    for (int i = 0; i < n; ++i) {
        if (rows[i].size() != d) {
            throw std::invalid_argument("stack_rows: row " + std::to_string(i) + " has length " +
                                        std::to_string(rows[i].size()) + ", expected " + std::to_string(d));
        }
        for (int j = 0; j < d; ++j) out.at(i, j) = rows[i].at(j);
        need_grad = need_grad || rows[i].requires_grad();
    }
    if (grad_mode() && need_grad) {
        std::vector<std::shared_ptr<TensorStorage<S>>> parents;
        parents.reserve(rows.size());
        for (auto& r : rows) parents.push_back(r.store());
        auto ps = parents;
        detail::attach(out, std::move(parents), [ps, n, d](TensorStorage<S>* os) {
            for (int i = 0; i < n; ++i) {
                auto& par = ps[i];
                if (!par->requires_grad) continue;
                par->ensure_grad();
                for (int j = 0; j < d; ++j) par->grad[j] += os->grad[i * d + j];
            }
        });
    }
    return out;
}

// Row gather: out[i] = table[ids[i]]. Backward scatter-adds into the table.
template <typename S>
Tensor<S> embedding_lookup(const Tensor<S>& table, const std::vector<int>& ids) {
    detail::require_rank(table, 2, "embedding_lookup");
    const int v = table.extent(0), d = table.extent(1);
    const int n = static_cast<int>(ids.size());
    if (n == 0) throw std::invalid_argument("embedding_lookup: empty id list");
    for (int i = 0; i < n; ++i) {
        if (ids[i] < 0 || ids[i] >= v) {
            throw std::out_of_range("embedding_lookup: id " + std::to_string(ids[i]) + " at position " +
                                    std::to_string(i) + " outside table of " + std::to_string(v) + " rows");
        }
    }
    Tensor<S> out = Tensor<S>::zeros({n, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) = table.at(ids[i], j);
    if (detail::track<S>({&table})) {
        auto ts = table.store();
        detail::attach(out, {ts}, [ts, ids, n, d](TensorStorage<S>* os) {
            if (!ts->requires_grad) return;
            ts->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) ts->grad[ids[i] * d + j] += os->grad[i * d + j];
        });
    }
    return out;
}

// Alias used when gathering feature rows rather than embedding rows.
template <typename S>
Tensor<S> take_rows(const Tensor<S>& x, const std::vector<int>& ids) {
    return embedding_lookup(x, ids);
}

// Softmax along the last axis, numerically stabilized by max-subtraction.
// When `valid` is given, invalid key positions receive zero probability.
template <typename S>
Tensor<S> softmax(const Tensor<S>& x, const std::vector<uint8_t>* valid = nullptr) {
    const int rank = x.rank();
    if (rank < 1) throw std::invalid_argument("softmax: rank-0 input");
    const int d = x.extent(rank - 1);
    const int rows = x.size() / d;
    if (valid && static_cast<int>(valid->size()) != d) {
        throw std::invalid_argument("softmax: validity mask length " + std::to_string(valid->size()) +
                                    " does not match axis extent " + std::to_string(d));
    }
    for (int i = 0; i < x.size(); ++i) {
        if (!std::isfinite(static_cast<double>(x.at(i)))) {
            throw std::invalid_argument("softmax: non-finite input at flat index " + std::to_string(i));
        }
    }
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    std::vector<uint8_t> keep(d, 1);
    if (valid) keep = *valid;
    bool any_valid = std::any_of(keep.begin(), keep.end(), [](uint8_t b) { return b != 0; });
    if (!any_valid) throw std::invalid_argument("softmax: validity mask excludes every position");
    for (int r = 0; r < rows; ++r) {
        const S* xr = x.data() + static_cast<size_t>(r) * d;
        S* yr = out.data() + static_cast<size_t>(r) * d;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < d; ++j)
            if (keep[j] && static_cast<double>(xr[j]) > mx) mx = static_cast<double>(xr[j]);
        double denom = 0.0;
        for (int j = 0; j < d; ++j) {
            if (keep[j]) denom += std::exp(static_cast<double>(xr[j]) - mx);
        }
        for (int j = 0; j < d; ++j) {
            yr[j] = keep[j] ? static_cast<S>(std::exp(static_cast<double>(xr[j]) - mx) / denom) : S(0);
        }
    }
    if (detail::track<S>({&x})) {
        auto xs = x.store();
        detail::attach(out, {xs}, [xs, rows, d](TensorStorage<S>* os) {
            if (!xs->requires_grad) return;
            xs->ensure_grad();
            for (int r = 0; r < rows; ++r) {
                const S* y = os->value.data() + static_cast<size_t>(r) * d;
                const S* g = os->grad.data() + static_cast<size_t>(r) * d;
                S* gx = xs->grad.data() + static_cast<size_t>(r) * d;
                double dot = 0.0;
                for (int j = 0; j < d; ++j) dot += static_cast<double>(g[j]) * static_cast<double>(y[j]);
                for (int j = 0; j < d; ++j)
                    gx[j] += static_cast<S>(static_cast<double>(y[j]) * (static_cast<double>(g[j]) - dot));
            }
        });
    }
    return out;
}

// Per-row standardization followed by affine gain/bias.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias, S eps = S(1e-12)) {
    if (eps <= S(0)) throw std::invalid_argument("layer_norm: eps must be positive");
    const int rank = x.rank();
    if (rank < 1) throw std::invalid_argument("layer_norm: rank-0 input");
    const int d = x.extent(rank - 1);
    const int rows = x.size() / d;
    if (gain.size() != d || bias.size() != d) {
        throw std::invalid_argument("layer_norm: gain/bias length must equal last extent " + std::to_string(d));
    }
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    // normalized values are needed by the backward pass
    std::vector<S> norm(x.size());
    std::vector<S> inv_std(rows);
    for (int r = 0; r < rows; ++r) {
        const S* xr = x.data() + static_cast<size_t>(r) * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += static_cast<double>(xr[j]);
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = static_cast<double>(xr[j]) - mean;
            var += c * c;
        }
        var /= d;
        const double istd = 1.0 / std::sqrt(var + static_cast<double>(eps));
        inv_std[r] = static_cast<S>(istd);
        for (int j = 0; j < d; ++j) {
            const S h = static_cast<S>((static_cast<double>(xr[j]) - mean) * istd);
            norm[static_cast<size_t>(r) * d + j] = h;
            out.data()[static_cast<size_t>(r) * d + j] = h * gain.at(j) + bias.at(j);
        }
    }
    if (detail::track<S>({&x, &gain, &bias})) {
        auto xs = x.store(), gs = gain.store(), bs = bias.store();
        detail::attach(out, {xs, gs, bs}, [xs, gs, bs, rows, d, norm, inv_std](TensorStorage<S>* os) {
            for (int r = 0; r < rows; ++r) {
                const S* g = os->grad.data() + static_cast<size_t>(r) * d;
                const S* h = norm.data() + static_cast<size_t>(r) * d;
                if (gs->requires_grad) {
                    gs->ensure_grad();
                    for (int j = 0; j < d; ++j) gs->grad[j] += g[j] * h[j];
                }
                if (bs->requires_grad) {
                    bs->ensure_grad();
                    for (int j = 0; j < d; ++j) bs->grad[j] += g[j];
                }
                if (xs->requires_grad) {
                    xs->ensure_grad();
                    S* gx = xs->grad.data() + static_cast<size_t>(r) * d;
                    double sum_gy = 0.0, sum_gyh = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double gy = static_cast<double>(g[j]) * static_cast<double>(gs->value[j]);
                        sum_gy += gy;
                        sum_gyh += gy * static_cast<double>(h[j]);
                    }
                    for (int j = 0; j < d; ++j) {
                        const double gy = static_cast<double>(g[j]) * static_cast<double>(gs->value[j]);
                        gx[j] += static_cast<S>(static_cast<double>(inv_std[r]) *
                                                (gy - sum_gy / d - static_cast<double>(h[j]) * sum_gyh / d));
                    }
                }
            }
        });
    }
    return out;
}

// GELU, tanh approximation: 0.5x(1 + tanh(sqrt(2/pi)(x + 0.044715x^3)))
template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
    static const double kC = std::sqrt(2.0 / M_PI);
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    for (int i = 0; i < x.size(); ++i) {
        const double v = static_cast<double>(x.at(i));
        const double u = kC * (v + 0.044715 * v * v * v);
        out.at(i) = static_cast<S>(0.5 * v * (1.0 + std::tanh(u)));
    }
    if (detail::track<S>({&x})) {
        auto xs = x.store();
        detail::attach(out, {xs}, [xs](TensorStorage<S>* os) {
            if (!xs->requires_grad) return;
            xs->ensure_grad();
            for (int i = 0; i < os->size(); ++i) {
                const double v = static_cast<double>(xs->value[i]);
                const double u = kC * (v + 0.044715 * v * v * v);
                const double t = std::tanh(u);
                const double du = kC * (1.0 + 3.0 * 0.044715 * v * v);
                const double dy = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
                xs->grad[i] += os->grad[i] * static_cast<S>(dy);
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    for (int i = 0; i < x.size(); ++i) {
        const double v = static_cast<double>(x.at(i));
        out.at(i) = static_cast<S>(v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                                          : std::exp(v) / (1.0 + std::exp(v)));
    }
    if (detail::track<S>({&x})) {
        auto xs = x.store();
        detail::attach(out, {xs}, [xs](TensorStorage<S>* os) {
            if (!xs->requires_grad) return;
            xs->ensure_grad();
            for (int i = 0; i < os->size(); ++i) {
                const double y = static_cast<double>(os->value[i]);
                xs->grad[i] += os->grad[i] * static_cast<S>(y * (1.0 - y));
            }
        });
    }
    return out;
}

// Mean over mask-true rows of -log softmax(logits_i)[target_i].
// An all-false mask yields a constant zero with no gradient.
template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const std::vector<int>& targets,
                        const std::vector<uint8_t>& mask) {
    detail::require_rank(logits, 2, "cross_entropy");
    const int n = logits.extent(0), c = logits.extent(1);
    if (static_cast<int>(targets.size()) != n || static_cast<int>(mask.size()) != n) {
        throw std::invalid_argument("cross_entropy: targets/mask length must equal row count " +
                                    std::to_string(n));
    }
    int active = 0;
    for (int i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        ++active;
        if (targets[i] < 0 || targets[i] >= c) {
            throw std::out_of_range("cross_entropy: target " + std::to_string(targets[i]) +
                                    " at masked row " + std::to_string(i) + " outside " +
                                    std::to_string(c) + " classes");
        }
    }
    if (active == 0) return Tensor<S>::scalar(S(0));

    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        const S* row = logits.data() + static_cast<size_t>(i) * c;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double lse = 0.0;
        for (int j = 0; j < c; ++j) lse += std::exp(static_cast<double>(row[j]) - mx);
        total += (mx + std::log(lse)) - static_cast<double>(row[targets[i]]);
    }
    Tensor<S> out = Tensor<S>::scalar(static_cast<S>(total / active));
    if (detail::track<S>({&logits})) {
        auto ls = logits.store();
        detail::attach(out, {ls}, [ls, targets, mask, n, c, active](TensorStorage<S>* os) {
            if (!ls->requires_grad) return;
            ls->ensure_grad();
            const S g = os->grad[0];
            for (int i = 0; i < n; ++i) {
                if (!mask[i]) continue;
                const S* row = ls->value.data() + static_cast<size_t>(i) * c;
                S* grow = ls->grad.data() + static_cast<size_t>(i) * c;
                double mx = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
                double denom = 0.0;
                for (int j = 0; j < c; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
                for (int j = 0; j < c; ++j) {
                    double p = std::exp(static_cast<double>(row[j]) - mx) / denom;
                    if (j == targets[i]) p -= 1.0;
                    grow[j] += static_cast<S>(p / active) * g;
                }
            }
        });
    }
    return out;
}

// Mean over elements of the stable binary logistic loss on raw logits.
template <typename S>
Tensor<S> binary_cross_entropy_with_logits(const Tensor<S>& z, const std::vector<S>& labels) {
    const int n = z.size();
    if (static_cast<int>(labels.size()) != n) {
        throw std::invalid_argument("binary_cross_entropy_with_logits: label count " +
                                    std::to_string(labels.size()) + " != logit count " + std::to_string(n));
    }
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = static_cast<double>(z.at(i));
        const double t = static_cast<double>(labels[i]);
        // max(v,0) - v*t + log(1+exp(-|v|))
        total += std::max(v, 0.0) - v * t + std::log1p(std::exp(-std::fabs(v)));
    }
    Tensor<S> out = Tensor<S>::scalar(static_cast<S>(total / n));
    if (detail::track<S>({&z})) {
        auto zs = z.store();
        detail::attach(out, {zs}, [zs, labels, n](TensorStorage<S>* os) {
            if (!zs->requires_grad) return;
            zs->ensure_grad();
            const S g = os->grad[0];
            for (int i = 0; i < n; ++i) {
                const double v = static_cast<double>(zs->value[i]);
                const double sig = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
                zs->grad[i] += static_cast<S>((sig - static_cast<double>(labels[i])) / n) * g;
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
    double total = 0.0;
    for (int i = 0; i < x.size(); ++i) total += static_cast<double>(x.at(i));
    Tensor<S> out = Tensor<S>::scalar(static_cast<S>(total));
    if (detail::track<S>({&x})) {
        auto xs = x.store();
        detail::attach(out, {xs}, [xs](TensorStorage<S>* os) {
            if (!xs->requires_grad) return;
            xs->ensure_grad();
            for (int i = 0; i < xs->size(); ++i) xs->grad[i] += os->grad[0];
        });
    }
    return out;
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, const std::vector<int>& shape) {
    if (Tensor<S>::count(shape) != static_cast<size_t>(x.size())) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                    shape_str(shape));
    }
    Tensor<S> out = Tensor<S>::from(shape, x.values());
    if (detail::track<S>({&x})) {
        auto xs = x.store();
        detail::attach(out, {xs}, [xs](TensorStorage<S>* os) {
            if (!xs->requires_grad) return;
            xs->ensure_grad();
            for (int i = 0; i < xs->size(); ++i) xs->grad[i] += os->grad[i];
        });
    }
    return out;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& x) {
    detail::require_rank(x, 2, "transpose");
    const int n = x.extent(0), m = x.extent(1);
    Tensor<S> out = Tensor<S>::zeros({m, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(j, i) = x.at(i, j);
    if (detail::track<S>({&x})) {
        auto xs = x.store();
        detail::attach(out, {xs}, [xs, n, m](TensorStorage<S>* os) {
            if (!xs->requires_grad) return;
            xs->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) xs->grad[i * m + j] += os->grad[j * n + i];
        });
    }
    return out;
}

// Inverted dropout; identity at p = 0. The keep mask is drawn from the
// supplied deterministic stream.
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
    if (p == 0.0) return x;
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto mask = std::make_shared<std::vector<uint8_t>>(x.size());
    const S scale = static_cast<S>(1.0 / (1.0 - p));
    for (int i = 0; i < x.size(); ++i) {
        const bool keep = !rng.bernoulli(p);
        (*mask)[i] = keep;
        out.at(i) = keep ? x.at(i) * scale : S(0);
    }
    if (detail::track<S>({&x})) {
        auto xs = x.store();
        detail::attach(out, {xs}, [xs, mask, scale](TensorStorage<S>* os) {
            if (!xs->requires_grad) return;
            xs->ensure_grad();
            for (int i = 0; i < xs->size(); ++i)
                if ((*mask)[i]) xs->grad[i] += os->grad[i] * scale;
        });
    }
    return out;
}

}  // namespace vlb
