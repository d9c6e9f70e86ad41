#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace vlb {

// Deterministic RNG. All stochasticity in the project flows through this
// wrapper so that runs are reproducible from integer seeds alone.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // uniform in [0, 1)
    double uniform() {
        return std::generate_canonical<double, 53>(gen_);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    // integer in [0, n)
    uint64_t integer(uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::integer: n must be positive");
        return std::uniform_int_distribution<uint64_t>(0, n - 1)(gen_);
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// splitmix64 finalizer; used to derive independent stream seeds from
// (seed, tag) pairs so that resumed runs replay identical randomness.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ULL + b * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

template <typename S>
struct TensorNode;

template <typename S>
struct TensorStorage {
    std::vector<int> shape;
    std::vector<S> value;
    std::vector<S> grad;  // allocated lazily, same length as value
    bool requires_grad = false;
    bool leaf = true;
    std::shared_ptr<TensorNode<S>> node;

    int size() const { return static_cast<int>(value.size()); }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), S(0));
    }
};

template <typename S>
struct TensorNode {
    std::vector<std::shared_ptr<TensorStorage<S>>> parents;
    // Receives the storage that owns this node. Passing it as a parameter
    // (rather than capturing the output tensor) keeps the graph acyclic, so
    // each step's tape is freed as soon as the loss tensor goes out of scope.
    std::function<void(TensorStorage<S>*)> backward;
};

// Thread-local autograd switch. Forward-only evaluation (validation,
// inference) runs under NoGradGuard and records nothing.
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev_; }

private:
    bool prev_;
};

// Dense tensor handle. Copies share storage; the value participates in a
// computation graph through its node when requires_grad is set.
template <typename S>
class Tensor {
public:
    using Storage = TensorStorage<S>;

    Tensor() : store_(std::make_shared<Storage>()) {}

    explicit Tensor(std::shared_ptr<Storage> s) : store_(std::move(s)) {}

    static Tensor zeros(const std::vector<int>& shape) {
        Tensor t;
        t.store_->shape = shape;
        t.store_->value.assign(count(shape), S(0));
        return t;
    }

    static Tensor full(const std::vector<int>& shape, S v) {
        Tensor t = zeros(shape);
        std::fill(t.store_->value.begin(), t.store_->value.end(), v);
        return t;
    }

    static Tensor from(const std::vector<int>& shape, const std::vector<S>& data) {
        if (count(shape) != data.size()) {
            throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) +
                                        " does not match data length " + std::to_string(data.size()));
        }
        Tensor t;
        t.store_->shape = shape;
        t.store_->value = data;
        return t;
    }

    static Tensor scalar(S v) { return from({1}, {v}); }

    static Tensor gaussian(const std::vector<int>& shape, Rng& rng, double mean, double stddev) {
        Tensor t = zeros(shape);
        for (auto& v : t.store_->value) v = static_cast<S>(mean + rng.gaussian() * stddev);
        return t;
    }

    Tensor& set_requires_grad(bool b = true) {
        store_->requires_grad = b;
        return *this;
    }

    bool requires_grad() const { return store_->requires_grad; }
    bool is_leaf() const { return store_->leaf; }

    const std::vector<int>& shape() const { return store_->shape; }
    int rank() const { return static_cast<int>(store_->shape.size()); }
    int size() const { return store_->size(); }
    int extent(int axis) const { return store_->shape.at(axis); }

    S* data() { return store_->value.data(); }
    const S* data() const { return store_->value.data(); }
    std::vector<S>& values() { return store_->value; }
    const std::vector<S>& values() const { return store_->value; }

    S& at(int i) { return store_->value.at(i); }
    S at(int i) const { return store_->value.at(i); }
    S& at(int i, int j) { return store_->value[static_cast<size_t>(i) * extent(1) + j]; }
    S at(int i, int j) const { return store_->value[static_cast<size_t>(i) * extent(1) + j]; }

    S item() const {
        if (size() != 1) throw std::invalid_argument("Tensor::item: tensor is not scalar, shape " + shape_str(shape()));
        return store_->value[0];
    }

    bool has_grad() const { return store_->grad.size() == store_->value.size(); }

    const std::vector<S>& grad() const {
        if (!has_grad()) throw std::runtime_error("Tensor::grad: gradient not populated");
        return store_->grad;
    }

    void zero_grad() {
        store_->grad.assign(store_->value.size(), S(0));
    }

    // Detached copy: same values, no graph membership, never accumulates grad.
    Tensor detach() const {
        Tensor t;
        t.store_->shape = store_->shape;
        t.store_->value = store_->value;
        return t;
    }

    std::shared_ptr<Storage>& store() { return store_; }
    const std::shared_ptr<Storage>& store() const { return store_; }

    static size_t count(const std::vector<int>& shape) {
        size_t n = 1;
        for (int e : shape) {
            if (e <= 0) throw std::invalid_argument("Tensor: non-positive extent in shape " + shape_str(shape));
            n *= static_cast<size_t>(e);
        }
        return n;
    }

private:
    std::shared_ptr<Storage> store_;
};

namespace detail {

// Reverse topological order from the given root, following parent edges.
template <typename S>
std::vector<TensorStorage<S>*> topo_from(TensorStorage<S>* root) {
    std::vector<TensorStorage<S>*> order;
    std::unordered_set<TensorStorage<S>*> visited;
    // iterative post-order DFS
    std::vector<std::pair<TensorStorage<S>*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [cur, idx] = stack.back();
        if (cur->node && idx < cur->node->parents.size()) {
            TensorStorage<S>* next = cur->node->parents[idx].get();
            ++idx;
            if (visited.insert(next).second) stack.emplace_back(next, 0);
        } else {
            order.push_back(cur);
            stack.pop_back();
        }
    }
    return order;  // post-order: parents before children; reverse for backprop
}

}  // namespace detail

// Reverse sweep from a scalar loss. Leaf gradients accumulate across calls;
// intermediate gradients are rebuilt per sweep.
template <typename S>
void backward(const Tensor<S>& loss) {
    if (loss.size() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    auto order = detail::topo_from<S>(loss.store().get());
    for (auto* s : order) {
        if (!s->requires_grad) continue;
        if (s->leaf) {
            s->ensure_grad();  // keep accumulated contents
        } else {
            s->grad.assign(s->value.size(), S(0));
        }
    }
    loss.store()->ensure_grad();
    loss.store()->grad[0] += S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorStorage<S>* s = *it;
        if (s->node && s->node->backward) s->node->backward(s);
    }
}

template <typename S>
void zero_grads(std::vector<Tensor<S>>& params) {
    for (auto& p : params) p.zero_grad();
}

template <typename S>
void zero_grads(std::map<std::string, Tensor<S>>& params) {
    for (auto& [name, p] : params) p.zero_grad();
}

}  // namespace vlb
