// Tensor storage, RNG streams, and the reverse-mode sweep.
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "vlbert/ops.hpp"
#include "vlbert/tensor.hpp"

using vlb::backward;
using vlb::mix_seed;
using vlb::NoGradGuard;
using vlb::Rng;
using vlb::Tensor;

TEST_CASE("rng streams are reproducible and respect ranges") {
    Rng a(123), b(123), c(124);
    bool all_equal = true, any_differs = false;
    for (int i = 0; i < 256; ++i) {
        const double va = a.uniform();
        const double vb = b.uniform();
        const double vc = c.uniform();
        all_equal = all_equal && (va == vb);
        any_differs = any_differs || (va != vc);
        CHECK(va >= 0.0);
        CHECK(va < 1.0);
    }
    CHECK(all_equal);
    CHECK(any_differs);

    Rng r(7);
    for (int i = 0; i < 256; ++i) {
        const double v = r.uniform(-2.5, 4.0);
        CHECK(v >= -2.5);
        CHECK(v < 4.0);
        const uint64_t k = r.integer(13);
        CHECK(k < 13);
    }
    CHECK_THROWS_AS((void)r.integer(0), std::invalid_argument);

    Rng coin(9);
    for (int i = 0; i < 64; ++i) {
        CHECK(coin.bernoulli(1.0));
        CHECK_FALSE(coin.bernoulli(0.0));
    }
}

TEST_CASE("gaussian stream has roughly standard moments") {
    Rng r(2024);
    const int n = 20000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = r.gaussian();
        sum += g;
        sumsq += g * g;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.05);
    CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("mix_seed separates derived streams") {
    CHECK(mix_seed(1, 2) == mix_seed(1, 2));
    CHECK(mix_seed(1, 2) != mix_seed(2, 1));
    CHECK(mix_seed(1, 2) != mix_seed(1, 3));
    CHECK(mix_seed(1, 2, 3) == mix_seed(1, 2, 3));
    CHECK(mix_seed(1, 2, 3) != mix_seed(1, 2, 4));
    CHECK(mix_seed(1, 2, 3) != mix_seed(1, 2));
}

TEST_CASE("factories build the advertised contents") {
    auto z = Tensor<double>::zeros({2, 3});
    CHECK(z.rank() == 2);
    CHECK(z.size() == 6);
    for (int i = 0; i < z.size(); ++i) CHECK(z.at(i) == 0.0);

    auto f = Tensor<double>::full({4}, 2.5);
    for (int i = 0; i < 4; ++i) CHECK(f.at(i) == 2.5);

    auto m = Tensor<double>::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
    CHECK(m.at(0, 0) == 1.0);
    CHECK(m.at(0, 1) == 2.0);
    CHECK(m.at(1, 0) == 3.0);
    CHECK(m.at(1, 1) == 4.0);
    CHECK(m.extent(0) == 2);

    auto s = Tensor<double>::scalar(7.0);
    CHECK(s.item() == 7.0);
    CHECK_THROWS_AS((void)m.item(), std::invalid_argument);

    CHECK_THROWS_AS((void)Tensor<double>::from({2, 2}, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS((void)Tensor<double>::zeros({2, 0}), std::invalid_argument);
    CHECK_THROWS_AS((void)Tensor<double>::zeros({-1}), std::invalid_argument);

    Rng g1(55), g2(55), g3(56);
    auto ga = Tensor<double>::gaussian({3, 3}, g1, 0.0, 0.02);
    auto gb = Tensor<double>::gaussian({3, 3}, g2, 0.0, 0.02);
    auto gc = Tensor<double>::gaussian({3, 3}, g3, 0.0, 0.02);
    bool same = true, differs = false;
    for (int i = 0; i < 9; ++i) {
        same = same && (ga.at(i) == gb.at(i));
        differs = differs || (ga.at(i) != gc.at(i));
    }
    CHECK(same);
    CHECK(differs);
}

TEST_CASE("copies alias storage; detach severs graph membership") {
    auto a = Tensor<double>::from({2}, {1.0, 2.0});
    Tensor<double> alias = a;
    alias.at(0) = 9.0;
    CHECK(a.at(0) == 9.0);

    a.set_requires_grad();
    auto d = a.detach();
    CHECK(d.at(0) == 9.0);
    CHECK_FALSE(d.requires_grad());
    d.at(0) = 0.5;
    CHECK(a.at(0) == 9.0);  // detach copies, never aliases
}

TEST_CASE("backward accumulates leaf grads and rebuilds intermediates per sweep") {
    auto x = Tensor<double>::from({1, 2}, {2.0, 3.0});
    x.set_requires_grad();
    auto y = vlb::mul(x, x);
    auto loss = vlb::sum_all(y);
    CHECK_FALSE(y.is_leaf());
    CHECK(y.requires_grad());

    backward(loss);
    REQUIRE(x.has_grad());
    CHECK(x.grad()[0] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(x.grad()[1] == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(y.grad()[0] == doctest::Approx(1.0).epsilon(1e-12));

    // Second sweep over the same graph: leaves accumulate, intermediates reset.
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(8.0).epsilon(1e-12));
    CHECK(x.grad()[1] == doctest::Approx(12.0).epsilon(1e-12));
    CHECK(y.grad()[0] == doctest::Approx(1.0).epsilon(1e-12));

    x.zero_grad();
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 0.0);
}

TEST_CASE("shared operands accumulate along every path") {
    auto x = Tensor<double>::from({1, 3}, {1.0, -2.0, 0.5});
    x.set_requires_grad();
    // loss = sum(x*x) + 2*sum(x): dx = 2x + 2
    auto loss = vlb::add(vlb::sum_all(vlb::mul(x, x)), vlb::scalar_mul(vlb::sum_all(x), 2.0));
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(x.grad()[1] == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(x.grad()[2] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar roots") {
    auto x = Tensor<double>::from({1, 2}, {1.0, 2.0});
    x.set_requires_grad();
    auto y = vlb::mul(x, x);
    CHECK_THROWS_AS(backward(y), std::invalid_argument);
}

TEST_CASE("NoGradGuard suppresses graph recording") {
    auto x = Tensor<double>::from({1, 2}, {1.0, 2.0});
    x.set_requires_grad();
    {
        NoGradGuard guard;
        auto y = vlb::mul(x, x);
        CHECK_FALSE(y.requires_grad());
        CHECK(y.is_leaf());
    }
    auto y2 = vlb::mul(x, x);  // recording resumes when the guard exits
    CHECK(y2.requires_grad());
    CHECK_FALSE(y2.is_leaf());
}

TEST_CASE("zero_grads clears a parameter map in place") {
    std::map<std::string, Tensor<double>> params;
    params["w"] = Tensor<double>::from({2}, {1.0, 2.0}).set_requires_grad();
    params["b"] = Tensor<double>::from({1}, {3.0}).set_requires_grad();
    auto loss = vlb::add(vlb::sum_all(params["w"]), vlb::sum_all(params["b"]));
    backward(loss);
    CHECK(params["w"].grad()[0] == 1.0);
    vlb::zero_grads(params);
    CHECK(params["w"].grad()[0] == 0.0);
    CHECK(params["w"].grad()[1] == 0.0);
    CHECK(params["b"].grad()[0] == 0.0);
}
