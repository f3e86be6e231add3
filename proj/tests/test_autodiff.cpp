#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mz/graph.hpp"
#include "test_util.hpp"

using namespace mz;
using mztest::op_fd_error;
using mztest::random_tensor;

TEST_CASE("matmul identity") {
    Graph g;
    int a = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
    int eye = g.constant(Tensor({2, 2}, {1, 0, 0, 1}));
    int m = g.matmul(a, eye);
    auto vals = forward(g, {}, {});
    CHECK(vals[(size_t)m].data == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("softmax of zeros is uniform") {
    Graph g;
    int s = g.softmax(g.constant(Tensor({2}, {0, 0})), 0);
    auto vals = forward(g, {}, {});
    CHECK(vals[(size_t)s].data[0] == doctest::Approx(0.5));
    CHECK(vals[(size_t)s].data[1] == doctest::Approx(0.5));
}

TEST_CASE("sigmoid at zero") {
    Graph g;
    int s = g.sigmoid(g.constant(Tensor::scalar(0.0)));
    CHECK(forward(g, {}, {})[(size_t)s].data[0] == doctest::Approx(0.5));
}

TEST_CASE("d(x*x)/dx at 3 is 6") {
    Graph g;
    ParameterStore params;
    params.create("x", Tensor::scalar(3.0));
    int x = g.param("x", {});
    int loss = g.mul(x, x);
    auto vals = forward(g, params, {});
    auto grads = backward(g, loss, vals, params);
    CHECK(grads["x"].data[0] == doctest::Approx(6.0));
}

TEST_CASE("sum(relu(x)) gradient") {
    Graph g;
    ParameterStore params;
    params.create("x", Tensor({2}, {-1, 2}));
    int loss = g.reduce_sum(g.relu(g.param("x", {2})), -1);
    auto vals = forward(g, params, {});
    auto grads = backward(g, loss, vals, params);
    CHECK(grads["x"].data[0] == 0.0);
    CHECK(grads["x"].data[1] == 1.0);
}

TEST_CASE("random 3-layer composition matches finite differences") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        double err = op_fd_error(seed, {{4, 3}, {3, 5}, {5}}, [](Graph& g, const std::vector<int>& in) {
            int h = g.tanh(g.matmul(in[0], in[1]));        // [4,5]
            int z = g.sigmoid(g.add(h, in[2]));            // row broadcast
            return g.reduce_mean(z, 1);
        });
        CHECK(err < 1e-4);
    }
}

TEST_CASE("grad_check: linear layer is near-exact") {
    Rng rng(7);
    Graph g;
    ParameterStore params;
    params.create("W", random_tensor(rng, {3, 4}));
    int w = g.param("W", {3, 4});
    int x = g.constant(random_tensor(rng, {4}));
    int loss = g.reduce_sum(g.matmul(w, x), -1);
    auto report = grad_check(g, loss, params, {}, 1e-5, 1e-10);
    CHECK(report.pass);
    CHECK(report.worst < 1e-8);
}

TEST_CASE("grad_check: sigmoid MLP passes at 1e-4") {
    Rng rng(11);
    Graph g;
    ParameterStore params;
    params.create("W1", random_tensor(rng, {6, 4}));
    params.create("W2", random_tensor(rng, {6}));
    int x = g.constant(random_tensor(rng, {4}));
    int h = g.sigmoid(g.matmul(g.param("W1", {6, 4}), x));
    int loss = g.reduce_sum(g.mul(h, g.param("W2", {6})), -1);
    auto report = grad_check(g, loss, params, {}, 1e-5, 1e-4);
    CHECK(report.pass);
}

TEST_CASE("corrupted gradient fails the relative-error bound") {
    Rng rng(13);
    Graph g;
    ParameterStore params;
    params.create("W", random_tensor(rng, {3, 3}));
    int x = g.constant(random_tensor(rng, {3}));
    int loss = g.reduce_sum(g.tanh(g.matmul(g.param("W", {3, 3}), x)), -1);
    auto vals = forward(g, params, {});
    auto grads = backward(g, loss, vals, params);
    // doubled analytic gradient must violate the tolerance everywhere nonzero
    double worst = 0;
    auto& p = params.get("W");
    for (size_t i = 0; i < p.value.data.size(); ++i) {
        double orig = p.value.data[i];
        p.value.data[i] = orig + 1e-5;
        double lp = forward(g, params, {})[(size_t)loss].data[0];
        p.value.data[i] = orig - 1e-5;
        double lm = forward(g, params, {})[(size_t)loss].data[0];
        p.value.data[i] = orig;
        double numeric = (lp - lm) / 2e-5;
        double corrupted = 2.0 * grads["W"].data[i];
        worst = std::max(worst, std::fabs(corrupted - numeric) /
                                    std::max(1e-8, std::fabs(corrupted) + std::fabs(numeric)));
    }
    CHECK(worst > 1e-4);
}

TEST_CASE("per-op finite-difference sweep") {
    auto sweep = [](const char* name, const std::vector<Shape>& shapes,
                    std::function<int(Graph&, const std::vector<int>&)> build) {
        for (uint64_t seed = 100; seed < 110; ++seed) {
            double err = op_fd_error(seed, shapes, build);
            INFO(name << " seed " << seed);
            CHECK(err < 1e-4);
        }
    };
    sweep("add", {{3, 4}, {3, 4}}, [](Graph& g, const std::vector<int>& in) { return g.add(in[0], in[1]); });
    sweep("add-row", {{3, 4}, {4}}, [](Graph& g, const std::vector<int>& in) { return g.add(in[0], in[1]); });
    sweep("sub", {{5}, {}}, [](Graph& g, const std::vector<int>& in) { return g.sub(in[0], in[1]); });
    sweep("mul-row", {{3, 4}, {4}}, [](Graph& g, const std::vector<int>& in) { return g.mul(in[0], in[1]); });
    sweep("matmul", {{3, 4}, {4, 2}}, [](Graph& g, const std::vector<int>& in) { return g.matmul(in[0], in[1]); });
    sweep("concat", {{2, 3}, {4, 3}}, [](Graph& g, const std::vector<int>& in) { return g.concat({in[0], in[1]}, 0); });
    sweep("slice", {{4, 5}}, [](Graph& g, const std::vector<int>& in) { return g.slice(in[0], {1, 2}, {3, 5}); });
    sweep("sigmoid", {{6}}, [](Graph& g, const std::vector<int>& in) { return g.sigmoid(in[0]); });
    sweep("tanh", {{6}}, [](Graph& g, const std::vector<int>& in) { return g.tanh(in[0]); });
    sweep("relu", {{8}}, [](Graph& g, const std::vector<int>& in) { return g.relu(in[0]); });
    sweep("exp", {{6}}, [](Graph& g, const std::vector<int>& in) { return g.exp(in[0]); });
    sweep("softmax", {{3, 4}}, [](Graph& g, const std::vector<int>& in) { return g.softmax(in[0], 1); });
    sweep("reduce_sum", {{3, 4}}, [](Graph& g, const std::vector<int>& in) { return g.reduce_sum(in[0], 0); });
    sweep("reduce_max", {{3, 4}}, [](Graph& g, const std::vector<int>& in) { return g.reduce_max(in[0], 1); });
    sweep("reduce_mean", {{3, 4}}, [](Graph& g, const std::vector<int>& in) { return g.reduce_mean(in[0], -1); });
    sweep("conv2d", {{2, 5, 6}, {3, 2, 2, 3}}, [](Graph& g, const std::vector<int>& in) { return g.conv2d(in[0], in[1]); });
    sweep("maxpool2d", {{2, 4, 6}}, [](Graph& g, const std::vector<int>& in) { return g.maxpool2d(in[0], 2, 3); });
    sweep("grid_pool", {{5, 7}}, [](Graph& g, const std::vector<int>& in) { return g.grid_pool(in[0], 2, 3); });

    // log needs positive inputs away from the clamp
    for (uint64_t seed = 100; seed < 110; ++seed) {
        Rng rng(seed);
        Graph g;
        ParameterStore params;
        params.create("x", random_tensor(rng, {6}, 0.5, 2.0));
        int loss = g.reduce_sum(g.log(g.param("x", {6})), -1);
        CHECK(grad_check(g, loss, params, {}, 1e-5, 1e-4).pass);
    }
    // gather
    for (uint64_t seed = 100; seed < 110; ++seed) {
        Rng rng(seed);
        Graph g;
        ParameterStore params;
        params.create("emb", random_tensor(rng, {5, 3}));
        int idx = g.constant(Tensor({4}, {0, 2, 2, 4}));
        int out = g.gather(g.param("emb", {5, 3}), idx);
        int loss = g.reduce_sum(g.mul(out, g.constant(random_tensor(rng, {4, 3}))), -1);
        CHECK(grad_check(g, loss, params, {}, 1e-5, 1e-4).pass);
    }
}

TEST_CASE("forward determinism is bitwise") {
    Rng rng(21);
    Graph g;
    ParameterStore params;
    params.create("W", random_tensor(rng, {4, 4}));
    int x = g.input("x", {4});
    int out = g.softmax(g.matmul(g.param("W", {4, 4}), x), 0);
    Bindings b{{"x", random_tensor(rng, {4})}};
    auto v1 = forward(g, params, b);
    auto v2 = forward(g, params, b);
    CHECK(v1[(size_t)out].data == v2[(size_t)out].data);
}

TEST_CASE("backward linearity over summed losses") {
    Rng rng(23);
    Graph g;
    ParameterStore params;
    params.create("W", random_tensor(rng, {3, 3}));
    int w = g.param("W", {3, 3});
    int x = g.constant(random_tensor(rng, {3}));
    int l1 = g.reduce_sum(g.tanh(g.matmul(w, x)), -1);
    int l2 = g.reduce_sum(g.sigmoid(g.matmul(w, x)), -1);
    int lsum = g.add(l1, l2);
    auto vals = forward(g, params, {});
    auto g1 = backward(g, l1, vals, params);
    auto g2 = backward(g, l2, vals, params);
    auto gs = backward(g, lsum, vals, params);
    for (size_t i = 0; i < 9; ++i)
        CHECK(std::fabs(gs["W"].data[i] - (g1["W"].data[i] + g2["W"].data[i])) < 1e-12);
}

TEST_CASE("slice of concat reproduces originals bitwise") {
    Rng rng(29);
    Tensor a = random_tensor(rng, {2, 3});
    Tensor b = random_tensor(rng, {4, 3});
    Graph g;
    int c = g.concat({g.constant(a), g.constant(b)}, 0);
    int sa = g.slice(c, {0, 0}, {2, 3});
    int sb = g.slice(c, {2, 0}, {6, 3});
    auto vals = forward(g, {}, {});
    CHECK(vals[(size_t)sa].data == a.data);
    CHECK(vals[(size_t)sb].data == b.data);
}

TEST_CASE("unreachable parameters get zero gradients") {
    Graph g;
    ParameterStore params;
    params.create("used", Tensor::scalar(2.0));
    params.create("unused", Tensor({2}, {1, 1}));
    int x = g.param("used", {});
    int loss = g.mul(x, x);
    auto vals = forward(g, params, {});
    auto grads = backward(g, loss, vals, params);
    CHECK(grads["unused"].data == std::vector<double>{0, 0});
}

TEST_CASE("errors: shape mismatch at bind, non-scalar loss, bad gather index") {
    Graph g;
    ParameterStore params;
    int x = g.input("x", {3});
    int y = g.relu(x);
    CHECK_THROWS_WITH_AS(forward(g, params, {{"x", Tensor({2}, {1, 2})}}),
                         doctest::Contains("input 'x'"), std::invalid_argument);
    auto vals = forward(g, params, {{"x", Tensor({3}, {1, 2, 3})}});
    CHECK_THROWS_AS(backward(g, y, vals, params), std::invalid_argument);

    Graph g2;
    int t = g2.constant(Tensor({2, 2}, {1, 2, 3, 4}));
    int idx = g2.constant(Tensor({1}, {5}));
    g2.gather(t, idx);
    CHECK_THROWS_WITH_AS(forward(g2, params, {}), doctest::Contains("out of range"),
                         std::invalid_argument);
}
