#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mz/graph.hpp"
#include "mz/rng.hpp"
#include "mz/tensor.hpp"

namespace mztest {

// Random tensor whose entries stay >= margin away from zero (relu kink)
// and pairwise-distinct by a comparable gap (pooling ties).
inline mz::Tensor random_tensor(mz::Rng& rng, mz::Shape shape, double lo = -1.0, double hi = 1.0,
                                double kink_margin = 1e-3) {
    int64_t n = mz::shape_numel(shape);
    std::vector<size_t> perm = rng.permutation(static_cast<size_t>(n));
    std::vector<double> vals(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        double slot = (static_cast<double>(perm[static_cast<size_t>(i)]) +
                       rng.uniform(0.25, 0.75)) / static_cast<double>(n);
        double v = lo + (hi - lo) * slot;
        if (std::fabs(v) < kink_margin) v = v >= 0 ? v + kink_margin : v - kink_margin;
        vals[static_cast<size_t>(i)] = v;
    }
    return mz::Tensor(std::move(shape), std::move(vals));
}

// Finite-difference check of an op: `build` adds the op over the given
// parameter nodes; the loss weights its output with random constants so
// the vjp is exercised with a non-uniform upstream gradient.
inline double op_fd_error(uint64_t seed, const std::vector<mz::Shape>& in_shapes,
                          const std::function<int(mz::Graph&, const std::vector<int>&)>& build,
                          double step = 1e-5) {
    mz::Rng rng(seed);
    mz::Graph g;
    mz::ParameterStore params;
    std::vector<int> ins;
    for (size_t i = 0; i < in_shapes.size(); ++i) {
        std::string name = "in" + std::to_string(i);
        params.create(name, random_tensor(rng, in_shapes[i]));
        ins.push_back(g.param(name, in_shapes[i]));
    }
    int out = build(g, ins);
    mz::Tensor w = random_tensor(rng, g.node(out).shape);
    int loss = g.reduce_sum(g.mul(out, g.constant(w)), -1);
    auto report = mz::grad_check(g, loss, params, {}, step, 1e-4);
    return report.worst;
}

}  // namespace mztest
