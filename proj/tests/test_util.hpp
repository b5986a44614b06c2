#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "emic/rng.hpp"
#include "emic/tape.hpp"

namespace emic::test {

using Inputs = std::map<std::string, NumArray>;
using GraphFn = std::function<ValueRef(Tape&, const Inputs&)>;

inline double eval_graph(const GraphFn& build, const Inputs& inputs) {
    Tape tape;
    return tape.value(build(tape, inputs))[0];
}

// Central finite differences against tape gradients on up to `ncoords`
// randomly sampled coordinates per input. Returns the worst relative error
// (with an absolute floor for near-zero gradients).
inline double max_grad_error(const GraphFn& build, const Inputs& inputs, int ncoords,
                             std::uint64_t seed = 99, double h = 1e-5) {
    Tape tape;
    const ValueRef loss = build(tape, inputs);
    GradMap grads = tape.backward(loss);
    CounterRng rng(seed);
    double worst = 0.0;
    for (const auto& [name, arr] : inputs) {
        const auto it = grads.find(name);
        if (it == grads.end()) continue;  // input not used by this graph
        const NumArray& g = it->second;
        for (int c = 0; c < ncoords; ++c) {
            const std::size_t i = rng.next_below(arr.numel());
            Inputs lo = inputs, hi = inputs;
            lo.at(name)[i] -= h;
            hi.at(name)[i] += h;
            const double fd = (eval_graph(build, hi) - eval_graph(build, lo)) / (2.0 * h);
            const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-6});
            worst = std::max(worst, std::abs(fd - g[i]) / denom);
        }
    }
    return worst;
}

inline NumArray random_array(std::vector<std::size_t> shape, CounterRng& rng, double scl = 1.0) {
    NumArray a(std::move(shape));
    for (double& v : a.vec()) v = rng.next_normal() * scl;
    return a;
}

}  // namespace emic::test
