#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mcbert/ops.hpp"
#include "mcbert/rng.hpp"
#include "mcbert/tensor.hpp"

namespace test_util {

using mcbert::Rng;
using mcbert::Shape;
using mcbert::Tape;
using mcbert::Tensor;

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0, bool requires_grad = true) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (auto& v : t.values()) {
        v = scale * (2.0 * rng.uniform() - 1.0);
    }
    return t;
}

// Weight a tensor's entries by fixed random coefficients and sum: turns any op
// output into a scalar whose output-gradients are O(1), which keeps the
// finite-difference comparison well-conditioned.
inline Tensor weighted_sum(Tape* tape, const Tensor& x, Rng& rng) {
    Tensor w = Tensor::zeros(x.shape());
    for (auto& v : w.values()) {
        v = 0.5 + rng.uniform();
    }
    return mcbert::ops::sum(tape, mcbert::ops::mul(tape, x, w));
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    int64_t checked = 0;
};

// Central finite differences against tape gradients. `forward` must rebuild
// the graph from the leaves' current values on every call. Relative error uses
// a small floor in the denominator so near-zero gradient pairs do not divide
// by noise.
inline GradCheckResult grad_check(const std::function<Tensor(Tape*)>& forward,
                                  const std::vector<Tensor>& leaves,
                                  double step = 1e-5,
                                  int64_t max_per_leaf = -1,
                                  double denom_floor = 1e-3) {
    for (const Tensor& leaf : leaves) {
        Tensor l = leaf;
        l.zero_grad();
    }
    Tape tape;
    Tensor loss = forward(&tape);
    tape.backward(loss);

    GradCheckResult res;
    for (const Tensor& leaf : leaves) {
        std::vector<double> analytic(leaf.values().size(), 0.0);
        if (leaf.has_grad()) {
            analytic = leaf.grad_ref();
        }
        const int64_t n = leaf.size();
        const int64_t stride =
            (max_per_leaf > 0 && n > max_per_leaf) ? (n + max_per_leaf - 1) / max_per_leaf : 1;
        Tensor mutable_leaf = leaf;
        for (int64_t i = 0; i < n; i += stride) {
            const double saved = mutable_leaf.values()[static_cast<size_t>(i)];
            mutable_leaf.values()[static_cast<size_t>(i)] = saved + step;
            const double fp = forward(nullptr).item();
            mutable_leaf.values()[static_cast<size_t>(i)] = saved - step;
            const double fm = forward(nullptr).item();
            mutable_leaf.values()[static_cast<size_t>(i)] = saved;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[static_cast<size_t>(i)];
            const double denom = std::max({denom_floor, std::fabs(a), std::fabs(numeric)});
            res.max_rel_err = std::max(res.max_rel_err, std::fabs(a - numeric) / denom);
            ++res.checked;
        }
    }
    return res;
}

} // namespace test_util
