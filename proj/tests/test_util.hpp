#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "canet/rng.hpp"
#include "canet/tensor.hpp"

namespace canet::testing {

inline double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0, bool requires_grad = true) {
    std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
    for (double& v : data) v = rng.normal(0.0, scale);
    return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

struct GradCheckResult {
    int probes = 0;
    double max_rel_error = 0.0;
};

// Central-difference check of d loss / d leaf for `probes` random (leaf,
// element) pairs. `forward` must rebuild the graph from the captured leaves
// on every call. Returns the worst relative error observed.
inline GradCheckResult check_gradients(const std::function<Tensor()>& forward, std::vector<Tensor> leaves,
                                       int probes, Rng& rng, double eps = 1e-4) {
    for (Tensor& leaf : leaves) leaf.zero_grad();
    Tensor loss = forward();
    loss.backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (Tensor& leaf : leaves) analytic.push_back(leaf.has_grad() ? leaf.grad() : std::vector<double>(leaf.numel(), 0.0));

    GradCheckResult result;
    for (int p = 0; p < probes; ++p) {
        const int l = rng.uniform_int(0, static_cast<int>(leaves.size()) - 1);
        const int i = rng.uniform_int(0, leaves[static_cast<std::size_t>(l)].numel() - 1);
        std::vector<double>& data = leaves[static_cast<std::size_t>(l)].raw_data();
        const double saved = data[static_cast<std::size_t>(i)];
        double plus, minus;
        {
            NoGradGuard guard;
            data[static_cast<std::size_t>(i)] = saved + eps;
            plus = forward().value_at(0);
            data[static_cast<std::size_t>(i)] = saved - eps;
            minus = forward().value_at(0);
            data[static_cast<std::size_t>(i)] = saved;
        }
        const double numeric = (plus - minus) / (2.0 * eps);
        const double err = relative_error(analytic[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)], numeric);
        result.max_rel_error = std::max(result.max_rel_error, err);
        ++result.probes;
    }
    for (Tensor& leaf : leaves) leaf.zero_grad();
    return result;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    const std::vector<double>& x = a.data();
    const std::vector<double>& y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] != y[i]) return false;
    return true;
}

}  // namespace canet::testing
