#include "canet/state.hpp"

#include <cmath>

namespace canet {

Tensor& ModelState::add(const std::string& name, Tensor t, bool trainable) {
    if (params_.count(name)) throw StateError("duplicate parameter: " + name);
    t.set_requires_grad(trainable);
    auto [it, ok] = params_.emplace(name, Param{std::move(t), trainable});
    (void)ok;
    return it->second.tensor;
}

Tensor& ModelState::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw StateError("unknown parameter: " + name);
    return it->second.tensor;
}

const Tensor& ModelState::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw StateError("unknown parameter: " + name);
    return it->second.tensor;
}

bool ModelState::trainable(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw StateError("unknown parameter: " + name);
    return it->second.trainable;
}

void ModelState::remove_prefix(const std::string& prefix) {
    for (auto it = params_.begin(); it != params_.end();) {
        if (it->first.rfind(prefix, 0) == 0)
            it = params_.erase(it);
        else
            ++it;
    }
}

void ModelState::set_trainable_prefix(const std::string& prefix, bool trainable) {
    for (auto& [name, p] : params_) {
        if (name.rfind(prefix, 0) == 0) {
            p.trainable = trainable;
            p.tensor.set_requires_grad(trainable);
        }
    }
}

void ModelState::zero_grads() {
    for (auto& [name, p] : params_)
        if (p.trainable) p.tensor.zero_grad();
}

void ModelState::sgd_step(double lr) {
    for (auto& [name, p] : params_) {
        if (!p.trainable) continue;
        if (!p.tensor.has_grad()) throw StateError("sgd_step: trainable parameter has no gradient: " + name);
        auto& data = p.tensor.raw_data();
        const auto& grad = p.tensor.grad();
        for (std::size_t i = 0; i < data.size(); ++i) data[i] -= lr * grad[i];
        p.tensor.zero_grad();
    }
}

long ModelState::total_values() const {
    long n = 0;
    for (const auto& [name, p] : params_) n += p.tensor.numel();
    return n;
}

Tensor he_conv_init(Shape shape, Rng& rng) {
    if (shape.size() != 4) throw ShapeError("he_conv_init expects [out,in,kh,kw]");
    const int fan_in = shape[1] * shape[2] * shape[3];
    const double stddev = std::sqrt(2.0 / fan_in);
    const int n = shape_numel(shape);
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = rng.normal(0.0, stddev);
    return Tensor::from_data(std::move(shape), std::move(data));
}

}  // namespace canet
