#pragma once

#include <map>
#include <string>
#include <vector>

#include "canet/rng.hpp"
#include "canet/tensor.hpp"

namespace canet {

// All learnable parameters, keyed by name. std::map keeps iteration order
// deterministic, which the checkpoint format and sgd_step rely on.
class ModelState {
public:
    struct Param {
        Tensor tensor;
        bool trainable = true;
    };

    Tensor& add(const std::string& name, Tensor t, bool trainable = true);
    bool has(const std::string& name) const { return params_.count(name) != 0; }
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool trainable(const std::string& name) const;
    void remove_prefix(const std::string& prefix);

    // Flips both the trainable flag and requires_grad, so frozen parameters
    // never enter the autograd graph.
    void set_trainable_prefix(const std::string& prefix, bool trainable);

    void zero_grads();

    // p <- p - lr * grad for trainable params; frozen params untouched;
    // grads zeroed afterwards. A trainable param without an allocated grad
    // buffer is a StateError.
    void sgd_step(double lr);

    std::size_t size() const { return params_.size(); }
    const std::map<std::string, Param>& params() const { return params_; }
    std::map<std::string, Param>& params() { return params_; }

    long total_values() const;

private:
    std::map<std::string, Param> params_;
};

// He-style normal init for a conv weight [out,in,kh,kw]: stddev sqrt(2/fan_in).
Tensor he_conv_init(Shape shape, Rng& rng);

}  // namespace canet
