#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "canet/errors.hpp"

namespace canet {

using Shape = std::vector<int>;

int shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorNode;

// Reverse-mode autograd tensor. Value type with shared storage: copies
// alias the same node, ops build a graph of nodes, backward() walks it.
// Layout is row-major; feature maps are [C,H,W], vectors [C], scalars [1].
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int dim(int i) const { return shape().at(static_cast<std::size_t>(i)); }
    int ndim() const { return static_cast<int>(shape().size()); }
    int numel() const;

    const std::vector<double>& data() const;
    // Direct mutation is for leaves (parameters, inputs) only; mutating an
    // op output would desynchronize it from its recorded backward. Tensors
    // are handles, so these const methods mutate the shared node, matching
    // how backward closures capture tensors by value.
    std::vector<double>& raw_data() const;

    double value_at(int i) const { return data()[static_cast<std::size_t>(i)]; }
    double at(int c, int h, int w) const;

    bool requires_grad() const;
    void set_requires_grad(bool v);

    bool has_grad() const;
    const std::vector<double>& grad() const;
    std::vector<double>& ensure_grad() const;
    void zero_grad() const;

    // Backpropagate from this node. Scalar form seeds with 1.
    void backward();
    void backward(const std::vector<double>& seed);

    Tensor detach() const;
    Tensor clone() const;

    TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<TensorNode>& node_ptr() const { return node_; }

    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated lazily
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    int numel() const { return static_cast<int>(data.size()); }
    void accumulate_grad(const std::vector<double>& g);
    std::vector<double>& ensure_grad();
};

// Graph recording switch (thread-local). Inference paths disable recording
// so forward passes allocate no graph.
bool autograd_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Helper for op implementations: make a result node, wiring parents and the
// backward closure only when recording is on and some parent needs grad.
Tensor make_op_result(Shape shape, std::vector<double> data,
                      std::vector<Tensor> parents,
                      std::function<void(TensorNode&)> backward_fn);

}  // namespace canet
