#include "canet/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace canet {

int shape_numel(const Shape& shape) {
    int n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace {
thread_local bool g_autograd_enabled = true;
}

bool autograd_enabled() { return g_autograd_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_autograd_enabled) { g_autograd_enabled = false; }
NoGradGuard::~NoGradGuard() { g_autograd_enabled = previous_; }

void TensorNode::accumulate_grad(const std::vector<double>& g) {
    auto& dst = ensure_grad();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

std::vector<double>& TensorNode::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const int n = shape_numel(shape);
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data.assign(static_cast<std::size_t>(n), 0.0);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.node()->data.begin(), t.node()->data.end(), value);
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    const int n = shape_numel(shape);
    if (static_cast<std::size_t>(n) != data.size())
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::numel() const { return node_->numel(); }
const std::vector<double>& Tensor::data() const { return node_->data; }
std::vector<double>& Tensor::raw_data() const { return node_->data; }

double Tensor::at(int c, int h, int w) const {
    const Shape& s = shape();
    return data()[static_cast<std::size_t>((c * s[1] + h) * s[2] + w)];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool v) { node_->requires_grad = v; }

bool Tensor::has_grad() const { return node_->grad.size() == node_->data.size(); }
const std::vector<double>& Tensor::grad() const { return node_->grad; }
std::vector<double>& Tensor::ensure_grad() const { return node_->ensure_grad(); }

void Tensor::zero_grad() const {
    auto& g = node_->ensure_grad();
    std::fill(g.begin(), g.end(), 0.0);
}

namespace {

void topo_visit(TensorNode* n, std::unordered_set<TensorNode*>& seen, std::vector<TensorNode*>& order) {
    if (!n->requires_grad || seen.count(n)) return;
    seen.insert(n);
    for (auto& p : n->parents) topo_visit(p.get(), seen, order);
    order.push_back(n);
}

}  // namespace

void Tensor::backward() {
    if (numel() != 1) throw StateError("backward() without a seed requires a scalar output");
    backward(std::vector<double>{1.0});
}

void Tensor::backward(const std::vector<double>& seed) {
    if (!node_->requires_grad) throw StateError("backward() on a tensor that does not require grad");
    if (seed.size() != node_->data.size()) throw ShapeError("backward seed size mismatch");

    std::unordered_set<TensorNode*> seen;
    std::vector<TensorNode*> order;
    topo_visit(node_.get(), seen, order);

    node_->accumulate_grad(seed);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

Tensor Tensor::detach() const {
    auto node = std::make_shared<TensorNode>();
    node->shape = node_->shape;
    node->data = node_->data;
    node->requires_grad = false;
    return Tensor(std::move(node));
}

Tensor Tensor::clone() const {
    auto node = std::make_shared<TensorNode>();
    node->shape = node_->shape;
    node->data = node_->data;
    node->requires_grad = node_->requires_grad;
    return Tensor(std::move(node));
}

Tensor make_op_result(Shape shape, std::vector<double> data,
                      std::vector<Tensor> parents,
                      std::function<void(TensorNode&)> backward_fn) {
    Tensor out = Tensor::from_data(std::move(shape), std::move(data), false);
    if (!autograd_enabled()) return out;
    bool needs = false;
    for (const auto& p : parents)
        if (p.defined() && p.requires_grad()) needs = true;
    if (!needs) return out;

    TensorNode* n = out.node();
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents)
        if (p.defined()) n->parents.push_back(p.node_ptr());
    n->backward_fn = std::move(backward_fn);
    return out;
}

}  // namespace canet
