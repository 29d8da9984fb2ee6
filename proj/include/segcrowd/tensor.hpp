#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace segcrowd {

// Reverse-mode autodiff node. Values are always 64-bit; the graph is a DAG
// of shared nodes built by the operator functions in ops.hpp.
struct TensorNode {
    std::vector<std::size_t> dims;
    std::vector<double> values;
    std::vector<double> grad;            // lazily sized; empty until touched
    bool requires_grad = false;          // true if this node or any ancestor is a trainable leaf
    bool is_leaf = true;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    std::size_t size() const { return values.size(); }
    void accumulate(std::size_t i, double g) {
        if (grad.empty()) grad.assign(values.size(), 0.0);
        grad[i] += g;
    }
    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
    }
};

// Value-semantic handle over a shared graph node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
    static Tensor from(std::vector<std::size_t> dims, std::vector<double> values);
    static Tensor scalar(double v);

    const std::vector<std::size_t>& dims() const { return node_->dims; }
    std::size_t size() const { return node_->size(); }
    std::size_t rank() const { return node_->dims.size(); }

    const std::vector<double>& values() const { return node_->values; }
    std::vector<double>& values() { return node_->values; }
    double value(std::size_t i = 0) const { return node_->values[i]; }

    // (c, h, w) access for rank-3 tensors
    double at(std::size_t c, std::size_t h, std::size_t w) const;
    double& at(std::size_t c, std::size_t h, std::size_t w);

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on = true);

    const std::vector<double>& grad() const;
    void zero_grad();

    bool all_finite() const;

    std::shared_ptr<TensorNode> node() const { return node_; }
    static Tensor wrap(std::shared_ptr<TensorNode> n) { Tensor t; t.node_ = std::move(n); return t; }

private:
    std::shared_ptr<TensorNode> node_ = std::make_shared<TensorNode>();
};

// Backpropagate from a scalar loss to every requires_grad leaf.
// Gradients accumulate; call zero_grad on leaves before reusing the graph.
void backward(const Tensor& scalar_loss);

std::string dims_to_string(const std::vector<std::size_t>& dims);

}  // namespace segcrowd
