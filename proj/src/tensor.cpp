#include "segcrowd/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace segcrowd {

static std::size_t product(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> dims, double fill) {
    node_->dims = std::move(dims);
    node_->values.assign(product(node_->dims), fill);
}

Tensor Tensor::from(std::vector<std::size_t> dims, std::vector<double> values) {
    if (product(dims) != values.size())
        throw std::invalid_argument("Tensor::from: " + std::to_string(values.size()) +
                                    " values for dims " + dims_to_string(dims));
    Tensor t;
    t.node_->dims = std::move(dims);
    t.node_->values = std::move(values);
    return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

double Tensor::at(std::size_t c, std::size_t h, std::size_t w) const {
    const auto& d = node_->dims;
    return node_->values[(c * d[1] + h) * d[2] + w];
}

double& Tensor::at(std::size_t c, std::size_t h, std::size_t w) {
    const auto& d = node_->dims;
    return node_->values[(c * d[1] + h) * d[2] + w];
}

Tensor& Tensor::set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
}

const std::vector<double>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->values.size(), 0.0); }

bool Tensor::all_finite() const {
    for (double v : node_->values)
        if (!std::isfinite(v)) return false;
    return true;
}

void backward(const Tensor& scalar_loss) {
    if (scalar_loss.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got dims " +
                                    dims_to_string(scalar_loss.dims()));
    // Topological order over the reachable subgraph.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(scalar_loss.node().get(), 0);
    seen.insert(scalar_loss.node().get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            TensorNode* p = n->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second)
                stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    scalar_loss.node()->ensure_grad();
    scalar_loss.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

std::string dims_to_string(const std::vector<std::size_t>& dims) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < dims.size(); ++i)
        os << (i ? "," : "") << dims[i];
    os << ')';
    return os.str();
}

}  // namespace segcrowd
