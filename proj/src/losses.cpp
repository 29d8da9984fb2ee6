#include "segcrowd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "segcrowd/ops.hpp"

namespace segcrowd {

Tensor grid_to_tensor(const Grid& g) {
    return Tensor::from({g.rows, g.cols}, g.data);
}

Tensor l_euclidean(const Tensor& pred, const Tensor& gt) {
    if (pred.dims() != gt.dims())
        throw std::invalid_argument("l_euclidean: dims mismatch " +
                                    dims_to_string(pred.dims()) + " vs " +
                                    dims_to_string(gt.dims()));
    const double u = static_cast<double>(gt.size());
    Tensor d = sub_elementwise(pred, gt);
    return scale(sum_all(mul_elementwise(d, d)), 1.0 / (2.0 * u));
}

Tensor dice(const Tensor& pred, const Tensor& gt, double eps) {
    if (pred.dims() != gt.dims())
        throw std::invalid_argument("dice: dims mismatch " +
                                    dims_to_string(pred.dims()) + " vs " +
                                    dims_to_string(gt.dims()));
    for (double v : gt.values())
        if (v < 0.0 || v > 1.0)
            throw std::invalid_argument("dice: gt value " + std::to_string(v) +
                                        " outside [0,1]");
    Tensor num = add_elementwise(scale(sum_all(mul_elementwise(pred, gt)), 2.0),
                                 Tensor::scalar(eps));
    Tensor den = add_elementwise(
        add_elementwise(sum_all(mul_elementwise(pred, pred)),
                        sum_all(mul_elementwise(gt, gt))),
        Tensor::scalar(eps));
    return div_scalar(num, den);
}

Tensor l_seg(const Tensor& pred, const Tensor& gt) {
    return sub_elementwise(Tensor::scalar(1.0), dice(pred, gt));
}

Tensor l_cla(const std::vector<Tensor>& logits,
             const std::vector<std::size_t>& target_class) {
    if (logits.empty() || logits.size() != target_class.size())
        throw std::invalid_argument("l_cla: need one target per logit vector");
    const double m = static_cast<double>(logits.size());
    Tensor acc = Tensor::scalar(0.0);
    for (std::size_t s = 0; s < logits.size(); ++s) {
        const Tensor& z = logits[s];
        const std::size_t k = z.size();
        if (target_class[s] < 1 || target_class[s] > k)
            throw std::out_of_range("l_cla: target class " +
                                    std::to_string(target_class[s]) +
                                    " outside 1.." + std::to_string(k));
        const std::size_t t = target_class[s] - 1;
        // stable -log softmax(z)[t] = log(sum exp(z - max)) - (z_t - max)
        auto node = std::make_shared<TensorNode>();
        node->dims = {1};
        node->is_leaf = false;
        node->parents.push_back(z.node());
        node->requires_grad = z.node()->requires_grad;
        const double zmax = *std::max_element(z.values().begin(), z.values().end());
        double sum = 0.0;
        for (double v : z.values()) sum += std::exp(v - zmax);
        node->values = {std::log(sum) - (z.value(t) - zmax)};
        node->backward_fn = [t, zmax, sum](TensorNode& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::size_t i = 0; i < p.values.size(); ++i) {
                const double soft = std::exp(p.values[i] - zmax) / sum;
                p.grad[i] += self.grad[0] * (soft - (i == t ? 1.0 : 0.0));
            }
        };
        acc = add_elementwise(acc, Tensor::wrap(node));
    }
    return scale(acc, 1.0 / m);
}

Tensor l_cla(const Tensor& logits, std::size_t target_class) {
    return l_cla(std::vector<Tensor>{logits}, {target_class});
}

Tensor l_fin(const Tensor& den, const Tensor& intermediate, const Tensor& seg,
             const Tensor& cla, double lambda1) {
    auto term = [](const Tensor& t) {
        return t.size() == 0 ? Tensor::scalar(0.0) : t;
    };
    Tensor acc = add_elementwise(term(den), term(intermediate));
    acc = add_elementwise(acc, term(seg));
    return add_elementwise(acc, scale(term(cla), lambda1));
}

}  // namespace segcrowd
