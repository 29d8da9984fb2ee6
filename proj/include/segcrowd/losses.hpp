#pragma once

#include "segcrowd/grid.hpp"
#include "segcrowd/tensor.hpp"

namespace segcrowd {

struct LossBreakdown {
    double l_int = 0.0;
    double l_den = 0.0;
    double l_seg = 0.0;
    double l_cla = 0.0;
    double l_fin = 0.0;
    double lambda1 = 0.01;
};

// (1/(2U)) * sum_i (pred_i - gt_i)^2, U = pixel count. Serves both the
// intermediate and the final density loss.
Tensor l_euclidean(const Tensor& pred, const Tensor& gt);

// Soft squared dice: (2*sum(p*g) + eps) / (sum(p^2) + sum(g^2) + eps).
// eps keeps the empty-on-empty case at 1.
Tensor dice(const Tensor& pred, const Tensor& gt, double eps = 1e-6);

// 1 - dice
Tensor l_seg(const Tensor& pred, const Tensor& gt);

// Cross-entropy over raw logits (stable log-softmax), averaged over the
// batch. target_class is 1-based.
Tensor l_cla(const std::vector<Tensor>& logits,
             const std::vector<std::size_t>& target_class);
Tensor l_cla(const Tensor& logits, std::size_t target_class);

// Weighted total: l_den + l_int + l_seg + lambda1 * l_cla. Zero-size parts
// are allowed to stand for disabled tasks (contribute exactly 0).
Tensor l_fin(const Tensor& den, const Tensor& intermediate, const Tensor& seg,
             const Tensor& cla, double lambda1 = 0.01);

Tensor grid_to_tensor(const Grid& g);  // constant (no grad) H x W tensor

}  // namespace segcrowd
