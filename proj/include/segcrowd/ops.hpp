#pragma once

#include "segcrowd/tensor.hpp"

namespace segcrowd {

// Convolution geometry. Output extent per axis:
//   floor((in + 2*padding - dilation*(kernel-1) - 1)/stride) + 1
struct ConvSpec {
    std::size_t kernel_h = 3;
    std::size_t kernel_w = 3;
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t dilation = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;

    std::size_t out_extent(std::size_t in, std::size_t kernel) const;
};

// input (C,H,W), weights (O,C,kh,kw), bias (O) -> (O,H',W'), zero padding.
Tensor conv2d(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
              const Tensor& bias);

// 2x2 window, stride 2. Gradient routes to the first argmax in scan order.
Tensor max_pool2d(const Tensor& input);

Tensor relu(const Tensor& input);
// slope is a 1-element tensor (shared) or per-channel vector matching dim 0.
Tensor prelu(const Tensor& input, const Tensor& slope);
Tensor sigmoid(const Tensor& input);
// softmax over a rank-1 class vector
Tensor softmax(const Tensor& input);

// Spatial pyramid pooling: for each level n the C x H x W map is split into
// n x n cells (boundaries at floor(i*H/n)); max per cell. Output is a flat
// vector of length C * sum(n^2), independent of H and W.
Tensor spp(const Tensor& input, const std::vector<std::size_t>& levels);

// weights (out,in), input flat (in), bias (out)
Tensor fully_connected(const Tensor& input, const Tensor& weights,
                       const Tensor& bias);

Tensor add_elementwise(const Tensor& a, const Tensor& b);
Tensor sub_elementwise(const Tensor& a, const Tensor& b);
Tensor mul_elementwise(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor sum_all(const Tensor& a);                 // -> scalar
Tensor div_scalar(const Tensor& a, const Tensor& b);  // scalar / scalar
Tensor concat_channels(const std::vector<Tensor>& parts);  // rank-3, same H,W
Tensor reshape(const Tensor& a, std::vector<std::size_t> dims);  // same element count

}  // namespace segcrowd
