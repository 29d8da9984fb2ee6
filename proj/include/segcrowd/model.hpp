#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "segcrowd/grid.hpp"
#include "segcrowd/ops.hpp"
#include "segcrowd/tensor.hpp"

namespace segcrowd {

struct ModelConfig {
    std::array<std::size_t, 4> branch_kernels{3, 5, 7, 9};
    std::size_t branch_filters = 16;
    std::vector<std::size_t> spp_levels{1, 2, 4};
    std::size_t fc_hidden = 64;
    std::size_t num_classes = 5;
    std::size_t shared_repeats = 2;   // applications of the weight-tied block
    std::size_t shared_dilation = 2;
    std::size_t in_channels = 1;
    std::uint64_t seed = 0;

    // two 2x2 pools plus the largest SPP grid bound the input size
    std::size_t min_input_extent() const;
    static constexpr std::size_t output_stride = 4;
};

// Named learnable tensors (weights, biases, PReLU slopes), all requires_grad.
struct ModelParams {
    ModelConfig config;
    std::map<std::string, Tensor> tensors;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    void zero_grad();
};

struct ForwardOutput {
    Tensor class_logits;          // (num_classes)
    Tensor seg_map;               // (1, H/4, W/4), values in (0,1)
    Tensor density_intermediate;  // (1, H/4, W/4), >= 0
    Tensor density_final;         // (1, H/4, W/4), >= 0
};

ModelParams build(const ModelConfig& config);

ForwardOutput forward(const ModelParams& params, const Tensor& image);

double count_from_density(const Grid& density);

Tensor image_to_tensor(const Grid& pixels);  // (1,H,W), no grad
Grid map_to_grid(const Tensor& map);         // (1,H,W) -> Grid

// "SCNW" checkpoint: magic, u32 version, then records of
// (u16 name length, name bytes, u8 rank, u32 dims..., little-endian f64
// values). The config rides along as cfg.* scalar records.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace segcrowd
