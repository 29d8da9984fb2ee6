#pragma once

#include "segcrowd/grid.hpp"

namespace segcrowd {

// Truncated, normalized Gaussian window. Entries sum to 1 exactly after
// normalization; symmetric under both axis flips; peak at the center.
struct GaussianKernel {
    std::size_t size = 15;
    double sigma = 4.0;
    Grid window;
};

// Count quantization table: K equal-width classes over [lo, hi], intervals
// upper-inclusive, out-of-range counts clamped to the end classes.
struct CountBins {
    std::vector<double> edges;  // K+1 ascending (degenerate range -> collapsed)
    std::size_t num_classes() const { return edges.empty() ? 1 : edges.size() - 1; }
};

GaussianKernel gaussian_kernel(std::size_t size = 15, double sigma = 4.0);

// Eq.-style density ground truth: one normalized kernel per annotated point.
// Kernels clipped by the image border are renormalized over their in-image
// support so each point contributes total mass exactly 1.
Grid density_map(const AnnotatedImage& img, std::size_t kernel_size = 15,
                 double sigma = 4.0);

// Binary map built by pasting a template_size x template_size ones block
// (logical OR) centered on each annotated point, clipped at borders.
Grid segmentation_map(const AnnotatedImage& img, std::size_t template_size = 15);

// Sum over factor x factor blocks; zero-pads to a multiple of factor, so the
// total mass is preserved exactly.
Grid downsample_sum(const Grid& map, std::size_t factor);

// Max over factor x factor blocks; keeps a binary map binary.
Grid downsample_max(const Grid& map, std::size_t factor);

CountBins make_bins(const std::vector<double>& train_counts, std::size_t k = 5);

// 1-based class index; clamps below/above the bin range.
std::size_t quantize_count(double count, const CountBins& bins);

}  // namespace segcrowd
