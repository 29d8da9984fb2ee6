#include "segcrowd/groundtruth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace segcrowd {

double Grid::sum() const {
    double s = 0.0;
    for (double v : data) s += v;
    return s;
}

GaussianKernel gaussian_kernel(std::size_t size, double sigma) {
    if (size % 2 == 0)
        throw std::invalid_argument("gaussian_kernel: size must be odd, got " +
                                    std::to_string(size));
    if (sigma <= 0.0)
        throw std::invalid_argument("gaussian_kernel: sigma must be positive");
    GaussianKernel k;
    k.size = size;
    k.sigma = sigma;
    k.window = Grid(size, size);
    const double c = (size - 1) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i)
        for (std::size_t j = 0; j < size; ++j) {
            const double d2 = (i - c) * (i - c) + (j - c) * (j - c);
            total += (k.window.at(i, j) = std::exp(-d2 / (2.0 * sigma * sigma)));
        }
    for (auto& v : k.window.data) v /= total;
    return k;
}

Grid density_map(const AnnotatedImage& img, std::size_t kernel_size, double sigma) {
    const std::size_t H = img.pixels.rows, W = img.pixels.cols;
    const GaussianKernel k = gaussian_kernel(kernel_size, sigma);
    const long long r = static_cast<long long>(kernel_size) / 2;
    Grid out(H, W);
    for (const auto& p : img.points) {
        if (p.row >= H || p.col >= W)
            throw std::out_of_range("density_map: point (" + std::to_string(p.row) +
                                    "," + std::to_string(p.col) +
                                    ") outside image " + std::to_string(H) + "x" +
                                    std::to_string(W));
        // mass of the kernel restricted to in-image support
        double mass = 0.0;
        for (long long di = -r; di <= r; ++di)
            for (long long dj = -r; dj <= r; ++dj) {
                const long long rr = static_cast<long long>(p.row) + di;
                const long long cc = static_cast<long long>(p.col) + dj;
                if (rr < 0 || cc < 0 || rr >= static_cast<long long>(H) ||
                    cc >= static_cast<long long>(W))
                    continue;
                mass += k.window.at(di + r, dj + r);
            }
        for (long long di = -r; di <= r; ++di)
            for (long long dj = -r; dj <= r; ++dj) {
                const long long rr = static_cast<long long>(p.row) + di;
                const long long cc = static_cast<long long>(p.col) + dj;
                if (rr < 0 || cc < 0 || rr >= static_cast<long long>(H) ||
                    cc >= static_cast<long long>(W))
                    continue;
                out.at(rr, cc) += k.window.at(di + r, dj + r) / mass;
            }
    }
    return out;
}

Grid segmentation_map(const AnnotatedImage& img, std::size_t template_size) {
    if (template_size % 2 == 0)
        throw std::invalid_argument("segmentation_map: template size must be odd, got " +
                                    std::to_string(template_size));
    const std::size_t H = img.pixels.rows, W = img.pixels.cols;
    const long long r = static_cast<long long>(template_size) / 2;
    Grid out(H, W);
    for (const auto& p : img.points) {
        if (p.row >= H || p.col >= W)
            throw std::out_of_range("segmentation_map: point outside image");
        const std::size_t r0 = static_cast<std::size_t>(std::max<long long>(0, p.row - r));
        const std::size_t r1 = static_cast<std::size_t>(
            std::min<long long>(H - 1, p.row + r));
        const std::size_t c0 = static_cast<std::size_t>(std::max<long long>(0, p.col - r));
        const std::size_t c1 = static_cast<std::size_t>(
            std::min<long long>(W - 1, p.col + r));
        for (std::size_t rr = r0; rr <= r1; ++rr)
            for (std::size_t cc = c0; cc <= c1; ++cc) out.at(rr, cc) = 1.0;
    }
    return out;
}

namespace {

Grid downsample(const Grid& map, std::size_t factor, bool use_max) {
    if (factor < 1)
        throw std::invalid_argument("downsample: factor must be >= 1");
    if (factor == 1) return map;
    const std::size_t Ho = (map.rows + factor - 1) / factor;
    const std::size_t Wo = (map.cols + factor - 1) / factor;
    Grid out(Ho, Wo);
    for (std::size_t r = 0; r < map.rows; ++r)
        for (std::size_t c = 0; c < map.cols; ++c) {
            double& cell = out.at(r / factor, c / factor);
            cell = use_max ? std::max(cell, map.at(r, c)) : cell + map.at(r, c);
        }
    return out;
}

}  // namespace

Grid downsample_sum(const Grid& map, std::size_t factor) {
    return downsample(map, factor, false);
}

Grid downsample_max(const Grid& map, std::size_t factor) {
    return downsample(map, factor, true);
}

CountBins make_bins(const std::vector<double>& train_counts, std::size_t k) {
    if (train_counts.empty())
        throw std::invalid_argument("make_bins: empty count list");
    const auto [lo_it, hi_it] = std::minmax_element(train_counts.begin(), train_counts.end());
    const double lo = *lo_it, hi = *hi_it;
    CountBins bins;
    if (lo == hi) {
        // degenerate range: everything is class 1
        bins.edges = {lo, hi};
        return bins;
    }
    bins.edges.resize(k + 1);
    for (std::size_t i = 0; i <= k; ++i)
        bins.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k);
    return bins;
}

std::size_t quantize_count(double count, const CountBins& bins) {
    const std::size_t k = bins.num_classes();
    if (bins.edges.size() < 2 || k == 1) return 1;
    if (count <= bins.edges.front()) return 1;
    if (count >= bins.edges.back()) return k;
    // upper-inclusive intervals (lo, hi]
    for (std::size_t i = 1; i <= k; ++i)
        if (count <= bins.edges[i]) return i;
    return k;
}

}  // namespace segcrowd
