#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace segcrowd {

// Row-major H x W grid of doubles; the plain (non-differentiable) carrier for
// images, density maps and segmentation maps.
struct Grid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Grid() = default;
    Grid(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double sum() const;

    bool operator==(const Grid&) const = default;
};

struct Point {
    std::size_t row = 0;
    std::size_t col = 0;
    bool operator==(const Point&) const = default;
};

// Grayscale image (values in [0,1]) with dot annotations at head centers.
struct AnnotatedImage {
    Grid pixels;
    std::vector<Point> points;
    std::string id;
    std::string scene;                  // empty -> no scene grouping
    std::vector<Point> roi;             // empty -> no ROI

    std::size_t count() const { return points.size(); }
};

}  // namespace segcrowd
