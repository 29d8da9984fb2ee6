#pragma once

#include <cstdint>
#include <optional>

#include "segcrowd/grid.hpp"

namespace segcrowd {

struct ManifestEntry {
    std::string path;                 // PGM image, relative to the manifest dir
    std::vector<Point> points;
    std::string scene;
    std::vector<Point> roi;
};

struct DatasetManifest {
    std::string split;                // "train" or "test"
    std::vector<ManifestEntry> entries;
    std::string base_dir;             // directory the manifest was loaded from
};

struct AugmentationConfig {
    std::size_t patches_per_image = 9;
    bool hflip = true;
    double noise_std = 0.01;          // fraction of dynamic range; 0 disables
    std::uint64_t seed = 0;
    std::size_t min_patch_extent = 16;
};

// Manifest JSON: {"split": ..., "images":[{"path":..., "points":[[r,c],...],
// "scene":..., "roi":[[r,c],...]}]}
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

// Loads every entry's image; validates points against image bounds.
std::vector<AnnotatedImage> load_images(const DatasetManifest& manifest);

// 8-bit grayscale PGM (P5); values mapped to [0,1]
Grid read_pgm(const std::string& path);
void write_pgm(const Grid& img, const std::string& path);

// DMAP: magic "DMAP", u32 height, u32 width, row-major little-endian f64
Grid read_dmap(const std::string& path);
void write_dmap(const Grid& grid, const std::string& path);

// patches_per_image uniformly-random crops of size (ceil(H/2), ceil(W/2));
// annotations shifted into the patch frame, out-of-patch points dropped
std::vector<AnnotatedImage> crop_patches(const AnnotatedImage& img,
                                         const AugmentationConfig& cfg);

AnnotatedImage hflip(const AnnotatedImage& img);

AnnotatedImage add_noise(const AnnotatedImage& img, double std_dev,
                         std::uint64_t seed);

// Deterministic synthetic crowd scene: bright discs (radius 2..4) on a
// textured background, one annotation per disc center.
AnnotatedImage synth_scene(std::uint64_t seed, std::size_t count_min,
                           std::size_t count_max, std::size_t height,
                           std::size_t width);

}  // namespace segcrowd
