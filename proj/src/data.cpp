#include "segcrowd/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace segcrowd {

namespace fs = std::filesystem;
using nlohmann::json;

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_manifest: cannot open " + path);
    json doc;
    try {
        doc = json::parse(is);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("load_manifest: " + path + ": " + e.what());
    }
    DatasetManifest m;
    m.base_dir = fs::path(path).parent_path().string();
    m.split = doc.value("split", "train");
    if (!doc.contains("images") || !doc["images"].is_array())
        throw std::runtime_error("load_manifest: " + path + ": missing 'images' array");
    for (const auto& e : doc["images"]) {
        ManifestEntry entry;
        entry.path = e.at("path").get<std::string>();
        for (const auto& p : e.value("points", json::array())) {
            if (!p.is_array() || p.size() != 2)
                throw std::runtime_error("load_manifest: entry '" + entry.path +
                                         "': point must be [row, col]");
            entry.points.push_back({p[0].get<std::size_t>(), p[1].get<std::size_t>()});
        }
        entry.scene = e.value("scene", "");
        for (const auto& p : e.value("roi", json::array()))
            entry.roi.push_back({p[0].get<std::size_t>(), p[1].get<std::size_t>()});
        m.entries.push_back(std::move(entry));
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    json doc;
    doc["split"] = manifest.split;
    doc["images"] = json::array();
    for (const auto& e : manifest.entries) {
        json je;
        je["path"] = e.path;
        je["points"] = json::array();
        for (const auto& p : e.points) je["points"].push_back({p.row, p.col});
        if (!e.scene.empty()) je["scene"] = e.scene;
        if (!e.roi.empty()) {
            je["roi"] = json::array();
            for (const auto& p : e.roi) je["roi"].push_back({p.row, p.col});
        }
        doc["images"].push_back(std::move(je));
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("save_manifest: cannot open " + path);
    os << doc.dump(2) << '\n';
}

std::vector<AnnotatedImage> load_images(const DatasetManifest& manifest) {
    std::vector<AnnotatedImage> out;
    for (const auto& e : manifest.entries) {
        AnnotatedImage img;
        const fs::path p = fs::path(manifest.base_dir) / e.path;
        img.pixels = read_pgm(p.string());
        img.points = e.points;
        img.id = e.path;
        img.scene = e.scene;
        img.roi = e.roi;
        for (const auto& pt : img.points)
            if (pt.row >= img.pixels.rows || pt.col >= img.pixels.cols)
                throw std::runtime_error("load_images: entry '" + e.path + "': point (" +
                                         std::to_string(pt.row) + "," +
                                         std::to_string(pt.col) + ") outside " +
                                         std::to_string(img.pixels.rows) + "x" +
                                         std::to_string(img.pixels.cols));
        out.push_back(std::move(img));
    }
    return out;
}

Grid read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_pgm: cannot open " + path);
    std::string magic;
    is >> magic;
    if (magic != "P5") throw std::runtime_error("read_pgm: " + path + ": not a P5 PGM");
    std::size_t w = 0, h = 0, maxval = 0;
    is >> w >> h >> maxval;
    if (!is || maxval == 0 || maxval > 255)
        throw std::runtime_error("read_pgm: " + path + ": bad header");
    is.get();  // single whitespace after maxval
    Grid g(h, w);
    std::vector<unsigned char> buf(h * w);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw std::runtime_error("read_pgm: " + path + ": truncated pixel data");
    for (std::size_t i = 0; i < buf.size(); ++i)
        g.data[i] = static_cast<double>(buf[i]) / static_cast<double>(maxval);
    return g;
}

void write_pgm(const Grid& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_pgm: cannot open " + path);
    os << "P5\n" << img.cols << ' ' << img.rows << "\n255\n";
    std::vector<unsigned char> buf(img.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        const double v = std::clamp(img.data[i], 0.0, 1.0);
        buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size()));
    if (!os) throw std::runtime_error("write_pgm: write failed for " + path);
}

namespace {

template <typename T>
void write_le(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

Grid read_dmap(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_dmap: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "DMAP")
        throw std::runtime_error("read_dmap: " + path + ": bad magic");
    const auto h = read_le<std::uint32_t>(is);
    const auto w = read_le<std::uint32_t>(is);
    Grid g(h, w);
    for (auto& v : g.data) v = read_le<double>(is);
    if (!is) throw std::runtime_error("read_dmap: " + path + ": truncated");
    return g;
}

void write_dmap(const Grid& grid, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_dmap: cannot open " + path);
    os.write("DMAP", 4);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(grid.rows));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(grid.cols));
    for (double v : grid.data) write_le<double>(os, v);
    if (!os) throw std::runtime_error("write_dmap: write failed for " + path);
}

std::vector<AnnotatedImage> crop_patches(const AnnotatedImage& img,
                                         const AugmentationConfig& cfg) {
    const std::size_t H = img.pixels.rows, W = img.pixels.cols;
    const std::size_t ph = (H + 1) / 2, pw = (W + 1) / 2;
    if (ph < cfg.min_patch_extent || pw < cfg.min_patch_extent)
        throw std::invalid_argument("crop_patches: image " + std::to_string(H) + "x" +
                                    std::to_string(W) + " too small for " +
                                    std::to_string(cfg.min_patch_extent) +
                                    "-pixel patches");
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> dr(0, H - ph), dc(0, W - pw);
    std::vector<AnnotatedImage> patches;
    for (std::size_t i = 0; i < cfg.patches_per_image; ++i) {
        const std::size_t r0 = dr(rng), c0 = dc(rng);
        AnnotatedImage patch;
        patch.id = img.id + "#p" + std::to_string(i);
        patch.scene = img.scene;
        patch.pixels = Grid(ph, pw);
        for (std::size_t r = 0; r < ph; ++r)
            for (std::size_t c = 0; c < pw; ++c)
                patch.pixels.at(r, c) = img.pixels.at(r0 + r, c0 + c);
        for (const auto& p : img.points)
            if (p.row >= r0 && p.row < r0 + ph && p.col >= c0 && p.col < c0 + pw)
                patch.points.push_back({p.row - r0, p.col - c0});
        patches.push_back(std::move(patch));
    }
    return patches;
}

AnnotatedImage hflip(const AnnotatedImage& img) {
    AnnotatedImage out = img;
    const std::size_t W = img.pixels.cols;
    for (std::size_t r = 0; r < img.pixels.rows; ++r)
        for (std::size_t c = 0; c < W; ++c)
            out.pixels.at(r, c) = img.pixels.at(r, W - 1 - c);
    for (auto& p : out.points) p.col = W - 1 - p.col;
    for (auto& p : out.roi) p.col = W - 1 - p.col;
    return out;
}

AnnotatedImage add_noise(const AnnotatedImage& img, double std_dev,
                         std::uint64_t seed) {
    if (std_dev < 0.0)
        throw std::invalid_argument("add_noise: negative std");
    AnnotatedImage out = img;
    if (std_dev == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, std_dev);
    for (auto& v : out.pixels.data)
        v = std::clamp(v + noise(rng), 0.0, 1.0);
    return out;
}

AnnotatedImage synth_scene(std::uint64_t seed, std::size_t count_min,
                           std::size_t count_max, std::size_t height,
                           std::size_t width) {
    if (count_min > count_max)
        throw std::invalid_argument("synth_scene: empty count range");
    std::mt19937_64 rng(seed);
    AnnotatedImage img;
    img.id = "synth-" + std::to_string(seed);
    img.pixels = Grid(height, width);

    // low-amplitude textured background
    std::uniform_real_distribution<double> tex(0.05, 0.25);
    for (auto& v : img.pixels.data) v = tex(rng);

    std::uniform_int_distribution<std::size_t> count_dist(count_min, count_max);
    const std::size_t n = count_dist(rng);
    std::uniform_int_distribution<std::size_t> rrow(0, height - 1), rcol(0, width - 1);
    std::uniform_real_distribution<double> radius(2.0, 4.0);
    const std::size_t max_attempts = 200 * (n + 1);
    std::size_t attempts = 0;
    while (img.points.size() < n) {
        if (++attempts > max_attempts)
            throw std::runtime_error("synth_scene: cannot pack " + std::to_string(n) +
                                     " heads into " + std::to_string(height) + "x" +
                                     std::to_string(width));
        const Point p{rrow(rng), rcol(rng)};
        bool ok = true;
        for (const auto& q : img.points) {
            const auto dr = std::max(p.row, q.row) - std::min(p.row, q.row);
            const auto dc = std::max(p.col, q.col) - std::min(p.col, q.col);
            if (dr < 5 && dc < 5) { ok = false; break; }
        }
        if (!ok) continue;
        const double rad = radius(rng);
        for (long long dr = -4; dr <= 4; ++dr)
            for (long long dc = -4; dc <= 4; ++dc) {
                const long long r = static_cast<long long>(p.row) + dr;
                const long long c = static_cast<long long>(p.col) + dc;
                if (r < 0 || c < 0 || r >= static_cast<long long>(height) ||
                    c >= static_cast<long long>(width))
                    continue;
                if (dr * dr + dc * dc <= rad * rad)
                    img.pixels.at(r, c) = 0.9;
            }
        img.points.push_back(p);
    }
    return img;
}

}  // namespace segcrowd
