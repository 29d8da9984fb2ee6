#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "segcrowd/data.hpp"
#include "segcrowd/groundtruth.hpp"

using namespace segcrowd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("segcrowd_data_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("manifest: write, read, recount") {
    TempDir tmp;
    DatasetManifest m;
    m.split = "train";
    AnnotatedImage a = synth_scene(1, 3, 6, 48, 48);
    AnnotatedImage b = synth_scene(2, 0, 0, 48, 48);  // zero points is valid
    write_pgm(a.pixels, (tmp.path / "a.pgm").string());
    write_pgm(b.pixels, (tmp.path / "b.pgm").string());
    m.entries.push_back({"a.pgm", a.points, "s1", {}});
    m.entries.push_back({"b.pgm", b.points, "", {}});
    // duplicate points are permitted by the format
    m.entries[0].points.push_back(m.entries[0].points.front());

    const std::string mpath = (tmp.path / "manifest.json").string();
    save_manifest(m, mpath);
    DatasetManifest back = load_manifest(mpath);
    REQUIRE(back.entries.size() == 2);
    CHECK(back.split == "train");
    CHECK(back.entries[0].scene == "s1");
    CHECK(back.entries[0].points.size() == a.points.size() + 1);
    CHECK(back.entries[1].points.empty());

    std::size_t manifest_total = 0;
    for (const auto& e : back.entries) manifest_total += e.points.size();
    auto images = load_images(back);
    std::size_t recount = 0;
    for (const auto& img : images) recount += img.count();
    CHECK(recount == manifest_total);
}

TEST_CASE("manifest errors") {
    TempDir tmp;
    const std::string bad = (tmp.path / "bad.json").string();
    { std::ofstream(bad) << "{not json"; }
    CHECK_THROWS_AS(load_manifest(bad), std::runtime_error);
    CHECK_THROWS_AS(load_manifest((tmp.path / "missing.json").string()),
                    std::runtime_error);

    // out-of-bounds annotation detected at image load
    DatasetManifest m;
    AnnotatedImage img = synth_scene(3, 1, 2, 32, 32);
    write_pgm(img.pixels, (tmp.path / "img.pgm").string());
    m.entries.push_back({"img.pgm", {{200, 5}}, "", {}});
    m.base_dir = tmp.path.string();
    CHECK_THROWS_WITH_AS(load_images(m), doctest::Contains("img.pgm"),
                         std::runtime_error);
}

TEST_CASE("pgm round-trip is byte-identical") {
    TempDir tmp;
    AnnotatedImage img = synth_scene(7, 5, 10, 40, 56);
    const std::string p1 = (tmp.path / "x.pgm").string();
    const std::string p2 = (tmp.path / "y.pgm").string();
    write_pgm(img.pixels, p1);
    write_pgm(read_pgm(p1), p2);
    CHECK(slurp(p1) == slurp(p2));
    CHECK(!slurp(p1).empty());
}

TEST_CASE("dmap round-trip is byte-identical") {
    TempDir tmp;
    AnnotatedImage img = synth_scene(8, 5, 10, 40, 40);
    Grid d = density_map(img);
    const std::string p1 = (tmp.path / "x.dmap").string();
    const std::string p2 = (tmp.path / "y.dmap").string();
    write_dmap(d, p1);
    Grid back = read_dmap(p1);
    CHECK(back.data == d.data);
    write_dmap(back, p2);
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("crop_patches: geometry, determinism, annotation bookkeeping") {
    AnnotatedImage img = synth_scene(10, 10, 20, 64, 80);
    AugmentationConfig cfg;
    cfg.seed = 4;
    auto patches = crop_patches(img, cfg);
    REQUIRE(patches.size() == 9);
    for (const auto& p : patches) {
        CHECK(p.pixels.rows == 32);
        CHECK(p.pixels.cols == 40);
        CHECK(p.count() <= img.count());
        for (const auto& pt : p.points) {
            CHECK(pt.row < 32);
            CHECK(pt.col < 40);
        }
    }
    auto again = crop_patches(img, cfg);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(patches[i].pixels.data == again[i].pixels.data);
        CHECK(patches[i].points == again[i].points);
    }

    AnnotatedImage small = synth_scene(11, 0, 0, 20, 20);
    CHECK_THROWS_AS(crop_patches(small, cfg), std::invalid_argument);
}

TEST_CASE("hflip is an involution and mirrors the density map") {
    AnnotatedImage img = synth_scene(12, 6, 12, 48, 48);
    AnnotatedImage once = hflip(img);
    AnnotatedImage twice = hflip(once);
    CHECK(twice.pixels.data == img.pixels.data);
    CHECK(twice.points == img.points);
    CHECK(once.count() == img.count());

    Grid d = density_map(img);
    Grid df = density_map(once);
    for (std::size_t r = 0; r < d.rows; ++r)
        for (std::size_t c = 0; c < d.cols; ++c)
            CHECK(df.at(r, d.cols - 1 - c) == doctest::Approx(d.at(r, c)).epsilon(1e-9));
}

TEST_CASE("add_noise: identity at zero std, annotations untouched, CLT bound") {
    AnnotatedImage img = synth_scene(13, 3, 8, 32, 32);
    AnnotatedImage same = add_noise(img, 0.0, 99);
    CHECK(same.pixels.data == img.pixels.data);

    AnnotatedImage flat;
    flat.pixels = Grid(256, 256, 0.5);
    AnnotatedImage noisy = add_noise(flat, 0.01, 7);
    CHECK(noisy.points == flat.points);
    double mean = 0.0;
    for (std::size_t i = 0; i < noisy.pixels.data.size(); ++i)
        mean += noisy.pixels.data[i] - flat.pixels.data[i];
    mean /= double(noisy.pixels.data.size());
    CHECK(std::abs(mean) < 3.0 * 0.01 / 256.0);

    CHECK_THROWS_AS(add_noise(img, -0.1, 0), std::invalid_argument);
}

TEST_CASE("synth_scene: determinism, count range, density-map invariant") {
    AnnotatedImage a = synth_scene(20, 5, 15, 64, 64);
    AnnotatedImage b = synth_scene(20, 5, 15, 64, 64);
    CHECK(a.pixels.data == b.pixels.data);
    CHECK(a.points == b.points);
    CHECK(a.count() >= 5);
    CHECK(a.count() <= 15);

    Grid d = density_map(a);
    CHECK(d.sum() == doctest::Approx(double(a.count())).epsilon(1e-6));

    // impossible packing: too many heads for the area
    CHECK_THROWS_AS(synth_scene(21, 500, 500, 24, 24), std::runtime_error);
}
