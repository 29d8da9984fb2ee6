// segcrowd: crowd-counting pipeline CLI.
// Subcommands: gen-gt | synth | train | eval | infer
// Config precedence: defaults < --config file (key=value) < flags.
// SEGCROWD_SEED provides the default seed.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "segcrowd/data.hpp"
#include "segcrowd/groundtruth.hpp"
#include "segcrowd/model.hpp"
#include "segcrowd/train.hpp"

namespace fs = std::filesystem;
using namespace segcrowd;

namespace {

std::uint64_t default_seed() {
    if (const char* env = std::getenv("SEGCROWD_SEED"))
        return std::strtoull(env, nullptr, 10);
    return 0;
}

// reproducibility header: the fully-resolved option set of the active
// subcommand, on stderr so stdout stays data-only
void echo_config(const CLI::App& cmd) {
    std::cerr << "# " << cmd.get_name() << " resolved config:\n";
    for (const CLI::Option* opt : cmd.get_options()) {
        if (opt->get_name() == "--help") continue;
        std::cerr << "#   " << opt->get_name() << " = ";
        const auto& results = opt->results();
        if (results.empty()) {
            std::cerr << opt->get_default_str();
        } else {
            for (std::size_t i = 0; i < results.size(); ++i)
                std::cerr << (i ? "," : "") << results[i];
        }
        std::cerr << '\n';
    }
}

std::string stem_of(const std::string& path) {
    return fs::path(path).stem().string();
}

int cmd_gen_gt(const std::string& manifest_path, const std::string& out_dir,
               std::size_t template_size, double sigma) {
    DatasetManifest manifest = load_manifest(manifest_path);
    auto images = load_images(manifest);
    fs::create_directories(out_dir);
    double total_mass = 0.0;
    std::size_t total_points = 0;
    for (const auto& img : images) {
        Grid den = density_map(img, template_size, sigma);
        Grid seg = segmentation_map(img, template_size);
        const std::string stem = stem_of(img.id);
        write_dmap(den, (fs::path(out_dir) / (stem + ".den.dmap")).string());
        write_dmap(seg, (fs::path(out_dir) / (stem + ".seg.dmap")).string());
        total_mass += den.sum();
        total_points += img.count();
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", total_mass);
    std::cout << "total density mass " << buf << " (annotations " << total_points
              << ")\n";
    return 0;
}

int cmd_synth(std::uint64_t seed, std::size_t count_min, std::size_t count_max,
              std::size_t num_images, std::size_t height, std::size_t width,
              const std::string& out_dir) {
    fs::create_directories(out_dir);
    DatasetManifest manifest;
    manifest.split = "train";
    for (std::size_t i = 0; i < num_images; ++i) {
        AnnotatedImage img = synth_scene(seed + i, count_min, count_max, height, width);
        char name[32];
        std::snprintf(name, sizeof(name), "img_%03zu.pgm", i);
        write_pgm(img.pixels, (fs::path(out_dir) / name).string());
        manifest.entries.push_back({name, img.points, "", {}});
    }
    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    std::cout << "wrote " << num_images << " images to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& out_dir,
              const TrainConfig& cfg, std::size_t filters) {
    DatasetManifest manifest = load_manifest(manifest_path);
    auto images = load_images(manifest);
    fs::create_directories(out_dir);

    ModelConfig mc;
    mc.branch_filters = filters;
    mc.seed = cfg.seed;
    ModelParams init = build(mc);

    TrainConfig run = cfg;
    run.checkpoint_path = (fs::path(out_dir) / "checkpoint.scnw").string();
    TrainResult result = train(init, images, run);
    write_loss_log(result.log, (fs::path(out_dir) / "loss.csv").string());
    std::cout << "final l_fin " << result.log.back().l_fin << " after "
              << result.log.size() << " iterations\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest_path,
             bool use_roi, const std::string& out_path) {
    ModelParams params = load_checkpoint(checkpoint);
    DatasetManifest manifest = load_manifest(manifest_path);
    auto images = load_images(manifest);
    EvalOptions options;
    options.use_roi = use_roi;
    EvalReport report = evaluate(params, images, options);
    if (out_path.empty()) {
        std::cout << "id,scene,gt_count,predicted\n";
        for (const auto& r : report.rows)
            std::cout << r.id << ',' << r.scene << ',' << r.gt_count << ','
                      << r.predicted << '\n';
        std::cout << "summary,mae," << report.mae << ",\n";
        std::cout << "summary,mse," << report.mse << ",\n";
        for (const auto& [scene, mm] : report.per_scene)
            std::cout << "scene," << scene << ',' << mm.first << ',' << mm.second << '\n';
        if (report.skipped) std::cout << "summary,skipped," << report.skipped << ",\n";
    } else {
        write_eval_report(report, out_path);
        std::cout << "mae " << report.mae << " mse " << report.mse << '\n';
    }
    return 0;
}

Grid normalize_to_unit(const Grid& g) {
    Grid out = g;
    double lo = g.data.empty() ? 0.0 : g.data[0], hi = lo;
    for (double v : g.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    for (auto& v : out.data) v = span > 0.0 ? (v - lo) / span : 0.0;
    return out;
}

// input | segmentation | density at map resolution, 1-column separators
Grid visualization_strip(const Grid& input, const Grid& seg, const Grid& den) {
    const std::size_t h = seg.rows, w = seg.cols;
    // block-average the input down to the map grid
    Grid small(h, w);
    const std::size_t fr = input.rows / h, fc = input.cols / w;
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (std::size_t dr = 0; dr < fr; ++dr)
                for (std::size_t dc = 0; dc < fc; ++dc)
                    acc += input.at(r * fr + dr, c * fc + dc);
            small.at(r, c) = acc / double(fr * fc);
        }
    const Grid panels[3] = {normalize_to_unit(small), normalize_to_unit(seg),
                            normalize_to_unit(den)};
    Grid strip(h, 3 * w + 2, 1.0);
    for (int panel = 0; panel < 3; ++panel)
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c)
                strip.at(r, panel * (w + 1) + c) = panels[panel].at(r, c);
    return strip;
}

int cmd_infer(const std::string& checkpoint, const std::string& image_path,
              const std::string& out_prefix, bool from_dmap) {
    std::cout.precision(12);
    if (from_dmap) {
        // bypass: count a stored density map directly
        Grid den = read_dmap(image_path);
        std::cout << "count: " << count_from_density(den) << '\n';
        return 0;
    }
    ModelParams params = load_checkpoint(checkpoint);
    Grid pixels = read_pgm(image_path);
    AnnotatedImage img;
    img.pixels = pixels;
    ForwardOutput out = forward(params, image_to_tensor(pixels));
    Grid den = map_to_grid(out.density_final);
    Grid seg = map_to_grid(out.seg_map);
    write_dmap(den, out_prefix + ".den.dmap");
    write_pgm(visualization_strip(pixels, seg, den), out_prefix + ".strip.pgm");
    std::cout << "count: " << count_from_density(den) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SegCrowdNet crowd-counting pipeline"};
    app.require_subcommand(1);

    const std::uint64_t env_seed = default_seed();

    // gen-gt
    std::string gg_manifest, gg_out;
    std::size_t gg_template = 15;
    double gg_sigma = 4.0;
    auto* gen_gt = app.add_subcommand("gen-gt", "Generate density/segmentation ground truth");
    gen_gt->set_config("--config");
    gen_gt->add_option("manifest", gg_manifest, "Dataset manifest JSON")->required();
    gen_gt->add_option("out_dir", gg_out, "Output directory for DMAP files")->required();
    gen_gt->add_option("--template-size", gg_template, "Gaussian/ones template size (odd)")
        ->capture_default_str();
    gen_gt->add_option("--sigma", gg_sigma, "Gaussian sigma in pixels")->capture_default_str();

    // synth
    std::uint64_t sy_seed = env_seed;
    std::size_t sy_cmin = 5, sy_cmax = 20, sy_num = 8, sy_h = 64, sy_w = 64;
    std::string sy_out;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dot-annotated dataset");
    synth->set_config("--config");
    synth->add_option("--seed", sy_seed, "Base RNG seed")->capture_default_str();
    synth->add_option("--count-min", sy_cmin, "Minimum heads per image")->capture_default_str();
    synth->add_option("--count-max", sy_cmax, "Maximum heads per image")->capture_default_str();
    synth->add_option("--num-images", sy_num, "Number of images")->capture_default_str();
    synth->add_option("--height", sy_h, "Image height")->capture_default_str();
    synth->add_option("--width", sy_w, "Image width")->capture_default_str();
    synth->add_option("--out", sy_out, "Output dataset directory")->required();

    // train
    std::string tr_manifest, tr_out;
    TrainConfig tr_cfg;
    tr_cfg.seed = env_seed;
    std::size_t tr_filters = 16;
    bool tr_no_cla = false, tr_no_seg = false, tr_no_int = false;
    auto* train_cmd = app.add_subcommand("train", "Train on a manifest");
    train_cmd->set_config("--config");
    train_cmd->add_option("manifest", tr_manifest, "Dataset manifest JSON")->required();
    train_cmd->add_option("--out", tr_out, "Output directory")->required();
    train_cmd->add_option("--iterations", tr_cfg.iterations)->capture_default_str();
    train_cmd->add_option("--lr", tr_cfg.lr, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--lambda1", tr_cfg.lambda1)->capture_default_str();
    train_cmd->add_option("--seed", tr_cfg.seed)->capture_default_str();
    train_cmd->add_option("--template-size", tr_cfg.template_size)->capture_default_str();
    train_cmd->add_option("--sigma", tr_cfg.sigma)->capture_default_str();
    train_cmd->add_option("--filters", tr_filters, "Filters per backbone branch")
        ->capture_default_str();
    train_cmd->add_option("--checkpoint-every", tr_cfg.checkpoint_every)
        ->capture_default_str();
    train_cmd->add_flag("--no-cla", tr_no_cla, "Disable the classification task");
    train_cmd->add_flag("--no-seg", tr_no_seg, "Disable the segmentation task");
    train_cmd->add_flag("--no-intermediate", tr_no_int,
                        "Disable intermediate density supervision");
    train_cmd->add_flag("--augment", tr_cfg.augment, "9-crop/flip/noise augmentation");

    // eval
    std::string ev_checkpoint, ev_manifest, ev_out;
    bool ev_roi = false;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->set_config("--config");
    eval_cmd->add_option("checkpoint", ev_checkpoint, "SCNW checkpoint")->required();
    eval_cmd->add_option("manifest", ev_manifest, "Dataset manifest JSON")->required();
    eval_cmd->add_flag("--roi", ev_roi, "Mask counts by each entry's ROI polygon");
    eval_cmd->add_option("--out", ev_out, "Write report CSV here instead of stdout");

    // infer
    std::string in_checkpoint, in_image, in_out = "infer";
    bool in_from_dmap = false;
    auto* infer_cmd = app.add_subcommand("infer", "Predict a count for one image");
    infer_cmd->set_config("--config");
    infer_cmd->add_option("checkpoint", in_checkpoint, "SCNW checkpoint")->required();
    infer_cmd->add_option("image", in_image, "Input PGM image")->required();
    infer_cmd->add_option("--out-prefix", in_out, "Prefix for DMAP/strip outputs")
        ->capture_default_str();
    infer_cmd->add_flag("--from-dmap", in_from_dmap,
                        "Treat the input as a DMAP density file and just count it");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(gen_gt)) {
            echo_config(*gen_gt);
            return cmd_gen_gt(gg_manifest, gg_out, gg_template, gg_sigma);
        }
        if (app.got_subcommand(synth)) {
            echo_config(*synth);
            return cmd_synth(sy_seed, sy_cmin, sy_cmax, sy_num, sy_h, sy_w, sy_out);
        }
        if (app.got_subcommand(train_cmd)) {
            echo_config(*train_cmd);
            tr_cfg.cla_task = !tr_no_cla;
            tr_cfg.seg_task = !tr_no_seg;
            tr_cfg.intermediate_supervision = !tr_no_int;
            tr_cfg.aug.seed = tr_cfg.seed;
            return cmd_train(tr_manifest, tr_out, tr_cfg, tr_filters);
        }
        if (app.got_subcommand(eval_cmd)) {
            echo_config(*eval_cmd);
            return cmd_eval(ev_checkpoint, ev_manifest, ev_roi, ev_out);
        }
        if (app.got_subcommand(infer_cmd)) {
            echo_config(*infer_cmd);
            return cmd_infer(in_checkpoint, in_image, in_out, in_from_dmap);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
