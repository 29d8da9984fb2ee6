#include "segcrowd/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace segcrowd {

void adam_step(ModelParams& params, OptimizerState& state) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (auto& [name, t] : params.tensors) {
        const auto& g = t.grad();
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) m.assign(t.size(), 0.0);
        if (v.empty()) v.assign(t.size(), 0.0);
        auto& w = t.values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw std::runtime_error("adam_step: non-finite gradient in '" + name +
                                         "' at index " + std::to_string(i));
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

Grid align_density_gt(const Grid& full, std::size_t out_h, std::size_t out_w) {
    const std::size_t s = ModelConfig::output_stride;
    Grid cropped(std::min(full.rows, out_h * s), std::min(full.cols, out_w * s));
    for (std::size_t r = 0; r < cropped.rows; ++r)
        for (std::size_t c = 0; c < cropped.cols; ++c)
            cropped.at(r, c) = full.at(r, c);
    return downsample_sum(cropped, s);
}

Grid align_seg_gt(const Grid& full, std::size_t out_h, std::size_t out_w) {
    const std::size_t s = ModelConfig::output_stride;
    Grid cropped(std::min(full.rows, out_h * s), std::min(full.cols, out_w * s));
    for (std::size_t r = 0; r < cropped.rows; ++r)
        for (std::size_t c = 0; c < cropped.cols; ++c)
            cropped.at(r, c) = full.at(r, c);
    return downsample_max(cropped, s);
}

namespace {

struct Sample {
    Tensor image;                // (1,H,W), no grad
    Grid density_gt;             // full resolution
    Grid seg_gt;
    std::size_t class_label = 1; // 1-based
};

std::vector<AnnotatedImage> augmented_set(const std::vector<AnnotatedImage>& dataset,
                                          const TrainConfig& cfg) {
    if (!cfg.augment) return dataset;
    std::vector<AnnotatedImage> out;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        AugmentationConfig ac = cfg.aug;
        ac.seed = cfg.aug.seed ^ (0x9e3779b97f4a7c15ULL * (i + 1));
        auto patches = crop_patches(dataset[i], ac);
        std::mt19937_64 rng(ac.seed + 1);
        std::bernoulli_distribution flip(0.5);
        for (auto& p : patches) {
            AnnotatedImage s = flip(rng) && cfg.aug.hflip ? hflip(p) : p;
            if (cfg.aug.noise_std > 0.0)
                s = add_noise(s, cfg.aug.noise_std, rng());
            out.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace

TrainResult train(const ModelParams& initial, const std::vector<AnnotatedImage>& dataset,
                  const TrainConfig& cfg) {
    if (dataset.empty())
        throw std::invalid_argument("train: empty dataset");

    const auto images = augmented_set(dataset, cfg);

    std::vector<double> counts;
    for (const auto& img : images) counts.push_back(double(img.count()));
    const CountBins bins = make_bins(counts, 5);

    std::vector<Sample> samples;
    for (const auto& img : images) {
        Sample s;
        s.image = image_to_tensor(img.pixels);
        s.density_gt = density_map(img, cfg.template_size, cfg.sigma);
        s.seg_gt = segmentation_map(img, cfg.template_size);
        s.class_label = quantize_count(double(img.count()), bins);
        samples.push_back(std::move(s));
    }

    TrainResult result;
    result.params = initial;
    result.bins = bins;
    OptimizerState opt;
    opt.lr = cfg.lr;

    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        const Sample& s = samples[iter % samples.size()];
        ForwardOutput out = forward(result.params, s.image);

        const std::size_t oh = out.density_final.dims()[1];
        const std::size_t ow = out.density_final.dims()[2];
        Tensor den_gt = grid_to_tensor(align_density_gt(s.density_gt, oh, ow));
        Tensor seg_gt = grid_to_tensor(align_seg_gt(s.seg_gt, oh, ow));

        // heads emit (1,H',W'); losses compare against (H',W') grids
        Tensor den_pred = reshape(out.density_final, {oh, ow});
        Tensor int_pred = reshape(out.density_intermediate, {oh, ow});
        Tensor seg_pred = reshape(out.seg_map, {oh, ow});

        Tensor t_den = l_euclidean(den_pred, den_gt);
        Tensor t_int = cfg.intermediate_supervision ? l_euclidean(int_pred, den_gt)
                                                    : Tensor();
        Tensor t_seg = cfg.seg_task ? l_seg(seg_pred, seg_gt) : Tensor();
        Tensor t_cla = cfg.cla_task ? l_cla(out.class_logits, s.class_label) : Tensor();
        Tensor total = l_fin(t_den, t_int, t_seg, t_cla, cfg.lambda1);

        LossBreakdown row;
        row.lambda1 = cfg.lambda1;
        row.l_den = t_den.value();
        row.l_int = t_int.size() ? t_int.value() : 0.0;
        row.l_seg = t_seg.size() ? t_seg.value() : 0.0;
        row.l_cla = t_cla.size() ? t_cla.value() : 0.0;
        row.l_fin = total.value();
        if (!std::isfinite(row.l_fin))
            throw std::runtime_error("train: non-finite loss at iteration " +
                                     std::to_string(iter));
        result.log.push_back(row);

        result.params.zero_grad();
        backward(total);
        adam_step(result.params, opt);

        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            (iter + 1) % cfg.checkpoint_every == 0)
            save_checkpoint(result.params, cfg.checkpoint_path);
    }
    if (!cfg.checkpoint_path.empty())
        save_checkpoint(result.params, cfg.checkpoint_path);
    return result;
}

void write_loss_log(const std::vector<LossBreakdown>& log, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_loss_log: cannot open " + path);
    os << "iteration,l_int,l_den,l_seg,l_cla,l_fin\n";
    os.precision(17);
    for (std::size_t i = 0; i < log.size(); ++i)
        os << i << ',' << log[i].l_int << ',' << log[i].l_den << ',' << log[i].l_seg
           << ',' << log[i].l_cla << ',' << log[i].l_fin << '\n';
}

double mae(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("mae: empty pair list");
    double s = 0.0;
    for (const auto& [z, zh] : pairs) s += std::abs(z - zh);
    return s / double(pairs.size());
}

double mse(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("mse: empty pair list");
    double s = 0.0;
    for (const auto& [z, zh] : pairs) s += (z - zh) * (z - zh);
    return std::sqrt(s / double(pairs.size()));
}

bool point_in_polygon(double row, double col, const std::vector<Point>& polygon) {
    bool inside = false;
    const std::size_t n = polygon.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const double yi = double(polygon[i].row), xi = double(polygon[i].col);
        const double yj = double(polygon[j].row), xj = double(polygon[j].col);
        if ((yi > row) != (yj > row) &&
            col < (xj - xi) * (row - yi) / (yj - yi) + xi)
            inside = !inside;
    }
    return inside;
}

Grid apply_roi(const Grid& grid, const std::vector<Point>& polygon, double scale) {
    if (polygon.size() < 3)
        throw std::invalid_argument("apply_roi: polygon needs at least 3 vertices, got " +
                                    std::to_string(polygon.size()));
    Grid out = grid;
    for (std::size_t r = 0; r < grid.rows; ++r)
        for (std::size_t c = 0; c < grid.cols; ++c)
            if (!point_in_polygon((r + 0.5) / scale, (c + 0.5) / scale, polygon))
                out.at(r, c) = 0.0;
    return out;
}

std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k == 0 || k > n)
        throw std::invalid_argument("kfold_split: k=" + std::to_string(k) +
                                    " invalid for n=" + std::to_string(n));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<Fold> folds(k);
    for (std::size_t i = 0; i < n; ++i)
        folds[i % k].test.push_back(idx[i]);
    for (std::size_t f = 0; f < k; ++f) {
        for (std::size_t g = 0; g < k; ++g)
            if (g != f)
                folds[f].train.insert(folds[f].train.end(), folds[g].test.begin(),
                                      folds[g].test.end());
        std::sort(folds[f].test.begin(), folds[f].test.end());
        std::sort(folds[f].train.begin(), folds[f].train.end());
    }
    return folds;
}

EvalReport evaluate(const ModelParams& params, const std::vector<AnnotatedImage>& dataset,
                    const EvalOptions& options) {
    EvalReport report;
    std::vector<std::pair<double, double>> pairs;
    std::map<std::string, std::vector<std::pair<double, double>>> scene_pairs;
    for (const auto& img : dataset) {
        Tensor input = image_to_tensor(img.pixels);
        ForwardOutput out;
        try {
            out = forward(params, input);
        } catch (const std::invalid_argument&) {
            ++report.skipped;
            continue;
        }
        Grid density = map_to_grid(out.density_final);
        double gt_count = double(img.count());
        if (options.use_roi && !img.roi.empty()) {
            density = apply_roi(density, img.roi, 1.0 / double(ModelConfig::output_stride));
            gt_count = 0.0;
            for (const auto& p : img.points)
                if (point_in_polygon(p.row + 0.5, p.col + 0.5, img.roi)) gt_count += 1.0;
        }
        const double pred = count_from_density(density);
        report.rows.push_back({img.id, img.scene, gt_count, pred});
        pairs.emplace_back(gt_count, pred);
        scene_pairs[img.scene.empty() ? std::string("all") : img.scene]
            .emplace_back(gt_count, pred);
    }
    if (!pairs.empty()) {
        report.mae = mae(pairs);
        report.mse = mse(pairs);
        for (const auto& [scene, sp] : scene_pairs)
            report.per_scene[scene] = {mae(sp), mse(sp)};
    }
    return report;
}

void write_eval_report(const EvalReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_eval_report: cannot open " + path);
    os.precision(17);
    os << "id,scene,gt_count,predicted\n";
    for (const auto& r : report.rows)
        os << r.id << ',' << r.scene << ',' << r.gt_count << ',' << r.predicted << '\n';
    os << "summary,mae," << report.mae << ",\n";
    os << "summary,mse," << report.mse << ",\n";
    for (const auto& [scene, mm] : report.per_scene)
        os << "scene," << scene << ',' << mm.first << ',' << mm.second << '\n';
    if (report.skipped)
        os << "summary,skipped," << report.skipped << ",\n";
}

std::vector<AblationRow> ablation_run(const ModelConfig& model_config,
                                      const std::vector<AnnotatedImage>& train_set,
                                      const std::vector<AnnotatedImage>& test_set,
                                      const std::vector<AblationVariant>& variants) {
    std::vector<AblationRow> rows;
    for (const auto& variant : variants) {
        ModelConfig mc = model_config;
        mc.seed = variant.config.seed;
        ModelParams init = build(mc);
        TrainResult trained = train(init, train_set, variant.config);
        EvalReport report = evaluate(trained.params, test_set);
        rows.push_back({variant.name, report.mae, report.mse});
    }
    return rows;
}

}  // namespace segcrowd
