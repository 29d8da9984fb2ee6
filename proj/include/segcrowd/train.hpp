#pragma once

#include <map>
#include <optional>

#include "segcrowd/data.hpp"
#include "segcrowd/groundtruth.hpp"
#include "segcrowd/losses.hpp"
#include "segcrowd/model.hpp"

namespace segcrowd {

struct OptimizerState {
    double lr = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step = 0;
    std::map<std::string, std::vector<double>> m, v;
};

// Standard Adam with bias correction. Throws (naming the parameter) on a
// non-finite gradient.
void adam_step(ModelParams& params, OptimizerState& state);

struct TrainConfig {
    std::size_t iterations = 500;
    double lambda1 = 0.01;
    double lr = 1e-6;
    std::uint64_t seed = 0;
    std::size_t template_size = 15;
    double sigma = 4.0;
    // ablation switches (Tables 3 and 5 harness)
    bool cla_task = true;
    bool seg_task = true;
    bool intermediate_supervision = true;
    bool augment = false;
    AugmentationConfig aug;
    std::size_t checkpoint_every = 0;   // 0 -> only final
    std::string checkpoint_path;        // empty -> no checkpoints written
};

struct TrainResult {
    ModelParams params;
    std::vector<LossBreakdown> log;     // one row per iteration
    CountBins bins;
};

TrainResult train(const ModelParams& initial, const std::vector<AnnotatedImage>& dataset,
                  const TrainConfig& cfg);

void write_loss_log(const std::vector<LossBreakdown>& log, const std::string& path);

// Eqs. 8-9 over per-image (gt, predicted) count pairs; mse is the root of
// the mean squared residual.
double mae(const std::vector<std::pair<double, double>>& pairs);
double mse(const std::vector<std::pair<double, double>>& pairs);

// Zeroes grid entries whose pixel center falls outside the polygon
// (even-odd rule). scale maps polygon coordinates to grid coordinates.
Grid apply_roi(const Grid& grid, const std::vector<Point>& polygon,
               double scale = 1.0);
bool point_in_polygon(double row, double col, const std::vector<Point>& polygon);

// k disjoint (train, test) index partitions covering 0..n-1
struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};
std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

struct EvalOptions {
    bool use_roi = false;
};

struct EvalReport {
    struct Row {
        std::string id;
        std::string scene;
        double gt_count = 0.0;
        double predicted = 0.0;
    };
    std::vector<Row> rows;
    double mae = 0.0;
    double mse = 0.0;
    std::map<std::string, std::pair<double, double>> per_scene;  // scene -> (mae, mse)
    std::size_t skipped = 0;
};

EvalReport evaluate(const ModelParams& params, const std::vector<AnnotatedImage>& dataset,
                    const EvalOptions& options = {});

void write_eval_report(const EvalReport& report, const std::string& path);

struct AblationVariant {
    std::string name;
    TrainConfig config;
};

struct AblationRow {
    std::string name;
    double mae = 0.0;
    double mse = 0.0;
};

// Trains and evaluates one row per variant on the same data with the
// variant's fixed seed.
std::vector<AblationRow> ablation_run(const ModelConfig& model_config,
                                      const std::vector<AnnotatedImage>& train_set,
                                      const std::vector<AnnotatedImage>& test_set,
                                      const std::vector<AblationVariant>& variants);

// GT alignment to the network output grid: crop to stride-divisible extent,
// then block-sum (density) or block-max (segmentation).
Grid align_density_gt(const Grid& full, std::size_t out_h, std::size_t out_w);
Grid align_seg_gt(const Grid& full, std::size_t out_h, std::size_t out_w);

}  // namespace segcrowd
