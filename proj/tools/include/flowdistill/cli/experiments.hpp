#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "flowdistill/cli/config.hpp"
#include "flowdistill/distill.hpp"
#include "flowdistill/generator.hpp"
#include "flowdistill/metrics.hpp"
#include "flowdistill/prior.hpp"
#include "flowdistill/schedule.hpp"

namespace flowdistill::cli {

GaussianMixturePrior gauss1d_prior(double mean = 1.0, double scale = 0.5);
// Two equal-weight components at (+-separation / 2, 0).
GaussianMixturePrior gmm2d_prior(double separation = 2.0, double scale = 0.5);

// Smooth test pattern: a ramp plus a bump. `variant` moves the bump around a
// circle so different variants are distinct scenes.
Scene benchmark_truth(GridShape shape, std::size_t variant = 0, std::size_t variants = 1);

struct Benchmark {
  std::unique_ptr<Generator> generator;
  Scene truth;
  std::vector<CameraPose> poses;
  std::vector<ViewTarget> targets;
  double scale = 0.0;
};

// Multi-view grid benchmark with per-view priors N(render(truth, c), s^2 I).
Benchmark make_grid_benchmark(GridShape shape, std::size_t views, double scale);

// Several labeled scenes sharing one camera rig. Each view's prior set holds
// one Gaussian per label around that label's render.
struct LabelBenchmark {
  std::unique_ptr<Generator> generator;
  std::vector<std::string> labels;
  std::vector<Scene> truths;
  std::vector<CameraPose> poses;
  std::vector<ViewTarget> targets;
  double scale = 0.0;
};

LabelBenchmark make_label_benchmark(GridShape shape, std::size_t views, std::size_t labels, double scale);

double resolved_prior_scale(const Config& cfg);
NoiseSchedule schedule_from(const Config& cfg);
StageWindow window_from(const Config& cfg);
std::string window_name(const Config& cfg);
// Distill settings with `aux_scale = auto` resolved against the prior scale.
DistillConfig distill_config_from(const Config& cfg);

// Runs one distillation on a prepared benchmark, building the aux model.
TrajectoryRecord distill_on(const Generator& generator, const Scene& initial, std::span<const ViewTarget> targets,
                            const DistillConfig& cfg, std::size_t aux_pretrain_steps);

// Matched-budget comparison entry.
struct CompareRun {
  std::string method;  // sds | vsd | vsd-anneal | apfo
  std::uint64_t seed;
  TrajectoryRecord record;
  TrendStats loss_trend;
  TrendStats grad_trend;
  double relative_error;
};

// Adjusts `base` for a compare method: sds / vsd use random timesteps with the
// given optimizer settings, vsd-anneal a linear t_max -> t_min sweep, apfo is
// left as configured.
DistillConfig compare_config(const DistillConfig& base, const std::string& method, OptimizerConfig score_optimizer);

std::vector<CompareRun> run_compare(const Benchmark& bench, const DistillConfig& base,
                                    const std::vector<std::string>& methods, const std::vector<std::uint64_t>& seeds,
                                    OptimizerConfig score_optimizer, std::size_t aux_pretrain_steps);

struct RetrievalResult {
  double precision;
  std::vector<std::string> predicted;  // argmax label per scene
  std::vector<LabeledScene> scenes;
};

// One distillation per label (conditioned on it), then R = 1 classification
// of every optimized scene by mean view log-likelihood.
RetrievalResult run_retrieval(const LabelBenchmark& bench, const DistillConfig& base, std::size_t aux_pretrain_steps);

double median(std::vector<double> v);

}  // namespace flowdistill::cli
