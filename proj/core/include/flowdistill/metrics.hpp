#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "flowdistill/denoiser.hpp"
#include "flowdistill/generator.hpp"
#include "flowdistill/prior.hpp"
#include "flowdistill/types.hpp"

namespace flowdistill {

// Mean over n_proj seeded random unit directions of the exact 1D W2 between
// the projected sets (sorted-quantile coupling on a common quantile grid).
double sliced_w2(std::span<const Vector> a, std::span<const Vector> b, std::size_t n_proj = 128,
                 std::uint64_t seed = 0);

// Unbiased MMD^2 with k(x, y) = exp(-||x - y||^2 / (2 h^2)).
double mmd_rbf(std::span<const Vector> a, std::span<const Vector> b, double bandwidth);

// sum_i lambda_i KL(q_sigma_i || p_sigma_i), q the particle measure smoothed by
// sigma_i. Densities are integrated on a 512-point-per-axis grid over the
// bounding box of particles and prior means, padded by 6 * (sigma + largest
// prior scale); mass beyond the pad is ignored. Dimensions 1 and 2 only.
double ensemble_kl(std::span<const Vector> particles, const GaussianMixturePrior& prior,
                   std::span<const double> sigmas, std::span<const double> weights);

struct TrendStats {
  double spearman_rho;
  double fraction_increasing;
};

// Rank correlation of (index, value) with average ranks for ties; a constant
// series has rho = 0.
TrendStats trend_stats(std::span<const double> series);

// Average ranks (1-based).
std::vector<double> average_ranks(std::span<const double> values);

struct LabeledScene {
  std::string label;
  Vector theta;
};

// Each scene is assigned the label whose conditional prior gives the highest
// mean log-likelihood of its rendered views; returns the fraction assigned to
// their source label.
double retrieval_precision(std::span<const LabeledScene> scenes, const ConditionalPriorSet& priors,
                           const Generator& generator, std::span<const CameraPose> poses);

// Same with one prior set per pose (view-dependent priors sharing a label set).
double retrieval_precision(std::span<const LabeledScene> scenes,
                           std::span<const std::shared_ptr<const ConditionalPriorSet>> view_priors,
                           const Generator& generator, std::span<const CameraPose> poses);

// Highest mean view log-likelihood label of one scene.
std::string classify_scene(const Vector& theta, std::span<const std::shared_ptr<const ConditionalPriorSet>> view_priors,
                           const Generator& generator, std::span<const CameraPose> poses);

struct SceneError {
  double relative_l2;  // absolute L2 when the reference is zero
  double psnr_db;      // +inf for an exact match
};

SceneError scene_error(const Vector& theta, const Vector& reference);

struct DenoiserError {
  std::vector<double> sigmas;
  std::vector<double> median_relative;  // per sigma
  double median_relative_overall;
};

// ||D_model(x; sigma) - D_prior(x; sigma)|| / ||D_prior(x; sigma)|| at
// x = x0 + sigma * n with x0 drawn from the prior; medians per sigma and over
// all pairs.
DenoiserError denoiser_error(const Denoiser& model, const GaussianMixturePrior& prior, std::span<const double> sigmas,
                             std::size_t per_sigma, std::uint64_t seed);

// n log-spaced values from lo to hi inclusive.
std::vector<double> log_spaced(double lo, double hi, std::size_t n);

struct MetricReport {
  std::map<std::string, double> values;
  std::map<std::string, std::size_t> sample_sizes;
  std::vector<std::uint64_t> seeds;

  // Rejects non-finite values, except infinities flagged as sentinels by name
  // suffix "psnr_db".
  void set(const std::string& name, double value);
  std::string to_csv() const;      // metric,value
  std::string to_summary() const;  // name=value per line
};

}  // namespace flowdistill
