#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "flowdistill/network.hpp"
#include "flowdistill/optim.hpp"
#include "flowdistill/prior.hpp"

namespace flowdistill {

// Denoising score matching: sigma log-uniform on [sigma_min, sigma_max],
// loss = mean_b lambda(sigma_b) * ||D(x0_b + n_b; sigma_b) - x0_b||^2.
struct DsmConfig {
  Weighting weighting = Weighting::edm;
  double sigma_min = 0.002;
  double sigma_max = 80.0;
  std::size_t batch_size = 64;
  double sigma_data = 0.5;
  AdamConfig adam{};

  void validate() const;
};

struct DsmResult {
  double loss;
  Vector grads;  // with respect to the trainable parameters
};

double sample_training_sigma(const DsmConfig& config, Rng& rng);

DsmResult dsm_loss(const TrainableDenoiser& net, std::span<const Vector> batch, Rng& rng, const DsmConfig& config,
                   std::span<const Condition> conditions = {});

// Produces one clean training example and its condition.
struct TrainingExample {
  Vector x;
  Condition condition;
};
using ExampleSource = std::function<TrainingExample(Rng&)>;
using TrainCallback = std::function<void(std::size_t step, double loss)>;

// Runs `steps` Adam steps of DSM. Throws TrainingError on a non-finite loss.
void train_denoiser(TrainableDenoiser& net, const ExampleSource& source, std::size_t steps,
                    const DsmConfig& config, Rng& rng, const TrainCallback& callback = {});

struct TrainConfig {
  MlpConfig net{};
  DsmConfig dsm{};
  std::uint64_t seed = 0;
};

// Fits an MLP denoiser to samples of an analytic prior.
MlpDenoiser train_prior_net(const GaussianMixturePrior& prior, std::size_t steps, const TrainConfig& config,
                            const TrainCallback& callback = {});

}  // namespace flowdistill
