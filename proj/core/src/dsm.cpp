#include "flowdistill/dsm.hpp"

#include <cmath>

#include "flowdistill/error.hpp"

namespace flowdistill {

void DsmConfig::validate() const {
  if (!(sigma_min > 0.0) || !(sigma_max > sigma_min)) throw ParameterError("DsmConfig: require 0 < sigma_min < sigma_max");
  if (batch_size == 0) throw ParameterError("DsmConfig: batch_size must be >= 1");
  if (!(sigma_data > 0.0)) throw ParameterError("DsmConfig: sigma_data must be positive");
}

double sample_training_sigma(const DsmConfig& config, Rng& rng) {
  const double lo = std::log(config.sigma_min);
  const double hi = std::log(config.sigma_max);
  return std::exp(lo + (hi - lo) * uniform01(rng));
}

DsmResult dsm_loss(const TrainableDenoiser& net, std::span<const Vector> batch, Rng& rng, const DsmConfig& config,
                   std::span<const Condition> conditions) {
  config.validate();
  if (batch.empty()) throw ParameterError("dsm_loss: empty batch");
  if (!conditions.empty() && conditions.size() != batch.size())
    throw ParameterError("dsm_loss: one condition per example required");
  const auto d = static_cast<Eigen::Index>(net.dim());
  const auto n = static_cast<Eigen::Index>(batch.size());
  Matrix clean(d, n), noisy(d, n);
  std::vector<double> sigmas(batch.size());
  for (Eigen::Index b = 0; b < n; ++b) {
    const Vector& x0 = batch[static_cast<std::size_t>(b)];
    if (x0.size() != d) throw ParameterError("dsm_loss: example dimension mismatch");
    const double sigma = sample_training_sigma(config, rng);
    sigmas[static_cast<std::size_t>(b)] = sigma;
    clean.col(b) = x0;
    noisy.col(b) = x0 + normal_vector(rng, d, sigma);
  }
  const Matrix out = net.forward_batch(noisy, sigmas, conditions);
  const Matrix diff = out - clean;
  Matrix cotangent(d, n);
  double loss = 0.0;
  for (Eigen::Index b = 0; b < n; ++b) {
    const double lambda = weighting_value(config.weighting, sigmas[static_cast<std::size_t>(b)], config.sigma_data);
    loss += lambda * diff.col(b).squaredNorm();
    cotangent.col(b) = (2.0 * lambda / static_cast<double>(n)) * diff.col(b);
  }
  loss /= static_cast<double>(n);
  auto grads = net.vjp_batch(noisy, sigmas, conditions, cotangent);
  return {loss, std::move(grads.params)};
}

void train_denoiser(TrainableDenoiser& net, const ExampleSource& source, std::size_t steps,
                    const DsmConfig& config, Rng& rng, const TrainCallback& callback) {
  config.validate();
  if (steps == 0) throw ParameterError("train_denoiser: steps must be >= 1");
  Adam adam(config.adam);
  Vector params = net.parameters();
  std::vector<Vector> batch(config.batch_size);
  std::vector<Condition> conditions(config.batch_size);
  for (std::size_t step = 0; step < steps; ++step) {
    bool any_condition = false;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      auto example = source(rng);
      batch[b] = std::move(example.x);
      conditions[b] = example.condition;
      any_condition = any_condition || conditions[b].label || conditions[b].angle;
    }
    const auto result = dsm_loss(net, batch, rng, config,
                                 any_condition ? std::span<const Condition>(conditions) : std::span<const Condition>());
    if (!std::isfinite(result.loss) || !result.grads.allFinite())
      throw TrainingError("denoiser training diverged: non-finite loss", step);
    adam.step(params, result.grads);
    net.set_parameters(params);
    if (callback) callback(step, result.loss);
  }
}

MlpDenoiser train_prior_net(const GaussianMixturePrior& prior, std::size_t steps, const TrainConfig& config,
                            const TrainCallback& callback) {
  if (steps == 0) throw ParameterError("train_prior_net: steps must be >= 1");
  MlpConfig net_config = config.net;
  net_config.dim = prior.dim();
  net_config.sigma_data = config.dsm.sigma_data;
  Rng init_rng = make_rng(config.seed, 1);
  MlpDenoiser net(net_config, init_rng);
  Rng train_rng = make_rng(config.seed, 2);
  const ExampleSource source = [&prior](Rng& rng) { return TrainingExample{prior.sample(rng, 1).front(), {}}; };
  train_denoiser(net, source, steps, config.dsm, train_rng, callback);
  return net;
}

}  // namespace flowdistill
