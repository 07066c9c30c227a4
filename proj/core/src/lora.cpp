#include "flowdistill/lora.hpp"

#include <cmath>

#include "flowdistill/error.hpp"

namespace flowdistill {

LoraDenoiser::LoraDenoiser(std::shared_ptr<const MlpDenoiser> base, LoraConfig config, Rng& rng)
    : base_(std::move(base)), config_(config), optimizer_() {
  if (!base_) throw ParameterError("LoraDenoiser: null base network");
  if (config_.rank == 0) throw ParameterError("LoraDenoiser: rank must be >= 1");
  const auto r = static_cast<Eigen::Index>(config_.rank);
  for (const auto& layer : base_->layers()) {
    Adapter ad;
    ad.a.resize(r, layer.weight.cols());
    const Vector w = normal_vector(rng, ad.a.size(), 1.0 / std::sqrt(static_cast<double>(layer.weight.cols())));
    std::copy(w.data(), w.data() + w.size(), ad.a.data());
    ad.b = Matrix::Zero(layer.weight.rows(), r);
    adapters_.push_back(std::move(ad));
  }
  refresh_effective();
}

void LoraDenoiser::refresh_effective() {
  const double scale = config_.alpha / static_cast<double>(config_.rank);
  effective_ = base_->layers();
  for (std::size_t l = 0; l < effective_.size(); ++l) {
    if (!adapters_[l].b.isZero(0.0)) effective_[l].weight += scale * adapters_[l].b * adapters_[l].a;
  }
}

Matrix LoraDenoiser::forward_batch(const Matrix& x, std::span<const double> sigmas,
                                   std::span<const Condition> conditions) const {
  return detail::mlp_forward(base_->config(), effective_, base_->condition_weight(), x, sigmas, conditions, nullptr);
}

TrainableDenoiser::BatchGradients LoraDenoiser::vjp_batch(const Matrix& x, std::span<const double> sigmas,
                                                          std::span<const Condition> conditions,
                                                          const Matrix& cotangent) const {
  detail::MlpTrace trace;
  detail::mlp_forward(base_->config(), effective_, base_->condition_weight(), x, sigmas, conditions, &trace);
  auto back = detail::mlp_backward(base_->config(), effective_, base_->condition_weight(), trace, cotangent);
  const double scale = config_.alpha / static_cast<double>(config_.rank);
  Vector params(static_cast<Eigen::Index>(num_parameters()));
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < adapters_.size(); ++l) {
    const Matrix& gw = back.layers[l].weight;
    const Matrix ga = scale * adapters_[l].b.transpose() * gw;
    const Matrix gb = scale * gw * adapters_[l].a.transpose();
    params.segment(at, ga.size()) = ga.reshaped();
    at += ga.size();
    params.segment(at, gb.size()) = gb.reshaped();
    at += gb.size();
  }
  return {std::move(back.x), std::move(params)};
}

std::size_t LoraDenoiser::num_parameters() const {
  std::size_t n = 0;
  for (const auto& ad : adapters_) n += static_cast<std::size_t>(ad.a.size() + ad.b.size());
  return n;
}

Vector LoraDenoiser::parameters() const {
  Vector out(static_cast<Eigen::Index>(num_parameters()));
  Eigen::Index at = 0;
  for (const auto& ad : adapters_) {
    out.segment(at, ad.a.size()) = ad.a.reshaped();
    at += ad.a.size();
    out.segment(at, ad.b.size()) = ad.b.reshaped();
    at += ad.b.size();
  }
  return out;
}

void LoraDenoiser::set_parameters(const Vector& params) {
  if (static_cast<std::size_t>(params.size()) != num_parameters())
    throw ParameterError("LoraDenoiser: parameter vector size mismatch");
  Eigen::Index at = 0;
  for (auto& ad : adapters_) {
    ad.a.reshaped() = params.segment(at, ad.a.size());
    at += ad.a.size();
    ad.b.reshaped() = params.segment(at, ad.b.size());
    at += ad.b.size();
  }
  refresh_effective();
}

double LoraDenoiser::finetune_step(std::span<const Vector> rendered, Rng& rng, const DsmConfig& config,
                                   std::span<const Condition> conditions) {
  if (rendered.empty()) throw ParameterError("lora_finetune_step: empty batch");
  if (optimizer_.iterations() == 0) optimizer_ = Adam(config.adam);
  const auto result = dsm_loss(*this, rendered, rng, config, conditions);
  if (!std::isfinite(result.loss) || !result.grads.allFinite())
    throw TrainingError("adapter fine-tuning diverged: non-finite loss", optimizer_.iterations());
  Vector params = parameters();
  optimizer_.step(params, result.grads);
  set_parameters(params);
  return result.loss;
}

double lora_finetune_step(LoraDenoiser& net, std::span<const Vector> rendered, Rng& rng, const DsmConfig& config,
                          std::span<const Condition> conditions) {
  return net.finetune_step(rendered, rng, config, conditions);
}

}  // namespace flowdistill
