#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "flowdistill/dsm.hpp"
#include "flowdistill/network.hpp"

namespace flowdistill {

struct LoraConfig {
  std::size_t rank = 4;
  double alpha = 4.0;
};

// Low-rank correction B*A per dense layer of a frozen base MLP. The effective
// weight is W + (alpha / rank) * B * A; with B = 0 the wrapped model is the base.
// Trainable parameters are the adapter matrices only.
class LoraDenoiser final : public TrainableDenoiser {
 public:
  LoraDenoiser(std::shared_ptr<const MlpDenoiser> base, LoraConfig config, Rng& rng);

  std::size_t dim() const override { return base_->dim(); }
  Matrix forward_batch(const Matrix& x, std::span<const double> sigmas,
                       std::span<const Condition> conditions) const override;
  BatchGradients vjp_batch(const Matrix& x, std::span<const double> sigmas, std::span<const Condition> conditions,
                           const Matrix& cotangent) const override;
  std::size_t num_parameters() const override;
  Vector parameters() const override;
  void set_parameters(const Vector& params) override;

  // One DSM step on the adapter, treating `rendered` as samples of the data
  // distribution. Returns the loss before the update.
  double finetune_step(std::span<const Vector> rendered, Rng& rng, const DsmConfig& config,
                       std::span<const Condition> conditions = {});

  const MlpDenoiser& base() const { return *base_; }
  std::shared_ptr<const MlpDenoiser> base_ptr() const { return base_; }
  const LoraConfig& config() const { return config_; }
  std::size_t finetune_steps() const { return optimizer_.iterations(); }

 private:
  struct Adapter {
    Matrix a;  // rank x in
    Matrix b;  // out x rank
  };
  void refresh_effective();

  std::shared_ptr<const MlpDenoiser> base_;
  LoraConfig config_;
  std::vector<Adapter> adapters_;
  std::vector<DenseLayer> effective_;
  Adam optimizer_;
};

// Free-function form of LoraDenoiser::finetune_step.
double lora_finetune_step(LoraDenoiser& net, std::span<const Vector> rendered, Rng& rng, const DsmConfig& config,
                          std::span<const Condition> conditions = {});

}  // namespace flowdistill
