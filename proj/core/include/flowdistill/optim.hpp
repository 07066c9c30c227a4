#pragma once

#include <cstddef>

#include "flowdistill/types.hpp"

namespace flowdistill {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam. State is sized lazily on the first step.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(Vector& params, const Vector& grad);
  void reset();

  const AdamConfig& config() const { return config_; }
  std::size_t iterations() const { return t_; }

 private:
  AdamConfig config_;
  Vector m_;
  Vector v_;
  std::size_t t_ = 0;
};

}  // namespace flowdistill
