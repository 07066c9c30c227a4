#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>

#include "flowdistill/prior.hpp"
#include "flowdistill/types.hpp"

namespace flowdistill {

// Conditioning inputs for learned denoisers: a discrete label index and a
// camera azimuth. Both optional.
struct Condition {
  std::optional<std::size_t> label;
  std::optional<double> angle;
};

// D(x; sigma): posterior-mean estimate of the clean point. Implementations
// must be safe for concurrent const use.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Vector denoise(const Vector& x, double sigma) const = 0;
  virtual std::size_t dim() const = 0;
};

class PriorDenoiser final : public Denoiser {
 public:
  explicit PriorDenoiser(GaussianMixturePrior prior) : prior_(std::move(prior)) {}
  Vector denoise(const Vector& x, double sigma) const override { return prior_.denoise(x, sigma); }
  std::size_t dim() const override { return prior_.dim(); }
  const GaussianMixturePrior& prior() const { return prior_; }

 private:
  GaussianMixturePrior prior_;
};

// Classifier-free guided denoiser over a conditional prior set.
class GuidedDenoiser final : public Denoiser {
 public:
  GuidedDenoiser(std::shared_ptr<const ConditionalPriorSet> set, std::string label, double guidance);
  Vector denoise(const Vector& x, double sigma) const override;
  std::size_t dim() const override { return set_->dim(); }

 private:
  std::shared_ptr<const ConditionalPriorSet> set_;
  std::string label_;
  double guidance_;
};

// Auxiliary denoiser of the rendered distribution (D_phi / D_q). It sees both
// the clean render and the noised input so the ideal rule D(x + n; sigma) = x
// fits the same contract.
class AuxDenoiser {
 public:
  virtual ~AuxDenoiser() = default;
  virtual Vector denoise(const Vector& clean, const Vector& noisy, double sigma) const = 0;
  // Number of network/analytic evaluations one call costs.
  virtual std::size_t evals_per_call() const { return 1; }
};

class IdealAux final : public AuxDenoiser {
 public:
  Vector denoise(const Vector& clean, const Vector&, double) const override { return clean; }
  std::size_t evals_per_call() const override { return 0; }
};

// Wraps an ordinary denoiser; ignores the clean input.
class ModelAux final : public AuxDenoiser {
 public:
  explicit ModelAux(const Denoiser& model) : model_(model) {}
  Vector denoise(const Vector&, const Vector& noisy, double sigma) const override {
    return model_.denoise(noisy, sigma);
  }

 private:
  const Denoiser& model_;
};

// Exact denoiser of an empirical (Dirac-mixture) distribution with equal weights.
Vector empirical_denoise(const std::vector<Vector>& points, const Vector& x, double sigma);

}  // namespace flowdistill
