#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flowdistill/rng.hpp"
#include "flowdistill/types.hpp"

namespace flowdistill {

struct MixtureComponent {
  double weight;
  Vector mean;
  double scale;  // isotropic covariance scale^2 * I
};

// Isotropic Gaussian mixture with closed-form sigma-smoothed density, score and
// posterior-mean denoiser. Immutable after construction.
class GaussianMixturePrior {
 public:
  // Weights must be positive; they are normalized to sum to one.
  explicit GaussianMixturePrior(std::vector<MixtureComponent> components,
                                std::optional<std::string> label = std::nullopt);

  static GaussianMixturePrior gaussian(Vector mean, double scale,
                                       std::optional<std::string> label = std::nullopt);

  std::size_t dim() const { return dim_; }
  const std::vector<MixtureComponent>& components() const { return components_; }
  const std::optional<std::string>& label() const { return label_; }

  // log sum_k w_k N(x; mu_k, (s_k^2 + sigma^2) I)
  double logpdf(const Vector& x, double sigma) const;
  Vector score(const Vector& x, double sigma) const;
  // D(x; sigma) = x + sigma^2 * score; identity at sigma = 0.
  Vector denoise(const Vector& x, double sigma) const;
  // Posterior component probabilities under the sigma-smoothed mixture.
  Vector responsibilities(const Vector& x, double sigma) const;

  std::vector<Vector> sample(Rng& rng, std::size_t count) const;
  Vector mean() const;
  // The same mixture with every scale widened to sqrt(s^2 + sigma^2).
  GaussianMixturePrior smoothed(double sigma) const;

 private:
  void check_input(const Vector& x, double sigma) const;
  // Per-component log of w_k N(x; mu_k, v_k I) into `out`, returns log-sum-exp.
  double component_logs(const Vector& x, double sigma, Vector& out) const;

  std::vector<MixtureComponent> components_;
  std::optional<std::string> label_;
  std::size_t dim_ = 0;
};

// Labeled conditional mixtures plus their weight-renormalized union, the
// inputs of classifier-free guidance.
class ConditionalPriorSet {
 public:
  // Label weights default to uniform.
  explicit ConditionalPriorSet(std::vector<std::pair<std::string, GaussianMixturePrior>> conditionals,
                               std::vector<double> label_weights = {});

  const GaussianMixturePrior& unconditional() const { return unconditional_; }
  const GaussianMixturePrior& conditional(const std::string& label) const;
  std::vector<std::string> labels() const;
  bool contains(const std::string& label) const;
  std::size_t dim() const { return unconditional_.dim(); }

  // (1 + w) * D(x; sigma, y) - w * D(x; sigma)
  Vector cfg_denoise(const Vector& x, double sigma, const std::string& label, double guidance) const;

 private:
  std::vector<std::pair<std::string, GaussianMixturePrior>> conditionals_;
  GaussianMixturePrior unconditional_;
};

}  // namespace flowdistill
