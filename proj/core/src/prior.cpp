#include "flowdistill/prior.hpp"

#include <cmath>
#include <numbers>

#include "flowdistill/error.hpp"

namespace flowdistill {

namespace {

std::vector<MixtureComponent> normalized(std::vector<MixtureComponent> components) {
  if (components.empty()) throw ParameterError("GaussianMixturePrior: no components");
  const Eigen::Index dim = components.front().mean.size();
  if (dim == 0) throw ParameterError("GaussianMixturePrior: zero-dimensional mean");
  double total = 0.0;
  for (const auto& c : components) {
    if (c.mean.size() != dim) throw ParameterError("GaussianMixturePrior: component dimensions differ");
    if (!(c.weight > 0.0) || !std::isfinite(c.weight))
      throw ParameterError("GaussianMixturePrior: weights must be positive");
    if (!(c.scale > 0.0) || !std::isfinite(c.scale))
      throw ParameterError("GaussianMixturePrior: scales must be positive");
    if (!c.mean.allFinite()) throw ParameterError("GaussianMixturePrior: non-finite mean");
    total += c.weight;
  }
  for (auto& c : components) c.weight /= total;
  return components;
}

GaussianMixturePrior union_of(const std::vector<std::pair<std::string, GaussianMixturePrior>>& conditionals,
                              const std::vector<double>& label_weights) {
  if (conditionals.empty()) throw ParameterError("ConditionalPriorSet: no conditionals");
  if (!label_weights.empty() && label_weights.size() != conditionals.size())
    throw ParameterError("ConditionalPriorSet: label weight count mismatch");
  std::vector<MixtureComponent> all;
  for (std::size_t i = 0; i < conditionals.size(); ++i) {
    const double lw = label_weights.empty() ? 1.0 : label_weights[i];
    if (!(lw > 0.0)) throw ParameterError("ConditionalPriorSet: label weights must be positive");
    for (const auto& c : conditionals[i].second.components()) all.push_back({lw * c.weight, c.mean, c.scale});
  }
  return GaussianMixturePrior(std::move(all));
}

}  // namespace

GaussianMixturePrior::GaussianMixturePrior(std::vector<MixtureComponent> components,
                                           std::optional<std::string> label)
    : components_(normalized(std::move(components))), label_(std::move(label)) {
  dim_ = static_cast<std::size_t>(components_.front().mean.size());
}

GaussianMixturePrior GaussianMixturePrior::gaussian(Vector mean, double scale, std::optional<std::string> label) {
  return GaussianMixturePrior({{1.0, std::move(mean), scale}}, std::move(label));
}

void GaussianMixturePrior::check_input(const Vector& x, double sigma) const {
  if (static_cast<std::size_t>(x.size()) != dim_)
    throw ParameterError("GaussianMixturePrior: input has dimension " + std::to_string(x.size()) +
                         ", expected " + std::to_string(dim_));
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ParameterError("GaussianMixturePrior: sigma must be >= 0");
}

double GaussianMixturePrior::component_logs(const Vector& x, double sigma, Vector& out) const {
  const auto d = static_cast<double>(dim_);
  out.resize(static_cast<Eigen::Index>(components_.size()));
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const double v = c.scale * c.scale + sigma * sigma;
    const double l = std::log(c.weight) - 0.5 * d * std::log(2.0 * std::numbers::pi * v) -
                     0.5 * (x - c.mean).squaredNorm() / v;
    out[static_cast<Eigen::Index>(k)] = l;
    best = std::max(best, l);
  }
  return best + std::log((out.array() - best).exp().sum());
}

double GaussianMixturePrior::logpdf(const Vector& x, double sigma) const {
  check_input(x, sigma);
  Vector logs;
  return component_logs(x, sigma, logs);
}

Vector GaussianMixturePrior::responsibilities(const Vector& x, double sigma) const {
  check_input(x, sigma);
  Vector logs;
  const double total = component_logs(x, sigma, logs);
  return (logs.array() - total).exp().matrix();
}

Vector GaussianMixturePrior::score(const Vector& x, double sigma) const {
  const Vector r = responsibilities(x, sigma);
  Vector out = Vector::Zero(x.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const double v = c.scale * c.scale + sigma * sigma;
    out += (r[static_cast<Eigen::Index>(k)] / v) * (c.mean - x);
  }
  return out;
}

Vector GaussianMixturePrior::denoise(const Vector& x, double sigma) const {
  check_input(x, sigma);
  if (sigma == 0.0) return x;
  // Posterior mean written per component to avoid cancellation in x + sigma^2 * score.
  const Vector r = responsibilities(x, sigma);
  const double s2 = sigma * sigma;
  Vector out = Vector::Zero(x.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const double c2 = c.scale * c.scale;
    out += r[static_cast<Eigen::Index>(k)] * ((c2 * x + s2 * c.mean) / (c2 + s2));
  }
  return out;
}

std::vector<Vector> GaussianMixturePrior::sample(Rng& rng, std::size_t count) const {
  if (count == 0) throw ParameterError("GaussianMixturePrior::sample: count must be >= 1");
  std::vector<double> weights;
  for (const auto& c : components_) weights.push_back(c.weight);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& c = components_[pick(rng)];
    out.push_back(c.mean + normal_vector(rng, c.mean.size(), c.scale));
  }
  return out;
}

Vector GaussianMixturePrior::mean() const {
  Vector m = Vector::Zero(static_cast<Eigen::Index>(dim_));
  for (const auto& c : components_) m += c.weight * c.mean;
  return m;
}

GaussianMixturePrior GaussianMixturePrior::smoothed(double sigma) const {
  if (!(sigma >= 0.0)) throw ParameterError("smoothed: sigma must be >= 0");
  std::vector<MixtureComponent> out = components_;
  for (auto& c : out) c.scale = std::sqrt(c.scale * c.scale + sigma * sigma);
  return GaussianMixturePrior(std::move(out), label_);
}

ConditionalPriorSet::ConditionalPriorSet(std::vector<std::pair<std::string, GaussianMixturePrior>> conditionals,
                                         std::vector<double> label_weights)
    : conditionals_(std::move(conditionals)), unconditional_(union_of(conditionals_, label_weights)) {
  for (std::size_t i = 0; i < conditionals_.size(); ++i) {
    for (std::size_t j = i + 1; j < conditionals_.size(); ++j)
      if (conditionals_[i].first == conditionals_[j].first)
        throw ParameterError("ConditionalPriorSet: duplicate label '" + conditionals_[i].first + "'");
  }
}

const GaussianMixturePrior& ConditionalPriorSet::conditional(const std::string& label) const {
  for (const auto& [name, prior] : conditionals_)
    if (name == label) return prior;
  throw ParameterError("ConditionalPriorSet: unknown label '" + label + "'");
}

std::vector<std::string> ConditionalPriorSet::labels() const {
  std::vector<std::string> out;
  for (const auto& entry : conditionals_) out.push_back(entry.first);
  return out;
}

bool ConditionalPriorSet::contains(const std::string& label) const {
  for (const auto& entry : conditionals_)
    if (entry.first == label) return true;
  return false;
}

Vector ConditionalPriorSet::cfg_denoise(const Vector& x, double sigma, const std::string& label,
                                        double guidance) const {
  const Vector cond = conditional(label).denoise(x, sigma);
  if (guidance == 0.0) return cond;
  const Vector uncond = unconditional_.denoise(x, sigma);
  if (guidance == -1.0) return uncond;
  return (1.0 + guidance) * cond - guidance * uncond;
}

}  // namespace flowdistill
