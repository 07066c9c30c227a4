#include "flowdistill/denoiser.hpp"

#include <cmath>
#include <limits>

#include "flowdistill/error.hpp"

namespace flowdistill {

GuidedDenoiser::GuidedDenoiser(std::shared_ptr<const ConditionalPriorSet> set, std::string label, double guidance)
    : set_(std::move(set)), label_(std::move(label)), guidance_(guidance) {
  if (!set_) throw ParameterError("GuidedDenoiser: null prior set");
  if (!set_->contains(label_)) throw ParameterError("GuidedDenoiser: unknown label '" + label_ + "'");
}

Vector GuidedDenoiser::denoise(const Vector& x, double sigma) const {
  return set_->cfg_denoise(x, sigma, label_, guidance_);
}

Vector empirical_denoise(const std::vector<Vector>& points, const Vector& x, double sigma) {
  if (points.empty()) throw ParameterError("empirical_denoise: no points");
  if (sigma == 0.0) return x;
  std::vector<double> logs(points.size());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (points[k].size() != x.size()) throw ParameterError("empirical_denoise: dimension mismatch");
    logs[k] = -0.5 * (x - points[k]).squaredNorm() / (sigma * sigma);
    best = std::max(best, logs[k]);
  }
  double total = 0.0;
  Vector out = Vector::Zero(x.size());
  for (std::size_t k = 0; k < points.size(); ++k) {
    const double w = std::exp(logs[k] - best);
    total += w;
    out += w * points[k];
  }
  return out / total;
}

}  // namespace flowdistill
