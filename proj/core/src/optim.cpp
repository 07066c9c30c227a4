#include "flowdistill/optim.hpp"

#include <cmath>

#include "flowdistill/error.hpp"

namespace flowdistill {

void Adam::step(Vector& params, const Vector& grad) {
  if (grad.size() != params.size()) throw ParameterError("Adam: gradient size mismatch");
  if (m_.size() != params.size()) {
    m_ = Vector::Zero(params.size());
    v_ = Vector::Zero(params.size());
    t_ = 0;
  }
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  m_ = b1 * m_ + (1.0 - b1) * grad;
  v_ = b2 * v_ + (1.0 - b2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
  }
}

void Adam::reset() {
  m_.resize(0);
  v_.resize(0);
  t_ = 0;
}

}  // namespace flowdistill
