#include "flowdistill/network.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "flowdistill/error.hpp"

namespace flowdistill {

double weighting_value(Weighting w, double sigma, double sigma_data) {
  switch (w) {
    case Weighting::unit:
      return 1.0;
    case Weighting::inverse_sigma2:
      return 1.0 / (sigma * sigma);
    case Weighting::edm:
      return (sigma * sigma + sigma_data * sigma_data) / (sigma * sigma_data * sigma * sigma_data);
  }
  throw ParameterError("unknown weighting");
}

Weighting parse_weighting(std::string_view name) {
  if (name == "unit") return Weighting::unit;
  if (name == "inverse_sigma2") return Weighting::inverse_sigma2;
  if (name == "edm") return Weighting::edm;
  throw ParameterError("unknown weighting '" + std::string(name) + "'");
}

std::string_view to_string(Weighting w) {
  switch (w) {
    case Weighting::unit:
      return "unit";
    case Weighting::inverse_sigma2:
      return "inverse_sigma2";
    case Weighting::edm:
      return "edm";
  }
  return "?";
}

double Preconditioning::c_skip(double sigma) const {
  const double sd2 = sigma_data * sigma_data;
  return sd2 / (sigma * sigma + sd2);
}

double Preconditioning::c_out(double sigma) const {
  return sigma * sigma_data / std::sqrt(sigma * sigma + sigma_data * sigma_data);
}

double Preconditioning::c_in(double sigma) const {
  return 1.0 / std::sqrt(sigma * sigma + sigma_data * sigma_data);
}

double Preconditioning::c_noise(double sigma) const { return 0.25 * std::log(sigma); }

Vector TrainableDenoiser::forward(const Vector& x, double sigma, const Condition& condition) const {
  const double sigmas[1] = {sigma};
  const Condition conds[1] = {condition};
  return forward_batch(x, sigmas, conds).col(0);
}

TrainableDenoiser::Gradients TrainableDenoiser::vjp(const Vector& x, double sigma, const Condition& condition,
                                                    const Vector& cotangent) const {
  const double sigmas[1] = {sigma};
  const Condition conds[1] = {condition};
  auto g = vjp_batch(x, sigmas, conds, cotangent);
  return {g.x.col(0), std::move(g.params)};
}

Vector NetDenoiser::denoise(const Vector& x, double sigma) const {
  if (sigma == 0.0) return x;
  return net_->forward(x, sigma, condition_);
}

namespace {

Eigen::ArrayXXd sigmoid(const Matrix& z) { return 1.0 / (1.0 + (-z.array()).exp()); }

void check_batch(const MlpConfig& config, const Matrix& x, std::span<const double> sigmas,
                 std::span<const Condition> conditions) {
  if (static_cast<std::size_t>(x.rows()) != config.dim)
    throw ParameterError("MlpDenoiser: input has dimension " + std::to_string(x.rows()) + ", expected " +
                         std::to_string(config.dim));
  if (sigmas.size() != static_cast<std::size_t>(x.cols()))
    throw ParameterError("MlpDenoiser: one sigma per column required");
  if (!conditions.empty() && conditions.size() != sigmas.size())
    throw ParameterError("MlpDenoiser: one condition per column required");
  for (double s : sigmas)
    if (!(s > 0.0) || !std::isfinite(s)) throw ParameterError("MlpDenoiser: sigma must be positive");
}

}  // namespace

namespace detail {

Matrix mlp_forward(const MlpConfig& config, const std::vector<DenseLayer>& layers, const Matrix& condition_weight,
                   const Matrix& x, std::span<const double> sigmas, std::span<const Condition> conditions,
                   MlpTrace* trace) {
  check_batch(config, x, sigmas, conditions);
  const Preconditioning pre{config.sigma_data};
  const Eigen::Index batch = x.cols();
  const auto d = static_cast<Eigen::Index>(config.dim);
  const auto emb = static_cast<Eigen::Index>(config.embedding_dim());
  const auto cdim = static_cast<Eigen::Index>(config.condition_dim());

  Eigen::ArrayXd c_skip(batch), c_out(batch), c_in(batch);
  Matrix input(d + emb, batch);
  Matrix cond = Matrix::Zero(cdim, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double s = sigmas[static_cast<std::size_t>(b)];
    c_skip[b] = pre.c_skip(s);
    c_out[b] = pre.c_out(s);
    c_in[b] = pre.c_in(s);
    input.col(b).head(d) = c_in[b] * x.col(b);
    const double cn = pre.c_noise(s);
    input(d, b) = cn;
    for (std::size_t k = 0; k < config.n_frequencies; ++k) {
      const double f = 2.0 * std::numbers::pi * std::ldexp(1.0, static_cast<int>(k) - 3);
      input(d + 1 + 2 * static_cast<Eigen::Index>(k), b) = std::sin(f * cn);
      input(d + 2 + 2 * static_cast<Eigen::Index>(k), b) = std::cos(f * cn);
    }
    if (cdim > 0 && !conditions.empty()) {
      const Condition& c = conditions[static_cast<std::size_t>(b)];
      if (c.label) {
        if (*c.label >= config.n_labels) throw ParameterError("MlpDenoiser: label index out of range");
        cond(static_cast<Eigen::Index>(*c.label), b) = 1.0;
      }
      if (config.pose_features && c.angle) {
        cond(static_cast<Eigen::Index>(config.n_labels), b) = std::cos(*c.angle);
        cond(static_cast<Eigen::Index>(config.n_labels) + 1, b) = std::sin(*c.angle);
      }
    }
  }
  if (cdim > 0) input.bottomRows(emb) += condition_weight * cond;

  Matrix a = input;
  std::vector<Matrix> pres, posts;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix z = layers[l].weight * a;
    z.colwise() += layers[l].bias;
    if (l + 1 == layers.size()) {
      pres.push_back(z);
      a = std::move(z);
    } else {
      Matrix act = (z.array() * sigmoid(z)).matrix();
      pres.push_back(std::move(z));
      posts.push_back(act);
      a = std::move(act);
    }
  }
  Matrix out = x;
  for (Eigen::Index b = 0; b < batch; ++b) out.col(b) = c_skip[b] * x.col(b) + c_out[b] * a.col(b);

  if (trace) {
    trace->input = std::move(input);
    trace->pre = std::move(pres);
    trace->post = std::move(posts);
    trace->condition_features = std::move(cond);
    trace->c_skip = c_skip;
    trace->c_out = c_out;
    trace->c_in = c_in;
  }
  return out;
}

MlpBackward mlp_backward(const MlpConfig& config, const std::vector<DenseLayer>& layers,
                         const Matrix& condition_weight, const MlpTrace& trace, const Matrix& cotangent) {
  const Eigen::Index batch = cotangent.cols();
  const auto d = static_cast<Eigen::Index>(config.dim);
  const auto emb = static_cast<Eigen::Index>(config.embedding_dim());
  if (cotangent.rows() != d || batch != trace.input.cols())
    throw ParameterError("MlpDenoiser: cotangent shape mismatch");

  MlpBackward out;
  out.layers.resize(layers.size());
  Matrix g = cotangent;
  for (Eigen::Index b = 0; b < batch; ++b) g.col(b) *= trace.c_out[b];

  for (std::size_t l = layers.size(); l-- > 0;) {
    const Matrix& a_prev = l == 0 ? trace.input : trace.post[l - 1];
    out.layers[l].weight = g * a_prev.transpose();
    out.layers[l].bias = g.rowwise().sum();
    Matrix back = layers[l].weight.transpose() * g;
    if (l > 0) {
      const Matrix& z = trace.pre[l - 1];
      const Eigen::ArrayXXd s = sigmoid(z);
      g = (back.array() * (s + z.array() * s * (1.0 - s))).matrix();
    } else {
      g = std::move(back);
    }
  }
  // g now holds the gradient with respect to the network input.
  out.x = cotangent;
  for (Eigen::Index b = 0; b < batch; ++b)
    out.x.col(b) = trace.c_skip[b] * cotangent.col(b) + trace.c_in[b] * g.col(b).head(d);
  if (config.condition_dim() > 0)
    out.condition_weight = g.bottomRows(emb) * trace.condition_features.transpose();
  else
    out.condition_weight = Matrix::Zero(condition_weight.rows(), condition_weight.cols());
  return out;
}

}  // namespace detail

MlpDenoiser::MlpDenoiser(MlpConfig config, Rng& rng) : config_(std::move(config)) {
  if (config_.dim == 0) throw ParameterError("MlpDenoiser: dim must be >= 1");
  if (!(config_.sigma_data > 0.0)) throw ParameterError("MlpDenoiser: sigma_data must be positive");
  std::size_t fan_in = config_.dim + config_.embedding_dim();
  std::vector<std::size_t> widths = config_.hidden;
  widths.push_back(config_.dim);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const std::size_t out = widths[l];
    if (out == 0) throw ParameterError("MlpDenoiser: zero-width layer");
    DenseLayer layer;
    const bool last = l + 1 == widths.size();
    if (last && config_.zero_init_output) {
      layer.weight = Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(fan_in));
    } else {
      layer.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(fan_in));
      const Vector w = normal_vector(rng, layer.weight.size(), 1.0 / std::sqrt(static_cast<double>(fan_in)));
      std::copy(w.data(), w.data() + w.size(), layer.weight.data());
    }
    layer.bias = Vector::Zero(static_cast<Eigen::Index>(out));
    layers_.push_back(std::move(layer));
    fan_in = out;
  }
  const auto cdim = static_cast<Eigen::Index>(config_.condition_dim());
  condition_weight_.resize(static_cast<Eigen::Index>(config_.embedding_dim()), cdim);
  if (cdim > 0) {
    const Vector w = normal_vector(rng, condition_weight_.size(), 1.0 / std::sqrt(static_cast<double>(cdim)));
    std::copy(w.data(), w.data() + w.size(), condition_weight_.data());
  }
}

MlpDenoiser::MlpDenoiser(MlpConfig config, std::vector<DenseLayer> layers, Matrix condition_weight)
    : config_(std::move(config)), layers_(std::move(layers)), condition_weight_(std::move(condition_weight)) {
  std::size_t fan_in = config_.dim + config_.embedding_dim();
  if (layers_.size() != config_.hidden.size() + 1) throw ParameterError("MlpDenoiser: layer count mismatch");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::size_t out = l < config_.hidden.size() ? config_.hidden[l] : config_.dim;
    if (static_cast<std::size_t>(layers_[l].weight.rows()) != out ||
        static_cast<std::size_t>(layers_[l].weight.cols()) != fan_in ||
        static_cast<std::size_t>(layers_[l].bias.size()) != out)
      throw ParameterError("MlpDenoiser: layer shape mismatch");
    fan_in = out;
  }
  if (static_cast<std::size_t>(condition_weight_.rows()) != config_.embedding_dim() ||
      static_cast<std::size_t>(condition_weight_.cols()) != config_.condition_dim())
    throw ParameterError("MlpDenoiser: condition weight shape mismatch");
}

Matrix MlpDenoiser::forward_batch(const Matrix& x, std::span<const double> sigmas,
                                  std::span<const Condition> conditions) const {
  return detail::mlp_forward(config_, layers_, condition_weight_, x, sigmas, conditions, nullptr);
}

TrainableDenoiser::BatchGradients MlpDenoiser::vjp_batch(const Matrix& x, std::span<const double> sigmas,
                                                         std::span<const Condition> conditions,
                                                         const Matrix& cotangent) const {
  detail::MlpTrace trace;
  detail::mlp_forward(config_, layers_, condition_weight_, x, sigmas, conditions, &trace);
  auto back = detail::mlp_backward(config_, layers_, condition_weight_, trace, cotangent);
  Vector params(static_cast<Eigen::Index>(num_parameters()));
  Eigen::Index at = 0;
  for (const auto& layer : back.layers) {
    params.segment(at, layer.weight.size()) = layer.weight.reshaped();
    at += layer.weight.size();
    params.segment(at, layer.bias.size()) = layer.bias;
    at += layer.bias.size();
  }
  params.segment(at, back.condition_weight.size()) = back.condition_weight.reshaped();
  return {std::move(back.x), std::move(params)};
}

std::size_t MlpDenoiser::num_parameters() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return n + static_cast<std::size_t>(condition_weight_.size());
}

Vector MlpDenoiser::parameters() const {
  Vector out(static_cast<Eigen::Index>(num_parameters()));
  Eigen::Index at = 0;
  for (const auto& layer : layers_) {
    out.segment(at, layer.weight.size()) = layer.weight.reshaped();
    at += layer.weight.size();
    out.segment(at, layer.bias.size()) = layer.bias;
    at += layer.bias.size();
  }
  out.segment(at, condition_weight_.size()) = condition_weight_.reshaped();
  return out;
}

void MlpDenoiser::set_parameters(const Vector& params) {
  if (static_cast<std::size_t>(params.size()) != num_parameters())
    throw ParameterError("MlpDenoiser: parameter vector size mismatch");
  Eigen::Index at = 0;
  for (auto& layer : layers_) {
    layer.weight.reshaped() = params.segment(at, layer.weight.size());
    at += layer.weight.size();
    layer.bias = params.segment(at, layer.bias.size());
    at += layer.bias.size();
  }
  condition_weight_.reshaped() = params.segment(at, condition_weight_.size());
}

}  // namespace flowdistill
