#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "flowdistill/denoiser.hpp"
#include "flowdistill/rng.hpp"
#include "flowdistill/types.hpp"

namespace flowdistill {

// Loss weighting lambda(sigma) shared by denoising score matching and the
// distillation gradients.
enum class Weighting { unit, inverse_sigma2, edm };

double weighting_value(Weighting w, double sigma, double sigma_data = 0.5);
Weighting parse_weighting(std::string_view name);
std::string_view to_string(Weighting w);

// EDM preconditioning scalars for data scale sigma_data.
struct Preconditioning {
  double sigma_data = 0.5;

  double c_skip(double sigma) const;
  double c_out(double sigma) const;
  double c_in(double sigma) const;
  double c_noise(double sigma) const;
};

// A denoiser with trainable parameters and reverse-mode derivatives. Batches
// are column-major: one sample per column.
class TrainableDenoiser {
 public:
  struct Gradients {
    Vector x;
    Vector params;
  };
  struct BatchGradients {
    Matrix x;       // d x B
    Vector params;  // summed over the batch
  };

  virtual ~TrainableDenoiser() = default;

  virtual std::size_t dim() const = 0;
  // `conditions` is empty (unconditional) or has one entry per column.
  virtual Matrix forward_batch(const Matrix& x, std::span<const double> sigmas,
                               std::span<const Condition> conditions) const = 0;
  virtual BatchGradients vjp_batch(const Matrix& x, std::span<const double> sigmas,
                                   std::span<const Condition> conditions, const Matrix& cotangent) const = 0;
  virtual std::size_t num_parameters() const = 0;
  virtual Vector parameters() const = 0;
  virtual void set_parameters(const Vector& params) = 0;

  Vector forward(const Vector& x, double sigma, const Condition& condition = {}) const;
  Gradients vjp(const Vector& x, double sigma, const Condition& condition, const Vector& cotangent) const;
};

struct MlpConfig {
  std::size_t dim = 1;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t n_frequencies = 6;  // Fourier features of c_noise at 2^(k-3)
  std::size_t n_labels = 0;       // one-hot label features
  bool pose_features = false;     // (cos, sin) of the camera azimuth
  double sigma_data = 0.5;
  bool zero_init_output = true;

  std::size_t embedding_dim() const { return 2 * n_frequencies + 1; }
  std::size_t condition_dim() const { return n_labels + (pose_features ? 2 : 0); }
};

struct DenseLayer {
  Matrix weight;
  Vector bias;
};

// D(x; sigma) = c_skip x + c_out F([c_in x; e(sigma) + W_c cond]) with F a
// SiLU multilayer perceptron.
class MlpDenoiser final : public TrainableDenoiser {
 public:
  MlpDenoiser(MlpConfig config, Rng& rng);
  MlpDenoiser(MlpConfig config, std::vector<DenseLayer> layers, Matrix condition_weight);

  std::size_t dim() const override { return config_.dim; }
  Matrix forward_batch(const Matrix& x, std::span<const double> sigmas,
                       std::span<const Condition> conditions) const override;
  BatchGradients vjp_batch(const Matrix& x, std::span<const double> sigmas, std::span<const Condition> conditions,
                           const Matrix& cotangent) const override;
  std::size_t num_parameters() const override;
  Vector parameters() const override;
  void set_parameters(const Vector& params) override;

  const MlpConfig& config() const { return config_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }
  const Matrix& condition_weight() const { return condition_weight_; }

 private:
  MlpConfig config_;
  std::vector<DenseLayer> layers_;
  Matrix condition_weight_;  // embedding_dim x condition_dim
};

// Frozen network behind the plain Denoiser contract with a fixed condition.
class NetDenoiser final : public Denoiser {
 public:
  NetDenoiser(std::shared_ptr<const TrainableDenoiser> net, Condition condition = {})
      : net_(std::move(net)), condition_(condition) {}
  Vector denoise(const Vector& x, double sigma) const override;
  std::size_t dim() const override { return net_->dim(); }

 private:
  std::shared_ptr<const TrainableDenoiser> net_;
  Condition condition_;
};

namespace detail {

struct MlpTrace {
  Matrix input;                     // (d + E) x B
  std::vector<Matrix> pre;          // pre-activations per layer
  std::vector<Matrix> post;         // activations per hidden layer
  Matrix condition_features;        // condition_dim x B
  Eigen::ArrayXd c_skip, c_out, c_in;
};

struct MlpBackward {
  Matrix x;
  std::vector<DenseLayer> layers;
  Matrix condition_weight;
};

Matrix mlp_forward(const MlpConfig& config, const std::vector<DenseLayer>& layers, const Matrix& condition_weight,
                   const Matrix& x, std::span<const double> sigmas, std::span<const Condition> conditions,
                   MlpTrace* trace);

MlpBackward mlp_backward(const MlpConfig& config, const std::vector<DenseLayer>& layers,
                         const Matrix& condition_weight, const MlpTrace& trace, const Matrix& cotangent);

}  // namespace detail

}  // namespace flowdistill
