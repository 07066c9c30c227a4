#include <gtest/gtest.h>

#include <cmath>

#include "fd_util.hpp"
#include "flowdistill/dsm.hpp"
#include "flowdistill/error.hpp"
#include "flowdistill/lora.hpp"
#include "flowdistill/network.hpp"
#include "flowdistill/prior.hpp"
#include "flowdistill/rng.hpp"

using namespace flowdistill;
using fdtest::central_gradient;
using fdtest::relative_error;

namespace {

MlpConfig small_config(std::size_t dim, std::size_t labels = 0, bool pose = false) {
  MlpConfig c;
  c.dim = dim;
  c.hidden = {7, 5};
  c.n_frequencies = 3;
  c.n_labels = labels;
  c.pose_features = pose;
  c.zero_init_output = false;
  return c;
}

Condition random_condition(Rng& rng, std::size_t labels, bool pose) {
  Condition c;
  if (labels > 0) c.label = static_cast<std::size_t>(rng() % labels);
  if (pose) c.angle = 6.28 * uniform01(rng);
  return c;
}

// Output = x0 for every input; the DSM optimum on Dirac data at x0.
class ConstantDenoiser final : public TrainableDenoiser {
 public:
  explicit ConstantDenoiser(Vector x0) : x0_(std::move(x0)) {}
  std::size_t dim() const override { return static_cast<std::size_t>(x0_.size()); }
  Matrix forward_batch(const Matrix& x, std::span<const double>, std::span<const Condition>) const override {
    return x0_.replicate(1, x.cols());
  }
  BatchGradients vjp_batch(const Matrix& x, std::span<const double>, std::span<const Condition>,
                           const Matrix&) const override {
    return {Matrix::Zero(x.rows(), x.cols()), Vector()};
  }
  std::size_t num_parameters() const override { return 0; }
  Vector parameters() const override { return {}; }
  void set_parameters(const Vector&) override {}

 private:
  Vector x0_;
};

// D(x) = x.
class IdentityNet final : public TrainableDenoiser {
 public:
  explicit IdentityNet(std::size_t d) : d_(d) {}
  std::size_t dim() const override { return d_; }
  Matrix forward_batch(const Matrix& x, std::span<const double>, std::span<const Condition>) const override {
    return x;
  }
  BatchGradients vjp_batch(const Matrix&, std::span<const double>, std::span<const Condition>,
                           const Matrix& cot) const override {
    return {cot, Vector()};
  }
  std::size_t num_parameters() const override { return 0; }
  Vector parameters() const override { return {}; }
  void set_parameters(const Vector&) override {}

 private:
  std::size_t d_;
};

}  // namespace

TEST(Preconditioning, Limits) {
  const Preconditioning p;
  EXPECT_NEAR(p.c_skip(1e-8), 1.0, 1e-12);
  EXPECT_NEAR(p.c_out(1e-8), 0.0, 1e-7);
  EXPECT_NEAR(p.c_skip(0.5), 0.5, 1e-15);
}

TEST(Weighting, Values) {
  EXPECT_EQ(weighting_value(Weighting::unit, 3.0), 1.0);
  EXPECT_DOUBLE_EQ(weighting_value(Weighting::inverse_sigma2, 2.0), 0.25);
  EXPECT_DOUBLE_EQ(weighting_value(Weighting::edm, 1.0, 0.5), (1.0 + 0.25) / 0.25);
  EXPECT_EQ(parse_weighting("edm"), Weighting::edm);
  EXPECT_THROW(parse_weighting("snr"), ParameterError);
}

TEST(MlpDenoiser, ZeroHeadGivesSkipPath) {
  MlpConfig c;
  c.dim = 3;
  Rng rng(1);
  const MlpDenoiser net(c, rng);
  const Vector x = normal_vector(rng, 3);
  for (double sigma : {0.01, 0.5, 10.0})
    EXPECT_LE((net.forward(x, sigma) - Preconditioning{}.c_skip(sigma) * x).norm(), 1e-15);
}

TEST(MlpDenoiser, SmallSigmaApproachesIdentity) {
  Rng rng(2);
  const MlpDenoiser net(small_config(2), rng);
  const Vector x = normal_vector(rng, 2);
  EXPECT_LE((net.forward(x, 1e-7) - x).norm(), 1e-5);
}

TEST(MlpDenoiser, RejectsBadInput) {
  Rng rng(3);
  const MlpDenoiser net(small_config(2), rng);
  EXPECT_THROW(net.forward(Vector::Zero(3), 1.0), ParameterError);
  EXPECT_THROW(net.forward(Vector::Zero(2), 0.0), ParameterError);
}

TEST(MlpDenoiser, VjpMatchesFiniteDifferences) {
  Rng rng(42);
  int trials = 0;
  for (std::size_t labels : {0u, 3u})
    for (bool pose : {false, true})
      for (int k = 0; k < 30; ++k, ++trials) {
        const std::size_t d = 1 + rng() % 3;
        MlpDenoiser net(small_config(d, labels, pose), rng);
        const Vector x = normal_vector(rng, static_cast<Eigen::Index>(d));
        const double sigma = std::exp(-2.0 + 4.0 * uniform01(rng));
        const Condition cond = random_condition(rng, labels, pose);
        const Vector u = normal_vector(rng, static_cast<Eigen::Index>(d));
        const auto g = net.vjp(x, sigma, cond, u);

        const Vector gx = central_gradient([&](const Vector& y) { return u.dot(net.forward(y, sigma, cond)); }, x);
        EXPECT_LE(relative_error(g.x, gx), 1e-4) << "trial " << trials;

        const Vector p0 = net.parameters();
        MlpDenoiser probe = net;
        const Vector gp = central_gradient(
            [&](const Vector& p) {
              probe.set_parameters(p);
              return u.dot(probe.forward(x, sigma, cond));
            },
            p0);
        EXPECT_LE(relative_error(g.params, gp), 1e-4) << "trial " << trials;
      }
  EXPECT_GE(trials, 100);
}

TEST(MlpDenoiser, ZeroCotangentGivesZeroGrads) {
  Rng rng(5);
  const MlpDenoiser net(small_config(2), rng);
  const auto g = net.vjp(normal_vector(rng, 2), 0.7, {}, Vector::Zero(2));
  EXPECT_EQ(g.x.norm(), 0.0);
  EXPECT_EQ(g.params.norm(), 0.0);
}

TEST(MlpDenoiser, LinearNetInputGradientIsTranspose) {
  MlpConfig c;
  c.dim = 3;
  c.hidden = {};
  c.n_frequencies = 0;
  c.zero_init_output = false;
  Rng rng(9);
  const MlpDenoiser net(c, rng);
  const double sigma = 0.8;
  const Preconditioning pc;
  const Matrix w = net.layers()[0].weight.leftCols(3);
  const Matrix jac = pc.c_skip(sigma) * Matrix::Identity(3, 3) + pc.c_out(sigma) * pc.c_in(sigma) * w;
  const Vector u = normal_vector(rng, 3);
  EXPECT_LE((net.vjp(normal_vector(rng, 3), sigma, {}, u).x - jac.transpose() * u).norm(), 1e-12);
}

TEST(MlpDenoiser, BatchMatchesSingle) {
  Rng rng(6);
  const MlpDenoiser net(small_config(2), rng);
  Matrix x(2, 4);
  std::vector<double> sigmas{0.1, 0.5, 2.0, 9.0};
  for (int j = 0; j < 4; ++j) x.col(j) = normal_vector(rng, 2);
  const Matrix out = net.forward_batch(x, sigmas, {});
  for (int j = 0; j < 4; ++j) EXPECT_LE((out.col(j) - net.forward(x.col(j), sigmas[j])).norm(), 1e-14);
}

TEST(Lora, ZeroInitEqualsBase) {
  Rng rng(7);
  auto base = std::make_shared<MlpDenoiser>(small_config(3, 2, true), rng);
  const LoraDenoiser lora(base, {}, rng);
  for (int k = 0; k < 20; ++k) {
    const Vector x = normal_vector(rng, 3);
    const double sigma = 0.05 + 5.0 * uniform01(rng);
    const Condition c = random_condition(rng, 2, true);
    EXPECT_EQ(lora.forward(x, sigma, c), base->forward(x, sigma, c));
  }
}

TEST(Lora, VjpMatchesFiniteDifferences) {
  Rng rng(8);
  auto base = std::make_shared<MlpDenoiser>(small_config(2), rng);
  LoraDenoiser lora(base, {2, 2.0}, rng);
  Vector p = lora.parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = 0.3 * std::sin(1.0 + i);
  lora.set_parameters(p);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = normal_vector(rng, 2);
    const double sigma = 0.1 + 3.0 * uniform01(rng);
    const Vector u = normal_vector(rng, 2);
    const auto g = lora.vjp(x, sigma, {}, u);
    EXPECT_LE(relative_error(g.x, central_gradient([&](const Vector& y) { return u.dot(lora.forward(y, sigma)); }, x)),
              1e-4);
    LoraDenoiser probe = lora;
    const Vector gp = central_gradient(
        [&](const Vector& q) {
          probe.set_parameters(q);
          return u.dot(probe.forward(x, sigma));
        },
        p);
    EXPECT_LE(relative_error(g.params, gp), 1e-4);
  }
}

TEST(Lora, FinetuneTouchesOnlyAdapter) {
  Rng rng(10);
  auto base = std::make_shared<MlpDenoiser>(small_config(2), rng);
  const Vector base_before = base->parameters();
  LoraDenoiser lora(base, {}, rng);
  const Vector adapter_before = lora.parameters();
  const std::vector<Vector> batch{normal_vector(rng, 2), normal_vector(rng, 2)};
  lora_finetune_step(lora, batch, rng, {});
  EXPECT_EQ(base->parameters(), base_before);
  EXPECT_NE(lora.parameters(), adapter_before);
  EXPECT_THROW(lora_finetune_step(lora, {}, rng, {}), ParameterError);
}

TEST(Lora, DiracDataPullsOutputToPoint) {
  Rng rng(11);
  MlpConfig c;
  c.dim = 2;
  c.hidden = {32, 32};
  auto base = std::make_shared<MlpDenoiser>(c, rng);
  LoraDenoiser lora(base, {4, 4.0}, rng);
  DsmConfig dsm;
  dsm.sigma_min = 0.05;
  dsm.sigma_max = 2.0;
  dsm.adam.learning_rate = 1e-2;
  const Vector point = (Vector(2) << 1.5, -0.8).finished();
  const std::vector<Vector> batch(8, point);
  auto residual = [&] {
    Rng eval(99);
    double total = 0.0;
    for (double sigma : {0.1, 0.5, 1.0})
      for (int k = 0; k < 20; ++k)
        total += (lora.forward(point + normal_vector(eval, 2, sigma), sigma) - point).norm();
    return total;
  };
  const double before = residual();
  for (int step = 0; step < 600; ++step) lora_finetune_step(lora, batch, rng, dsm);
  EXPECT_LE(residual(), 0.1 * before);
}

TEST(Dsm, OracleOnDiracDataHasZeroLoss) {
  const Vector x0 = (Vector(2) << 0.3, -1.2).finished();
  const ConstantDenoiser oracle(x0);
  const std::vector<Vector> batch(16, x0);
  Rng rng(1);
  EXPECT_EQ(dsm_loss(oracle, batch, rng, {}).loss, 0.0);
  EXPECT_THROW(dsm_loss(oracle, {}, rng, {}), ParameterError);
}

TEST(Dsm, IdentityNetExpectedLoss) {
  const std::size_t d = 3;
  const IdentityNet net(d);
  DsmConfig cfg;
  cfg.weighting = Weighting::unit;
  cfg.sigma_min = 0.5;
  cfg.sigma_max = 2.0;
  const std::vector<Vector> batch(1, Vector::Zero(d));
  Rng rng(2);
  const int n = 40000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double l = dsm_loss(net, batch, rng, cfg).loss;
    sum += l;
    sum2 += l * l;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  const double e_sigma2 = (4.0 - 0.25) / (2.0 * std::log(4.0));
  EXPECT_LE(std::abs(mean - d * e_sigma2), 3.0 * se);
}

TEST(Dsm, GradientsMatchFiniteDifferences) {
  Rng rng(12);
  MlpDenoiser net(small_config(2), rng);
  std::vector<Vector> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(normal_vector(rng, 2));
  const Rng draw = rng;
  Rng r0 = draw;
  const auto res = dsm_loss(net, batch, r0, {});
  MlpDenoiser probe = net;
  const Vector fd = central_gradient(
      [&](const Vector& p) {
        probe.set_parameters(p);
        Rng r = draw;
        return dsm_loss(probe, batch, r, {}).loss;
      },
      net.parameters());
  EXPECT_LE(relative_error(res.grads, fd), 1e-4);
}

TEST(Dsm, SeededTrainingIsBitIdentical) {
  const auto prior = GaussianMixturePrior::gaussian(Vector::Constant(1, 1.0), 0.5);
  TrainConfig tc;
  tc.seed = 17;
  const auto a = train_prior_net(prior, 50, tc);
  const auto b = train_prior_net(prior, 50, tc);
  EXPECT_EQ(a.parameters(), b.parameters());
  EXPECT_THROW(train_prior_net(prior, 0, tc), ParameterError);
}
