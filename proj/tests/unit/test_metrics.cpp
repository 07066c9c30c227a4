#include <gtest/gtest.h>

#include <cmath>

#include "flowdistill/error.hpp"
#include "flowdistill/metrics.hpp"
#include "flowdistill/rng.hpp"

using namespace flowdistill;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }

std::vector<Vector> gaussian_cloud(Rng& rng, std::size_t n, Eigen::Index d, double shift, double scale = 1.0) {
  std::vector<Vector> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(normal_vector(rng, d, scale).array() + shift);
  return out;
}

}  // namespace

TEST(SlicedW2, Examples) {
  Rng rng(1);
  const auto a = gaussian_cloud(rng, 300, 3, 0.0);
  EXPECT_EQ(sliced_w2(a, a), 0.0);
  EXPECT_DOUBLE_EQ(sliced_w2(std::vector<Vector>{v1(0.0)}, std::vector<Vector>{v1(1.0)}), 1.0);
  const auto n0 = gaussian_cloud(rng, 4096, 1, 0.0), n2 = gaussian_cloud(rng, 4096, 1, 2.0);
  EXPECT_NEAR(sliced_w2(n0, n2), 2.0, 0.1);
}

TEST(SlicedW2, SymmetricAndSeeded) {
  Rng rng(2);
  const auto a = gaussian_cloud(rng, 200, 2, 0.0), b = gaussian_cloud(rng, 150, 2, 0.5, 2.0);
  EXPECT_EQ(sliced_w2(a, b, 64, 9), sliced_w2(a, b, 64, 9));
  EXPECT_NEAR(sliced_w2(a, b, 64, 9), sliced_w2(b, a, 64, 9), 1e-12);
  EXPECT_THROW(sliced_w2({}, b), ParameterError);
  EXPECT_THROW(sliced_w2(a, b, 0), ParameterError);
}

TEST(Mmd, Examples) {
  Rng rng(3);
  const auto a = gaussian_cloud(rng, 200, 2, 0.0);
  EXPECT_LE(mmd_rbf(a, a, 1.0), 0.0);
  const auto far = gaussian_cloud(rng, 200, 2, 100.0, 0.01);
  const auto near = gaussian_cloud(rng, 200, 2, 0.0, 0.01);
  EXPECT_NEAR(mmd_rbf(near, far, 0.5), 2.0, 0.01);
  const auto b = gaussian_cloud(rng, 150, 2, 0.7);
  std::vector<Vector> at, bt;
  for (const auto& x : a) at.push_back(x.array() + 3.0);
  for (const auto& x : b) bt.push_back(x.array() + 3.0);
  EXPECT_NEAR(mmd_rbf(a, b, 0.8), mmd_rbf(at, bt, 0.8), 1e-12);
  const std::vector<Vector> single{a[0]};
  EXPECT_THROW(mmd_rbf(single, b, 1.0), ParameterError);
  EXPECT_THROW(mmd_rbf(a, b, 0.0), ParameterError);
}

TEST(EnsembleKl, SelfConsistency) {
  const auto prior = GaussianMixturePrior({{0.5, (Vector(2) << -1, 0).finished(), 0.6},
                                           {0.5, (Vector(2) << 1.5, 0.5).finished(), 0.4}});
  Rng rng(4);
  const auto particles = prior.sample(rng, 3000);
  const std::vector<double> sigma{1.0}, w{1.0};
  EXPECT_LE(ensemble_kl(particles, prior, sigma, w), 0.05);
}

TEST(EnsembleKl, SingleParticleClosedForm) {
  const double s = 0.7;
  const auto prior = GaussianMixturePrior::gaussian(v1(1.0), s);
  const std::vector<Vector> particle{v1(1.0)};
  const std::vector<double> sigma{s}, w{1.0};
  // KL(N(mu, s^2) || N(mu, 2 s^2)) = 0.5 (0.5 - 1 + ln 2).
  EXPECT_NEAR(ensemble_kl(particle, prior, sigma, w), 0.096573590279972643, 1e-3);
  const std::vector<double> zero{0.0};
  EXPECT_EQ(ensemble_kl(particle, prior, sigma, zero), 0.0);
}

TEST(EnsembleKl, NonNegativeAndTwoDimensionalOnly) {
  Rng rng(5);
  const auto prior = GaussianMixturePrior::gaussian(Vector::Zero(2), 1.0);
  const std::vector<double> sigma{0.3, 1.0, 3.0}, w{1.0, 0.5, 0.25};
  for (int k = 0; k < 5; ++k) EXPECT_GE(ensemble_kl(gaussian_cloud(rng, 7, 2, 0.4 * k), prior, sigma, w), -1e-6);
  const auto p3 = GaussianMixturePrior::gaussian(Vector::Zero(3), 1.0);
  EXPECT_THROW(ensemble_kl(gaussian_cloud(rng, 5, 3, 0.0), p3, sigma, w), UnsupportedError);
}

TEST(TrendStats, Examples) {
  const std::vector<double> down{5, 4, 3, 2, 1}, up{1, 2, 3, 4, 5}, hand{3, 1, 2}, flat{2, 2, 2, 2};
  EXPECT_DOUBLE_EQ(trend_stats(down).spearman_rho, -1.0);
  EXPECT_EQ(trend_stats(down).fraction_increasing, 0.0);
  EXPECT_DOUBLE_EQ(trend_stats(up).spearman_rho, 1.0);
  EXPECT_EQ(trend_stats(up).fraction_increasing, 1.0);
  EXPECT_NEAR(trend_stats(hand).spearman_rho, -0.5, 1e-15);
  EXPECT_EQ(trend_stats(hand).fraction_increasing, 0.5);
  EXPECT_EQ(trend_stats(flat).spearman_rho, 0.0);
  EXPECT_THROW(trend_stats(std::vector<double>{1, 2}), ParameterError);
}

TEST(TrendStats, TiesUseAverageRanks) {
  const std::vector<double> v{1.0, 3.0, 3.0, 2.0};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{1.0, 3.5, 3.5, 2.0}));
}

TEST(TrendStats, InvariantUnderMonotoneTransforms) {
  Rng rng(6);
  std::vector<double> v, e, c;
  for (int i = 0; i < 60; ++i) {
    const double x = normal_vector(rng, 1)[0] + 0.05 * i;
    v.push_back(x);
    e.push_back(std::exp(3 * x));
    c.push_back(x * x * x - 7.0);
  }
  EXPECT_NEAR(trend_stats(v).spearman_rho, trend_stats(e).spearman_rho, 1e-14);
  EXPECT_NEAR(trend_stats(v).spearman_rho, trend_stats(c).spearman_rho, 1e-14);
  EXPECT_EQ(trend_stats(v).fraction_increasing, trend_stats(e).fraction_increasing);
}

TEST(Retrieval, ExactRendersArePerfect) {
  const MultiViewGenerator g({6, 6});
  const auto poses = uniform_poses(4);
  Rng rng(7);
  std::vector<std::pair<std::string, GaussianMixturePrior>> conds;
  std::vector<LabeledScene> scenes;
  std::vector<Vector> thetas;
  for (int l = 0; l < 5; ++l) thetas.push_back(normal_vector(rng, 36));
  std::vector<std::shared_ptr<const ConditionalPriorSet>> views;
  for (const auto& pose : poses) {
    std::vector<std::pair<std::string, GaussianMixturePrior>> per;
    for (int l = 0; l < 5; ++l)
      per.push_back({"l" + std::to_string(l), GaussianMixturePrior::gaussian(g.render(thetas[l], pose), 0.2)});
    views.push_back(std::make_shared<const ConditionalPriorSet>(per));
  }
  for (int l = 0; l < 5; ++l) scenes.push_back({"l" + std::to_string(l), thetas[l]});
  EXPECT_EQ(retrieval_precision(scenes, views, g, poses), 1.0);
  EXPECT_EQ(classify_scene(thetas[3], views, g, poses), "l3");
  std::vector<LabeledScene> bad{{"nope", thetas[0]}};
  EXPECT_THROW(retrieval_precision(bad, views, g, poses), ParameterError);
}

TEST(Retrieval, IdenticalPriorsAreChance) {
  const IdentityGenerator g(2);
  const std::vector<CameraPose> poses(1);
  std::vector<std::pair<std::string, GaussianMixturePrior>> conds;
  for (int l = 0; l < 4; ++l) conds.push_back({"l" + std::to_string(l), GaussianMixturePrior::gaussian(Vector::Zero(2), 1.0)});
  const ConditionalPriorSet set(conds);
  std::vector<LabeledScene> scenes;
  Rng rng(8);
  for (int l = 0; l < 4; ++l) scenes.push_back({"l" + std::to_string(l), normal_vector(rng, 2)});
  EXPECT_NEAR(retrieval_precision(scenes, set, g, poses), 0.25, 1e-12);
}

TEST(SceneError, Examples) {
  Rng rng(9);
  const Vector ref = normal_vector(rng, 50).array() + 2.0;
  const auto exact = scene_error(ref, ref);
  EXPECT_EQ(exact.relative_l2, 0.0);
  EXPECT_TRUE(std::isinf(exact.psnr_db));
  const double range = ref.maxCoeff() - ref.minCoeff();
  EXPECT_NEAR(scene_error(ref.array() + 0.01 * range, ref).psnr_db, 40.0, 1e-9);
  const Vector theta = normal_vector(rng, 50);
  EXPECT_NEAR(scene_error(theta, 2.0 * ref).relative_l2, (theta - 2.0 * ref).norm() / (2.0 * ref.norm()), 1e-14);
  EXPECT_NEAR(scene_error(theta, Vector::Zero(50)).relative_l2, theta.norm(), 1e-14);
  EXPECT_THROW(scene_error(theta, Vector::Zero(3)), ParameterError);
}

TEST(DenoiserError, ExactModelScoresZero) {
  const auto prior = GaussianMixturePrior::gaussian(v1(1.0), 0.5);
  const PriorDenoiser exact(prior);
  const auto sigmas = log_spaced(0.01, 10.0, 5);
  ASSERT_EQ(sigmas.size(), 5u);
  EXPECT_NEAR(sigmas.front(), 0.01, 1e-15);
  EXPECT_NEAR(sigmas.back(), 10.0, 1e-12);
  const auto err = denoiser_error(exact, prior, sigmas, 50, 3);
  EXPECT_EQ(err.median_relative_overall, 0.0);
  EXPECT_EQ(err.median_relative.size(), 5u);
}

TEST(MetricReport, RejectsNonFiniteExceptSentinel) {
  MetricReport r;
  r.set("w2", 0.5);
  r.set("final_psnr_db", std::numeric_limits<double>::infinity());
  EXPECT_THROW(r.set("loss", std::nan("")), NumericalError);
  EXPECT_THROW(r.set("loss", std::numeric_limits<double>::infinity()), NumericalError);
  EXPECT_EQ(r.to_csv().substr(0, 13), "metric,value\n");
  EXPECT_NE(r.to_summary().find("w2=0.5"), std::string::npos);
}
