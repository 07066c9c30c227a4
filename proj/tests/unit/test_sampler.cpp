#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "flowdistill/denoiser.hpp"
#include "flowdistill/error.hpp"
#include "flowdistill/metrics.hpp"
#include "flowdistill/prior.hpp"
#include "flowdistill/rng.hpp"
#include "flowdistill/sampler.hpp"

using namespace flowdistill;

namespace {

class FnDenoiser final : public Denoiser {
 public:
  FnDenoiser(std::size_t d, std::function<Vector(const Vector&, double)> fn) : d_(d), fn_(std::move(fn)) {}
  Vector denoise(const Vector& x, double sigma) const override { return fn_(x, sigma); }
  std::size_t dim() const override { return d_; }

 private:
  std::size_t d_;
  std::function<Vector(const Vector&, double)> fn_;
};

Vector v1(double a) { return Vector::Constant(1, a); }

constexpr double kMu = 1.3;
constexpr double kS = 0.5;

PriorDenoiser gaussian_denoiser() { return PriorDenoiser(GaussianMixturePrior::gaussian(v1(kMu), kS)); }

std::vector<double> grid(std::size_t n) { return sampling_grid(NoiseSchedule{0.002, 80.0, 7.0, n}); }

// Largest deviation from the exact single-Gaussian flow along a trajectory,
// relative to |x(sigma_0) - mu|.
double flow_error(const std::vector<double>& sigmas, Solver solver, double x0) {
  const auto d = gaussian_denoiser();
  OdeRunConfig run;
  run.sigmas = sigmas;
  run.solver = solver;
  const auto path = pf_ode_sample(d, run, v1(x0));
  double worst = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const double exact =
        kMu + (x0 - kMu) * std::sqrt((kS * kS + sigmas[i] * sigmas[i]) / (kS * kS + sigmas[0] * sigmas[0]));
    worst = std::max(worst, std::abs(path[i][0] - exact));
  }
  return worst / std::abs(x0 - kMu);
}

}  // namespace

TEST(EulerStep, IdentityDenoiserIsStationary) {
  const FnDenoiser id(2, [](const Vector& x, double) { return x; });
  const Vector x = (Vector(2) << 0.4, -2.0).finished();
  EXPECT_EQ(euler_step(id, x, 3.0, 1.0), x);
}

TEST(EulerStep, GaussianStepToZero) {
  const auto d = gaussian_denoiser();
  for (double x : {-2.0, 0.0, 4.0})
    for (double sigma : {0.1, 1.0, 5.0})
      EXPECT_NEAR(euler_step(d, v1(x), sigma, 0.0)[0], x - sigma * sigma * (x - kMu) / (kS * kS + sigma * sigma),
                  1e-12);
}

TEST(EulerStep, ConstantDenoiserInterpolates) {
  const FnDenoiser c(1, [](const Vector&, double) { return v1(2.0); });
  const double x = -1.0, cur = 4.0, next = 1.0;
  EXPECT_NEAR(euler_step(c, v1(x), cur, next)[0], x + (2.0 - x) * (cur - next) / cur, 1e-15);
}

TEST(EulerStep, RejectsNonDecreasingPair) {
  const auto d = gaussian_denoiser();
  EXPECT_THROW(euler_step(d, v1(0.0), 1.0, 1.0), ParameterError);
  EXPECT_THROW(euler_step(d, v1(0.0), 1.0, 2.0), ParameterError);
  EXPECT_THROW(heun_step(d, v1(0.0), 0.0, 0.0), ParameterError);
}

TEST(PfOde, MatchesClosedFormFlow) {
  for (double x0 : {-150.0, -20.0, 35.0, 90.0}) EXPECT_LE(flow_error(grid(200), Solver::euler, x0), 1e-3);
}

TEST(PfOde, EulerConvergenceOrder) {
  std::vector<double> lx, ly;
  for (std::size_t n : {25u, 50u, 100u, 200u, 400u}) {
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(flow_error(grid(n), Solver::euler, 40.0)));
  }
  const double mx = (lx[0] + lx[1] + lx[2] + lx[3] + lx[4]) / 5, my = (ly[0] + ly[1] + ly[2] + ly[3] + ly[4]) / 5;
  double num = 0, den = 0;
  for (int i = 0; i < 5; ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  EXPECT_GE(-num / den, 0.9);
}

TEST(PfOde, HeunAtLeastAsAccurateAsEuler) {
  for (std::size_t n : {20u, 50u, 200u})
    EXPECT_LE(flow_error(grid(n), Solver::heun, 40.0), flow_error(grid(n), Solver::euler, 40.0));
}

TEST(PfOde, SingleLevelGridEchoesInput) {
  const auto d = gaussian_denoiser();
  OdeRunConfig run;
  run.sigmas = {3.0};
  const auto path = pf_ode_sample(d, run, v1(0.25));
  ASSERT_EQ(path.size(), 1u);
  EXPECT_EQ(path[0][0], 0.25);
}

TEST(PfOde, RejectsBadGrid) {
  const auto d = gaussian_denoiser();
  OdeRunConfig run;
  run.sigmas = {1.0, 2.0};
  EXPECT_THROW(pf_ode_sample(d, run, v1(0.0)), ScheduleError);
  run.sigmas = {};
  EXPECT_THROW(pf_ode_sample(d, run, v1(0.0)), ParameterError);
}

TEST(PfOde, NonFiniteStateReportsStep) {
  const FnDenoiser bad(1, [](const Vector& x, double sigma) {
    return sigma < 1.0 ? v1(std::numeric_limits<double>::quiet_NaN()) : x;
  });
  OdeRunConfig run;
  run.sigmas = {4.0, 2.0, 0.5, 0.1};
  try {
    pf_ode_sample(bad, run, v1(0.0));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.step(), 2u);
  }
}

TEST(ReverseSde, ZeroEtaIsEulerPath) {
  const auto d = gaussian_denoiser();
  OdeRunConfig run;
  run.sigmas = grid(60);
  Rng rng(3);
  const Vector x0 = v1(37.0);
  EXPECT_EQ(reverse_sde_sample(d, run, rng, x0, 0.0), pf_ode_sample(d, run, x0).back());
}

TEST(ReverseSde, GaussianMarginalVariance) {
  const auto d = gaussian_denoiser();
  OdeRunConfig run;
  run.sigmas = grid(200);
  const int n = 10000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    Rng init = make_rng(5, i, 1), noise = make_rng(5, i, 2);
    const double x = reverse_sde_sample(d, run, noise, normal_vector(init, 1, 80.0))[0];
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n, var = sum2 / n - mean * mean;
  EXPECT_NEAR(var, kS * kS, 0.05 * kS * kS);
}

TEST(ReverseSde, SeededDeterminism) {
  const auto d = gaussian_denoiser();
  OdeRunConfig run;
  run.sigmas = grid(50);
  Rng a(9), b(9);
  EXPECT_EQ(reverse_sde_sample(d, run, a, v1(1.0)), reverse_sde_sample(d, run, b, v1(1.0)));
}

TEST(Sdedit, SmallStartIsNearNoOp) {
  const auto d = gaussian_denoiser();
  const NoiseSchedule s;
  Rng rng(1);
  const double t = 0.01;
  const Vector src = v1(-4.0);
  const Vector out = sdedit_translate(d, src, t, s, Solver::euler, rng);
  EXPECT_LE((out - src).norm(), sigma_of_t(s, t));
  EXPECT_THROW(sdedit_translate(d, src, 0.0, s, Solver::euler, rng), ParameterError);
}

TEST(Sdedit, FullNoiseErasesSource) {
  const auto prior = GaussianMixturePrior::gaussian(v1(kMu), kS);
  const PriorDenoiser d(prior);
  NoiseSchedule s;
  s.n_steps = 200;
  std::vector<Vector> out(4096);
  for (std::size_t i = 0; i < out.size(); ++i) {
    Rng rng = make_rng(2, i);
    out[i] = sdedit_translate(d, v1(kMu - 5 * kS), 1.0, s, Solver::euler, rng);
  }
  Rng direct(4);
  EXPECT_LE(sliced_w2(out, prior.sample(direct, 4096), 16, 1), 0.05);
}

TEST(Sdedit, MidStartKeepsNearestMode) {
  const GaussianMixturePrior prior({{0.5, v1(-3.0), 0.5}, {0.5, v1(3.0), 0.5}});
  const PriorDenoiser d(prior);
  NoiseSchedule s;
  s.n_steps = 200;
  const double t = 0.4;  // sigma about 0.94, two component scales
  int near = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    Rng rng = make_rng(3, i);
    if (sdedit_translate(d, v1(3.0 - 3 * 0.5), t, s, Solver::euler, rng)[0] > 0.0) ++near;
  }
  EXPECT_GT(near, 0.9 * n);
}

TEST(Bridge, EqualDenoisersGiveZeroDisplacement) {
  const auto d = gaussian_denoiser();
  const ModelAux same(d);
  OdeRunConfig run;
  run.sigmas = grid(50);
  const auto path = sb_pf_ode_image(d, same, run, v1(0.7));
  for (const auto& x : path) EXPECT_EQ(x[0], 0.7);
}

TEST(Bridge, IdealAuxExpectedDisplacement) {
  const auto d = gaussian_denoiser();
  const IdealAux ideal;
  const double x = 2.9;
  for (auto [cur, next] : {std::pair{2.0, 1.8}, std::pair{0.5, 0.45}, std::pair{10.0, 9.0}}) {
    Rng rng(21);
    const int n = 100000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
      const double dx = bridge_displacement(d, ideal, v1(x), cur, next, NoisePolicy::shared, rng)[0];
      sum += dx;
      sum2 += dx * dx;
    }
    const double mean = sum / n, se = std::sqrt((sum2 / n - mean * mean) / n);
    const double expect = (cur - next) * cur / (kS * kS + cur * cur) * (kMu - x);
    EXPECT_LE(std::abs(mean - expect), 3 * se) << cur;
  }
}

TEST(Bridge, FullScheduleReachesMean) {
  const auto d = gaussian_denoiser();
  const IdealAux ideal;
  OdeRunConfig run;
  run.sigmas = sampling_grid(NoiseSchedule{});
  const auto path = sb_pf_ode_image(d, ideal, run, v1(kMu + 5 * kS));
  EXPECT_LE(std::abs(path.back()[0] - kMu), 0.05 * kS);
}

TEST(Bridge, SharedNoiseLowersVariance) {
  // D_phi: a Gaussian fitted to renders near x; D_p: the prior.
  const auto dp = gaussian_denoiser();
  const PriorDenoiser q(GaussianMixturePrior::gaussian(v1(2.5), 0.3));
  const ModelAux aux(q);
  auto variance = [&](NoisePolicy policy) {
    Rng rng(8);
    double sum = 0, sum2 = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const double dx = bridge_displacement(dp, aux, v1(2.4), 1.0, 0.9, policy, rng)[0];
      sum += dx;
      sum2 += dx * dx;
    }
    return sum2 / n - (sum / n) * (sum / n);
  };
  EXPECT_LT(variance(NoisePolicy::shared), variance(NoisePolicy::independent));
}

TEST(Sampler, GuidedRunDenoiser) {
  auto set = std::make_shared<const ConditionalPriorSet>(std::vector<std::pair<std::string, GaussianMixturePrior>>{
      {"a", GaussianMixturePrior::gaussian(v1(-1.0), 0.5)}, {"b", GaussianMixturePrior::gaussian(v1(1.0), 0.5)}});
  OdeRunConfig run;
  run.sigmas = {1.0};
  run.label = "a";
  run.guidance = 2.0;
  const auto d = make_run_denoiser(set, run);
  EXPECT_EQ(d->denoise(v1(0.3), 0.8), set->cfg_denoise(v1(0.3), 0.8, "a", 2.0));
  run.label = "zzz";
  EXPECT_THROW(make_run_denoiser(set, run), ParameterError);
}
