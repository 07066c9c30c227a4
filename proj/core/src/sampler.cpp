#include "flowdistill/sampler.hpp"

#include <cmath>
#include <string>

#include "flowdistill/error.hpp"

namespace flowdistill {

namespace {

void check_pair(double sigma_cur, double sigma_next) {
  if (!(sigma_cur > 0.0) || !(sigma_next >= 0.0) || !(sigma_cur > sigma_next))
    throw ParameterError("sampler step: require sigma_cur > sigma_next >= 0");
}

void check_finite(const Vector& x, std::size_t step) {
  if (!x.allFinite()) throw NumericalError("sampler produced a non-finite state", step);
}

}  // namespace

Solver parse_solver(std::string_view name) {
  if (name == "euler") return Solver::euler;
  if (name == "heun") return Solver::heun;
  throw ParameterError("unknown solver '" + std::string(name) + "'");
}

void OdeRunConfig::validate() const {
  if (sigmas.empty()) throw ParameterError("OdeRunConfig: empty sigma grid");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!std::isfinite(sigmas[i]) || sigmas[i] < 0.0) throw ParameterError("OdeRunConfig: invalid sigma");
    if (i > 0 && !(sigmas[i] < sigmas[i - 1])) throw ScheduleError("OdeRunConfig: sigma grid must strictly decrease");
  }
  if (sigmas.size() > 1 && !(sigmas.front() > 0.0)) throw ParameterError("OdeRunConfig: first sigma must be positive");
}

std::vector<double> sampling_grid(const NoiseSchedule& schedule) {
  std::vector<double> grid = sigma_grid(schedule);
  grid.push_back(0.0);
  return grid;
}

std::unique_ptr<Denoiser> make_run_denoiser(std::shared_ptr<const ConditionalPriorSet> set,
                                            const OdeRunConfig& config) {
  if (!set) throw ParameterError("make_run_denoiser: null prior set");
  if (config.label) return std::make_unique<GuidedDenoiser>(std::move(set), *config.label, config.guidance);
  return std::make_unique<PriorDenoiser>(set->unconditional());
}

Vector euler_step(const Denoiser& denoiser, const Vector& x, double sigma_cur, double sigma_next) {
  check_pair(sigma_cur, sigma_next);
  const Vector d = (x - denoiser.denoise(x, sigma_cur)) / sigma_cur;
  return x + (sigma_next - sigma_cur) * d;
}

Vector heun_step(const Denoiser& denoiser, const Vector& x, double sigma_cur, double sigma_next) {
  check_pair(sigma_cur, sigma_next);
  const double h = sigma_next - sigma_cur;
  const Vector d = (x - denoiser.denoise(x, sigma_cur)) / sigma_cur;
  const Vector predicted = x + h * d;
  if (sigma_next == 0.0) return predicted;
  const Vector d_next = (predicted - denoiser.denoise(predicted, sigma_next)) / sigma_next;
  return x + (0.5 * h) * (d + d_next);
}

std::vector<Vector> pf_ode_sample(const Denoiser& denoiser, const OdeRunConfig& config, const Vector& x_init) {
  config.validate();
  if (!x_init.allFinite()) throw ParameterError("pf_ode_sample: non-finite initial state");
  std::vector<Vector> trajectory;
  trajectory.reserve(config.sigmas.size());
  trajectory.push_back(x_init);
  for (std::size_t i = 0; i + 1 < config.sigmas.size(); ++i) {
    const Vector& x = trajectory.back();
    Vector next = config.solver == Solver::heun ? heun_step(denoiser, x, config.sigmas[i], config.sigmas[i + 1])
                                                : euler_step(denoiser, x, config.sigmas[i], config.sigmas[i + 1]);
    check_finite(next, i);
    trajectory.push_back(std::move(next));
  }
  return trajectory;
}

Vector reverse_sde_sample(const Denoiser& denoiser, const OdeRunConfig& config, Rng& rng, const Vector& x_init,
                          double eta) {
  config.validate();
  if (!(eta >= 0.0)) throw ParameterError("reverse_sde_sample: eta must be >= 0");
  Vector x = x_init;
  for (std::size_t i = 0; i + 1 < config.sigmas.size(); ++i) {
    const double sc = config.sigmas[i];
    const double sn = config.sigmas[i + 1];
    const Vector d = (x - denoiser.denoise(x, sc)) / sc;
    x += ((1.0 + eta) * (sn - sc)) * d;
    if (eta > 0.0) x += normal_vector(rng, x.size(), std::sqrt(eta * (sc * sc - sn * sn)));
    check_finite(x, i);
  }
  return x;
}

Vector sdedit_translate(const Denoiser& denoiser, const Vector& x_source, double t_start,
                        const NoiseSchedule& schedule, Solver solver, Rng& rng) {
  if (!(t_start > 0.0 && t_start <= 1.0)) throw ParameterError("sdedit_translate: t_start must lie in (0, 1]");
  const double start = sigma_of_t(schedule, t_start);
  OdeRunConfig run;
  run.solver = solver;
  run.sigmas.push_back(start);
  for (double s : sampling_grid(schedule))
    if (s < start) run.sigmas.push_back(s);
  const Vector x = x_source + normal_vector(rng, x_source.size(), start);
  return pf_ode_sample(denoiser, run, x).back();
}

Vector bridge_displacement(const Denoiser& prior, const AuxDenoiser& aux, const Vector& x, double sigma_cur,
                           double sigma_next, NoisePolicy policy, Rng& rng) {
  if (!(sigma_cur > 0.0) || !(sigma_next >= 0.0) || !(sigma_next < sigma_cur))
    throw ScheduleError("bridge step: sigma_next must be below sigma_cur");
  const Vector noise = normal_vector(rng, x.size(), sigma_cur);
  const Vector aux_out = aux.denoise(x, x + noise, sigma_cur);
  Vector prior_out;
  if (policy == NoisePolicy::shared) {
    prior_out = prior.denoise(x + noise, sigma_cur);
  } else {
    prior_out = prior.denoise(x + normal_vector(rng, x.size(), sigma_cur), sigma_cur);
  }
  return ((sigma_next - sigma_cur) / sigma_cur) * (aux_out - prior_out);
}

std::vector<Vector> sb_pf_ode_image(const Denoiser& prior, const AuxDenoiser& aux, const OdeRunConfig& config,
                                    const Vector& x_source, NoisePolicy policy) {
  config.validate();
  Rng rng(config.seed);
  std::vector<Vector> trajectory;
  trajectory.reserve(config.sigmas.size());
  trajectory.push_back(x_source);
  for (std::size_t i = 0; i + 1 < config.sigmas.size(); ++i) {
    const double sc = config.sigmas[i];
    const double sn = config.sigmas[i + 1];
    const Vector& x = trajectory.back();
    Vector next;
    if (config.solver == Solver::euler || sn == 0.0) {
      next = x + bridge_displacement(prior, aux, x, sc, sn, policy, rng);
    } else {
      const Vector z = normal_vector(rng, x.size(), 1.0);
      const Vector z_prior = policy == NoisePolicy::shared ? z : normal_vector(rng, x.size(), 1.0);
      auto slope = [&](const Vector& at, double sigma) {
        return Vector((aux.denoise(at, at + sigma * z, sigma) - prior.denoise(at + sigma * z_prior, sigma)) / sigma);
      };
      const Vector d = slope(x, sc);
      const Vector predicted = x + (sn - sc) * d;
      next = x + (0.5 * (sn - sc)) * (d + slope(predicted, sn));
    }
    check_finite(next, i);
    trajectory.push_back(std::move(next));
  }
  return trajectory;
}

}  // namespace flowdistill
