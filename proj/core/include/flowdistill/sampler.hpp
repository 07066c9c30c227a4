#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flowdistill/denoiser.hpp"
#include "flowdistill/rng.hpp"
#include "flowdistill/schedule.hpp"

namespace flowdistill {

enum class Solver { euler, heun };

Solver parse_solver(std::string_view name);

struct OdeRunConfig {
  std::vector<double> sigmas;  // strictly decreasing; a terminal 0 is allowed
  Solver solver = Solver::euler;
  double guidance = 0.0;
  std::optional<std::string> label;
  std::uint64_t seed = 0;

  void validate() const;
};

// Grid of the schedule followed by the terminal level 0.
std::vector<double> sampling_grid(const NoiseSchedule& schedule);

// Builds the denoiser a run should use: guided when a label is configured.
std::unique_ptr<Denoiser> make_run_denoiser(std::shared_ptr<const ConditionalPriorSet> set,
                                            const OdeRunConfig& config);

// x' = x + (sigma_next - sigma_cur) * (x - D(x; sigma_cur)) / sigma_cur
Vector euler_step(const Denoiser& denoiser, const Vector& x, double sigma_cur, double sigma_next);

// Heun step (Euler predictor, trapezoid corrector); plain Euler into sigma = 0.
Vector heun_step(const Denoiser& denoiser, const Vector& x, double sigma_cur, double sigma_next);

// Deterministic probability-flow ODE in the sigma parameterization. Returns one
// state per grid point, starting with x_init.
std::vector<Vector> pf_ode_sample(const Denoiser& denoiser, const OdeRunConfig& config, const Vector& x_init);

// Euler-Maruyama for the family dx = -(1 + eta) sigma' sigma grad log p dt + sqrt(2 eta sigma' sigma) dw.
// eta = 1 is the reverse diffusion SDE; eta = 0 reproduces the Euler PF-ODE path.
Vector reverse_sde_sample(const Denoiser& denoiser, const OdeRunConfig& config, Rng& rng, const Vector& x_init,
                          double eta = 1.0);

// Noise the source to sigma(t_start), then integrate the PF ODE over the grid
// levels below it.
Vector sdedit_translate(const Denoiser& denoiser, const Vector& x_source, double t_start,
                        const NoiseSchedule& schedule, Solver solver, Rng& rng);

enum class NoisePolicy { shared, independent };

// One Euler step of the bridge ODE dx/dsigma = (D_aux(x + n) - D_prior(x + n)) / sigma:
// returns the displacement ((sigma_next - sigma_cur) / sigma_cur) * (D_aux - D_prior).
Vector bridge_displacement(const Denoiser& prior, const AuxDenoiser& aux, const Vector& x, double sigma_cur,
                           double sigma_next, NoisePolicy policy, Rng& rng);

// Bridge probability-flow ODE on a single image. Heun re-evaluates both
// denoisers at the predicted point with the same standard-normal draw.
std::vector<Vector> sb_pf_ode_image(const Denoiser& prior, const AuxDenoiser& aux, const OdeRunConfig& config,
                                    const Vector& x_source, NoisePolicy policy = NoisePolicy::shared);

}  // namespace flowdistill
