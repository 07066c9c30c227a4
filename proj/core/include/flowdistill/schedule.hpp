#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace flowdistill {

// rho-warped noise-level grid (Karras et al. parameterization). The dense
// grid has n_steps levels from sigma_max down to sigma_min, followed by a
// terminal level sigma = 0. Level j sits at unit time t_j = 1 - j / n_steps.
struct NoiseSchedule {
  double sigma_min = 0.002;
  double sigma_max = 80.0;
  double rho = 7.0;
  std::size_t n_steps = 800;

  void validate() const;
};

// sigma_i = (sigma_max^(1/rho) + i/(n-1) * (sigma_min^(1/rho) - sigma_max^(1/rho)))^rho,
// endpoints exact.
std::vector<double> sigma_grid(const NoiseSchedule& schedule);

// Continuous unit-time map: the warped curve evaluated at the fractional level
// index (1 - t) * n_steps, with a linear segment from sigma_min down to the
// terminal zero over the last level interval.
double sigma_of_t(const NoiseSchedule& schedule, double t);

// Unit time of dense level j in [0, n_steps].
double level_time(const NoiseSchedule& schedule, std::size_t j);

struct StageWindow {
  double t_start = 1.0;
  double t_end = 0.0;
  std::size_t views_per_step = 1;
  std::size_t spacing = 1;

  void validate() const;
};

// nerf, geometry, texture, refine.
StageWindow stage_preset(std::string_view name);

struct WindowLevel {
  std::size_t index;  // dense level index
  double t;
  double sigma;
};

// Dense levels with t in [t_end, t_start], strided by the window spacing. The
// last level of the window is always kept so the stage ends at t_end.
std::vector<WindowLevel> window_levels(const NoiseSchedule& schedule, const StageWindow& window);

std::vector<double> window_sigmas(const NoiseSchedule& schedule, const StageWindow& window);

}  // namespace flowdistill
