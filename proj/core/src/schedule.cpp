#include "flowdistill/schedule.hpp"

#include <cmath>
#include <string>

#include "flowdistill/error.hpp"

namespace flowdistill {

namespace {

constexpr double kIndexSlack = 1e-9;

double warped(const NoiseSchedule& s, double fraction) {
  const double a = std::pow(s.sigma_max, 1.0 / s.rho);
  const double b = std::pow(s.sigma_min, 1.0 / s.rho);
  return std::pow(a + fraction * (b - a), s.rho);
}

}  // namespace

void NoiseSchedule::validate() const {
  if (n_steps < 2) throw ParameterError("NoiseSchedule: n_steps must be >= 2");
  if (!(sigma_min > 0.0) || !(sigma_max > sigma_min) || !std::isfinite(sigma_max))
    throw ParameterError("NoiseSchedule: require 0 < sigma_min < sigma_max");
  if (!(rho > 0.0) || !std::isfinite(rho)) throw ParameterError("NoiseSchedule: rho must be positive");
}

std::vector<double> sigma_grid(const NoiseSchedule& schedule) {
  schedule.validate();
  const std::size_t n = schedule.n_steps;
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i)
    grid[i] = warped(schedule, static_cast<double>(i) / static_cast<double>(n - 1));
  grid.front() = schedule.sigma_max;
  grid.back() = schedule.sigma_min;
  return grid;
}

double sigma_of_t(const NoiseSchedule& schedule, double t) {
  schedule.validate();
  if (!(t >= 0.0 && t <= 1.0)) throw ParameterError("sigma_of_t: t must lie in [0, 1]");
  const auto n = static_cast<double>(schedule.n_steps);
  const double u = (1.0 - t) * n;
  if (u <= 0.0) return schedule.sigma_max;
  if (u >= n) return 0.0;
  if (u < n - 1.0) return warped(schedule, u / (n - 1.0));
  return schedule.sigma_min * (n - u);
}

double level_time(const NoiseSchedule& schedule, std::size_t j) {
  if (j > schedule.n_steps) throw ParameterError("level_time: index beyond terminal level");
  return 1.0 - static_cast<double>(j) / static_cast<double>(schedule.n_steps);
}

void StageWindow::validate() const {
  if (!(t_start >= 0.0 && t_start <= 1.0 && t_end >= 0.0 && t_end <= 1.0))
    throw ParameterError("StageWindow: t_start and t_end must lie in [0, 1]");
  if (!(t_start > t_end)) throw ParameterError("StageWindow: t_start must exceed t_end");
  if (views_per_step < 1) throw ParameterError("StageWindow: views_per_step must be >= 1");
  if (spacing < 1) throw ParameterError("StageWindow: spacing must be >= 1");
}

StageWindow stage_preset(std::string_view name) {
  if (name == "nerf") return {1.0, 0.2, 5, 1};
  if (name == "geometry") return {0.8, 0.4, 5, 1};
  if (name == "texture") return {0.5, 0.1, 5, 1};
  if (name == "refine") return {0.3, 0.0, 10, 10};
  throw ParameterError("unknown stage preset '" + std::string(name) + "'");
}

std::vector<WindowLevel> window_levels(const NoiseSchedule& schedule, const StageWindow& window) {
  schedule.validate();
  window.validate();
  const auto n = static_cast<double>(schedule.n_steps);
  const auto first = static_cast<std::size_t>(std::ceil((1.0 - window.t_start) * n - kIndexSlack));
  const auto last = static_cast<std::size_t>(std::floor((1.0 - window.t_end) * n + kIndexSlack));
  if (first > last) throw ParameterError("StageWindow: window contains no grid level");

  const std::vector<double> grid = sigma_grid(schedule);
  auto level = [&](std::size_t j) {
    return WindowLevel{j, level_time(schedule, j), j < grid.size() ? grid[j] : 0.0};
  };
  std::vector<WindowLevel> out;
  for (std::size_t j = first; j <= last; j += window.spacing) out.push_back(level(j));
  if (out.back().index != last) out.push_back(level(last));
  return out;
}

std::vector<double> window_sigmas(const NoiseSchedule& schedule, const StageWindow& window) {
  std::vector<double> out;
  for (const auto& l : window_levels(schedule, window)) out.push_back(l.sigma);
  return out;
}

}  // namespace flowdistill
