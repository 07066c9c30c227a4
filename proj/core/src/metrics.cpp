#include "flowdistill/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "flowdistill/error.hpp"
#include "flowdistill/rng.hpp"

namespace flowdistill {

namespace {

std::size_t common_dim(std::span<const Vector> a, std::span<const Vector> b, const char* who) {
  if (a.empty() || b.empty()) throw ParameterError(std::string(who) + ": empty point set");
  const auto d = a.front().size();
  for (const auto& x : a)
    if (x.size() != d) throw ParameterError(std::string(who) + ": mixed dimensions");
  for (const auto& x : b)
    if (x.size() != d) throw ParameterError(std::string(who) + ": mixed dimensions");
  return static_cast<std::size_t>(d);
}

// Exact W2^2 between two sorted 1D empirical measures with uniform weights.
double w2_squared_sorted(const std::vector<double>& u, const std::vector<double>& v) {
  const double nu = static_cast<double>(u.size());
  const double nv = static_cast<double>(v.size());
  std::size_t i = 0, j = 0;
  double q = 0.0, total = 0.0;
  while (i < u.size() && j < v.size()) {
    const double next = std::min((i + 1) / nu, (j + 1) / nv);
    const double diff = u[i] - v[j];
    total += (next - q) * diff * diff;
    q = next;
    if ((i + 1) / nu <= next) ++i;
    if ((j + 1) / nv <= next) ++j;
  }
  return total;
}

}  // namespace

double sliced_w2(std::span<const Vector> a, std::span<const Vector> b, std::size_t n_proj, std::uint64_t seed) {
  const std::size_t d = common_dim(a, b, "sliced_w2");
  if (n_proj == 0) throw ParameterError("sliced_w2: n_proj must be >= 1");
  Rng rng(seed);
  std::vector<double> pa(a.size()), pb(b.size());
  double sum = 0.0;
  for (std::size_t p = 0; p < n_proj; ++p) {
    Vector dir = normal_vector(rng, static_cast<Eigen::Index>(d));
    if (d == 1) dir[0] = 1.0;
    dir.normalize();
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] = a[i].dot(dir);
    for (std::size_t i = 0; i < b.size(); ++i) pb[i] = b[i].dot(dir);
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    sum += std::sqrt(w2_squared_sorted(pa, pb));
  }
  return sum / static_cast<double>(n_proj);
}

double mmd_rbf(std::span<const Vector> a, std::span<const Vector> b, double bandwidth) {
  if (!(bandwidth > 0.0)) throw ParameterError("mmd_rbf: bandwidth must be positive");
  if (a.size() < 2 || b.size() < 2) throw ParameterError("mmd_rbf: need at least two points per set");
  common_dim(a, b, "mmd_rbf");
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  const auto k = [inv](const Vector& x, const Vector& y) { return std::exp(-(x - y).squaredNorm() * inv); };
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) saa += 2.0 * k(a[i], a[j]);
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = i + 1; j < b.size(); ++j) sbb += 2.0 * k(b[i], b[j]);
  for (const auto& x : a)
    for (const auto& y : b) sab += k(x, y);
  const double m = static_cast<double>(a.size());
  const double n = static_cast<double>(b.size());
  return saa / (m * (m - 1)) + sbb / (n * (n - 1)) - 2.0 * sab / (m * n);
}

double ensemble_kl(std::span<const Vector> particles, const GaussianMixturePrior& prior,
                   std::span<const double> sigmas, std::span<const double> weights) {
  if (particles.empty()) throw ParameterError("ensemble_kl: no particles");
  if (sigmas.size() != weights.size()) throw ParameterError("ensemble_kl: sigma and weight lists differ in length");
  const std::size_t d = prior.dim();
  if (d > 2) throw UnsupportedError("ensemble_kl: grid quadrature supports dimension 1 or 2");
  for (const auto& x : particles)
    if (static_cast<std::size_t>(x.size()) != d) throw ParameterError("ensemble_kl: particle dimension mismatch");

  constexpr std::size_t kGrid = 512;
  Vector lo = particles.front(), hi = particles.front();
  double max_scale = 0.0;
  for (const auto& x : particles) {
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  for (const auto& c : prior.components()) {
    lo = lo.cwiseMin(c.mean);
    hi = hi.cwiseMax(c.mean);
    max_scale = std::max(max_scale, c.scale);
  }

  double total = 0.0;
  for (std::size_t s = 0; s < sigmas.size(); ++s) {
    const double sigma = sigmas[s];
    if (!(sigma > 0.0)) throw ParameterError("ensemble_kl: sigma must be positive");
    if (weights[s] == 0.0) continue;
    const GaussianMixturePrior q([&] {
      std::vector<MixtureComponent> comps;
      for (const auto& x : particles) comps.push_back({1.0, x, sigma});
      return comps;
    }());
    const double pad = 6.0 * (sigma + max_scale);
    const Vector a = lo.array() - pad;
    const Vector b = hi.array() + pad;
    const Vector h = (b - a) / static_cast<double>(kGrid - 1);
    const double cell = h.prod();
    double kl = 0.0;
    Vector x(d);
    const std::size_t count = d == 1 ? kGrid : kGrid * kGrid;
    for (std::size_t idx = 0; idx < count; ++idx) {
      x[0] = a[0] + h[0] * static_cast<double>(idx % kGrid);
      if (d == 2) x[1] = a[1] + h[1] * static_cast<double>(idx / kGrid);
      const double lq = q.logpdf(x, 0.0);
      const double lp = prior.logpdf(x, sigma);
      const double qv = std::exp(lq);
      if (qv > 0.0) kl += qv * (lq - lp);
    }
    total += weights[s] * kl * cell;
  }
  return total;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

TrendStats trend_stats(std::span<const double> series) {
  if (series.size() < 3) throw ParameterError("trend_stats: need at least three values");
  for (double v : series)
    if (!std::isfinite(v)) throw ParameterError("trend_stats: non-finite value");
  const std::size_t n = series.size();
  std::size_t increases = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (series[i] > series[i - 1]) ++increases;
  const double fraction = static_cast<double>(increases) / static_cast<double>(n - 1);

  const auto ranks = average_ranks(series);
  const double mean = 0.5 * static_cast<double>(n + 1);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i + 1) - mean;
    const double dy = ranks[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  const double rho = syy == 0.0 ? 0.0 : sxy / std::sqrt(sxx * syy);
  return {rho, fraction};
}

std::string classify_scene(const Vector& theta, std::span<const std::shared_ptr<const ConditionalPriorSet>> view_priors,
                           const Generator& generator, std::span<const CameraPose> poses) {
  if (poses.empty() || view_priors.size() != poses.size())
    throw ParameterError("retrieval: need one prior set per pose");
  const auto labels = view_priors.front()->labels();
  std::vector<Vector> views;
  for (const auto& pose : poses) views.push_back(generator.render(theta, pose));
  std::string best;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (const auto& label : labels) {
    double ll = 0.0;
    for (std::size_t v = 0; v < views.size(); ++v) ll += view_priors[v]->conditional(label).logpdf(views[v], 0.0);
    ll /= static_cast<double>(views.size());
    if (ll > best_ll) {
      best_ll = ll;
      best = label;
    }
  }
  return best;
}

double retrieval_precision(std::span<const LabeledScene> scenes,
                           std::span<const std::shared_ptr<const ConditionalPriorSet>> view_priors,
                           const Generator& generator, std::span<const CameraPose> poses) {
  if (view_priors.empty() || view_priors.size() != poses.size())
    throw ParameterError("retrieval_precision: need one prior set per pose");
  const auto labels = view_priors.front()->labels();
  if (labels.size() < 2) throw ParameterError("retrieval_precision: need at least two labels");
  for (const auto& p : view_priors)
    if (p->labels() != labels) throw ParameterError("retrieval_precision: view prior sets disagree on labels");
  if (scenes.empty()) throw ParameterError("retrieval_precision: no scenes");
  std::size_t hits = 0;
  for (const auto& scene : scenes) {
    if (!view_priors.front()->contains(scene.label))
      throw ParameterError("retrieval_precision: unknown label '" + scene.label + "'");
    if (classify_scene(scene.theta, view_priors, generator, poses) == scene.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scenes.size());
}

double retrieval_precision(std::span<const LabeledScene> scenes, const ConditionalPriorSet& priors,
                           const Generator& generator, std::span<const CameraPose> poses) {
  const auto shared = std::shared_ptr<const ConditionalPriorSet>(&priors, [](const ConditionalPriorSet*) {});
  const std::vector<std::shared_ptr<const ConditionalPriorSet>> view_priors(poses.size(), shared);
  return retrieval_precision(scenes, view_priors, generator, poses);
}

SceneError scene_error(const Vector& theta, const Vector& reference) {
  if (theta.size() != reference.size() || theta.size() == 0)
    throw ParameterError("scene_error: shape mismatch");
  const double err = (theta - reference).norm();
  const double ref = reference.norm();
  const double rel = ref > 0.0 ? err / ref : err;
  const double rmse = err / std::sqrt(static_cast<double>(theta.size()));
  double range = reference.maxCoeff() - reference.minCoeff();
  if (range == 0.0) range = 1.0;
  const double psnr = rmse == 0.0 ? std::numeric_limits<double>::infinity() : 20.0 * std::log10(range / rmse);
  return {rel, psnr};
}

DenoiserError denoiser_error(const Denoiser& model, const GaussianMixturePrior& prior, std::span<const double> sigmas,
                             std::size_t per_sigma, std::uint64_t seed) {
  if (sigmas.empty() || per_sigma == 0) throw ParameterError("denoiser_error: empty evaluation grid");
  if (model.dim() != prior.dim()) throw ParameterError("denoiser_error: dimension mismatch");
  DenoiserError out;
  std::vector<double> all;
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    Rng rng = make_rng(seed, i);
    const auto clean = prior.sample(rng, per_sigma);
    std::vector<double> errs;
    for (const auto& x0 : clean) {
      const Vector x = x0 + normal_vector(rng, x0.size(), sigmas[i]);
      const Vector truth = prior.denoise(x, sigmas[i]);
      errs.push_back((model.denoise(x, sigmas[i]) - truth).norm() / truth.norm());
    }
    all.insert(all.end(), errs.begin(), errs.end());
    std::nth_element(errs.begin(), errs.begin() + errs.size() / 2, errs.end());
    out.sigmas.push_back(sigmas[i]);
    out.median_relative.push_back(errs[errs.size() / 2]);
  }
  std::nth_element(all.begin(), all.begin() + all.size() / 2, all.end());
  out.median_relative_overall = all[all.size() / 2];
  return out;
}

std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0 && hi >= lo) || n == 0) throw ParameterError("log_spaced: need 0 < lo <= hi and n >= 1");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double f = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    out[i] = std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo)));
  }
  out.front() = lo;
  if (n > 1) out.back() = hi;
  return out;
}

void MetricReport::set(const std::string& name, double value) {
  const bool sentinel = std::isinf(value) && value > 0 && name.size() >= 7 &&
                        name.compare(name.size() - 7, 7, "psnr_db") == 0;
  if (!std::isfinite(value) && !sentinel) throw NumericalError("MetricReport: non-finite value for " + name, 0);
  values[name] = value;
}

std::string MetricReport::to_csv() const {
  std::string out = "metric,value\n";
  char buf[64];
  for (const auto& [k, v] : values) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += k + "," + buf + "\n";
  }
  return out;
}

std::string MetricReport::to_summary() const {
  std::string out;
  char buf[64];
  for (const auto& [k, v] : values) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += k + "=" + buf + "\n";
  }
  for (const auto& [k, n] : sample_sizes) out += "n_" + k + "=" + std::to_string(n) + "\n";
  return out;
}

}  // namespace flowdistill
