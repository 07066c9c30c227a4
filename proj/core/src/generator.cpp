#include "flowdistill/generator.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "flowdistill/error.hpp"

namespace flowdistill {

namespace {

constexpr double kSnap = 1e-9;

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < kSnap ? r : v;
}

void check_dim(const Vector& v, std::size_t expected, const char* what) {
  if (static_cast<std::size_t>(v.size()) != expected)
    throw ParameterError(std::string(what) + ": dimension " + std::to_string(v.size()) + ", expected " +
                         std::to_string(expected));
}

}  // namespace

Scene Scene::grid(GridShape shape, double fill) {
  if (shape.size() == 0) throw ParameterError("Scene: empty grid");
  return Scene{Vector::Constant(static_cast<Eigen::Index>(shape.size()), fill), shape, {}};
}

Scene Scene::flat(Vector theta) {
  const auto n = static_cast<std::size_t>(theta.size());
  return Scene{std::move(theta), GridShape{n, 1}, {}};
}

void Scene::validate() const {
  if (static_cast<std::size_t>(theta.size()) != shape.size()) throw ParameterError("Scene: shape does not match theta");
  if (!theta.allFinite()) throw ParameterError("Scene: non-finite parameters");
}

IdentityGenerator::IdentityGenerator(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw ParameterError("IdentityGenerator: dim must be >= 1");
}

Vector IdentityGenerator::render(const Vector& theta, const CameraPose&) const {
  check_dim(theta, dim_, "IdentityGenerator::render");
  return theta;
}

Vector IdentityGenerator::vjp(const CameraPose&, const Vector& cotangent) const {
  check_dim(cotangent, dim_, "IdentityGenerator::vjp");
  return cotangent;
}

ParticleGenerator::ParticleGenerator(std::size_t count, std::size_t particle_dim)
    : count_(count), particle_dim_(particle_dim) {
  if (count == 0 || particle_dim == 0) throw ParameterError("ParticleGenerator: empty configuration");
}

void ParticleGenerator::validate_pose(const CameraPose& pose) const {
  if (pose.index >= count_) throw ParameterError("ParticleGenerator: particle index out of range");
}

Vector ParticleGenerator::render(const Vector& theta, const CameraPose& pose) const {
  check_dim(theta, param_dim(), "ParticleGenerator::render");
  validate_pose(pose);
  return theta.segment(static_cast<Eigen::Index>(pose.index * particle_dim_), static_cast<Eigen::Index>(particle_dim_));
}

Vector ParticleGenerator::vjp(const CameraPose& pose, const Vector& cotangent) const {
  check_dim(cotangent, particle_dim_, "ParticleGenerator::vjp");
  validate_pose(pose);
  Vector out = Vector::Zero(static_cast<Eigen::Index>(param_dim()));
  out.segment(static_cast<Eigen::Index>(pose.index * particle_dim_), static_cast<Eigen::Index>(particle_dim_)) =
      cotangent;
  return out;
}

MultiViewGenerator::MultiViewGenerator(GridShape shape) : shape_(shape) {
  if (shape.size() == 0) throw ParameterError("MultiViewGenerator: empty grid");
}

void MultiViewGenerator::validate_pose(const CameraPose& pose) const {
  if (!(pose.angle >= 0.0 && pose.angle < 2.0 * std::numbers::pi))
    throw ParameterError("MultiViewGenerator: angle must lie in [0, 2pi)");
  if (!std::isfinite(pose.offset_x) || !std::isfinite(pose.offset_y))
    throw ParameterError("MultiViewGenerator: non-finite offset");
}

void MultiViewGenerator::taps(const CameraPose& pose, std::size_t out, std::vector<Tap>& result) const {
  result.clear();
  const double cx = 0.5 * static_cast<double>(shape_.width - 1);
  const double cy = 0.5 * static_cast<double>(shape_.height - 1);
  const double c = std::cos(pose.angle);
  const double s = std::sin(pose.angle);
  const double u = static_cast<double>(out % shape_.width) - cx - pose.offset_x;
  const double v = static_cast<double>(out / shape_.width) - cy - pose.offset_y;
  // Inverse rotation maps the output pixel back into the scene grid.
  const double sx = snap(c * u + s * v + cx);
  const double sy = snap(-s * u + c * v + cy);
  const double fx = std::floor(sx);
  const double fy = std::floor(sy);
  const double ax = sx - fx;
  const double ay = sy - fy;
  const double corners[4][3] = {{fx, fy, (1 - ax) * (1 - ay)},
                                {fx + 1, fy, ax * (1 - ay)},
                                {fx, fy + 1, (1 - ax) * ay},
                                {fx + 1, fy + 1, ax * ay}};
  for (const auto& [px, py, w] : corners) {
    if (w == 0.0) continue;
    if (px < 0 || py < 0 || px >= static_cast<double>(shape_.width) || py >= static_cast<double>(shape_.height))
      continue;
    result.push_back({static_cast<std::size_t>(py) * shape_.width + static_cast<std::size_t>(px), w});
  }
}

Vector MultiViewGenerator::render(const Vector& theta, const CameraPose& pose) const {
  check_dim(theta, shape_.size(), "MultiViewGenerator::render");
  validate_pose(pose);
  Vector out(static_cast<Eigen::Index>(shape_.size()));
  std::vector<Tap> t;
  t.reserve(4);
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    taps(pose, i, t);
    double acc = 0.0;
    for (const auto& tap : t) acc += tap.weight * theta[static_cast<Eigen::Index>(tap.source)];
    out[static_cast<Eigen::Index>(i)] = acc;
  }
  return out;
}

Vector MultiViewGenerator::vjp(const CameraPose& pose, const Vector& cotangent) const {
  check_dim(cotangent, shape_.size(), "MultiViewGenerator::vjp");
  validate_pose(pose);
  Vector out = Vector::Zero(static_cast<Eigen::Index>(shape_.size()));
  std::vector<Tap> t;
  t.reserve(4);
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    taps(pose, i, t);
    for (const auto& tap : t) out[static_cast<Eigen::Index>(tap.source)] += tap.weight * cotangent[static_cast<Eigen::Index>(i)];
  }
  return out;
}

std::unique_ptr<Generator> make_generator(std::string_view kind, GridShape shape, std::size_t particles) {
  if (kind == "identity") return std::make_unique<IdentityGenerator>(shape.size());
  if (kind == "particle") return std::make_unique<ParticleGenerator>(particles, shape.size());
  if (kind == "multiview") return std::make_unique<MultiViewGenerator>(shape);
  throw ParameterError("unknown generator kind '" + std::string(kind) + "'");
}

std::vector<CameraPose> uniform_poses(std::size_t count) {
  if (count == 0) throw ParameterError("uniform_poses: count must be >= 1");
  std::vector<CameraPose> poses(count);
  for (std::size_t i = 0; i < count; ++i) {
    poses[i].angle = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count);
    poses[i].index = i;
  }
  return poses;
}

ViewPriorSet make_benchmark(const Generator& generator, const Scene& truth, std::span<const CameraPose> poses,
                            double scale) {
  if (poses.empty()) throw ParameterError("make_benchmark: no poses");
  if (!(scale > 0.0)) throw ParameterError("make_benchmark: scale must be positive");
  truth.validate();
  ViewPriorSet set;
  set.truth = truth;
  set.scale = scale;
  for (const auto& pose : poses)
    set.views.push_back({pose, GaussianMixturePrior::gaussian(generator.render(truth.theta, pose), scale)});
  return set;
}

}  // namespace flowdistill
