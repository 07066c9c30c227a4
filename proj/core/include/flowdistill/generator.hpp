#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowdistill/prior.hpp"
#include "flowdistill/types.hpp"

namespace flowdistill {

struct GridShape {
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return height * width; }
  bool operator==(const GridShape&) const = default;
};

// Parameters theta of a generator. Grid scenes carry their H x W shape; flat
// scenes use height = dim, width = 1.
struct Scene {
  Vector theta;
  GridShape shape;
  std::string stage;

  static Scene grid(GridShape shape, double fill = 0.0);
  static Scene flat(Vector theta);
  bool is_grid() const { return shape.width > 1; }
  void validate() const;
};

// Rendering condition. Multi-view generators read angle (radians, [0, 2pi)) and
// the optional offset in pixels; particle generators read index.
struct CameraPose {
  double angle = 0.0;
  double offset_x = 0.0;
  double offset_y = 0.0;
  std::size_t index = 0;
};

// x = g(theta, c). All generators here are linear in theta.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::string_view kind() const = 0;
  virtual std::size_t param_dim() const = 0;
  virtual std::size_t render_dim() const = 0;
  virtual Vector render(const Vector& theta, const CameraPose& pose) const = 0;
  // (dx/dtheta)^T * cotangent
  virtual Vector vjp(const CameraPose& pose, const Vector& cotangent) const = 0;
  virtual void validate_pose(const CameraPose& pose) const = 0;
};

class IdentityGenerator final : public Generator {
 public:
  explicit IdentityGenerator(std::size_t dim);
  std::string_view kind() const override { return "identity"; }
  std::size_t param_dim() const override { return dim_; }
  std::size_t render_dim() const override { return dim_; }
  Vector render(const Vector& theta, const CameraPose& pose) const override;
  Vector vjp(const CameraPose& pose, const Vector& cotangent) const override;
  void validate_pose(const CameraPose&) const override {}

 private:
  std::size_t dim_;
};

// theta is the concatenation of `count` particles; pose.index selects one.
class ParticleGenerator final : public Generator {
 public:
  ParticleGenerator(std::size_t count, std::size_t particle_dim);
  std::string_view kind() const override { return "particle"; }
  std::size_t param_dim() const override { return count_ * particle_dim_; }
  std::size_t render_dim() const override { return particle_dim_; }
  Vector render(const Vector& theta, const CameraPose& pose) const override;
  Vector vjp(const CameraPose& pose, const Vector& cotangent) const override;
  void validate_pose(const CameraPose& pose) const override;
  std::size_t count() const { return count_; }

 private:
  std::size_t count_;
  std::size_t particle_dim_;
};

// Rotation of an H x W grid about its center followed by a pixel offset, with
// bilinear resampling and zero padding. Quarter-turn rotations of square grids
// are exact permutations.
class MultiViewGenerator final : public Generator {
 public:
  explicit MultiViewGenerator(GridShape shape);
  std::string_view kind() const override { return "multiview"; }
  std::size_t param_dim() const override { return shape_.size(); }
  std::size_t render_dim() const override { return shape_.size(); }
  Vector render(const Vector& theta, const CameraPose& pose) const override;
  Vector vjp(const CameraPose& pose, const Vector& cotangent) const override;
  void validate_pose(const CameraPose& pose) const override;
  const GridShape& shape() const { return shape_; }

 private:
  struct Tap {
    std::size_t source;
    double weight;
  };
  // Bilinear taps of output pixel `out` for a pose; at most four.
  void taps(const CameraPose& pose, std::size_t out, std::vector<Tap>& taps) const;

  GridShape shape_;
};

std::unique_ptr<Generator> make_generator(std::string_view kind, GridShape shape, std::size_t particles = 1);

// `count` azimuths evenly spaced over [0, 2pi).
std::vector<CameraPose> uniform_poses(std::size_t count);

struct ViewPrior {
  CameraPose pose;
  GaussianMixturePrior prior;
};

// Per-pose priors over rendered images. The ground-truth scene is kept for
// evaluation only.
struct ViewPriorSet {
  std::vector<ViewPrior> views;
  Scene truth;
  double scale = 0.0;

  std::size_t render_dim() const { return views.empty() ? 0 : views.front().prior.dim(); }
};

// Per-pose prior N(render(truth, c), s^2 I).
ViewPriorSet make_benchmark(const Generator& generator, const Scene& truth, std::span<const CameraPose> poses,
                            double scale);

}  // namespace flowdistill
