#pragma once

#include <algorithm>
#include <functional>

#include "flowdistill/types.hpp"

namespace fdtest {

// Central differences of a scalar function of a vector.
inline flowdistill::Vector central_gradient(const std::function<double(const flowdistill::Vector&)>& f,
                                            flowdistill::Vector x, double h = 1e-4) {
  flowdistill::Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double relative_error(const flowdistill::Vector& a, const flowdistill::Vector& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

}  // namespace fdtest
