#pragma once

#include <Eigen/Core>

namespace flowdistill {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace flowdistill
