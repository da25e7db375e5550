#pragma once

#include <Eigen/Core>

namespace mswave {

// Rows are time steps (or items), columns are channels.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

}  // namespace mswave
