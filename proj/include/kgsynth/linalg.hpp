#pragma once

#include <Eigen/Dense>

namespace kgsynth {

template <class S>
using MatrixT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using RowVectorT = Eigen::Matrix<S, 1, Eigen::Dynamic>;

using Matrix = MatrixT<double>;
using RowVector = RowVectorT<double>;

}  // namespace kgsynth
