#pragma once

#include <complex>

#include <Eigen/Dense>

namespace lrt {

using cplx = std::complex<double>;
using Index = Eigen::Index;

// Dense operators on the finite (truncated) Hilbert space.
using Operator = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;

inline constexpr cplx I{0.0, 1.0};

}  // namespace lrt
