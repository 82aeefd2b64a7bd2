#ifndef GKP_CORE_HPP
#define GKP_CORE_HPP

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace gkp {

using cplx = std::complex<double>;
using Operator = Eigen::MatrixXcd;
using Ket = Eigen::VectorXcd;
using DensityMatrix = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

// Error hierarchy. The CLI maps each family onto its own exit code.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad input: precondition or configuration violation.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// An iterative method ran out of budget or a numerical diagnostic failed.
class ConvergenceError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

inline double max_abs(const Operator& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline double hermiticity_residual(const Operator& m) {
  return max_abs(m - m.adjoint());
}

inline double unitarity_residual(const Operator& u) {
  return max_abs(u.adjoint() * u - Operator::Identity(u.rows(), u.cols()));
}

/// Top-left block covering `fraction` of each dimension (at least one row).
inline Operator leading_block(const Operator& m, double fraction) {
  const auto n = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(fraction * m.rows()));
  return m.topLeftCorner(n, n);
}

}  // namespace gkp

#endif  // GKP_CORE_HPP
