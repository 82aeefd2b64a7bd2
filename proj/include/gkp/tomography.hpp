#ifndef GKP_TOMOGRAPHY_HPP
#define GKP_TOMOGRAPHY_HPP

// Logical state and process tomography: Pauli-sum reconstruction, physical
// projection, constrained chi fits and fidelities.
//
// Channel convention: E(rho) = sum_mn chi_mn E_m rho E_n^dag over the
// unnormalised Pauli basis E (pauli_basis order); trace preservation is
// sum_mn chi_mn E_n^dag E_m = I, which implies Tr(chi) = 1.

#include <map>
#include <string>

#include "gkp/logical_measurement.hpp"

namespace gkp {

inline int qubits_for_dim(Eigen::Index d) {
  require(d == 2 || d == 4, "logical objects must be 2 x 2 or 4 x 4");
  return d == 2 ? 1 : 2;
}

// ---------------------------------------------------------------------------
// States

inline Operator reconstruct_logical_state(const std::map<std::string, double>& expectations, int qubits) {
  return logical_density_from_expectations(expectations, qubits);
}

/// Euclidean projection of a vector onto the probability simplex.
inline RealVector project_simplex(const RealVector& v) {
  const auto n = v.size();
  RealVector s = v;
  std::sort(s.data(), s.data() + n, std::greater<double>());
  double cum = 0.0, theta = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    cum += s(k);
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (s(k) - t > 0.0) theta = t;
  }
  return (v.array() - theta).max(0.0).matrix();
}

/// Frobenius-nearest density matrix (spectrum projected onto the simplex).
inline Operator project_physical_state(const Operator& rho) {
  require(hermiticity_residual(rho) < 1e-8 * std::max(1.0, max_abs(rho)), "state must be Hermitian");
  Eigen::SelfAdjointEigenSolver<Operator> es(0.5 * (rho + rho.adjoint()));
  const RealVector p = project_simplex(es.eigenvalues());
  Operator out = es.eigenvectors() * p.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
  return 0.5 * (out + out.adjoint());
}

inline double state_fidelity(const Operator& rho, const Eigen::VectorXcd& target) {
  require(rho.rows() == target.size(), "state and target dimensions differ");
  const Eigen::VectorXcd t = target / target.norm();
  return t.dot(rho * t).real();
}

inline Eigen::VectorXcd bell_phi_plus() {
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(4);
  v(0) = v(3) = 1.0 / std::sqrt(2.0);
  return v;
}

// ---------------------------------------------------------------------------
// Process matrices

/// chi of the unitary channel U rho U^dag: U = sum_m c_m E_m, chi = c c^dag.
inline Operator chi_from_unitary(const Operator& u) {
  const int d = static_cast<int>(u.rows());
  const auto basis = pauli_basis(qubits_for_dim(d));
  Eigen::VectorXcd c(basis.size());
  for (std::size_t m = 0; m < basis.size(); ++m) c(m) = (basis[m].adjoint() * u).trace() / static_cast<double>(d);
  return c * c.adjoint();
}

inline Operator chi_from_kraus(const std::vector<Operator>& kraus) {
  require(!kraus.empty(), "empty Kraus set");
  const int d = static_cast<int>(kraus[0].rows());
  const auto basis = pauli_basis(qubits_for_dim(d));
  Operator chi = Operator::Zero(basis.size(), basis.size());
  for (const auto& k : kraus) {
    Eigen::VectorXcd a(basis.size());
    for (std::size_t m = 0; m < basis.size(); ++m) a(m) = (basis[m].adjoint() * k).trace() / static_cast<double>(d);
    chi += a * a.adjoint();
  }
  return chi;
}

inline Operator apply_chi(const Operator& chi, const Operator& rho) {
  const auto basis = pauli_basis(qubits_for_dim(rho.rows()));
  Operator out = Operator::Zero(rho.rows(), rho.cols());
  for (std::size_t m = 0; m < basis.size(); ++m)
    for (std::size_t n = 0; n < basis.size(); ++n)
      if (chi(m, n) != cplx{0.0, 0.0}) out += chi(m, n) * basis[m] * rho * basis[n].adjoint();
  return out;
}

inline Operator tp_residual_operator(const Operator& chi) {
  const int d2 = static_cast<int>(chi.rows());
  const int d = d2 == 4 ? 2 : 4;
  const auto basis = pauli_basis(qubits_for_dim(d));
  Operator s = Operator::Zero(d, d);
  for (int m = 0; m < d2; ++m)
    for (int n = 0; n < d2; ++n) s += chi(m, n) * basis[n].adjoint() * basis[m];
  return s - Operator::Identity(d, d);
}

inline double process_fidelity(const Operator& chi, const Operator& ideal_gate) {
  const Operator chi_id = chi_from_unitary(ideal_gate);
  require(chi.rows() == chi_id.rows(), "chi and ideal gate dimensions differ");
  return (chi * chi_id).trace().real();
}

struct ChiConstraintReport {
  double hermiticity = 0.0;
  double min_eigenvalue = 0.0;
  double tp_residual = 0.0;
  bool ok(double herm_tol = 1e-9, double psd_tol = 1e-8, double tp_tol = 1e-6) const {
    return hermiticity <= herm_tol && min_eigenvalue >= -psd_tol && tp_residual <= tp_tol;
  }
};

inline ChiConstraintReport check_chi(const Operator& chi) {
  ChiConstraintReport r;
  r.hermiticity = hermiticity_residual(chi);
  Eigen::SelfAdjointEigenSolver<Operator> es(0.5 * (chi + chi.adjoint()));
  r.min_eigenvalue = es.eigenvalues().minCoeff();
  r.tp_residual = max_abs(tp_residual_operator(chi));
  return r;
}

struct ChiFitOptions {
  double tolerance = 1e-8;    // relative change of chi per iteration
  int max_iterations = 20000;
  int dykstra_iterations = 200;
  double dykstra_tolerance = 1e-12;
};

struct ChiFit {
  Operator chi;
  double residual = 0.0;  // ||beta chi - lambda||_2
  int iterations = 0;
  bool converged = false;
  ChiConstraintReport constraints;
};

namespace detail {

inline Eigen::VectorXcd vec(const Operator& m) { return Eigen::Map<const Eigen::VectorXcd>(m.data(), m.size()); }

/// Affine set {chi : sum chi_mn E_n^dag E_m = I} as A vec(chi) = b.
struct TpConstraint {
  Eigen::MatrixXcd a;     // d^2 x d^4
  Eigen::VectorXcd b;
  Eigen::MatrixXcd pinv;  // A^dag (A A^dag)^-1

  explicit TpConstraint(int d) {
    const auto basis = pauli_basis(qubits_for_dim(d));
    const int d2 = d * d;
    a.resize(d2, d2 * d2);
    for (int m = 0; m < d2; ++m)
      for (int n = 0; n < d2; ++n) a.col(n * d2 + m) = vec(Operator(basis[n].adjoint() * basis[m]));
    b = vec(Operator::Identity(d, d));
    pinv = a.adjoint() * (a * a.adjoint()).inverse();
  }

  Operator project(const Operator& chi) const {
    const auto d2 = chi.rows();
    const Eigen::VectorXcd x = vec(chi);
    const Eigen::VectorXcd y = x - pinv * (a * x - b);
    return Eigen::Map<const Operator>(y.data(), d2, d2);
  }
};

inline Operator project_psd(const Operator& chi) {
  Eigen::SelfAdjointEigenSolver<Operator> es(0.5 * (chi + chi.adjoint()));
  const RealVector w = es.eigenvalues().cwiseMax(0.0);
  Operator out = es.eigenvectors() * w.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
  return 0.5 * (out + out.adjoint());
}

/// Dykstra projection onto PSD cone intersected with the TP affine set.
inline Operator project_cptp(const Operator& x0, const TpConstraint& tp, int iterations, double tol) {
  Operator x = x0, p = Operator::Zero(x0.rows(), x0.cols()), q = p;
  for (int k = 0; k < iterations; ++k) {
    const Operator y = tp.project(x + p);
    p = x + p - y;
    const Operator xn = project_psd(y + q);
    q = y + q - xn;
    const double change = (xn - x).norm();
    x = xn;
    if (change < tol && max_abs(tp_residual_operator(x)) < tol) break;
  }
  return x;
}

}  // namespace detail

/// beta tensor flattened as a (#inputs d^2) x d^4 matrix: row block i holds
/// vec(E_m rho_i E_n^dag) in the |k><l| basis, column n d^2 + m.
inline Eigen::MatrixXcd beta_matrix(const std::vector<Operator>& inputs) {
  require(!inputs.empty(), "no input states");
  const int d = static_cast<int>(inputs[0].rows());
  const auto basis = pauli_basis(qubits_for_dim(d));
  const int d2 = d * d;
  Eigen::MatrixXcd beta(static_cast<Eigen::Index>(inputs.size()) * d2, d2 * d2);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    require(inputs[i].rows() == d && inputs[i].cols() == d, "input states must share one dimension");
    for (int m = 0; m < d2; ++m)
      for (int n = 0; n < d2; ++n)
        beta.block(static_cast<Eigen::Index>(i) * d2, n * d2 + m, d2, 1) =
            detail::vec(Operator(basis[m] * inputs[i] * basis[n].adjoint()));
  }
  return beta;
}

inline Eigen::VectorXcd lambda_vector(const std::vector<Operator>& outputs) {
  require(!outputs.empty(), "no output states");
  const auto d2 = outputs[0].size();
  Eigen::VectorXcd l(static_cast<Eigen::Index>(outputs.size()) * d2);
  for (std::size_t i = 0; i < outputs.size(); ++i) l.segment(static_cast<Eigen::Index>(i) * d2, d2) = detail::vec(outputs[i]);
  return l;
}

/// Least-squares chi subject to Hermiticity, PSD and trace preservation:
/// accelerated projected gradient (FISTA) seeded by the unconstrained solution,
/// with each projection computed by Dykstra alternation.
inline ChiFit fit_chi(const std::vector<Operator>& inputs, const std::vector<Operator>& outputs,
                      const ChiFitOptions& opt = {}) {
  require(inputs.size() == outputs.size(), "inputs and outputs must pair up");
  const int d = static_cast<int>(inputs.at(0).rows());
  const int d2 = d * d, d4 = d2 * d2;
  const Eigen::MatrixXcd beta = beta_matrix(inputs);
  const Eigen::VectorXcd lambda = lambda_vector(outputs);
  for (const auto& o : outputs) require(o.rows() == d && o.cols() == d, "output states must match the inputs");

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(beta);
  cod.setThreshold(1e-10);
  if (cod.rank() < d4)
    throw ValidationError("input states are not informationally complete: beta has rank " +
                          std::to_string(cod.rank()) + " < " + std::to_string(d4) + " (need " +
                          std::to_string(d2) + " linearly independent inputs)");

  const detail::TpConstraint tp(d);
  auto unvec = [&](const Eigen::VectorXcd& v) { return Operator(Eigen::Map<const Operator>(v.data(), d2, d2)); };
  const Eigen::MatrixXcd gram = beta.adjoint() * beta;
  const Eigen::VectorXcd rhs = beta.adjoint() * lambda;
  const double lip = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(gram).eigenvalues().maxCoeff();

  Operator x = detail::project_cptp(unvec(cod.solve(lambda)), tp, opt.dykstra_iterations, opt.dykstra_tolerance);
  Operator y = x;
  double t = 1.0;
  ChiFit fit;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const Eigen::VectorXcd g = gram * detail::vec(y) - rhs;
    const Operator xn = detail::project_cptp(y - unvec(g) / lip, tp, opt.dykstra_iterations, opt.dykstra_tolerance);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = xn + ((t - 1.0) / tn) * (xn - x);
    const double change = (xn - x).norm() / std::max(1.0, xn.norm());
    x = xn;
    t = tn;
    fit.iterations = it;
    if (change < opt.tolerance) {
      fit.converged = true;
      break;
    }
  }
  fit.chi = 0.5 * (x + x.adjoint());
  fit.residual = (beta * detail::vec(fit.chi) - lambda).norm();
  fit.constraints = check_chi(fit.chi);
  return fit;
}

// ---------------------------------------------------------------------------
// Tomography sets

/// Input labels used for process tomography: {+Z, -Z, +X, +Y} (per qubit).
inline std::vector<Logical> tomography_input_labels() {
  return {Logical::PlusZ, Logical::MinusZ, Logical::PlusX, Logical::PlusY};
}

inline Operator ideal_logical_density(const std::vector<Logical>& labels) {
  Eigen::VectorXcd v = logical_vector(labels[0]);
  for (std::size_t i = 1; i < labels.size(); ++i) {
    const Eigen::VectorXcd w = logical_vector(labels[i]);
    Eigen::VectorXcd k(v.size() * w.size());
    for (Eigen::Index a = 0; a < v.size(); ++a) k.segment(a * w.size(), w.size()) = v(a) * w;
    v = k;
  }
  return v * v.adjoint();
}

/// All 4 (one qubit) or 16 (two qubit, (y, x) order) input label tuples.
inline std::vector<std::vector<Logical>> tomography_inputs(int qubits) {
  const auto l = tomography_input_labels();
  std::vector<std::vector<Logical>> out;
  if (qubits == 1) {
    for (auto a : l) out.push_back({a});
  } else {
    for (auto a : l)
      for (auto b : l) out.push_back({a, b});
  }
  return out;
}

/// The 24 single-qubit Cliffords (up to global phase), generated from H and S.
inline std::vector<Operator> single_qubit_cliffords() {
  std::vector<Operator> group = {Operator::Identity(2, 2)};
  const std::array<Operator, 2> gens = {two_level_gate("H"), two_level_gate("S")};
  auto same_up_to_phase = [](const Operator& a, const Operator& b) {
    return std::abs(std::abs((a.adjoint() * b).trace()) - 2.0) < 1e-9;
  };
  for (std::size_t i = 0; i < group.size(); ++i)
    for (const auto& g : gens) {
      const Operator c = g * group[i];
      bool found = false;
      for (const auto& e : group) found = found || same_up_to_phase(e, c);
      if (!found) group.push_back(c);
    }
  return group;
}

}  // namespace gkp

#endif  // GKP_TOMOGRAPHY_HPP
