#ifndef GKP_GKP_CODES_HPP
#define GKP_GKP_CODES_HPP

// Finite-energy square-lattice GKP codewords from the grid Hamiltonian
//
//     H = w0 a^dag a - J (cos(2 sqrt(pi) x) + cos(2 sqrt(pi) p)),
//
// whose quasi-degenerate ground pair are the logical Hadamard eigenstates.

#include <array>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include "gkp/oscillator.hpp"

namespace gkp {

struct GkpLattice {
  double ell_s = std::sqrt(2.0 * pi);
  cplx alpha{std::sqrt(pi / 2.0), 0.0};
  cplx beta{0.0, std::sqrt(pi / 2.0)};

  cplx stabilizer_x() const { return 2.0 * alpha; }
  cplx stabilizer_z() const { return 2.0 * beta; }
};

struct GridHamiltonianParams {
  double omega0 = 1.0;
  double J = 5.95;

  double ratio() const { return J / omega0; }
};

enum class Logical { PlusZ = 0, MinusZ, PlusX, MinusX, PlusY, MinusY };

inline constexpr std::array<Logical, 6> kAllLogical = {Logical::PlusZ, Logical::MinusZ, Logical::PlusX,
                                                       Logical::MinusX, Logical::PlusY, Logical::MinusY};

inline std::string_view to_string(Logical l) {
  static constexpr std::array<std::string_view, 6> names = {"+Z", "-Z", "+X", "-X", "+Y", "-Y"};
  return names[static_cast<int>(l)];
}

inline Logical parse_logical(std::string_view s) {
  for (Logical l : kAllLogical)
    if (to_string(l) == s) return l;
  throw ValidationError("unknown logical state label '" + std::string(s) + "'");
}

/// Two-level coordinates of a logical Pauli eigenstate in the (+Z, -Z) basis.
inline Eigen::Vector2cd logical_vector(Logical l) {
  const double h = 1.0 / std::sqrt(2.0);
  switch (l) {
    case Logical::PlusZ: return {1.0, 0.0};
    case Logical::MinusZ: return {0.0, 1.0};
    case Logical::PlusX: return {h, h};
    case Logical::MinusX: return {h, -h};
    case Logical::PlusY: return {h, I * h};
    case Logical::MinusY: return {h, -I * h};
  }
  return {1.0, 0.0};
}

/// Envelope widths from the stabiliser expectations. `from_sx` uses
/// S_X = D(2 alpha) and probes the momentum quadrature; `from_sz` uses
/// S_Z = D(2 beta) and probes the position quadrature.
struct StabilizerSqueezing {
  double delta_from_sx = 0.0;
  double delta_from_sz = 0.0;
  double db_from_sx = 0.0;
  double db_from_sz = 0.0;
  bool clamped = false;

  /// Position-quadrature dB (first entry of a [Delta_X, Delta_Z] pair).
  double position_db() const { return db_from_sz; }
  /// Momentum-quadrature dB (second entry).
  double momentum_db() const { return db_from_sx; }
};

inline double delta_to_db(double delta) {
  if (!std::isfinite(delta)) return -std::numeric_limits<double>::infinity();
  if (delta == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(delta * delta);
}

namespace detail {

// Delta = sqrt(-(1/2pi) ln |s|^2); |s| >= 1 is clamped to Delta = 0, |s| = 0 gives +inf.
inline double envelope_delta(double abs_s, bool& clamped) {
  if (abs_s >= 1.0) {
    clamped = true;
    return 0.0;
  }
  if (abs_s <= 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(-std::log(abs_s * abs_s) / (2.0 * pi));
}

}  // namespace detail

inline StabilizerSqueezing squeezing_from_stabilizers(const Ket& state, const GkpLattice& lattice = {}) {
  const int n = static_cast<int>(state.size());
  require(n >= 2, "state must be a single-mode ket");
  StabilizerSqueezing out;
  const double sx = std::abs(expectation(state, displacement_closed_form(n, lattice.stabilizer_x())));
  const double sz = std::abs(expectation(state, displacement_closed_form(n, lattice.stabilizer_z())));
  out.delta_from_sx = detail::envelope_delta(sx, out.clamped);
  out.delta_from_sz = detail::envelope_delta(sz, out.clamped);
  out.db_from_sx = delta_to_db(out.delta_from_sx);
  out.db_from_sz = delta_to_db(out.delta_from_sz);
  return out;
}

/// H_GKP on a single mode; cosines are built from exact displacement matrix elements.
inline Operator build_grid_hamiltonian(const HilbertConfig& cfg, const GridHamiltonianParams& params,
                                       const GkpLattice& lattice = {}) {
  cfg.validate();
  require(cfg.modes == 1 && !cfg.spin, "grid Hamiltonian needs a single mode without spin");
  require(params.omega0 > 0.0 && params.J >= 0.0, "grid Hamiltonian needs omega0 > 0 and J >= 0");
  const int n = cfg.fock;
  const double l = lattice.ell_s;
  const Operator cos_x = 0.5 * (displacement_closed_form(n, cplx{0, l}) + displacement_closed_form(n, cplx{0, -l}));
  const Operator cos_p = 0.5 * (displacement_closed_form(n, cplx{l, 0}) + displacement_closed_form(n, cplx{-l, 0}));
  Operator h = params.omega0 * number(n) - params.J * (cos_x + cos_p);
  return 0.5 * (h + h.adjoint());
}

struct CodewordOptions {
  double min_gap_ratio = 1.1;
  double tail_fraction = 0.2;
  /// Ground-pair change allowed when the truncation grows by `probe_levels`.
  double max_truncation_defect = 1e-2;
  int probe_levels = 8;
  double min_class_purity = 1.0 - 1e-6;
};

struct GroundPairDiagnostics {
  RealVector lowest_energies;  // three lowest
  double gap_ratio = 0.0;      // (E2 - E1) / (E1 - E0)
  double tail_weight = 0.0;    // max weight of the ground pair in the top Fock levels
  double truncation_defect = 0.0;
  std::array<int, 2> fourier_class{0, 0};
  std::array<double, 2> class_purity{0.0, 0.0};
};

struct CodewordSet {
  int fock = 0;
  GridHamiltonianParams params;
  std::array<Ket, 6> states;
  std::array<StabilizerSqueezing, 6> squeezing;
  GroundPairDiagnostics diagnostics;

  const Ket& operator[](Logical l) const { return states[static_cast<int>(l)]; }
  const StabilizerSqueezing& squeezing_of(Logical l) const { return squeezing[static_cast<int>(l)]; }
  /// |+Z> and |-Z> as columns.
  Eigen::MatrixXcd logical_basis() const {
    Eigen::MatrixXcd b(fock, 2);
    b.col(0) = (*this)[Logical::PlusZ];
    b.col(1) = (*this)[Logical::MinusZ];
    return b;
  }
};

namespace detail {

inline void fix_global_phase(Ket& v) {
  Eigen::Index best = 0;
  double mag = -1.0;
  for (Eigen::Index k = 0; k < v.size(); k += 2)
    if (std::abs(v(k)) > mag + 1e-12) {
      mag = std::abs(v(k));
      best = k;
    }
  if (mag > 0.0) v *= std::abs(v(best)) / v(best);
}

inline std::pair<int, double> fourier_class(const Ket& v) {
  std::array<double, 4> w{};
  for (Eigen::Index k = 0; k < v.size(); ++k) w[k % 4] += std::norm(v(k));
  int best = 0;
  for (int c = 1; c < 4; ++c)
    if (w[c] > w[best]) best = c;
  return {best, w[best] / v.squaredNorm()};
}

}  // namespace detail

/// Diagonalises the grid Hamiltonian and builds all six Pauli eigenstates.
/// Labelling: |+H> is the ground-pair member supported on Fock levels 0 mod 4;
/// each vector's global phase makes its largest even-Fock amplitude real
/// positive; the relative sign of |-H> is chosen so <+Z|D(beta)|+Z> > 0.
inline CodewordSet codewords_from_ground_states(const Operator& h, const GkpLattice& lattice = {},
                                                const CodewordOptions& opts = {}) {
  require(h.rows() == h.cols() && h.rows() >= 4, "grid Hamiltonian must be square with at least 4 levels");
  const int n = static_cast<int>(h.rows());
  Eigen::SelfAdjointEigenSolver<Operator> es(h);
  if (es.info() != Eigen::Success) throw ConvergenceError("grid Hamiltonian diagonalisation failed");
  const RealVector& w = es.eigenvalues();

  CodewordSet set;
  set.fock = n;
  auto& diag = set.diagnostics;
  diag.lowest_energies = w.head(3);
  const double split = w(1) - w(0);
  diag.gap_ratio = split > 0.0 ? (w(2) - w(1)) / split : std::numeric_limits<double>::infinity();

  std::array<Ket, 2> pair{es.eigenvectors().col(0), es.eigenvectors().col(1)};
  const int tail_start = n - std::max(1, static_cast<int>(std::lround(opts.tail_fraction * n)));
  for (int k = 0; k < 2; ++k) {
    detail::fix_global_phase(pair[k]);
    auto [cls, purity] = detail::fourier_class(pair[k]);
    diag.fourier_class[k] = cls;
    diag.class_purity[k] = purity;
    diag.tail_weight = std::max(diag.tail_weight, pair[k].tail(n - tail_start).squaredNorm());
  }

  const bool classes_ok = diag.class_purity[0] >= opts.min_class_purity &&
                          diag.class_purity[1] >= opts.min_class_purity &&
                          ((diag.fourier_class[0] == 0 && diag.fourier_class[1] == 2) ||
                           (diag.fourier_class[0] == 2 && diag.fourier_class[1] == 0));
  if (diag.gap_ratio < opts.min_gap_ratio || !classes_ok) {
    throw ConvergenceError("ground pair not resolved: gap ratio " + std::to_string(diag.gap_ratio) +
                           ", Fourier classes " + std::to_string(diag.fourier_class[0]) + "/" +
                           std::to_string(diag.fourier_class[1]) + ", tail weight " +
                           std::to_string(diag.tail_weight) + " (Fock truncation too small?)");
  }

  const Ket& plus_h = diag.fourier_class[0] == 0 ? pair[0] : pair[1];
  const Ket& minus_h = diag.fourier_class[0] == 0 ? pair[1] : pair[0];
  const double c = std::cos(pi / 8.0);
  const double s = std::sin(pi / 8.0);
  const Operator z_l = displacement_closed_form(n, lattice.beta);

  Ket zp, zm;
  double best = -std::numeric_limits<double>::infinity();
  for (double sign : {1.0, -1.0}) {
    const Ket mh = sign * minus_h;
    Ket cand_p = c * plus_h - s * mh;
    const double score = expectation(cand_p, z_l).real();
    if (score > best) {
      best = score;
      zp = cand_p;
      zm = s * plus_h + c * mh;
    }
  }
  zp.normalize();
  zm.normalize();

  for (Logical l : kAllLogical) {
    const Eigen::Vector2cd v = logical_vector(l);
    Ket psi = v(0) * zp + v(1) * zm;
    psi.normalize();
    set.states[static_cast<int>(l)] = psi;
    set.squeezing[static_cast<int>(l)] = squeezing_from_stabilizers(psi, lattice);
  }
  return set;
}

/// 1 - min_k |P' v_k|^2, where v_k is the ground pair at `fock` (zero padded)
/// and P' projects on the ground pair at fock + probe_levels.
inline double truncation_defect(int fock, const GridHamiltonianParams& params, int probe_levels,
                                const GkpLattice& lattice = {}) {
  auto ground = [&](int n) {
    Eigen::SelfAdjointEigenSolver<Operator> es(build_grid_hamiltonian({n, 1, false}, params, lattice));
    if (es.info() != Eigen::Success) throw ConvergenceError("grid Hamiltonian diagonalisation failed");
    return Operator(es.eigenvectors().leftCols(2));
  };
  const int big = fock + probe_levels;
  Operator small = Operator::Zero(big, 2);
  small.topRows(fock) = ground(fock);
  const Operator ov = ground(big).adjoint() * small;
  return 1.0 - std::min(ov.col(0).squaredNorm(), ov.col(1).squaredNorm());
}

inline CodewordSet synthesize_codewords(int fock, const GridHamiltonianParams& params, const GkpLattice& lattice = {},
                                        const CodewordOptions& opts = {}) {
  const HilbertConfig cfg{fock, 1, false};
  cfg.validate();
  require(params.omega0 > 0.0 && params.J > 0.0, "J/omega0 must be positive");
  const double defect = truncation_defect(fock, params, opts.probe_levels, lattice);
  if (defect > opts.max_truncation_defect)
    throw ConvergenceError("ground pair not converged in the Fock truncation: changes by " + std::to_string(defect) +
                           " when " + std::to_string(opts.probe_levels) + " levels are added");
  CodewordSet set = codewords_from_ground_states(build_grid_hamiltonian(cfg, params, lattice), lattice, opts);
  set.params = params;
  set.diagnostics.truncation_defect = defect;
  return set;
}

/// Finite-energy codewords of a smaller truncation embedded in a larger one.
inline Ket pad_fock(const Ket& v, int fock) {
  require(fock >= v.size(), "cannot pad to a smaller truncation");
  Ket out = Ket::Zero(fock);
  out.head(v.size()) = v;
  return out;
}

}  // namespace gkp

#endif  // GKP_GKP_CODES_HPP
