#ifndef GKP_OSCILLATOR_HPP
#define GKP_OSCILLATOR_HPP

// Dense linear algebra over truncated spin (x) Fock spaces.
//
// Tensor ordering is fixed as spin (x) mode-y (x) mode-x, with mode 0 = x the
// fastest-varying index:
//
//     index = s * N^M + n_y * N + n_x        (M = mode count, N = Fock cutoff)
//
// Spin index 0 is |up>, index 1 is |down>, so sigma_z = diag(1, -1) and
// sigma_plus = |up><down|.

#include <cmath>
#include <span>
#include <vector>

#include "gkp/core.hpp"

namespace gkp {

inline constexpr int kSpinUp = 0;
inline constexpr int kSpinDown = 1;

struct HilbertConfig {
  int fock = 2;
  int modes = 1;
  bool spin = false;

  void validate() const {
    require(fock >= 2, "fock truncation must be at least 2");
    require(modes == 1 || modes == 2, "mode count must be 1 or 2");
  }
  int spin_dim() const { return spin ? 2 : 1; }
  int motional_dim() const { return modes == 1 ? fock : fock * fock; }
  int dim() const { return spin_dim() * motional_dim(); }
  /// Fock states of the modes not equal to `mode`.
  int other_dim() const { return modes == 1 ? 1 : fock; }

  bool operator==(const HilbertConfig&) const = default;
};

inline void check_mode(const HilbertConfig& cfg, int mode) {
  require(mode >= 0 && mode < cfg.modes, "mode index " + std::to_string(mode) + " out of range");
}

// ---------------------------------------------------------------------------
// Single-mode and spin building blocks

inline Operator annihilation(int n) {
  Operator a = Operator::Zero(n, n);
  for (int k = 1; k < n; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
  return a;
}

inline Operator number(int n) {
  Operator m = Operator::Zero(n, n);
  for (int k = 0; k < n; ++k) m(k, k) = static_cast<double>(k);
  return m;
}

inline Operator sigma_x() {
  Operator s(2, 2);
  s << 0, 1, 1, 0;
  return s;
}

inline Operator sigma_y() {
  Operator s(2, 2);
  s << 0, -I, I, 0;
  return s;
}

inline Operator sigma_z() {
  Operator s(2, 2);
  s << 1, 0, 0, -1;
  return s;
}

/// |up><down|
inline Operator sigma_plus() {
  Operator s = Operator::Zero(2, 2);
  s(kSpinUp, kSpinDown) = 1.0;
  return s;
}

inline Operator kron(const Operator& a, const Operator& b) {
  Operator out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// ---------------------------------------------------------------------------
// Embedding into the full space

/// Embeds a single-mode operator (N x N) acting on `mode`.
inline Operator embed_mode(const HilbertConfig& cfg, const Operator& single, int mode) {
  cfg.validate();
  check_mode(cfg, mode);
  require(single.rows() == cfg.fock && single.cols() == cfg.fock, "single-mode operator has wrong size");
  const Operator id_n = Operator::Identity(cfg.fock, cfg.fock);
  Operator motional = single;
  if (cfg.modes == 2) motional = (mode == 0) ? kron(id_n, single) : kron(single, id_n);
  if (!cfg.spin) return motional;
  return kron(Operator::Identity(2, 2), motional);
}

inline Operator embed_spin(const HilbertConfig& cfg, const Operator& s) {
  cfg.validate();
  require(cfg.spin, "configuration has no spin");
  return kron(s, Operator::Identity(cfg.motional_dim(), cfg.motional_dim()));
}

/// Embeds an operator on spin (x) mode, given in the local (2N x 2N) basis
/// with index s * N + n.
inline Operator embed_spin_mode(const HilbertConfig& cfg, const Operator& local, int mode) {
  cfg.validate();
  check_mode(cfg, mode);
  require(cfg.spin, "configuration has no spin");
  const int n = cfg.fock;
  require(local.rows() == 2 * n && local.cols() == 2 * n, "local operator has wrong size");
  if (cfg.modes == 1) return local;
  Operator out = Operator::Zero(cfg.dim(), cfg.dim());
  const int n2 = n * n;
  for (int s = 0; s < 2; ++s)
    for (int t = 0; t < 2; ++t)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          const cplx v = local(s * n + a, t * n + b);
          if (v == cplx{}) continue;
          for (int o = 0; o < n; ++o) {
            const int row = (mode == 0) ? s * n2 + o * n + a : s * n2 + a * n + o;
            const int col = (mode == 0) ? t * n2 + o * n + b : t * n2 + b * n + o;
            out(row, col) = v;
          }
        }
  return out;
}

inline Operator annihilation_op(const HilbertConfig& cfg, int mode) {
  return embed_mode(cfg, annihilation(cfg.fock), mode);
}

// ---------------------------------------------------------------------------
// Local action on states (spin (x) one mode), used by all propagation code.
// A state is viewed as a (local x other) matrix whose columns run over the
// Fock index of the other mode.

inline int state_index(const HilbertConfig& cfg, int s, int local_n, int other_n, int mode) {
  const int n = cfg.fock;
  const int stride_s = cfg.motional_dim();
  if (cfg.modes == 1) return s * stride_s + local_n;
  return mode == 0 ? s * stride_s + other_n * n + local_n : s * stride_s + local_n * n + other_n;
}

/// Rows: local index s * N + n (or just n without spin); columns: other mode.
inline Operator gather_local(const HilbertConfig& cfg, int mode, const Ket& psi) {
  const int n = cfg.fock;
  const int sd = cfg.spin_dim();
  Operator out(sd * n, cfg.other_dim());
  for (int s = 0; s < sd; ++s)
    for (int a = 0; a < n; ++a)
      for (int o = 0; o < cfg.other_dim(); ++o) out(s * n + a, o) = psi(state_index(cfg, s, a, o, mode));
  return out;
}

inline void scatter_local(const HilbertConfig& cfg, int mode, const Operator& local_view, Ket& psi) {
  const int n = cfg.fock;
  const int sd = cfg.spin_dim();
  for (int s = 0; s < sd; ++s)
    for (int a = 0; a < n; ++a)
      for (int o = 0; o < cfg.other_dim(); ++o) psi(state_index(cfg, s, a, o, mode)) = local_view(s * n + a, o);
}

/// psi <- (local acting on spin (x) mode) psi.
inline void apply_local(const HilbertConfig& cfg, int mode, const Operator& local, Ket& psi) {
  if (cfg.modes == 1) {
    psi = local * psi;
    return;
  }
  Operator view = gather_local(cfg, mode, psi);
  view = local * view;
  scatter_local(cfg, mode, view, psi);
}

/// psi <- diag(phases) on one mode; `phases` has N entries.
inline void apply_mode_diagonal(const HilbertConfig& cfg, int mode, const Eigen::VectorXcd& phases, Ket& psi) {
  const int n = cfg.fock;
  for (int s = 0; s < cfg.spin_dim(); ++s)
    for (int a = 0; a < n; ++a)
      for (int o = 0; o < cfg.other_dim(); ++o) psi(state_index(cfg, s, a, o, mode)) *= phases(a);
}

// ---------------------------------------------------------------------------
// Exponentials of Hermitian generators

/// Eigendecomposition of a Hermitian matrix, reusable for exp(-i H t) and
/// its derivatives.
class HermitianExp {
public:
  HermitianExp() = default;
  explicit HermitianExp(const Operator& h) {
    Eigen::SelfAdjointEigenSolver<Operator> es(h);
    if (es.info() != Eigen::Success) throw ConvergenceError("Hermitian eigensolver failed");
    vectors_ = es.eigenvectors();
    values_ = es.eigenvalues();
  }

  static HermitianExp from_eigensystem(Operator vectors, RealVector values) {
    HermitianExp e;
    e.vectors_ = std::move(vectors);
    e.values_ = std::move(values);
    return e;
  }

  /// exp(-i H t)
  Operator propagator(double t) const {
    Eigen::VectorXcd phase(values_.size());
    for (Eigen::Index k = 0; k < values_.size(); ++k) phase(k) = std::exp(-I * values_(k) * t);
    return vectors_ * phase.asDiagonal() * vectors_.adjoint();
  }

  const Operator& vectors() const { return vectors_; }
  const RealVector& values() const { return values_; }

private:
  Operator vectors_;
  RealVector values_;
};

inline Operator expm_hermitian(const Operator& h, double t) { return HermitianExp(h).propagator(t); }

// ---------------------------------------------------------------------------
// Displacements

/// D(gamma) = exp(gamma a^dag - gamma^* a) exponentiated in a Fock space of
/// n + pad levels; the leading n x n block is returned. With pad = 0 this is
/// the exactly unitary truncated-space operator used by the dynamics.
inline Operator displacement_matrix(int n, cplx gamma, int pad = 0) {
  require(pad >= 0, "padding must be non-negative");
  const Operator a = annihilation(n + pad);
  // The generator G is anti-Hermitian; K = i G is Hermitian and exp(G) = exp(-i K).
  const Operator k = I * (gamma * a.adjoint() - std::conj(gamma) * a);
  const Operator d = expm_hermitian(0.5 * (k + k.adjoint()), 1.0);
  return pad == 0 ? d : Operator(d.topLeftCorner(n, n));
}

/// Padding that makes the leading n x n block of the exponential match the
/// infinite-dimensional operator to double precision.
inline int displacement_padding(cplx gamma) {
  const double r = std::abs(gamma);
  return static_cast<int>(std::ceil(r * r + 6.0 * r + 10.0));
}

namespace detail {

// Fills L[n] = L_n^{(k)}(x) for n = 0..count-1.
inline void laguerre_column(int k, double x, int count, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(std::max(count, 0)), 0.0);
  if (count <= 0) return;
  out[0] = 1.0;
  if (count == 1) return;
  out[1] = 1.0 + k - x;
  for (int n = 1; n + 1 < count; ++n)
    out[n + 1] = ((2.0 * n + 1.0 + k - x) * out[n] - (n + k) * out[n - 1]) / (n + 1.0);
}

}  // namespace detail

/// Exact Fock-basis matrix elements <m|D(gamma)|n> for m < rows, n < cols
/// (associated-Laguerre form). Unlike displacement_matrix this is not affected
/// by the truncation; it is a block of the infinite-dimensional operator.
inline Operator displacement_closed_form(int rows, int cols, cplx gamma) {
  Operator out = Operator::Zero(rows, cols);
  const double x = std::norm(gamma);
  const double r = std::abs(gamma);
  const double log_r = r > 0 ? std::log(r) : 0.0;
  const cplx unit = r > 0 ? gamma / r : cplx{1.0, 0.0};
  const cplx unit_neg_conj = -std::conj(unit);
  std::vector<double> lag;
  const int kmax = std::max(rows, cols);
  for (int k = 0; k < kmax; ++k) {
    // Lower triangle: m = n + k (m >= n), uses L_n^{(k)} with phase gamma^k.
    const int count_lower = std::min(cols, rows - k);
    const int count_upper = k > 0 ? std::min(rows, cols - k) : 0;
    const int count = std::max(count_lower, count_upper);
    if (count <= 0) continue;
    if (r == 0.0 && k > 0) continue;
    detail::laguerre_column(k, x, count, lag);
    const cplx phase_lower = std::pow(unit, k);
    const cplx phase_upper = std::pow(unit_neg_conj, k);
    for (int n = 0; n < count; ++n) {
      const double logmag = 0.5 * (std::lgamma(n + 1.0) - std::lgamma(n + k + 1.0)) + k * log_r - 0.5 * x;
      const double mag = std::exp(logmag) * lag[n];
      if (n < count_lower) out(n + k, n) = mag * phase_lower;
      if (n < count_upper) out(n, n + k) = mag * phase_upper;
    }
  }
  return out;
}

inline Operator displacement_closed_form(int n, cplx gamma) { return displacement_closed_form(n, n, gamma); }

/// Spec-level displacement: truncated-space exponential, embedded on `mode`.
inline Operator displacement_op(const HilbertConfig& cfg, int mode, cplx gamma) {
  require(std::isfinite(gamma.real()) && std::isfinite(gamma.imag()), "displacement amplitude must be finite");
  return embed_mode(cfg, displacement_matrix(cfg.fock, gamma), mode);
}

// ---------------------------------------------------------------------------
// Time-ordered propagation

struct Segment {
  Operator hamiltonian;
  double duration = 0.0;
};

/// U = exp(-i H_K dt_K) ... exp(-i H_1 dt_1); the last segment is leftmost.
inline Operator propagate_piecewise(std::span<const Segment> segments) {
  require(!segments.empty(), "propagate_piecewise needs at least one segment");
  const auto dim = segments.front().hamiltonian.rows();
  Operator u = Operator::Identity(dim, dim);
  for (const auto& seg : segments) {
    require(seg.hamiltonian.rows() == dim && seg.hamiltonian.cols() == dim, "segment dimension mismatch");
    require(seg.duration > 0.0, "segment durations must be positive");
    const double scale = std::max(1.0, max_abs(seg.hamiltonian));
    require(hermiticity_residual(seg.hamiltonian) <= 1e-10 * scale, "segment Hamiltonian is not Hermitian");
    u = expm_hermitian(seg.hamiltonian, seg.duration) * u;
  }
  return u;
}

// ---------------------------------------------------------------------------
// States

/// Product basis ket |s, n_y, n_x>; `occupations[m]` is the Fock level of mode m.
inline Ket basis_ket(const HilbertConfig& cfg, int spin_state, std::span<const int> occupations) {
  cfg.validate();
  require(static_cast<int>(occupations.size()) == cfg.modes, "one occupation per mode is required");
  int idx = 0;
  int stride = 1;
  for (int m = 0; m < cfg.modes; ++m) {
    require(occupations[m] >= 0 && occupations[m] < cfg.fock, "occupation outside the truncation");
    idx += occupations[m] * stride;
    stride *= cfg.fock;
  }
  if (cfg.spin) idx += spin_state * cfg.motional_dim();
  Ket k = Ket::Zero(cfg.dim());
  k(idx) = 1.0;
  return k;
}

/// |spin> (x) motional
inline Ket with_spin(int spin_state, const Ket& motional) {
  Ket k = Ket::Zero(2 * motional.size());
  k.segment(spin_state * motional.size(), motional.size()) = motional;
  return k;
}

inline Ket spin_component(const Ket& psi, int spin_state) {
  const auto m = psi.size() / 2;
  return psi.segment(spin_state * m, m);
}

/// Two-mode product ket |y> (x) |x> in the mode-y (x) mode-x ordering.
inline Ket product_ket(const Ket& mode_y, const Ket& mode_x) {
  Ket out(mode_y.size() * mode_x.size());
  for (Eigen::Index a = 0; a < mode_y.size(); ++a) out.segment(a * mode_x.size(), mode_x.size()) = mode_y(a) * mode_x;
  return out;
}

inline cplx expectation(const Ket& psi, const Operator& op) { return psi.dot(op * psi); }
inline cplx expectation(const DensityMatrix& rho, const Operator& op) { return (rho * op).trace(); }

inline RealVector thermal_populations(int n, double nbar) {
  require(nbar >= 0.0, "mean occupation must be non-negative");
  RealVector p = RealVector::Zero(n);
  if (nbar == 0.0) {
    p(0) = 1.0;
    return p;
  }
  const double ratio = nbar / (1.0 + nbar);
  for (int k = 0; k < n; ++k) p(k) = std::pow(ratio, k) / (1.0 + nbar);
  return p / p.sum();
}

/// Thermal state on `mode`, vacuum on the other mode, spin down when present.
inline DensityMatrix thermal_state(const HilbertConfig& cfg, int mode, double nbar) {
  cfg.validate();
  check_mode(cfg, mode);
  const RealVector p = thermal_populations(cfg.fock, nbar);
  DensityMatrix rho = DensityMatrix::Zero(cfg.dim(), cfg.dim());
  std::vector<int> occ(cfg.modes, 0);
  for (int k = 0; k < cfg.fock; ++k) {
    occ[mode] = k;
    const Ket ket = basis_ket(cfg, kSpinDown, occ);
    Eigen::Index idx;
    ket.cwiseAbs().maxCoeff(&idx);
    rho(idx, idx) = p(k);
  }
  return rho;
}

/// Reduced density matrix of one mode (spin and the other mode traced out).
inline DensityMatrix reduced_mode_density(const HilbertConfig& cfg, const DensityMatrix& rho, int mode) {
  check_mode(cfg, mode);
  const int n = cfg.fock;
  DensityMatrix out = DensityMatrix::Zero(n, n);
  for (int s = 0; s < cfg.spin_dim(); ++s)
    for (int o = 0; o < cfg.other_dim(); ++o)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          out(a, b) += rho(state_index(cfg, s, a, o, mode), state_index(cfg, s, b, o, mode));
  return out;
}

inline DensityMatrix reduced_mode_density(const HilbertConfig& cfg, const Ket& psi, int mode) {
  check_mode(cfg, mode);
  Operator view = gather_local(cfg, mode, psi);  // (spin*N) x other
  const int n = cfg.fock;
  DensityMatrix out = DensityMatrix::Zero(n, n);
  for (int s = 0; s < cfg.spin_dim(); ++s) {
    const auto block = view.middleRows(s * n, n);
    out += block * block.adjoint();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Wigner function

struct PhasePoint {
  double x = 0.0;
  double p = 0.0;
};

namespace detail {

inline int wigner_padding(int n, double alpha_abs) {
  return n + 30 + static_cast<int>(std::ceil(alpha_abs * alpha_abs + 8.0 * alpha_abs));
}

}  // namespace detail

/// W(x, p) = (1/pi) Tr[rho D(alpha) Parity D(alpha)^dag], alpha = (x + i p)/sqrt(2),
/// normalised so that the integral over dx dp equals the trace.
/// The displaced parity is assembled from exact matrix elements with an
/// enlarged intermediate Fock space, so it is free of truncation-edge artifacts.
inline std::vector<double> wigner_function(const DensityMatrix& rho_mode, std::span<const PhasePoint> grid) {
  require(rho_mode.rows() == rho_mode.cols(), "density matrix must be square");
  const int n = static_cast<int>(rho_mode.rows());
  std::vector<double> w;
  w.reserve(grid.size());
  for (const auto& pt : grid) {
    require(std::isfinite(pt.x) && std::isfinite(pt.p), "phase-space points must be finite");
    const cplx alpha{pt.x / std::sqrt(2.0), pt.p / std::sqrt(2.0)};
    const int k = detail::wigner_padding(n, std::abs(alpha));
    const Operator b = displacement_closed_form(n, k, alpha);  // <m|D|k>
    const Operator c = b.adjoint() * rho_mode * b;              // k x k
    cplx acc = 0.0;
    for (int j = 0; j < k; ++j) acc += (j % 2 == 0 ? 1.0 : -1.0) * c(j, j);
    w.push_back(acc.real() / pi);
  }
  return w;
}

inline std::vector<double> wigner_function(const Ket& psi_mode, std::span<const PhasePoint> grid) {
  const int n = static_cast<int>(psi_mode.size());
  std::vector<double> w;
  w.reserve(grid.size());
  for (const auto& pt : grid) {
    require(std::isfinite(pt.x) && std::isfinite(pt.p), "phase-space points must be finite");
    const cplx alpha{pt.x / std::sqrt(2.0), pt.p / std::sqrt(2.0)};
    const int k = detail::wigner_padding(n, std::abs(alpha));
    const Eigen::VectorXcd v = displacement_closed_form(n, k, alpha).adjoint() * psi_mode;
    double acc = 0.0;
    for (int j = 0; j < k; ++j) acc += (j % 2 == 0 ? 1.0 : -1.0) * std::norm(v(j));
    w.push_back(acc / pi);
  }
  return w;
}

/// Wigner function of one mode of a (possibly spin-coupled, multi-mode) state.
inline std::vector<double> wigner_function(const HilbertConfig& cfg, const Ket& psi, int mode,
                                           std::span<const PhasePoint> grid) {
  if (!cfg.spin && cfg.modes == 1) return wigner_function(psi, grid);
  return wigner_function(reduced_mode_density(cfg, psi, mode), grid);
}

inline std::vector<double> wigner_function(const HilbertConfig& cfg, const DensityMatrix& rho, int mode,
                                           std::span<const PhasePoint> grid) {
  if (!cfg.spin && cfg.modes == 1) return wigner_function(rho, grid);
  return wigner_function(reduced_mode_density(cfg, rho, mode), grid);
}

/// Uniform square grid, row-major in p then x.
inline std::vector<PhasePoint> square_grid(double half_width, int points_per_axis) {
  require(points_per_axis >= 2, "grid needs at least two points per axis");
  std::vector<PhasePoint> g;
  g.reserve(static_cast<std::size_t>(points_per_axis) * points_per_axis);
  const double step = 2.0 * half_width / (points_per_axis - 1);
  for (int i = 0; i < points_per_axis; ++i)
    for (int j = 0; j < points_per_axis; ++j) g.push_back({-half_width + j * step, -half_width + i * step});
  return g;
}

}  // namespace gkp

#endif  // GKP_OSCILLATOR_HPP
