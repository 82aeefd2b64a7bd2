#ifndef GKP_PULSE_OPTIMIZER_HPP
#define GKP_PULSE_OPTIMIZER_HPP

// Fidelities of pulse chains with exact adjoint gradients, a box-constrained
// quasi-Newton optimiser, and the average gate fidelity.
//
// A chain is a list of stages; each stage applies the pulse of one parameter
// block (or its inverse) to one mode. All problems share this machinery:
//
//   state prep   [U(x)]                         1 term
//   sq gate      [U(x)]                         6 terms
//   CZ           [U1(y), U2(x), U1(y)^dag]      36 terms
//   Bell prep    [U1(y), U2(x), U3(y)]          1 term
//
// F = (1/M) sum_m |<t_m| U |i_m>|^2.

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <thread>

#include "gkp/gkp_codes.hpp"
#include "gkp/sdf_control.hpp"

namespace gkp {

// ---------------------------------------------------------------------------
// Ideal two-level gates

inline Operator two_level_gate(const std::string& label) {
  Operator u(2, 2);
  const double h = 1.0 / std::sqrt(2.0);
  if (label == "I") {
    u << 1, 0, 0, 1;
  } else if (label == "X") {
    u << 0, 1, 1, 0;
  } else if (label == "Y") {
    u << 0, -I, I, 0;
  } else if (label == "Z") {
    u << 1, 0, 0, -1;
  } else if (label == "H") {
    u << h, h, h, -h;
  } else if (label == "S") {
    u << 1, 0, 0, I;
  } else if (label == "T") {
    u << 1, 0, 0, std::exp(I * pi / 4.0);
  } else if (label == "Rx(-pi/2)" || label == "Rx(pi/2)") {
    const double s = label == "Rx(pi/2)" ? 1.0 : -1.0;
    u << h, -I * s * h, -I * s * h, h;
  } else if (label == "Rz(-pi/2)" || label == "Rz(pi/2)") {
    const double s = label == "Rz(pi/2)" ? 1.0 : -1.0;
    u << std::exp(-I * s * pi / 4.0), 0, 0, std::exp(I * s * pi / 4.0);
  } else if (label == "Ry(-pi/2)" || label == "Ry(pi/2)") {
    const double s = label == "Ry(pi/2)" ? 1.0 : -1.0;
    u << h, -s * h, s * h, h;
  } else if (label == "CZ") {
    u = Operator::Identity(4, 4);
    u(3, 3) = -1.0;
  } else {
    throw ValidationError("unknown gate label '" + label + "'");
  }
  return u;
}

// ---------------------------------------------------------------------------
// Chain evaluation with adjoint gradients

struct BlockSpec {
  int mode = kModeX;
  double rabi_rate = reference::rabi_rate;
  double eta = reference::eta_x;
  int lamb_dicke_order = 3;
};

struct StageSpec {
  int block = 0;
  bool adjoint = false;
};

struct BlockWaveform {
  std::vector<double> phi_r;
  std::vector<double> phi_b;
  double segment_duration = 0.0;
};

struct BlockGradient {
  RealVector d_phi_r;
  RealVector d_phi_b;
  double d_segment_duration = 0.0;
};

struct FidelityTerm {
  Ket input;
  Ket target;
};

struct ChainSpec {
  HilbertConfig cfg;
  std::vector<BlockSpec> blocks;
  std::vector<StageSpec> stages;
  std::vector<FidelityTerm> terms;
};

namespace detail {

struct SegmentCache {
  Operator w;       // eigenvectors
  RealVector lam;   // eigenvalues
  Operator v;       // exp(-i H dt)
  double phi_r = 0.0, phi_b = 0.0;
};

// (e^{-i la dt} - e^{-i lb dt}) / (la - lb), stable for close eigenvalues.
inline cplx divided_difference(double la, double lb, double dt) {
  const double x = 0.5 * (la - lb) * dt;
  const double sinc = std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
  return -I * dt * std::exp(-I * 0.5 * (la + lb) * dt) * sinc;
}

struct SegmentTraces {
  cplx phi_r, phi_b, dt;
};

// Tr(dV/dp X) for p in {phi_r, phi_b, dt}.
inline SegmentTraces segment_traces(const SegmentCache& c, const SidebandOperators& ops, double rabi, double dt,
                                    const Operator& x) {
  const auto n2 = c.w.rows();
  const auto n = n2 / 2;
  const Operator y = c.w.adjoint() * x * c.w;
  Operator z(n2, n2);
  for (Eigen::Index a = 0; a < n2; ++a)
    for (Eigen::Index b = 0; b < n2; ++b) z(a, b) = divided_difference(c.lam(a), c.lam(b), dt) * y(b, a);
  const Operator q = c.w.conjugate() * z * c.w.transpose();
  const auto q12 = q.topRightCorner(n, n);
  const auto q21 = q.bottomLeftCorner(n, n);
  auto trace_for = [&](const Operator& dk) {
    return (dk.cwiseProduct(q12)).sum() + (dk.adjoint().cwiseProduct(q21)).sum();
  };
  SegmentTraces t;
  t.phi_r = trace_for((I * 0.5 * rabi * std::exp(I * c.phi_r)) * ops.red);
  t.phi_b = trace_for((I * 0.5 * rabi * std::exp(I * c.phi_b)) * ops.blue);
  cplx acc = 0.0;
  for (Eigen::Index a = 0; a < n2; ++a) acc += c.lam(a) * std::exp(-I * c.lam(a) * dt) * y(a, a);
  t.dt = -I * acc;
  return t;
}

}  // namespace detail

/// Fidelity of the chain; fills per-block gradients when `grad` is non-null.
inline double chain_fidelity(const ChainSpec& spec, const std::vector<BlockWaveform>& waves,
                             std::vector<BlockGradient>* grad = nullptr) {
  const HilbertConfig& cfg = spec.cfg;
  cfg.validate();
  require(cfg.spin, "pulse chains need a spin");
  require(waves.size() == spec.blocks.size(), "one waveform per block is required");
  require(!spec.terms.empty(), "chain has no fidelity terms");
  const int n = cfg.fock;
  const int m_terms = static_cast<int>(spec.terms.size());

  std::vector<SidebandOperators> ops;
  std::vector<std::vector<detail::SegmentCache>> cache(spec.blocks.size());
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const auto& bs = spec.blocks[b];
    const auto& w = waves[b];
    check_mode(cfg, bs.mode);
    require(w.phi_r.size() == w.phi_b.size() && !w.phi_r.empty(), "block waveform phases malformed");
    require(w.segment_duration >= 0.0, "segment duration must be non-negative");
    ops.emplace_back(n, bs.eta, bs.lamb_dicke_order);
    cache[b].resize(w.phi_r.size());
    for (std::size_t k = 0; k < w.phi_r.size(); ++k) {
      auto& c = cache[b][k];
      c.phi_r = w.phi_r[k];
      c.phi_b = w.phi_b[k];
      const HermitianExp e = chiral_eigensystem(ops[b].coupling(bs.rabi_rate, c.phi_r, c.phi_b));
      c.w = e.vectors();
      c.lam = e.values();
      c.v = e.propagator(w.segment_duration);
    }
  }

  // Forward pass.
  std::vector<Ket> psi(m_terms);
  for (int m = 0; m < m_terms; ++m) {
    require(spec.terms[m].input.size() == cfg.dim() && spec.terms[m].target.size() == cfg.dim(),
            "fidelity term dimension mismatch");
    psi[m] = spec.terms[m].input;
  }
  auto apply_stage = [&](const StageSpec& st, std::vector<Ket>& states, bool inverse) {
    const int mode = spec.blocks[st.block].mode;
    const auto& segs = cache[st.block];
    const int ns = static_cast<int>(segs.size());
    // Applied factors in order: V_1..V_K, or V_K^dag..V_1^dag for an adjoint stage.
    // `inverse` undoes the stage (factors reversed and daggered).
    for (auto& s : states) {
      Operator view = gather_local(cfg, mode, s);
      for (int i = 0; i < ns; ++i) {
        const int step = inverse ? ns - 1 - i : i;
        const int k = st.adjoint ? ns - 1 - step : step;
        const bool dagger = st.adjoint != inverse;
        view = dagger ? Operator(segs[k].v.adjoint() * view) : Operator(segs[k].v * view);
      }
      scatter_local(cfg, mode, view, s);
    }
  };
  for (const auto& st : spec.stages) apply_stage(st, psi, false);

  std::vector<cplx> overlap(m_terms);
  double fid = 0.0;
  for (int m = 0; m < m_terms; ++m) {
    overlap[m] = spec.terms[m].target.dot(psi[m]);
    fid += std::norm(overlap[m]);
  }
  fid /= m_terms;
  if (!grad) return fid;

  grad->assign(spec.blocks.size(), {});
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    (*grad)[b].d_phi_r = RealVector::Zero(waves[b].phi_r.size());
    (*grad)[b].d_phi_b = RealVector::Zero(waves[b].phi_r.size());
  }
  std::vector<Ket> lam(m_terms);
  for (int m = 0; m < m_terms; ++m) lam[m] = spec.terms[m].target;
  const double scale = 2.0 / m_terms;

  for (auto it = spec.stages.rbegin(); it != spec.stages.rend(); ++it) {
    const StageSpec& st = *it;
    const auto& bs = spec.blocks[st.block];
    const int mode = bs.mode;
    const auto& segs = cache[st.block];
    const int ns = static_cast<int>(segs.size());
    const double dt = waves[st.block].segment_duration;
    auto& g = (*grad)[st.block];

    std::vector<Operator> pv(m_terms), lv(m_terms);
    for (int m = 0; m < m_terms; ++m) {
      pv[m] = gather_local(cfg, mode, psi[m]);
      lv[m] = gather_local(cfg, mode, lam[m]);
    }
    for (int step = ns - 1; step >= 0; --step) {
      const int k = st.adjoint ? ns - 1 - step : step;
      const Operator& v = segs[k].v;
      Operator x = Operator::Zero(2 * n, 2 * n);
      for (int m = 0; m < m_terms; ++m) {
        // State before this factor.
        pv[m] = st.adjoint ? Operator(v * pv[m]) : Operator(v.adjoint() * pv[m]);
        x.noalias() += std::conj(overlap[m]) * pv[m] * lv[m].adjoint();
      }
      detail::SegmentTraces tr;
      if (!st.adjoint) {
        tr = detail::segment_traces(segs[k], ops[st.block], bs.rabi_rate, dt, x);
      } else {
        const Operator xa = x.adjoint();
        tr = detail::segment_traces(segs[k], ops[st.block], bs.rabi_rate, dt, xa);
        tr.phi_r = std::conj(tr.phi_r);
        tr.phi_b = std::conj(tr.phi_b);
        tr.dt = std::conj(tr.dt);
      }
      g.d_phi_r(k) += scale * tr.phi_r.real();
      g.d_phi_b(k) += scale * tr.phi_b.real();
      g.d_segment_duration += scale * tr.dt.real();
      for (int m = 0; m < m_terms; ++m) lv[m] = st.adjoint ? Operator(v * lv[m]) : Operator(v.adjoint() * lv[m]);
    }
    for (int m = 0; m < m_terms; ++m) {
      scatter_local(cfg, mode, pv[m], psi[m]);
      scatter_local(cfg, mode, lv[m], lam[m]);
    }
  }
  return fid;
}

// ---------------------------------------------------------------------------
// Problem-specific chains

namespace detail {

inline Ket embed_down(const HilbertConfig& cfg, const Ket& motional) {
  require(motional.size() == cfg.motional_dim(), "motional state has the wrong dimension");
  return with_spin(kSpinDown, motional);
}

inline Ket logical_state(const CodewordSet& cw, const Eigen::VectorXcd& v) {
  Ket s = v(0) * cw[Logical::PlusZ] + v(1) * cw[Logical::MinusZ];
  return s / s.norm();
}

// Two-mode logical state for coordinates in the (y, x) product basis.
inline Ket logical_state2(const CodewordSet& cw_y, const CodewordSet& cw_x, const Eigen::VectorXcd& v) {
  Ket s = Ket::Zero(cw_y.fock * cw_x.fock);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const Ket& ky = a == 0 ? cw_y[Logical::PlusZ] : cw_y[Logical::MinusZ];
      const Ket& kx = b == 0 ? cw_x[Logical::PlusZ] : cw_x[Logical::MinusZ];
      s += v(2 * a + b) * product_ket(ky, kx);
    }
  return s / s.norm();
}

inline BlockSpec block_of(const SdfPulse& p) { return {p.mode, p.rabi_rate, p.eta, p.lamb_dicke_order}; }
inline BlockWaveform wave_of(const SdfPulse& p) { return {p.phi_r, p.phi_b, p.segment_duration}; }

}  // namespace detail

inline std::vector<FidelityTerm> sq_gate_terms(const HilbertConfig& cfg, const CodewordSet& cw, const Operator& gate) {
  require(gate.rows() == 2 && gate.cols() == 2, "single-qubit gate must be 2 x 2");
  require(cw.fock == cfg.fock, "codeword truncation does not match the configuration");
  std::vector<FidelityTerm> terms;
  for (Logical l : kAllLogical) {
    const Eigen::VectorXcd v = logical_vector(l);
    terms.push_back({detail::embed_down(cfg, detail::logical_state(cw, v)),
                     detail::embed_down(cfg, detail::logical_state(cw, gate * v))});
  }
  return terms;
}

inline std::vector<FidelityTerm> two_qubit_gate_terms(const HilbertConfig& cfg, const CodewordSet& cw_y,
                                                      const CodewordSet& cw_x, const Operator& gate) {
  require(gate.rows() == 4 && gate.cols() == 4, "two-qubit gate must be 4 x 4");
  require(cw_x.fock == cfg.fock && cw_y.fock == cfg.fock, "codeword truncation does not match the configuration");
  std::vector<FidelityTerm> terms;
  for (Logical ly : kAllLogical)
    for (Logical lx : kAllLogical) {
      Eigen::VectorXcd v(4);
      const auto vy = logical_vector(ly), vx = logical_vector(lx);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) v(2 * a + b) = vy(a) * vx(b);
      terms.push_back({detail::embed_down(cfg, detail::logical_state2(cw_y, cw_x, v)),
                       detail::embed_down(cfg, detail::logical_state2(cw_y, cw_x, gate * v))});
    }
  return terms;
}

/// (|+Z,+Z> + |-Z,-Z>)/sqrt(2) in the (y, x) ordering.
inline Ket bell_target(const CodewordSet& cw_y, const CodewordSet& cw_x) {
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(4);
  v(0) = v(3) = 1.0 / std::sqrt(2.0);
  return detail::logical_state2(cw_y, cw_x, v);
}

inline double fidelity_state_prep(const SdfPulse& pulse, const Ket& target, std::vector<BlockGradient>* grad = nullptr) {
  const HilbertConfig cfg{static_cast<int>(target.size()), 1, true};
  SdfPulse p = pulse;
  p.mode = kModeX;
  const int vac[1] = {0};
  ChainSpec spec{cfg, {detail::block_of(p)}, {{0, false}},
                 {{basis_ket(cfg, kSpinDown, vac), detail::embed_down(cfg, target / target.norm())}}};
  return chain_fidelity(spec, {detail::wave_of(p)}, grad);
}

inline double fidelity_sq_gate(const SdfPulse& pulse, const Operator& gate, const CodewordSet& cw,
                               std::vector<BlockGradient>* grad = nullptr) {
  const HilbertConfig cfg{cw.fock, 1, true};
  SdfPulse p = pulse;
  p.mode = kModeX;
  ChainSpec spec{cfg, {detail::block_of(p)}, {{0, false}}, sq_gate_terms(cfg, cw, gate)};
  return chain_fidelity(spec, {detail::wave_of(p)}, grad);
}

inline double fidelity_sq_gate(const SdfPulse& pulse, const std::string& gate, const CodewordSet& cw,
                               std::vector<BlockGradient>* grad = nullptr) {
  return fidelity_sq_gate(pulse, two_level_gate(gate), cw, grad);
}

/// CZ chain U1^dag U2 U1 with U1 on mode y and U2 on mode x.
inline double fidelity_cz(const SdfPulse& pulse1, const SdfPulse& pulse2, const CodewordSet& cw_x,
                          const CodewordSet& cw_y, std::vector<BlockGradient>* grad = nullptr) {
  const HilbertConfig cfg{cw_x.fock, 2, true};
  SdfPulse p1 = pulse1, p2 = pulse2;
  p1.mode = kModeY;
  p2.mode = kModeX;
  ChainSpec spec{cfg,
                 {detail::block_of(p1), detail::block_of(p2)},
                 {{0, false}, {1, false}, {0, true}},
                 two_qubit_gate_terms(cfg, cw_y, cw_x, two_level_gate("CZ"))};
  return chain_fidelity(spec, {detail::wave_of(p1), detail::wave_of(p2)}, grad);
}

/// Bell preparation U3(y) U2(x) U1(y) |down, 0, 0>.
inline double fidelity_bell(const SdfPulse& pulse1, const SdfPulse& pulse2, const SdfPulse& pulse3,
                            const CodewordSet& cw_x, const CodewordSet& cw_y,
                            std::vector<BlockGradient>* grad = nullptr) {
  const HilbertConfig cfg{cw_x.fock, 2, true};
  SdfPulse p1 = pulse1, p2 = pulse2, p3 = pulse3;
  p1.mode = kModeY;
  p2.mode = kModeX;
  p3.mode = kModeY;
  const int vac[2] = {0, 0};
  ChainSpec spec{cfg,
                 {detail::block_of(p1), detail::block_of(p2), detail::block_of(p3)},
                 {{0, false}, {1, false}, {2, false}},
                 {{basis_ket(cfg, kSpinDown, vac), detail::embed_down(cfg, bell_target(cw_y, cw_x))}}};
  return chain_fidelity(spec, {detail::wave_of(p1), detail::wave_of(p2), detail::wave_of(p3)}, grad);
}

// ---------------------------------------------------------------------------
// Average gate fidelity

/// Pauli transfer matrix R_ij = Tr(E_i U E_j U^dag)/d of a d x d matrix U
/// (need not be unitary), Paulis ordered I, X, Y, Z (tensor powers row-major).
inline RealMatrix pauli_transfer_matrix(const Operator& u);

inline std::vector<Operator> pauli_basis(int qubits) {
  const std::array<Operator, 4> p1 = {Operator::Identity(2, 2), sigma_x(), sigma_y(), sigma_z()};
  if (qubits == 1) return {p1.begin(), p1.end()};
  require(qubits == 2, "Pauli basis supports one or two qubits");
  std::vector<Operator> out;
  for (const auto& a : p1)
    for (const auto& b : p1) out.push_back(kron(a, b));
  return out;
}

inline RealMatrix pauli_transfer_matrix(const Operator& u) {
  const int d = static_cast<int>(u.rows());
  require(d == 2 || d == 4, "PTM needs d = 2 or 4");
  const auto paulis = pauli_basis(d == 2 ? 1 : 2);
  const int d2 = d * d;
  RealMatrix r(d2, d2);
  for (int i = 0; i < d2; ++i)
    for (int j = 0; j < d2; ++j) r(i, j) = (paulis[i] * u * paulis[j] * u.adjoint()).trace().real() / d;
  return r;
}

inline double average_gate_fidelity_from_ptm(const RealMatrix& r_ideal, const RealMatrix& r_logical) {
  require(r_ideal.rows() == r_logical.rows() && r_ideal.cols() == r_logical.cols(), "PTM dimension mismatch");
  const double d = std::sqrt(static_cast<double>(r_ideal.rows()));
  return (r_ideal.transpose() * r_logical).trace() / (d * (d + 1.0)) + 1.0 / (d + 1.0);
}

/// Logical block A = B^dag U B where the columns of B are |down> (x) the
/// finite-energy logical basis states; exact even for non-orthogonal codewords.
inline Operator logical_block(const Operator& gate_unitary, const Eigen::MatrixXcd& basis) {
  require(gate_unitary.rows() == basis.rows(), "gate and logical basis dimensions differ");
  return basis.adjoint() * gate_unitary * basis;
}

inline Eigen::MatrixXcd logical_basis_1q(const CodewordSet& cw) {
  const HilbertConfig cfg{cw.fock, 1, true};
  Eigen::MatrixXcd b(cfg.dim(), 2);
  b.col(0) = detail::embed_down(cfg, cw[Logical::PlusZ]);
  b.col(1) = detail::embed_down(cfg, cw[Logical::MinusZ]);
  return b;
}

inline Eigen::MatrixXcd logical_basis_2q(const CodewordSet& cw_y, const CodewordSet& cw_x) {
  const HilbertConfig cfg{cw_x.fock, 2, true};
  Eigen::MatrixXcd b(cfg.dim(), 4);
  for (int a = 0; a < 2; ++a)
    for (int c = 0; c < 2; ++c) {
      const Ket& ky = a == 0 ? cw_y[Logical::PlusZ] : cw_y[Logical::MinusZ];
      const Ket& kx = c == 0 ? cw_x[Logical::PlusZ] : cw_x[Logical::MinusZ];
      b.col(2 * a + c) = detail::embed_down(cfg, product_ket(ky, kx));
    }
  return b;
}

/// F_gate = Tr(R^T R_L)/(d(d+1)) + 1/(d+1); R_L uses the finite-energy Paulis
/// E_Delta = |down><down| (x) sum_kl (E)_kl |k_L><l_L|.
inline double average_gate_fidelity(const Operator& gate_unitary, const Operator& ideal, const Eigen::MatrixXcd& basis) {
  require(ideal.rows() == basis.cols(), "ideal gate and logical basis dimensions differ");
  return average_gate_fidelity_from_ptm(pauli_transfer_matrix(ideal),
                                        pauli_transfer_matrix(logical_block(gate_unitary, basis)));
}

inline double average_gate_fidelity(const Operator& gate_unitary, const Operator& ideal, const CodewordSet& cw) {
  return average_gate_fidelity(gate_unitary, ideal, logical_basis_1q(cw));
}

// ---------------------------------------------------------------------------
// Box-constrained L-BFGS

struct LbfgsSettings {
  int max_iterations = 200;
  int memory = 10;
  double gtol = 1e-7;           // projected-gradient infinity norm
  double ftol = 1e-10;          // relative decrease per iteration
  int patience = 3;             // consecutive small-decrease iterations
  double max_seconds = 0.0;     // 0: unlimited
  double initial_step = 0.05;   // largest coordinate change of a steepest-descent step
};

struct LbfgsResult {
  RealVector x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::vector<std::pair<int, double>> history;  // (iteration, f) after each accepted step
};

using Objective = std::function<double(const RealVector&, RealVector&)>;

inline LbfgsResult minimize_box(const Objective& fn, RealVector x, const RealVector& lower, const RealVector& upper,
                                const LbfgsSettings& s) {
  const auto n = x.size();
  auto project = [&](RealVector v) {
    for (Eigen::Index i = 0; i < n; ++i) v(i) = std::clamp(v(i), lower(i), upper(i));
    return v;
  };
  const auto t0 = std::chrono::steady_clock::now();
  LbfgsResult r;
  x = project(x);
  RealVector g(n);
  double f = fn(x, g);
  r.evaluations = 1;
  r.history.push_back({0, f});
  std::vector<RealVector> ss, ys;
  int small = 0;
  for (int it = 1; it <= s.max_iterations; ++it) {
    const RealVector pg = project(x - g) - x;
    if (pg.lpNorm<Eigen::Infinity>() < s.gtol) {
      r.converged = true;
      break;
    }
    if (s.max_seconds > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() > s.max_seconds)
      break;
    // Free variables: not pinned at a bound by the gradient.
    std::vector<char> free(n, 1);
    const double eps = 1e-12;
    for (Eigen::Index i = 0; i < n; ++i)
      if ((x(i) <= lower(i) + eps && g(i) > 0) || (x(i) >= upper(i) - eps && g(i) < 0)) free[i] = 0;
    auto mask = [&](RealVector v) {
      for (Eigen::Index i = 0; i < n; ++i)
        if (!free[i]) v(i) = 0.0;
      return v;
    };
    RealVector q = mask(g);
    const int m = static_cast<int>(ss.size());
    std::vector<double> alpha(m), rho(m);
    for (int k = m - 1; k >= 0; --k) {
      rho[k] = 1.0 / mask(ys[k]).dot(mask(ss[k]));
      alpha[k] = rho[k] * mask(ss[k]).dot(q);
      q -= alpha[k] * mask(ys[k]);
    }
    double gamma = 1.0;
    if (m > 0) {
      const RealVector sy = mask(ys[m - 1]);
      const double yy = sy.squaredNorm();
      if (yy > 0) gamma = mask(ss[m - 1]).dot(sy) / yy;
      if (!(gamma > 0) || !std::isfinite(gamma)) gamma = 1.0;
    }
    q *= gamma;
    for (int k = 0; k < m; ++k) {
      const double beta = rho[k] * mask(ys[k]).dot(q);
      q += (alpha[k] - beta) * mask(ss[k]);
    }
    RealVector d = -mask(q);
    if (!(g.dot(d) < 0) || !d.allFinite()) {
      ss.clear();
      ys.clear();
      d = -mask(g);
    }
    double step = 1.0;
    if (ss.empty()) step = std::min(1.0, s.initial_step / std::max(d.lpNorm<Eigen::Infinity>(), 1e-300));
    RealVector xn, gn(n);
    double fn_val = f;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      xn = project(x + step * d);
      if ((xn - x).lpNorm<Eigen::Infinity>() == 0.0) break;
      fn_val = fn(xn, gn);
      ++r.evaluations;
      if (std::isfinite(fn_val) && fn_val <= f + 1e-4 * g.dot(xn - x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!ss.empty()) {
        ss.clear();
        ys.clear();
        continue;
      }
      r.converged = true;  // no descent possible along the projected gradient
      break;
    }
    const RealVector sv = xn - x, yv = gn - g;
    if (sv.dot(yv) > 1e-12 * sv.norm() * yv.norm()) {
      ss.push_back(sv);
      ys.push_back(yv);
      if (static_cast<int>(ss.size()) > s.memory) {
        ss.erase(ss.begin());
        ys.erase(ys.begin());
      }
    }
    const double decrease = f - fn_val;
    x = xn;
    g = gn;
    f = fn_val;
    r.iterations = it;
    r.history.push_back({it, f});
    small = decrease <= s.ftol * std::max(1.0, std::abs(f)) ? small + 1 : 0;
    if (small >= s.patience) {
      r.converged = true;
      break;
    }
  }
  r.x = x;
  r.f = f;
  return r;
}

// ---------------------------------------------------------------------------
// Optimisation problems

enum class ProblemKind { StatePrep, SqGate, CzGate, BellPrep };

inline std::string to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::StatePrep: return "state_prep";
    case ProblemKind::SqGate: return "sq_gate";
    case ProblemKind::CzGate: return "cz_gate";
    case ProblemKind::BellPrep: return "bell_prep";
  }
  return "?";
}

inline ProblemKind parse_problem_kind(const std::string& s) {
  for (ProblemKind k : {ProblemKind::StatePrep, ProblemKind::SqGate, ProblemKind::CzGate, ProblemKind::BellPrep})
    if (to_string(k) == s) return k;
  throw ValidationError("unknown problem kind '" + s + "'");
}

inline int pulse_count(ProblemKind k) {
  switch (k) {
    case ProblemKind::StatePrep:
    case ProblemKind::SqGate: return 1;
    case ProblemKind::CzGate: return 2;
    case ProblemKind::BellPrep: return 3;
  }
  return 0;
}

struct OptimizerSettings {
  int restarts = 4;
  int threads = 1;
  double init_phase_range = pi / 4;
  double init_tau = 0.5;
  double warmup_fraction = 0.3;  // share of the iteration budget spent at fixed durations
  LbfgsSettings lbfgs;
};

struct OptimizationProblem {
  ProblemKind kind = ProblemKind::StatePrep;
  std::string target = "+Z";  // logical label or "vacuum" for state prep, gate label for sq_gate
  std::vector<PulseConstraints> constraints;  // one per pulse
  double epsilon = reference::prep_epsilon;
  double t_max = reference::prep_t_max;
  IonParams ion = IonParams::shared_eta();
  int lamb_dicke_order = 3;
  int fock = 20;
  GridHamiltonianParams grid{1.0, 3.0};
  OptimizerSettings settings;

  void validate() const {
    require(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0, 1)");
    require(t_max > 0.0, "T_max must be positive");
    require(static_cast<int>(constraints.size()) == pulse_count(kind), "wrong number of pulse constraint sets");
    for (const auto& c : constraints) c.validate();
    require(fock >= 2, "fock truncation must be at least 2");
    require(lamb_dicke_order == 1 || lamb_dicke_order == 3, "Lamb-Dicke order must be 1 or 3");
    require(settings.restarts >= 1, "at least one restart is required");
    require(settings.init_tau >= 0.0 && settings.init_tau <= 1.0, "initial duration fraction must be in [0, 1]");
    require(settings.warmup_fraction >= 0.0 && settings.warmup_fraction < 1.0, "warm-up fraction must be in [0, 1)");
    ion.validate();
    if (kind == ProblemKind::StatePrep && target != "vacuum") parse_logical(target);
    if (kind == ProblemKind::SqGate) {
      const Operator g = two_level_gate(target);
      require(g.rows() == 2, "sq_gate needs a single-qubit gate label");
    }
  }
};

struct CostReport {
  double fidelity = 0.0;
  double duration = 0.0;
  double cost = 0.0;
  double epsilon = 0.0;
  double t_max = 0.0;
  int iterations = 0;
  int evaluations = 0;
  int best_restart = 0;
  bool converged = false;
  double wall_seconds = 0.0;
  std::vector<std::pair<int, double>> history;
};

inline double cost_function(double fidelity, double duration, double epsilon, double t_max) {
  return (1.0 - fidelity) + epsilon * duration / t_max;
}

struct OptimizationResult {
  std::vector<SdfPulse> pulses;
  CostReport report;
};

/// Mode of each pulse and the chain layout for a problem kind.
struct ProblemLayout {
  HilbertConfig cfg;
  std::vector<int> modes;
  std::vector<StageSpec> stages;
};

inline ProblemLayout problem_layout(const OptimizationProblem& p) {
  switch (p.kind) {
    case ProblemKind::StatePrep:
    case ProblemKind::SqGate: return {{p.fock, 1, true}, {kModeX}, {{0, false}}};
    case ProblemKind::CzGate: return {{p.fock, 2, true}, {kModeY, kModeX}, {{0, false}, {1, false}, {0, true}}};
    case ProblemKind::BellPrep:
      return {{p.fock, 2, true}, {kModeY, kModeX, kModeY}, {{0, false}, {1, false}, {2, false}}};
  }
  throw ValidationError("unknown problem kind");
}

inline std::vector<FidelityTerm> problem_terms(const OptimizationProblem& p, const HilbertConfig& cfg,
                                               const CodewordSet& cw) {
  switch (p.kind) {
    case ProblemKind::StatePrep: {
      const int vac[1] = {0};
      const Ket input = basis_ket(cfg, kSpinDown, vac);
      if (p.target == "vacuum") return {{input, input}};
      return {{input, detail::embed_down(cfg, cw[parse_logical(p.target)])}};
    }
    case ProblemKind::SqGate: return sq_gate_terms(cfg, cw, two_level_gate(p.target));
    case ProblemKind::CzGate: return two_qubit_gate_terms(cfg, cw, cw, two_level_gate("CZ"));
    case ProblemKind::BellPrep: {
      const int vac[2] = {0, 0};
      return {{basis_ket(cfg, kSpinDown, vac), detail::embed_down(cfg, bell_target(cw, cw))}};
    }
  }
  throw ValidationError("unknown problem kind");
}

/// Parameter vector: per pulse [d_r (n_opt-1), d_b (n_opt-1), (r0_r, r0_b if no zero start), tau].
/// Raw phases are cumulative sums of the differences d, which are boxed by
/// raw_difference_limit; tau = T / t_max of that pulse's constraints.
class PulseParameterization {
public:
  PulseParameterization(std::vector<PulseConstraints> constraints) : c_(std::move(constraints)) {
    for (const auto& c : c_) {
      offsets_.push_back(size_);
      size_ += 2 * (c.n_opt - 1) + (c.zero_start ? 0 : 2) + 1;
      limits_.push_back(raw_difference_limit(c));
    }
  }

  Eigen::Index size() const { return size_; }
  int pulses() const { return static_cast<int>(c_.size()); }
  const PulseConstraints& constraints(int b) const { return c_[b]; }
  double difference_limit(int b) const { return limits_[b]; }

  void bounds(RealVector& lo, RealVector& hi) const {
    lo.resize(size_);
    hi.resize(size_);
    for (int b = 0; b < pulses(); ++b) {
      const auto& c = c_[b];
      Eigen::Index o = offsets_[b];
      for (int i = 0; i < 2 * (c.n_opt - 1); ++i, ++o) {
        lo(o) = -limits_[b];
        hi(o) = limits_[b];
      }
      if (!c.zero_start)
        for (int i = 0; i < 2; ++i, ++o) {
          lo(o) = -1e6;
          hi(o) = 1e6;
        }
      lo(o) = 0.0;
      hi(o) = 1.0;
    }
  }

  std::vector<double> raw(const RealVector& x, int b, bool blue) const {
    const auto& c = c_[b];
    const Eigen::Index o = offsets_[b] + (blue ? c.n_opt - 1 : 0);
    double start = 0.0;
    if (!c.zero_start) start = x(offsets_[b] + 2 * (c.n_opt - 1) + (blue ? 1 : 0));
    std::vector<double> r(c.n_opt);
    r[0] = start;
    for (int j = 1; j < c.n_opt; ++j) r[j] = r[j - 1] + x(o + j - 1);
    return r;
  }

  double tau(const RealVector& x, int b) const { return x(tau_index(b)); }
  Eigen::Index tau_index(int b) const {
    const auto& c = c_[b];
    return offsets_[b] + 2 * (c.n_opt - 1) + (c.zero_start ? 0 : 2);
  }
  double duration(const RealVector& x, int b) const { return tau(x, b) * c_[b].t_max; }

  /// Raw phase gradient -> parameter gradient (differences and offsets).
  void scatter_raw_gradient(const RealVector& g_raw, int b, bool blue, RealVector& g) const {
    const auto& c = c_[b];
    const Eigen::Index o = offsets_[b] + (blue ? c.n_opt - 1 : 0);
    double tail = 0.0;
    for (int j = c.n_opt - 1; j >= 1; --j) {
      tail += g_raw(j);
      g(o + j - 1) += tail;
    }
    if (!c.zero_start) g(offsets_[b] + 2 * (c.n_opt - 1) + (blue ? 1 : 0)) += tail + g_raw(0);
  }

  RealVector random_start(std::mt19937_64& rng, double range, double tau0) const {
    RealVector x = RealVector::Zero(size_);
    std::uniform_real_distribution<double> u(-range, range);
    for (int b = 0; b < pulses(); ++b) {
      const auto& c = c_[b];
      for (int side = 0; side < 2; ++side) {
        std::vector<double> r(c.n_opt);
        for (auto& v : r) v = u(rng);
        const Eigen::Index o = offsets_[b] + side * (c.n_opt - 1);
        for (int j = 1; j < c.n_opt; ++j) x(o + j - 1) = std::clamp(r[j] - r[j - 1], -limits_[b], limits_[b]);
        if (!c.zero_start) x(offsets_[b] + 2 * (c.n_opt - 1) + side) = r[0];
      }
      x(tau_index(b)) = tau0;
    }
    return x;
  }

private:
  std::vector<PulseConstraints> c_;
  std::vector<Eigen::Index> offsets_;
  std::vector<double> limits_;
  Eigen::Index size_ = 0;
};

/// Cost and gradient of a problem as a function of the optimiser parameters.
class ProblemObjective {
public:
  ProblemObjective(const OptimizationProblem& p, const CodewordSet& cw)
      : problem_(p), layout_(problem_layout(p)), param_(p.constraints) {
    p.validate();
    require(cw.fock == p.fock, "codeword truncation does not match the problem");
    spec_.cfg = layout_.cfg;
    for (std::size_t b = 0; b < layout_.modes.size(); ++b)
      spec_.blocks.push_back({layout_.modes[b], p.ion.rabi_rate, p.ion.eta(layout_.modes[b]), p.lamb_dicke_order});
    spec_.stages = layout_.stages;
    spec_.terms = problem_terms(p, layout_.cfg, cw);
    stage_count_.assign(layout_.modes.size(), 0);
    for (const auto& st : spec_.stages) ++stage_count_[st.block];
  }

  const PulseParameterization& parameterization() const { return param_; }
  const ChainSpec& chain() const { return spec_; }

  std::vector<SdfPulse> pulses(const RealVector& x) const {
    std::vector<SdfPulse> out;
    for (int b = 0; b < param_.pulses(); ++b) {
      const auto& c = param_.constraints(b);
      const double t = param_.duration(x, b);
      SdfPulse p = make_pulse(problem_.ion, layout_.modes[b], c.n_seg, t / c.n_seg, problem_.lamb_dicke_order);
      const FilterMatrix fm = filter_matrix(c.n_opt, c.n_seg, t, c.sinc_cutoff, c.zero_start);
      for (int side = 0; side < 2; ++side) {
        const auto raw = param_.raw(x, b, side == 1);
        const RealVector y = fm.m * Eigen::Map<const RealVector>(raw.data(), c.n_opt);
        (side == 0 ? p.phi_r : p.phi_b).assign(y.data(), y.data() + y.size());
      }
      out.push_back(std::move(p));
    }
    return out;
  }

  double total_duration(const std::vector<SdfPulse>& pulses) const {
    double t = 0.0;
    for (const auto& st : spec_.stages) t += pulses[st.block].duration();
    return t;
  }

  double fidelity(const std::vector<SdfPulse>& pulses) const {
    std::vector<BlockWaveform> w;
    for (const auto& p : pulses) w.push_back(detail::wave_of(p));
    return chain_fidelity(spec_, w);
  }

  double operator()(const RealVector& x, RealVector& g) const {
    const auto pulses_x = pulses(x);
    std::vector<BlockWaveform> w;
    for (const auto& p : pulses_x) w.push_back(detail::wave_of(p));
    std::vector<BlockGradient> bg;
    const double fid = chain_fidelity(spec_, w, &bg);
    g = RealVector::Zero(x.size());
    double t_total = 0.0;
    for (int b = 0; b < param_.pulses(); ++b) {
      const auto& c = param_.constraints(b);
      const double t = param_.duration(x, b);
      t_total += stage_count_[b] * t;
      const FilterMatrix fm = filter_matrix(c.n_opt, c.n_seg, t, c.sinc_cutoff, c.zero_start);
      // dC/dphi = -dF/dphi
      const RealVector gr = -(fm.m.transpose() * bg[b].d_phi_r);
      const RealVector gb = -(fm.m.transpose() * bg[b].d_phi_b);
      param_.scatter_raw_gradient(gr, b, false, g);
      param_.scatter_raw_gradient(gb, b, true, g);
      // Duration: segment length and the T-dependent filter.
      double dfdt = bg[b].d_segment_duration / c.n_seg;
      const double h = 1e-6 * c.t_max;
      const double t_lo = t > h ? t - h : t, t_hi = t + h;
      if (t > 0.0) {
        const RealMatrix dm = (filter_matrix(c.n_opt, c.n_seg, t_hi, c.sinc_cutoff, c.zero_start).m -
                               filter_matrix(c.n_opt, c.n_seg, t_lo, c.sinc_cutoff, c.zero_start).m) /
                              (t_hi - t_lo);
        const auto rr = param_.raw(x, b, false), rb = param_.raw(x, b, true);
        const RealVector dyr = dm * Eigen::Map<const RealVector>(rr.data(), c.n_opt);
        const RealVector dyb = dm * Eigen::Map<const RealVector>(rb.data(), c.n_opt);
        dfdt += bg[b].d_phi_r.dot(dyr) + bg[b].d_phi_b.dot(dyb);
      }
      g(param_.tau_index(b)) = -dfdt * c.t_max + problem_.epsilon * stage_count_[b] * c.t_max / problem_.t_max;
    }
    return cost_function(fid, t_total, problem_.epsilon, problem_.t_max);
  }

private:
  OptimizationProblem problem_;
  ProblemLayout layout_;
  PulseParameterization param_;
  ChainSpec spec_;
  std::vector<int> stage_count_;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Multi-restart optimisation; the best restart (lowest cost, ties to the
/// lowest index) is returned. Pulses are quantised to the stored precision and
/// the report is evaluated on the quantised pulses.
inline OptimizationResult optimize(const OptimizationProblem& problem, const CodewordSet& cw, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const ProblemObjective obj(problem, cw);
  RealVector lo, hi;
  obj.parameterization().bounds(lo, hi);
  const int restarts = problem.settings.restarts;
  std::vector<LbfgsResult> results(restarts);
  // When doing nothing already meets 1 - F <= epsilon, start from zero duration.
  const RealVector idle = RealVector::Zero(obj.parameterization().size());
  const bool idle_start = 1.0 - obj.fidelity(obj.pulses(idle)) <= problem.epsilon;
  auto run = [&](int r) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
    const RealVector x0 = obj.parameterization().random_start(rng, problem.settings.init_phase_range,
                                                              idle_start ? 0.0 : problem.settings.init_tau);
    const Objective f = [&](const RealVector& x, RealVector& g) { return obj(x, g); };
    // Phases first at the initial durations, then phases and durations together.
    LbfgsSettings warm = problem.settings.lbfgs;
    warm.max_iterations =
        idle_start ? 0 : static_cast<int>(std::lround(problem.settings.warmup_fraction * warm.max_iterations));
    RealVector x1 = x0;
    LbfgsResult first;
    if (warm.max_iterations > 0) {
      RealVector wlo = lo, whi = hi;
      for (int b = 0; b < obj.parameterization().pulses(); ++b) {
        const auto i = obj.parameterization().tau_index(b);
        wlo(i) = whi(i) = x0(i);
      }
      first = minimize_box(f, x0, wlo, whi, warm);
      x1 = first.x;
    }
    LbfgsSettings rest = problem.settings.lbfgs;
    rest.max_iterations = std::max(1, rest.max_iterations - warm.max_iterations);
    LbfgsResult second = minimize_box(f, x1, lo, hi, rest);
    if (warm.max_iterations > 0) {
      const int offset = first.iterations;
      for (auto& h : second.history) h.first += offset;
      first.history.insert(first.history.end(), second.history.begin() + 1, second.history.end());
      second.history = std::move(first.history);
      second.iterations += offset;
      second.evaluations += first.evaluations;
    }
    results[r] = std::move(second);
  };
  const int threads = std::max(1, std::min(problem.settings.threads, restarts));
  if (threads == 1) {
    for (int r = 0; r < restarts; ++r) run(r);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (int r = next++; r < restarts; r = next++) run(r);
      });
    for (auto& th : pool) th.join();
  }
  int best = 0;
  for (int r = 1; r < restarts; ++r)
    if (results[r].f < results[best].f) best = r;

  OptimizationResult out;
  out.pulses = obj.pulses(results[best].x);
  for (auto& p : out.pulses) quantize_phases(p);
  auto& rep = out.report;
  rep.fidelity = obj.fidelity(out.pulses);
  rep.duration = obj.total_duration(out.pulses);
  rep.epsilon = problem.epsilon;
  rep.t_max = problem.t_max;
  rep.cost = cost_function(rep.fidelity, rep.duration, rep.epsilon, rep.t_max);
  rep.iterations = results[best].iterations;
  rep.best_restart = best;
  rep.converged = results[best].converged;
  for (const auto& r : results) rep.evaluations += r.evaluations;
  rep.history = results[best].history;
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace gkp

#endif  // GKP_PULSE_OPTIMIZER_HPP
