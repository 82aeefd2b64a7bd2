#ifndef GKP_LOGICAL_MEASUREMENT_HPP
#define GKP_LOGICAL_MEASUREMENT_HPP

// Logical Pauli operators, SSSD Pauli measurement operators, displacement
// measurement plans and the SDF readout channel.
//
// Lattice points are kept as integer coordinates (p, q) meaning
// gamma = p alpha + q beta, so X_L = D(alpha), Z_L = D(beta), Y_L = D(alpha + beta)
// and the measurement operators sum over odd (p, q).
//
// Two-mode labels and samples are ordered (mode y, mode x): the first axis
// letter and `gamma` act on mode y, the second letter and `delta` on mode x,
// matching the tensor order of the state vector.

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <tuple>

#include "gkp/gkp_codes.hpp"
#include "gkp/pulse_optimizer.hpp"
#include "gkp/sdf_control.hpp"

namespace gkp {

enum class PauliAxis { I = 0, X, Y, Z };

inline char axis_char(PauliAxis a) { return "IXYZ"[static_cast<int>(a)]; }

inline PauliAxis parse_axis(char c) {
  switch (c) {
    case 'I': return PauliAxis::I;
    case 'X': return PauliAxis::X;
    case 'Y': return PauliAxis::Y;
    case 'Z': return PauliAxis::Z;
  }
  throw ValidationError(std::string("invalid Pauli axis letter '") + c + "'");
}

struct PauliLabel {
  std::vector<PauliAxis> axes;

  int modes() const { return static_cast<int>(axes.size()); }
  bool trivial() const {
    return std::all_of(axes.begin(), axes.end(), [](PauliAxis a) { return a == PauliAxis::I; });
  }
  std::string str() const {
    std::string s;
    for (auto a : axes) s += axis_char(a);
    return s;
  }
  static PauliLabel parse(const std::string& s) {
    require(s.size() == 1 || s.size() == 2, "Pauli label must have one or two letters");
    PauliLabel l;
    for (char c : s) l.axes.push_back(parse_axis(c));
    return l;
  }
  /// Index into pauli_basis(modes) (I, X, Y, Z, row-major over modes).
  int index() const {
    int i = 0;
    for (auto a : axes) i = 4 * i + static_cast<int>(a);
    return i;
  }
};

/// Non-trivial labels in pauli_basis order: 3 for one mode, 15 for two.
inline std::vector<PauliLabel> nontrivial_labels(int modes) {
  require(modes == 1 || modes == 2, "labels exist for one or two modes");
  std::vector<PauliLabel> out;
  const int total = modes == 1 ? 4 : 16;
  for (int i = 1; i < total; ++i) {
    PauliLabel l;
    if (modes == 2) l.axes.push_back(static_cast<PauliAxis>(i / 4));
    l.axes.push_back(static_cast<PauliAxis>(i % 4));
    out.push_back(l);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Operators

struct LatticePoint {
  int p = 0;
  int q = 0;
  bool operator<(const LatticePoint& o) const { return std::tie(p, q) < std::tie(o.p, o.q); }
  bool operator==(const LatticePoint& o) const = default;
  LatticePoint operator-() const { return {-p, -q}; }
  bool zero() const { return p == 0 && q == 0; }
};

inline cplx lattice_displacement(const GkpLattice& lat, LatticePoint pt) {
  return static_cast<double>(pt.p) * lat.alpha + static_cast<double>(pt.q) * lat.beta;
}

inline LatticePoint logical_point(PauliAxis a) {
  switch (a) {
    case PauliAxis::I: return {0, 0};
    case PauliAxis::X: return {1, 0};
    case PauliAxis::Y: return {1, 1};
    case PauliAxis::Z: return {0, 1};
  }
  return {0, 0};
}

inline Operator logical_pauli_op(const GkpLattice& lat, PauliAxis a, int fock) {
  if (a == PauliAxis::I) return Operator::Identity(fock, fock);
  return displacement_closed_form(fock, lattice_displacement(lat, logical_point(a)));
}

struct WeightedPoint {
  LatticePoint point;
  double weight = 0.0;
};

/// Terms of the truncated measurement operator:
///   X_m = (1/pi) sum_{n=-N}^{N-1} (-1)^n/(n+1/2) D((2n+1) alpha), Z_m likewise along beta,
///   Y_m = (1/pi^2) sum_{m,n} D((2n+1) alpha + (2m+1) beta) / ((n+1/2)(m+1/2)).
inline std::vector<WeightedPoint> sssd_terms(PauliAxis a, int truncation) {
  require(truncation >= 1, "SSSD truncation must be at least 1");
  std::vector<WeightedPoint> out;
  const int n0 = -truncation, n1 = truncation - 1;
  switch (a) {
    case PauliAxis::I: out.push_back({{0, 0}, 1.0}); break;
    case PauliAxis::X:
    case PauliAxis::Z:
      for (int n = n0; n <= n1; ++n) {
        const double w = (n % 2 == 0 ? 1.0 : -1.0) / ((n + 0.5) * pi);
        out.push_back({a == PauliAxis::X ? LatticePoint{2 * n + 1, 0} : LatticePoint{0, 2 * n + 1}, w});
      }
      break;
    case PauliAxis::Y:
      for (int m = n0; m <= n1; ++m)
        for (int n = n0; n <= n1; ++n)
          out.push_back({{2 * n + 1, 2 * m + 1}, 1.0 / (pi * pi * (n + 0.5) * (m + 0.5))});
      break;
  }
  return out;
}

inline Operator pauli_measurement_op(const GkpLattice& lat, PauliAxis a, int truncation, int fock) {
  Operator op = Operator::Zero(fock, fock);
  for (const auto& t : sssd_terms(a, truncation))
    op += t.weight * (t.point.zero() ? Operator(Operator::Identity(fock, fock))
                                     : displacement_closed_form(fock, lattice_displacement(lat, t.point)));
  return op;
}

inline Operator pauli_measurement_op(const GkpLattice& lat, const PauliLabel& l, int truncation, int fock) {
  Operator op = pauli_measurement_op(lat, l.axes[0], truncation, fock);
  for (std::size_t i = 1; i < l.axes.size(); ++i) op = kron(op, pauli_measurement_op(lat, l.axes[i], truncation, fock));
  return op;
}

// ---------------------------------------------------------------------------
// Measurement plans

enum class PlanKind { Sssd, LogicalPauli };

/// How samples are merged. Conjugate uses <D(-g)> = <D(g)>^* only. ModeParity
/// additionally treats <D(g) (x) D(d)> as even in g and d separately, exact
/// for states of even parity in each mode (all logical codeword states).
enum class PlanReduction { Conjugate, ModeParity };

inline std::string to_string(PlanReduction r) { return r == PlanReduction::Conjugate ? "conjugate" : "mode_parity"; }
inline PlanReduction parse_plan_reduction(const std::string& s) {
  if (s == "conjugate") return PlanReduction::Conjugate;
  if (s == "mode_parity") return PlanReduction::ModeParity;
  throw ValidationError("unknown plan reduction '" + s + "'");
}

struct PlanSample {
  LatticePoint gamma;                  // mode y for two-mode plans, the single mode otherwise
  std::optional<LatticePoint> delta;   // mode x (two-mode plans)
};

struct PlanContribution {
  int sample = 0;
  double coefficient = 0.0;  // multiplies Re<D(gamma) (x) D(delta)>
};

struct MeasurementPlan {
  int modes = 1;
  int truncation = 0;  // 0 for logical-Pauli plans
  PlanKind kind = PlanKind::Sssd;
  PlanReduction reduction = PlanReduction::ModeParity;
  GkpLattice lattice;
  std::vector<PlanSample> samples;
  std::map<std::string, std::vector<PlanContribution>> labels;

  std::size_t size() const { return samples.size(); }
  cplx gamma(int s) const { return lattice_displacement(lattice, samples[s].gamma); }
  std::optional<cplx> delta(int s) const {
    if (!samples[s].delta) return std::nullopt;
    return lattice_displacement(lattice, *samples[s].delta);
  }
};

namespace detail {

inline LatticePoint canonical_sign(LatticePoint a) {
  if (a.p < 0 || (a.p == 0 && a.q < 0)) return -a;
  return a;
}

struct PlanBuilder {
  MeasurementPlan plan;
  std::map<std::pair<LatticePoint, LatticePoint>, int> index;

  // Canonical representative of the orbit of (g, d); weights of all orbit
  // members accumulate on it.
  std::pair<LatticePoint, LatticePoint> key(LatticePoint g, LatticePoint d) const {
    if (plan.reduction == PlanReduction::ModeParity) return {canonical_sign(g), canonical_sign(d)};
    const std::array<int, 4> c = {g.p, g.q, d.p, d.q};
    for (int v : c)
      if (v != 0) return v > 0 ? std::pair{g, d} : std::pair{-g, -d};
    return {g, d};
  }

  void add(const std::string& label, LatticePoint g, LatticePoint d, double w) {
    const auto k = key(g, d);
    auto it = index.find(k);
    int s;
    if (it == index.end()) {
      s = static_cast<int>(plan.samples.size());
      PlanSample ps{k.first, std::nullopt};
      if (plan.modes == 2) ps.delta = k.second;
      plan.samples.push_back(ps);
      index.emplace(k, s);
    } else {
      s = it->second;
    }
    auto& terms = plan.labels[label];
    for (auto& t : terms)
      if (t.sample == s) {
        t.coefficient += w;
        return;
      }
    terms.push_back({s, w});
  }
};

}  // namespace detail

/// SSSD plan for all non-trivial labels of one or two modes.
/// Sizes: one mode 2N + 2N^2; two modes 4N + 8N^2 + 8N^3 + 4N^4 with ModeParity
/// and 4N + 12N^2 + 16N^3 + 8N^4 with Conjugate.
inline MeasurementPlan sssd_plan(int modes, int truncation, PlanReduction reduction = PlanReduction::ModeParity,
                                 const GkpLattice& lattice = {}) {
  require(modes == 1 || modes == 2, "plans exist for one or two modes");
  require(truncation >= 1, "SSSD truncation must be at least 1");
  detail::PlanBuilder b;
  b.plan.modes = modes;
  b.plan.truncation = truncation;
  b.plan.kind = PlanKind::Sssd;
  b.plan.reduction = reduction;
  b.plan.lattice = lattice;
  for (const auto& label : nontrivial_labels(modes)) {
    const auto ta = sssd_terms(label.axes[0], truncation);
    const auto tb = modes == 2 ? sssd_terms(label.axes[1], truncation) : std::vector<WeightedPoint>{{{0, 0}, 1.0}};
    for (const auto& a : ta)
      for (const auto& c : tb) b.add(label.str(), a.point, c.point, a.weight * c.weight);
  }
  return b.plan;
}

/// One Re<D> sample per label with the logical displacements (15 for two modes).
inline MeasurementPlan logical_pauli_plan(int modes, const GkpLattice& lattice = {}) {
  require(modes == 1 || modes == 2, "plans exist for one or two modes");
  MeasurementPlan plan;
  plan.modes = modes;
  plan.kind = PlanKind::LogicalPauli;
  plan.reduction = PlanReduction::Conjugate;
  plan.lattice = lattice;
  for (const auto& label : nontrivial_labels(modes)) {
    PlanSample s{logical_point(label.axes[0]), std::nullopt};
    if (modes == 2) s.delta = logical_point(label.axes[1]);
    plan.labels[label.str()].push_back({static_cast<int>(plan.samples.size()), 1.0});
    plan.samples.push_back(s);
  }
  return plan;
}

inline std::size_t sssd_count_formula(int modes, int n) {
  const std::size_t N = n;
  if (modes == 1) return 2 * N + 2 * N * N;
  return 4 * N + 8 * N * N + 8 * N * N * N + 4 * N * N * N * N;
}

// ---------------------------------------------------------------------------
// Displacement expectations

namespace detail {

inline int fock_from_size(Eigen::Index size, int modes) {
  const int n = modes == 1 ? static_cast<int>(size) : static_cast<int>(std::lround(std::sqrt(double(size))));
  require(n >= 1 && (modes == 1 ? n : n * n) == size, "state size is not fock^modes");
  return n;
}

inline Operator displacement_or_identity(int fock, cplx g) {
  if (g == cplx{0.0, 0.0}) return Operator::Identity(fock, fock);
  return displacement_closed_form(fock, g);
}

}  // namespace detail

/// <D(gamma)> or <D(gamma) (x) D(delta)> of a motional ket.
inline cplx displacement_expectation(const Ket& psi, int modes, cplx gamma, std::optional<cplx> delta = std::nullopt) {
  const int n = detail::fock_from_size(psi.size(), modes);
  if (modes == 1) {
    require(!delta, "single-mode state takes no second displacement");
    return psi.dot(detail::displacement_or_identity(n, gamma) * psi);
  }
  const Operator dy = detail::displacement_or_identity(n, gamma);
  const Operator dx = detail::displacement_or_identity(n, delta.value_or(cplx{0.0, 0.0}));
  // psi(ny * n + nx) viewed as an n x n matrix M(ny, nx) (row-major); (Dy (x) Dx) psi = Dy M Dx^T.
  const Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(psi.data(), n, n);
  const Operator out = dy * m * dx.transpose();
  return (m.conjugate().cwiseProduct(out)).sum();
}

inline cplx displacement_expectation(const DensityMatrix& rho, int modes, cplx gamma,
                                     std::optional<cplx> delta = std::nullopt) {
  const int n = detail::fock_from_size(rho.rows(), modes);
  if (modes == 1) {
    require(!delta, "single-mode state takes no second displacement");
    return (rho * detail::displacement_or_identity(n, gamma)).trace();
  }
  const Operator dy = detail::displacement_or_identity(n, gamma);
  const Operator dx = detail::displacement_or_identity(n, delta.value_or(cplx{0.0, 0.0}));
  // Tr(rho (A (x) B)) = sum_ij A_ji Tr(rho_ij B), rho_ij the (i, j) block.
  cplx acc = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (dy(j, i) == cplx{0.0, 0.0}) continue;
      const cplx t = (rho.block(i * n, j * n, n, n).cwiseProduct(dx.transpose())).sum();
      acc += dy(j, i) * t;
    }
  return acc;
}

// ---------------------------------------------------------------------------
// SDF readout channel

enum class BasisRotation { None, ForImaginaryPart };

/// Constant order-1 SDF pulse realising D(gamma sigma_x / 2) on `mode`.
inline SdfPulse readout_pulse(int mode, cplx gamma, double rabi = reference::rabi_rate) {
  SdfPulse p;
  p.mode = mode;
  p.rabi_rate = rabi;
  p.lamb_dicke_order = 1;
  // gamma = -i Omega t e^{-i phi_m}
  const double phi_m = -std::arg(I * gamma);
  p.phi_r = {phi_m};
  p.phi_b = {-phi_m};
  p.segment_duration = std::abs(gamma) / rabi;
  return p;
}

namespace detail {

inline Ket pad_two_mode(const Ket& psi, int n, int padded) {
  Ket out = Ket::Zero(static_cast<Eigen::Index>(padded) * padded);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) out(y * padded + x) = psi(y * n + x);
  return out;
}

}  // namespace detail

/// Simulated readout of a spin-down (x) motional ket: optional spin rotation
/// Rx(pi/2), the SDF pulse(s) D(gamma sigma_x/2) on mode y (or the single mode)
/// and D(delta sigma_x/2) on mode x, then -<sigma_z>. Returns Re<D(gamma) (x) D(delta)>,
/// or Im<...> with ForImaginaryPart. Pulses run in a padded Fock space so the
/// truncated state sees no edge effects.
inline double sdf_readout(const Ket& motional, int modes, cplx gamma, std::optional<cplx> delta = std::nullopt,
                          BasisRotation rot = BasisRotation::None) {
  const int n = detail::fock_from_size(motional.size(), modes);
  require(modes == 2 || !delta, "single-mode readout takes no second displacement");
  const double reach = std::max(std::abs(gamma), delta ? std::abs(*delta) : 0.0);
  const int padded = n + displacement_padding(cplx{reach, 0.0});
  const HilbertConfig cfg{padded, modes, true};
  Ket m = modes == 1 ? pad_fock(motional, padded) : detail::pad_two_mode(motional, n, padded);
  Ket state = with_spin(kSpinDown, m);
  if (rot == BasisRotation::ForImaginaryPart) {
    Operator rx(2, 2);
    const double h = 1.0 / std::sqrt(2.0);
    rx << h, -I * h, -I * h, h;
    const auto dm = cfg.motional_dim();
    const Ket up = state.head(dm), down = state.tail(dm);
    state.head(dm) = rx(0, 0) * up + rx(0, 1) * down;
    state.tail(dm) = rx(1, 0) * up + rx(1, 1) * down;
  }
  if (modes == 1) {
    if (gamma != cplx{0.0, 0.0}) apply_pulse(readout_pulse(kModeX, gamma), cfg, state);
  } else {
    if (gamma != cplx{0.0, 0.0}) apply_pulse(readout_pulse(kModeY, gamma), cfg, state);
    if (delta && *delta != cplx{0.0, 0.0}) apply_pulse(readout_pulse(kModeX, *delta), cfg, state);
  }
  const auto dm = cfg.motional_dim();
  const double sz = state.head(dm).squaredNorm() - state.tail(dm).squaredNorm();
  return -sz;
}

/// Readout of a spin (x) motional ket; the spin must be in |down>.
inline double sdf_readout(const Ket& state, const HilbertConfig& cfg, cplx gamma,
                          std::optional<cplx> delta = std::nullopt, BasisRotation rot = BasisRotation::None) {
  cfg.validate();
  require(cfg.spin, "spinful readout needs a spin in the configuration");
  require(state.size() == cfg.dim(), "state dimension does not match the configuration");
  const double up = spin_component(state, kSpinUp).squaredNorm();
  if (up > 1e-9)
    throw ValidationError("readout needs the spin in |down>; found up-population " + std::to_string(up));
  return sdf_readout(Ket(spin_component(state, kSpinDown)), cfg.modes, gamma, delta, rot);
}

/// Mixed motional state: eigen-decomposition and weighted ket readouts.
inline double sdf_readout(const DensityMatrix& rho, int modes, cplx gamma, std::optional<cplx> delta = std::nullopt,
                          BasisRotation rot = BasisRotation::None) {
  Eigen::SelfAdjointEigenSolver<DensityMatrix> es(0.5 * (rho + rho.adjoint()));
  double acc = 0.0;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
    const double w = es.eigenvalues()(k);
    if (std::abs(w) < 1e-14) continue;
    acc += w * sdf_readout(Ket(es.eigenvectors().col(k)), modes, gamma, delta, rot);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Pauli expectations

enum class ReadoutChannel { Exact, SimulatedSdf, ShotSampled };

inline std::string to_string(ReadoutChannel c) {
  switch (c) {
    case ReadoutChannel::Exact: return "exact";
    case ReadoutChannel::SimulatedSdf: return "simulated_sdf";
    case ReadoutChannel::ShotSampled: return "shot_sampled";
  }
  return "?";
}

inline ReadoutChannel parse_readout_channel(const std::string& s) {
  for (auto c : {ReadoutChannel::Exact, ReadoutChannel::SimulatedSdf, ReadoutChannel::ShotSampled})
    if (to_string(c) == s) return c;
  throw ValidationError("unknown readout channel '" + s + "'");
}

struct ChannelSpec {
  ReadoutChannel kind = ReadoutChannel::Exact;
  int shots = 0;
  std::uint64_t seed = 0;
};

struct DisplacementSample {
  cplx gamma;
  std::optional<cplx> delta;
  double value = 0.0;  // Re<D(gamma) (x) D(delta)>
  int shots = 0;       // 0: exact or simulated expectation
  std::string channel = "exact";
};

namespace detail {

template <class State>
double exact_sample(const State& s, int modes, cplx g, std::optional<cplx> d) {
  return displacement_expectation(s, modes, g, d).real();
}

inline double shot_estimate(double value, int shots, std::uint64_t seed, std::uint64_t sample) {
  std::mt19937_64 rng(mix_seed(seed, sample));
  const double p = std::clamp(0.5 * (1.0 + value), 0.0, 1.0);
  std::binomial_distribution<int> b(shots, p);
  return 2.0 * b(rng) / shots - 1.0;
}

}  // namespace detail

/// Re<D> for every sample of the plan through the chosen channel.
template <class State>
std::vector<DisplacementSample> measure_plan(const State& state, const MeasurementPlan& plan, const ChannelSpec& ch) {
  if (ch.kind == ReadoutChannel::ShotSampled) require(ch.shots > 0, "shot-sampled channel needs shots > 0");
  std::vector<DisplacementSample> out(plan.size());
  for (std::size_t s = 0; s < plan.size(); ++s) {
    const cplx g = plan.gamma(static_cast<int>(s));
    const auto d = plan.delta(static_cast<int>(s));
    double v;
    if (ch.kind == ReadoutChannel::SimulatedSdf) {
      v = sdf_readout(state, plan.modes, g, d);
    } else {
      v = detail::exact_sample(state, plan.modes, g, d);
    }
    require(std::abs(v) <= 1.0 + 1e-9, "displacement expectation exceeds unit modulus");
    int shots = 0;
    if (ch.kind == ReadoutChannel::ShotSampled) {
      v = detail::shot_estimate(v, ch.shots, ch.seed, s);
      shots = ch.shots;
    }
    out[s] = {g, d, v, shots, to_string(ch.kind)};
  }
  return out;
}

/// Label -> expectation from measured samples.
inline std::map<std::string, double> pauli_expectations_from_samples(const MeasurementPlan& plan,
                                                                     const std::vector<DisplacementSample>& samples) {
  require(samples.size() == plan.size(), "insufficient samples for the measurement plan");
  std::map<std::string, double> out;
  for (const auto& [label, terms] : plan.labels) {
    double acc = 0.0;
    for (const auto& t : terms) acc += t.coefficient * samples[t.sample].value;
    out[label] = acc;
  }
  return out;
}

template <class State>
std::map<std::string, double> pauli_expectations(const State& state, const MeasurementPlan& plan,
                                                 const ChannelSpec& ch = {}) {
  return pauli_expectations_from_samples(plan, measure_plan(state, plan, ch));
}

/// rho_L = (1/d) (I + sum_i <E_m^i> E^i) over the plan's labels.
inline Operator logical_density_from_expectations(const std::map<std::string, double>& ex, int modes) {
  const auto basis = pauli_basis(modes);
  const int d = modes == 1 ? 2 : 4;
  Operator rho = basis[0];
  for (const auto& l : nontrivial_labels(modes)) {
    auto it = ex.find(l.str());
    require(it != ex.end(), "missing expectation for label " + l.str());
    rho += it->second * basis[l.index()];
  }
  return rho / static_cast<double>(d);
}

// ---------------------------------------------------------------------------
// Measurement records

inline void write_measurement_record(std::ostream& os, const std::vector<DisplacementSample>& samples) {
  os << "# gamma_re gamma_im delta_re delta_im value shots channel\n";
  os << std::setprecision(17);
  for (const auto& s : samples) {
    os << s.gamma.real() << ' ' << s.gamma.imag() << ' ';
    if (s.delta)
      os << s.delta->real() << ' ' << s.delta->imag();
    else
      os << "- -";
    os << ' ' << s.value << ' ' << s.shots << ' ' << s.channel << '\n';
  }
}

inline std::vector<DisplacementSample> read_measurement_record(std::istream& is) {
  std::vector<DisplacementSample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string gr, gi, dr, di, v, shots, ch;
    if (!(ls >> gr >> gi >> dr >> di >> v >> shots >> ch))
      throw IoError("measurement record line " + std::to_string(lineno) + ": expected 7 fields");
    try {
      DisplacementSample s;
      s.gamma = {std::stod(gr), std::stod(gi)};
      if (dr != "-") s.delta = cplx{std::stod(dr), std::stod(di)};
      s.value = std::stod(v);
      s.shots = std::stoi(shots);
      s.channel = ch;
      if (std::abs(s.value) > 1.0 + 1e-9) throw IoError("value exceeds unit modulus");
      out.push_back(s);
    } catch (const IoError& e) {
      throw IoError("measurement record line " + std::to_string(lineno) + ": " + e.what());
    } catch (const std::exception&) {
      throw IoError("measurement record line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return out;
}

}  // namespace gkp

#endif  // GKP_LOGICAL_MEASUREMENT_HPP
