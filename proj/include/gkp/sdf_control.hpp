#ifndef GKP_SDF_CONTROL_HPP
#define GKP_SDF_CONTROL_HPP

// Phase-modulated state-dependent-force pulses: Hamiltonian, propagators,
// hardware constraints (slew rate, sinc filter, zero start) and waveform files.
//
// Per segment, on spin (x) mode j,
//
//   H = (W/2) s+ [ (a - e^2/2 a a^dag a) e^{i phi_r} + (a^dag - e^2/2 a^dag a a^dag) e^{i phi_b} ] + h.c.
//
// The local matrix uses index s * N + n with s = 0 for |up>.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "gkp/oscillator.hpp"
#include "gkp/reference_values.hpp"

namespace gkp {

inline constexpr int kModeX = 0;
inline constexpr int kModeY = 1;

struct IonParams {
  double eta_x = reference::eta_x;
  double eta_y = reference::eta_y;
  double rabi_rate = reference::rabi_rate;
  double mode_freq_x = reference::mode_freq_x;
  double mode_freq_y = reference::mode_freq_y;

  double eta(int mode) const { return mode == kModeX ? eta_x : eta_y; }
  void validate() const {
    require(eta_x > 0 && eta_y > 0 && rabi_rate > 0 && mode_freq_x > 0 && mode_freq_y > 0,
            "ion parameters must be positive");
  }
  /// One Lamb-Dicke parameter shared by both modes.
  static IonParams shared_eta() {
    IonParams p;
    p.eta_y = p.eta_x;
    return p;
  }
};

struct SdfPulse {
  int mode = kModeX;
  double rabi_rate = reference::rabi_rate;
  double segment_duration = 0.0;
  std::vector<double> phi_r;
  std::vector<double> phi_b;
  int lamb_dicke_order = 3;
  double eta = reference::eta_x;

  int segments() const { return static_cast<int>(phi_r.size()); }
  double duration() const { return segment_duration * segments(); }

  void validate() const {
    require(phi_r.size() == phi_b.size(), "phi_r and phi_b must have the same length");
    require(!phi_r.empty(), "pulse needs at least one segment");
    require(mode == kModeX || mode == kModeY, "pulse mode must be x (0) or y (1)");
    require(lamb_dicke_order == 1 || lamb_dicke_order == 3, "Lamb-Dicke order must be 1 or 3");
    require(segment_duration >= 0.0 && std::isfinite(segment_duration), "segment duration must be finite and >= 0");
    require(rabi_rate >= 0.0 && eta >= 0.0, "Rabi rate and eta must be non-negative");
    for (std::size_t k = 0; k < phi_r.size(); ++k)
      require(std::isfinite(phi_r[k]) && std::isfinite(phi_b[k]), "phases must be finite");
  }

  bool operator==(const SdfPulse&) const = default;
};

inline SdfPulse make_pulse(const IonParams& ion, int mode, int segments, double segment_duration, int order = 3) {
  SdfPulse p;
  p.mode = mode;
  p.rabi_rate = ion.rabi_rate;
  p.eta = ion.eta(mode);
  p.segment_duration = segment_duration;
  p.lamb_dicke_order = order;
  p.phi_r.assign(segments, 0.0);
  p.phi_b.assign(segments, 0.0);
  return p;
}

inline std::string mode_name(int mode) { return mode == kModeX ? "x" : "y"; }

inline int parse_mode(const std::string& s) {
  if (s == "x" || s == "0") return kModeX;
  if (s == "y" || s == "1") return kModeY;
  throw ValidationError("unknown mode '" + s + "'");
}

// ---------------------------------------------------------------------------
// Hamiltonian

/// Red and blue sideband operators A = a - e^2/2 a a^dag a, B = a^dag - e^2/2 a^dag a a^dag.
/// The cubic terms use a n and n a^dag, which have no truncation-edge error.
struct SidebandOperators {
  Operator red;
  Operator blue;

  SidebandOperators() = default;
  SidebandOperators(int n, double eta, int order) {
    const Operator a = annihilation(n);
    red = a;
    blue = a.adjoint();
    if (order == 3) {
      const Operator num = number(n);
      red -= 0.5 * eta * eta * (a * num);
      blue -= 0.5 * eta * eta * (num * a.adjoint());
    }
  }

  /// Upper-right block K of H = [[0, K], [K^dag, 0]].
  Operator coupling(double rabi, double phi_r, double phi_b) const {
    return (0.5 * rabi) * (std::exp(I * phi_r) * red + std::exp(I * phi_b) * blue);
  }
};

inline Operator local_hamiltonian_from_coupling(const Operator& k) {
  const auto n = k.rows();
  Operator h = Operator::Zero(2 * n, 2 * n);
  h.block(0, n, n, n) = k;
  h.block(n, 0, n, n) = k.adjoint();
  return h;
}

inline Operator local_sdf_hamiltonian(int fock, double rabi, double eta, int order, double phi_r, double phi_b) {
  const SidebandOperators ops(fock, eta, order);
  return local_hamiltonian_from_coupling(ops.coupling(rabi, phi_r, phi_b));
}

inline Operator sdf_hamiltonian(const SdfPulse& pulse, const HilbertConfig& cfg, int segment) {
  pulse.validate();
  cfg.validate();
  require(cfg.spin, "SDF Hamiltonian needs a spin");
  check_mode(cfg, pulse.mode);
  require(segment >= 0 && segment < pulse.segments(), "segment index out of range");
  const Operator h = local_sdf_hamiltonian(cfg.fock, pulse.rabi_rate, pulse.eta, pulse.lamb_dicke_order,
                                           pulse.phi_r[segment], pulse.phi_b[segment]);
  return embed_spin_mode(cfg, h, pulse.mode);
}

/// Spectral data of H = [[0, K], [K^dag, 0]] from the SVD K = U S V^dag:
/// eigenvectors (u_k, +-v_k)/sqrt(2) with eigenvalues +-s_k.
inline HermitianExp chiral_eigensystem(const Operator& k) {
  const auto n = k.rows();
  Eigen::BDCSVD<Operator> svd(k, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Operator& u = svd.matrixU();
  const Operator& v = svd.matrixV();
  const RealVector& s = svd.singularValues();
  Operator vecs(2 * n, 2 * n);
  RealVector vals(2 * n);
  const double h = 1.0 / std::sqrt(2.0);
  vecs.topLeftCorner(n, n) = h * u;
  vecs.bottomLeftCorner(n, n) = h * v;
  vecs.topRightCorner(n, n) = h * u;
  vecs.bottomRightCorner(n, n) = -h * v;
  vals.head(n) = s;
  vals.tail(n) = -s;
  return HermitianExp::from_eigensystem(std::move(vecs), std::move(vals));
}

// ---------------------------------------------------------------------------
// Propagators

/// Time-ordered propagator on spin (x) pulse mode (2N x 2N).
inline Operator local_pulse_propagator(const SdfPulse& pulse, int fock) {
  pulse.validate();
  const SidebandOperators ops(fock, pulse.eta, pulse.lamb_dicke_order);
  Operator u = Operator::Identity(2 * fock, 2 * fock);
  if (pulse.segment_duration == 0.0) return u;
  for (int k = 0; k < pulse.segments(); ++k) {
    const Operator kk = ops.coupling(pulse.rabi_rate, pulse.phi_r[k], pulse.phi_b[k]);
    u = chiral_eigensystem(kk).propagator(pulse.segment_duration) * u;
  }
  return u;
}

inline Operator pulse_propagator(const SdfPulse& pulse, const HilbertConfig& cfg) {
  cfg.validate();
  require(cfg.spin, "pulse propagation needs a spin");
  check_mode(cfg, pulse.mode);
  return embed_spin_mode(cfg, local_pulse_propagator(pulse, cfg.fock), pulse.mode);
}

/// Product of per-pulse propagators, first pulse rightmost.
inline Operator sequence_propagator(const std::vector<SdfPulse>& pulses, const HilbertConfig& cfg) {
  cfg.validate();
  require(cfg.spin, "pulse propagation needs a spin");
  Operator u = Operator::Identity(cfg.dim(), cfg.dim());
  for (const auto& p : pulses) {
    require(p.mode >= 0 && p.mode < cfg.modes, "pulse bound to a mode outside the configuration");
    u = pulse_propagator(p, cfg) * u;
  }
  return u;
}

/// Applies a pulse to a state without forming the full-space propagator.
inline void apply_pulse(const SdfPulse& pulse, const HilbertConfig& cfg, Ket& psi) {
  check_mode(cfg, pulse.mode);
  apply_local(cfg, pulse.mode, local_pulse_propagator(pulse, cfg.fock), psi);
}

/// Reversed segments with both phases shifted by pi: H -> -H, so U -> U^dag.
inline SdfPulse inverse_pulse(const SdfPulse& pulse) {
  SdfPulse inv = pulse;
  std::reverse(inv.phi_r.begin(), inv.phi_r.end());
  std::reverse(inv.phi_b.begin(), inv.phi_b.end());
  for (auto& p : inv.phi_r) p += pi;
  for (auto& p : inv.phi_b) p += pi;
  return inv;
}

// ---------------------------------------------------------------------------
// Constraints

struct PulseConstraints {
  int n_opt = reference::prep_pulse.n_opt;
  int n_seg = reference::prep_pulse.n_seg;
  double slew_rate_times_t = reference::prep_pulse.slew_rate_times_t;  // rad
  double sinc_cutoff = reference::sinc_cutoff;                         // rad/s
  bool zero_start = true;
  double t_max = reference::prep_t_max;  // s

  void validate() const {
    require(n_opt >= 2, "n_opt must be at least 2");
    require(n_seg >= n_opt, "n_opt must not exceed N_seg");
    require(sinc_cutoff > 0.0, "sinc cutoff must be positive");
    require(slew_rate_times_t > 0.0, "slew-rate budget must be positive");
    require(t_max > 0.0, "T_max must be positive");
  }
};

namespace detail {

inline double sinc_kernel(double tau, double f_hz, double half_width) {
  if (std::abs(tau) >= half_width) return 0.0;
  const double x = 2.0 * f_hz * tau;
  const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(pi * x) / (pi * x);
  const double window = 0.54 + 0.46 * std::cos(pi * tau / half_width);
  return 2.0 * f_hz * sinc * window;
}

// Integral of the kernel over [a, b] by composite 8-point Gauss-Legendre.
inline double kernel_integral(double a, double b, double f_hz, double half_width) {
  static constexpr double x[4] = {0.1834346424956498, 0.5255324099163290, 0.7966664774136267, 0.9602898564975363};
  static constexpr double w[4] = {0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};
  a = std::max(a, -half_width);
  b = std::min(b, half_width);
  if (b <= a) return 0.0;
  const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) * f_hz * 8.0)));
  const double h = (b - a) / pieces;
  double total = 0.0;
  for (int p = 0; p < pieces; ++p) {
    const double mid = a + (p + 0.5) * h;
    double acc = 0.0;
    for (int k = 0; k < 4; ++k)
      acc += w[k] * (sinc_kernel(mid + 0.5 * h * x[k], f_hz, half_width) + sinc_kernel(mid - 0.5 * h * x[k], f_hz, half_width));
    total += 0.5 * h * acc;
  }
  return total;
}

}  // namespace detail

struct FilterMatrix {
  RealMatrix m;  // n_seg x n_opt
  bool cutoff_warning = false;
};

/// Linear map raw (n_opt) -> resampled (n_seg) phases: zero-order hold input,
/// edge replication, Hamming-windowed sinc of half-width 4/f, sampling at
/// segment midpoints, rows normalised to unit DC gain. With zero_start the
/// first output row is subtracted from every row.
inline FilterMatrix filter_matrix(int n_opt, int n_seg, double total_duration, double cutoff, bool zero_start) {
  require(n_opt >= 2, "filter needs n_opt >= 2");
  require(n_seg >= 1, "filter needs n_seg >= 1");
  require(cutoff > 0.0, "sinc cutoff must be positive");
  require(total_duration >= 0.0, "duration must be non-negative");
  FilterMatrix out;
  out.m = RealMatrix::Zero(n_seg, n_opt);
  const double f_hz = cutoff / (2.0 * pi);
  if (total_duration == 0.0) {
    for (int k = 0; k < n_seg; ++k) out.m(k, std::min(n_opt - 1, (k * n_opt) / n_seg)) = 1.0;
  } else {
    const double half = 4.0 / f_hz;
    const double dt_raw = total_duration / n_opt;
    for (int k = 0; k < n_seg; ++k) {
      const double t = (k + 0.5) * total_duration / n_seg;
      for (int j = 0; j < n_opt; ++j) {
        double lo = j * dt_raw, hi = (j + 1) * dt_raw;
        if (j == 0) lo = -1e300;
        if (j == n_opt - 1) hi = 1e300;
        out.m(k, j) = detail::kernel_integral(t - hi, t - lo, f_hz, half);
      }
      const double s = out.m.row(k).sum();
      out.m.row(k) /= s;
    }
    out.cutoff_warning = f_hz * total_duration < 1.0;
  }
  if (zero_start) {
    const RealVector first = out.m.row(0);
    for (int k = 0; k < n_seg; ++k) out.m.row(k) -= first.transpose();
  }
  return out;
}

inline std::vector<double> filter_and_resample(const std::vector<double>& raw, const PulseConstraints& c,
                                               double total_duration, bool* cutoff_warning = nullptr) {
  c.validate();
  require(static_cast<int>(raw.size()) == c.n_opt, "raw phase count must equal n_opt");
  const FilterMatrix f = filter_matrix(c.n_opt, c.n_seg, total_duration, c.sinc_cutoff, c.zero_start);
  if (cutoff_warning) *cutoff_warning = f.cutoff_warning;
  const RealVector r = Eigen::Map<const RealVector>(raw.data(), c.n_opt);
  const RealVector y = f.m * r;
  return {y.data(), y.data() + y.size()};
}

/// Max_k sum_j |C_kj| with C mapping raw adjacent differences to resampled ones.
inline double difference_gain(const RealMatrix& fm) {
  const auto n_seg = fm.rows(), n_opt = fm.cols();
  if (n_seg < 2) return 0.0;
  // y = M S d with S(j, i) = 1 for i < j: column i of M S is the tail sum of M's columns.
  RealMatrix ms = RealMatrix::Zero(n_seg, n_opt - 1);
  RealVector acc = RealVector::Zero(n_seg);
  for (Eigen::Index i = n_opt - 1; i >= 1; --i) {
    acc += fm.col(i);
    ms.col(i - 1) = acc;
  }
  const RealMatrix c = ms.bottomRows(n_seg - 1) - ms.topRows(n_seg - 1);
  return c.cwiseAbs().rowwise().sum().maxCoeff();
}

/// Bound on raw adjacent differences that keeps both the raw train and every
/// resampled train (T in (0, t_max]) inside the SR x T budget.
inline double raw_difference_limit(const PulseConstraints& c) {
  c.validate();
  const double raw_budget = c.slew_rate_times_t / c.n_opt;
  const double seg_budget = c.slew_rate_times_t / c.n_seg;
  double gain = 0.0;
  for (int k = 1; k <= 24; ++k) {
    const double t = c.t_max * k / 24.0;
    gain = std::max(gain, difference_gain(filter_matrix(c.n_opt, c.n_seg, t, c.sinc_cutoff, c.zero_start).m));
  }
  const double limit = gain > 0.0 ? seg_budget / (1.02 * gain) : raw_budget;
  return std::min(raw_budget, limit);
}

struct ConstraintReport {
  double max_jump = 0.0;     // rad, resampled adjacent segments
  double jump_budget = 0.0;  // rad, SR x T / N_seg
  double max_slew_rate = 0.0;
  double slew_rate_limit = 0.0;
  bool slew_ok = true;
  bool zero_start_ok = true;
  bool duration_ok = true;
  bool segments_ok = true;

  bool compliant() const { return slew_ok && zero_start_ok && duration_ok && segments_ok; }
};

inline ConstraintReport validate_constraints(const SdfPulse& pulse, const PulseConstraints& c) {
  ConstraintReport r;
  const int n = pulse.segments();
  r.segments_ok = n == c.n_seg;
  for (int k = 0; k + 1 < n; ++k) {
    r.max_jump = std::max(r.max_jump, std::abs(pulse.phi_r[k + 1] - pulse.phi_r[k]));
    r.max_jump = std::max(r.max_jump, std::abs(pulse.phi_b[k + 1] - pulse.phi_b[k]));
  }
  r.jump_budget = c.slew_rate_times_t / std::max(n, 1);
  const double t = pulse.duration();
  if (t > 0.0) {
    r.max_slew_rate = r.max_jump / pulse.segment_duration;
    r.slew_rate_limit = c.slew_rate_times_t / t;
  }
  r.slew_ok = r.max_jump <= r.jump_budget * (1.0 + 1e-9) + 1e-12;
  if (c.zero_start && n > 0) r.zero_start_ok = std::abs(pulse.phi_r[0]) <= 1e-12 && std::abs(pulse.phi_b[0]) <= 1e-12;
  r.duration_ok = t <= c.t_max * (1.0 + 1e-12);
  return r;
}

// ---------------------------------------------------------------------------
// Waveform files

inline constexpr int kWaveformFormatVersion = 1;

inline double round_significant(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return std::strtod(buf, nullptr);
}

/// Rounds phases to the 12 significant digits stored on disk.
inline void quantize_phases(SdfPulse& p) {
  for (auto& v : p.phi_r) v = round_significant(v, 12);
  for (auto& v : p.phi_b) v = round_significant(v, 12);
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_waveform(std::ostream& os, const SdfPulse& p) {
  p.validate();
  os << "# sdf waveform\n";
  os << "format_version " << kWaveformFormatVersion << "\n";
  os << "mode " << mode_name(p.mode) << "\n";
  os << "rabi_rate_rad_s " << format_double(p.rabi_rate) << "\n";
  os << "segment_duration_s " << format_double(p.segment_duration) << "\n";
  os << "lamb_dicke_order " << p.lamb_dicke_order << "\n";
  os << "eta " << format_double(p.eta) << "\n";
  os << "segments " << p.segments() << "\n";
  os << "# phi_r phi_b (rad)\n";
  char buf[96];
  for (int k = 0; k < p.segments(); ++k) {
    std::snprintf(buf, sizeof buf, "%.12g %.12g\n", p.phi_r[k], p.phi_b[k]);
    os << buf;
  }
}

inline SdfPulse read_waveform(std::istream& is) {
  SdfPulse p;
  std::string line;
  int version = -1, segments = -1;
  bool have_rabi = false, have_dt = false, have_order = false, have_eta = false, have_mode = false;
  auto bad = [](const std::string& what) { return IoError("malformed waveform: " + what); };
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format_version") {
      ls >> version;
      if (version != kWaveformFormatVersion) throw bad("unsupported format_version " + std::to_string(version));
    } else if (key == "mode") {
      std::string m;
      ls >> m;
      try {
        p.mode = parse_mode(m);
      } catch (const ValidationError&) {
        throw bad("mode '" + m + "'");
      }
      have_mode = true;
    } else if (key == "rabi_rate_rad_s") {
      have_rabi = static_cast<bool>(ls >> p.rabi_rate);
    } else if (key == "segment_duration_s") {
      have_dt = static_cast<bool>(ls >> p.segment_duration);
    } else if (key == "lamb_dicke_order") {
      have_order = static_cast<bool>(ls >> p.lamb_dicke_order);
    } else if (key == "eta") {
      have_eta = static_cast<bool>(ls >> p.eta);
    } else if (key == "segments") {
      ls >> segments;
      if (segments <= 0) throw bad("segment count");
      for (int k = 0; k < segments; ++k) {
        double r = 0, b = 0;
        std::string row;
        do {
          if (!std::getline(is, row)) throw bad("truncated phase table");
        } while (row.empty() || row[0] == '#');
        std::istringstream rs(row);
        if (!(rs >> r >> b)) throw bad("phase row " + std::to_string(k));
        p.phi_r.push_back(r);
        p.phi_b.push_back(b);
      }
    } else {
      throw bad("unknown key '" + key + "'");
    }
  }
  if (version < 0 || segments < 0 || !have_rabi || !have_dt || !have_order || !have_eta || !have_mode)
    throw bad("missing header fields");
  try {
    p.validate();
  } catch (const ValidationError& e) {
    throw bad(e.what());
  }
  return p;
}

inline void save_waveform(const std::string& path, const SdfPulse& p) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  write_waveform(os, p);
  if (!os) throw IoError("write failed for " + path);
}

inline SdfPulse load_waveform(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  return read_waveform(is);
}

}  // namespace gkp

#endif  // GKP_SDF_CONTROL_HPP
