#ifndef GKP_NOISE_SIM_HPP
#define GKP_NOISE_SIM_HPP

// Monte-Carlo simulation of the experimental sequences under motional
// dephasing eps_j(t) a_j^dag a_j (piecewise constant, i.i.d. normal segment
// values with variance 2 gamma / tau) and thermal initial occupation.
//
// A trajectory runs prep -> post-select |down> -> gate -> post-select ->
// noiseless logical readout. Ensemble averages are taken over the readout
// expectations, which are linear in the state.

#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gkp/logical_measurement.hpp"
#include "gkp/tomography.hpp"

namespace gkp {

// ---------------------------------------------------------------------------
// Dephasing model and trajectories

enum class RateUnit { Angular, Cyclic };

inline std::string to_string(RateUnit u) { return u == RateUnit::Angular ? "angular" : "cyclic"; }
inline RateUnit parse_rate_unit(const std::string& s) {
  if (s == "angular") return RateUnit::Angular;
  if (s == "cyclic") return RateUnit::Cyclic;
  throw ValidationError("unknown rate unit '" + s + "' (angular or cyclic)");
}

struct DephasingModel {
  double gamma_rate = reference::dephasing_rate;  // 1/s
  double correlation_time = 0.0;                  // 0: each pulse's segment duration
  bool dephase_x = true;
  bool dephase_y = true;
  RateUnit unit = RateUnit::Angular;  // cyclic: gamma is multiplied by 2 pi

  void validate() const {
    require(gamma_rate >= 0.0 && std::isfinite(gamma_rate), "dephasing rate must be finite and >= 0");
    require(correlation_time >= 0.0, "correlation time must be >= 0");
  }
  double effective_rate() const { return unit == RateUnit::Angular ? gamma_rate : 2.0 * pi * gamma_rate; }
  bool active(int mode) const { return mode == kModeX ? dephase_x : dephase_y; }
};

inline double dephasing_sigma(const DephasingModel& m, double tau) {
  require(tau > 0.0, "correlation time must be positive");
  return std::sqrt(2.0 * m.effective_rate() / tau);
}

struct NoiseTrajectory {
  std::array<std::vector<double>, 2> eps;  // rad/s per segment, indexed by mode
  std::uint64_t seed = 0;

  int segments() const { return static_cast<int>(eps[0].size()); }
};

/// Draws all mode-x values, then all mode-y values.
inline NoiseTrajectory sample_trajectory(const DephasingModel& model, int segments, double segment_duration,
                                         std::uint64_t seed) {
  model.validate();
  require(segments >= 0, "segment count must be >= 0");
  NoiseTrajectory tr;
  tr.seed = seed;
  tr.eps[0].assign(segments, 0.0);
  tr.eps[1].assign(segments, 0.0);
  if (model.effective_rate() == 0.0 || segments == 0) return tr;
  const double tau = model.correlation_time > 0.0 ? model.correlation_time : segment_duration;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, dephasing_sigma(model, tau));
  for (int mode : {kModeX, kModeY}) {
    if (!model.active(mode)) continue;
    for (auto& e : tr.eps[mode]) e = normal(rng);
  }
  return tr;
}

inline NoiseTrajectory sample_trajectory(const DephasingModel& model, const SdfPulse& pulse, std::uint64_t seed) {
  return sample_trajectory(model, pulse.segments(), pulse.segment_duration, seed);
}

// ---------------------------------------------------------------------------
// Noisy propagation

namespace detail {

inline Operator noisy_local_segment(const SidebandOperators& ops, const SdfPulse& p, int k, double eps) {
  const Operator kk = ops.coupling(p.rabi_rate, p.phi_r[k], p.phi_b[k]);
  if (eps == 0.0) return chiral_eigensystem(kk).propagator(p.segment_duration);
  Operator h = local_hamiltonian_from_coupling(kk);
  const int n = static_cast<int>(kk.rows());
  for (int a = 0; a < n; ++a) {
    h(a, a) += eps * a;
    h(n + a, n + a) += eps * a;
  }
  return HermitianExp(h).propagator(p.segment_duration);
}

inline Eigen::VectorXcd number_phases(int n, double phase) {
  Eigen::VectorXcd v(n);
  for (int a = 0; a < n; ++a) v(a) = std::exp(-I * (phase * a));
  return v;
}

inline void check_trajectory(const SdfPulse& p, const NoiseTrajectory& tr) {
  require(tr.eps[0].size() == tr.eps[1].size(), "trajectory modes have different lengths");
  require(tr.segments() == p.segments(), "trajectory length " + std::to_string(tr.segments()) +
                                             " does not match the pulse segment count " +
                                             std::to_string(p.segments()));
}

}  // namespace detail

/// psi <- U_noisy psi; the idle mode only picks up exp(-i sum(eps) tau n).
inline void apply_noisy_pulse(const SdfPulse& pulse, const NoiseTrajectory& tr, const HilbertConfig& cfg, Ket& psi) {
  pulse.validate();
  detail::check_trajectory(pulse, tr);
  check_mode(cfg, pulse.mode);
  require(cfg.spin, "pulse propagation needs a spin");
  if (pulse.segment_duration == 0.0) return;
  const SidebandOperators ops(cfg.fock, pulse.eta, pulse.lamb_dicke_order);
  Operator view = gather_local(cfg, pulse.mode, psi);
  double idle_phase = 0.0;
  const int other = pulse.mode == kModeX ? kModeY : kModeX;
  for (int k = 0; k < pulse.segments(); ++k) {
    view = detail::noisy_local_segment(ops, pulse, k, tr.eps[pulse.mode][k]) * view;
    idle_phase += tr.eps[other][k] * pulse.segment_duration;
  }
  scatter_local(cfg, pulse.mode, view, psi);
  if (cfg.modes == 2 && idle_phase != 0.0) apply_mode_diagonal(cfg, other, detail::number_phases(cfg.fock, idle_phase), psi);
}

inline Operator noisy_propagator(const SdfPulse& pulse, const NoiseTrajectory& tr, const HilbertConfig& cfg) {
  pulse.validate();
  detail::check_trajectory(pulse, tr);
  check_mode(cfg, pulse.mode);
  require(cfg.spin, "pulse propagation needs a spin");
  const SidebandOperators ops(cfg.fock, pulse.eta, pulse.lamb_dicke_order);
  Operator local = Operator::Identity(2 * cfg.fock, 2 * cfg.fock);
  double idle_phase = 0.0;
  const int other = pulse.mode == kModeX ? kModeY : kModeX;
  if (pulse.segment_duration > 0.0)
    for (int k = 0; k < pulse.segments(); ++k) {
      local = detail::noisy_local_segment(ops, pulse, k, tr.eps[pulse.mode][k]) * local;
      idle_phase += tr.eps[other][k] * pulse.segment_duration;
    }
  Operator u = embed_spin_mode(cfg, local, pulse.mode);
  if (cfg.modes == 2 && idle_phase != 0.0)
    u = embed_mode(cfg, Operator(detail::number_phases(cfg.fock, idle_phase).asDiagonal()), other) * u;
  return u;
}

// ---------------------------------------------------------------------------
// Cached logical readout

/// Displacement matrices of a plan, evaluated once and reused per trajectory.
class PlanReadout {
public:
  PlanReadout(MeasurementPlan plan, int fock) : plan_(std::move(plan)), fock_(fock) {
    for (std::size_t s = 0; s < plan_.size(); ++s) {
      dg_.push_back(detail::displacement_or_identity(fock, plan_.gamma(static_cast<int>(s))));
      const auto d = plan_.delta(static_cast<int>(s));
      dd_.push_back(plan_.modes == 2 ? detail::displacement_or_identity(fock, d.value_or(cplx{0.0, 0.0})) : Operator());
    }
    for (const auto& l : nontrivial_labels(plan_.modes)) labels_.push_back(l.str());
  }

  const MeasurementPlan& plan() const { return plan_; }
  const std::vector<std::string>& labels() const { return labels_; }

  /// Pauli expectations of a normalised motional ket, in nontrivial_labels order.
  RealVector expectations(const Ket& motional) const {
    RealVector samples(plan_.size());
    if (plan_.modes == 1) {
      for (std::size_t s = 0; s < plan_.size(); ++s) samples(s) = motional.dot(dg_[s] * motional).real();
    } else {
      const Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(motional.data(), fock_,
                                                                                                  fock_);
      for (std::size_t s = 0; s < plan_.size(); ++s)
        samples(s) = (m.conjugate().cwiseProduct(dg_[s] * m * dd_[s].transpose())).sum().real();
    }
    RealVector out(labels_.size());
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      double acc = 0.0;
      for (const auto& t : plan_.labels.at(labels_[i])) acc += t.coefficient * samples(t.sample);
      out(i) = acc;
    }
    return out;
  }

  std::map<std::string, double> to_map(const RealVector& v) const {
    std::map<std::string, double> m;
    for (std::size_t i = 0; i < labels_.size(); ++i) m[labels_[i]] = v(i);
    return m;
  }

private:
  MeasurementPlan plan_;
  int fock_;
  std::vector<Operator> dg_, dd_;
  std::vector<std::string> labels_;
};

// ---------------------------------------------------------------------------
// Pipelines

enum class PipelineKind { SqGateQpt, CzQpt, BellQst };

inline std::string to_string(PipelineKind k) {
  switch (k) {
    case PipelineKind::SqGateQpt: return "sq_gate_qpt";
    case PipelineKind::CzQpt: return "cz_qpt";
    case PipelineKind::BellQst: return "bell_qst";
  }
  return "?";
}

inline PipelineKind parse_pipeline_kind(const std::string& s) {
  if (s == "sq_gate_qpt") return PipelineKind::SqGateQpt;
  if (s == "cz_qpt") return PipelineKind::CzQpt;
  if (s == "bell_qst") return PipelineKind::BellQst;
  throw ValidationError("unknown pipeline kind '" + s + "'");
}

inline int pipeline_modes(PipelineKind k) { return k == PipelineKind::SqGateQpt ? 1 : 2; }

enum class PostSelectionWeighting { Equal, Acceptance };

inline std::string to_string(PostSelectionWeighting w) { return w == PostSelectionWeighting::Equal ? "equal" : "acceptance"; }
inline PostSelectionWeighting parse_weighting(const std::string& s) {
  if (s == "equal") return PostSelectionWeighting::Equal;
  if (s == "acceptance") return PostSelectionWeighting::Acceptance;
  throw ValidationError("unknown post-selection weighting '" + s + "'");
}

struct ExperimentPipeline {
  PipelineKind kind = PipelineKind::SqGateQpt;
  std::map<Logical, SdfPulse> prep;  // +Z, -Z, +X, +Y; empty means ideal codeword inputs
  std::vector<SdfPulse> gate;        // sq: {U}; cz: {U1 (y), U2 (x)}, U1^dag appended; bell: {U1, U2, U3}
  std::string gate_label = "I";      // ideal single-qubit gate
  PlanKind readout = PlanKind::Sssd;
  int truncation = reference::sssd_truncation;
  PlanReduction reduction = PlanReduction::ModeParity;
  int trajectories = reference::noise_trajectories;
  double nbar = 0.0;
  double rabi_scale = 1.0;  // Omega -> k Omega with segments shortened by k (same noiseless unitary)
  PostSelectionWeighting weighting = PostSelectionWeighting::Equal;
  int threads = 1;

  void validate() const {
    require(trajectories > 0, "trajectory count must be positive");
    require(nbar >= 0.0, "thermal occupation must be >= 0");
    require(rabi_scale > 0.0, "Rabi scale must be positive");
    require(threads >= 1, "thread count must be >= 1");
    if (readout == PlanKind::Sssd) require(truncation >= 1, "SSSD truncation must be >= 1");
    if (!prep.empty()) {
      require(kind != PipelineKind::BellQst, "Bell pipelines take no prep pulses");
      for (auto l : tomography_input_labels())
        require(prep.count(l) == 1, "prep pulse missing for " + std::string(to_string(l)));
    }
    const std::size_t want = kind == PipelineKind::SqGateQpt ? 1 : kind == PipelineKind::CzQpt ? 2 : 3;
    require(gate.size() == want, to_string(kind) + " needs " + std::to_string(want) + " gate pulse(s)");
    if (kind == PipelineKind::SqGateQpt) (void)two_level_gate(gate_label);
    const std::array<int, 3> bell_modes = {kModeY, kModeX, kModeY};
    for (std::size_t i = 0; i < gate.size(); ++i) {
      gate[i].validate();
      if (kind == PipelineKind::CzQpt)
        require(gate[i].mode == (i == 0 ? kModeY : kModeX), "CZ pulses must act on modes (y, x)");
      if (kind == PipelineKind::BellQst) require(gate[i].mode == bell_modes[i], "Bell pulses must act on modes (y, x, y)");
    }
  }
};

inline MeasurementPlan pipeline_plan(const ExperimentPipeline& p) {
  const int modes = pipeline_modes(p.kind);
  return p.readout == PlanKind::Sssd ? sssd_plan(modes, p.truncation, p.reduction) : logical_pauli_plan(modes);
}

inline SdfPulse rescale_rabi(SdfPulse p, double k) {
  p.rabi_rate *= k;
  p.segment_duration /= k;
  return p;
}

/// Per-trajectory data: row t holds the Pauli expectations of every
/// reconstructed state (inputs then outputs for QPT, the one state for QST).
struct PipelineResult {
  PipelineKind kind = PipelineKind::SqGateQpt;
  int trajectories = 0;
  std::vector<std::string> labels;
  std::vector<std::vector<Logical>> inputs;  // QPT input labels
  RealMatrix samples;                        // trajectories x (states * labels)
  RealVector weights;                        // per-trajectory averaging weights
  double acceptance = 0.0;                   // mean post-selection probability
  std::vector<Operator> input_states;        // ensemble logical densities
  std::vector<Operator> output_states;
  Operator chi;
  double fidelity = 0.0;  // process fidelity (QPT) or Bell state fidelity (QST)
  double wall_seconds = 0.0;
};

namespace detail {

/// Deterministic pairwise weighted sum of rows.
inline RealVector pairwise_row_sum(const RealMatrix& m, const RealVector& w, Eigen::Index lo, Eigen::Index hi) {
  if (hi - lo == 1) return w(lo) * m.row(lo).transpose();
  const Eigen::Index mid = lo + (hi - lo) / 2;
  return pairwise_row_sum(m, w, lo, mid) + pairwise_row_sum(m, w, mid, hi);
}

struct PipelineRunner {
  const ExperimentPipeline& p;
  const DephasingModel& model;
  const CodewordSet& cw;
  const PlanReadout& readout;
  HilbertConfig cfg;
  std::vector<SdfPulse> gate;
  std::map<Logical, SdfPulse> prep;

  PipelineRunner(const ExperimentPipeline& pipe, const DephasingModel& m, const CodewordSet& c, const PlanReadout& r)
      : p(pipe), model(m), cw(c), readout(r), cfg{c.fock, pipeline_modes(pipe.kind), true} {
    for (const auto& g : p.gate) gate.push_back(rescale_rabi(g, p.rabi_scale));
    if (p.kind == PipelineKind::CzQpt) gate.push_back(inverse_pulse(gate[0]));
    for (const auto& [l, s] : p.prep) prep[l] = rescale_rabi(s, p.rabi_scale);
  }

  void run_pulse(const SdfPulse& pulse, std::mt19937_64& rng, Ket& psi) const {
    const NoiseTrajectory tr = sample_trajectory(model, pulse, rng());
    apply_noisy_pulse(pulse, tr, cfg, psi);
  }

  /// Projects onto spin down and renormalises; returns the acceptance probability.
  double post_select(Ket& psi, const std::string& stage) const {
    const auto half = psi.size() / 2;
    const double prob = psi.tail(half).squaredNorm();
    if (!(prob > 1e-14))
      throw ValidationError("post-selection probability is zero after " + stage + " (spin left in |up>, p = " +
                            std::to_string(prob) + ")");
    psi.head(half).setZero();
    psi /= std::sqrt(prob);
    return prob;
  }

  Ket initial(std::mt19937_64& rng) const {
    std::vector<int> occ(cfg.modes, 0);
    if (p.nbar > 0.0) {
      const RealVector pops = thermal_populations(cfg.fock, p.nbar);
      std::discrete_distribution<int> dist(pops.data(), pops.data() + pops.size());
      for (auto& o : occ) o = dist(rng);
    }
    return basis_ket(cfg, kSpinDown, occ);
  }

  Ket ideal_input(const std::vector<Logical>& labels) const {
    if (cfg.modes == 1) return with_spin(kSpinDown, cw[labels[0]]);
    return with_spin(kSpinDown, product_ket(cw[labels[0]], cw[labels[1]]));
  }

  /// Input state for one QPT run; modes prepared y first, then x.
  Ket prepare(const std::vector<Logical>& labels, std::mt19937_64& rng, double& acc) const {
    if (prep.empty()) return ideal_input(labels);
    Ket psi = initial(rng);
    if (cfg.modes == 1) {
      SdfPulse s = prep.at(labels[0]);
      s.mode = kModeX;
      run_pulse(s, rng, psi);
    } else {
      SdfPulse sy = prep.at(labels[0]), sx = prep.at(labels[1]);
      sy.mode = kModeY;
      sx.mode = kModeX;
      run_pulse(sy, rng, psi);
      run_pulse(sx, rng, psi);
    }
    acc *= post_select(psi, "state preparation");
    return psi;
  }

  RealVector read(const Ket& psi) const { return readout.expectations(spin_component(psi, kSpinDown)); }

  /// One row of samples plus its acceptance probability.
  std::pair<RealVector, double> trajectory(std::uint64_t seed, const std::vector<std::vector<Logical>>& inputs) const {
    const auto nl = static_cast<Eigen::Index>(readout.labels().size());
    if (p.kind == PipelineKind::BellQst) {
      std::mt19937_64 rng(seed);
      Ket psi = initial(rng);
      for (const auto& g : gate) run_pulse(g, rng, psi);
      const double acc = post_select(psi, "Bell preparation");
      return {read(psi), acc};
    }
    const auto ni = static_cast<Eigen::Index>(inputs.size());
    RealVector row(2 * ni * nl);
    double acc_total = 1.0;
    for (Eigen::Index i = 0; i < ni; ++i) {
      std::mt19937_64 rng_in(mix_seed(seed, 2 * static_cast<std::uint64_t>(i)));
      std::mt19937_64 rng_out(mix_seed(seed, 2 * static_cast<std::uint64_t>(i) + 1));
      double acc_in = 1.0, acc_out = 1.0;
      row.segment(i * nl, nl) = read(prepare(inputs[i], rng_in, acc_in));
      Ket psi = prepare(inputs[i], rng_out, acc_out);
      for (const auto& g : gate) run_pulse(g, rng_out, psi);
      acc_out *= post_select(psi, "the gate");
      row.segment((ni + i) * nl, nl) = read(psi);
      acc_total *= acc_out;
    }
    return {row, acc_total};
  }
};

}  // namespace detail

/// Logical densities, chi and fidelity from one ensemble-averaged sample row.
inline void evaluate_pipeline_row(const ExperimentPipeline& p, const PlanReadout& readout, const RealVector& mean,
                                  PipelineResult& r) {
  const int modes = pipeline_modes(p.kind);
  const auto nl = static_cast<Eigen::Index>(readout.labels().size());
  auto density = [&](Eigen::Index k) {
    return reconstruct_logical_state(readout.to_map(mean.segment(k * nl, nl)), modes);
  };
  r.input_states.clear();
  r.output_states.clear();
  if (p.kind == PipelineKind::BellQst) {
    r.output_states.push_back(density(0));
    r.fidelity = state_fidelity(project_physical_state(r.output_states[0]), bell_phi_plus());
    return;
  }
  const auto ni = static_cast<Eigen::Index>(r.inputs.size());
  for (Eigen::Index i = 0; i < ni; ++i) {
    r.input_states.push_back(density(i));
    r.output_states.push_back(density(ni + i));
  }
  r.chi = fit_chi(r.input_states, r.output_states).chi;
  const Operator ideal = p.kind == PipelineKind::SqGateQpt ? two_level_gate(p.gate_label) : two_level_gate("CZ");
  r.fidelity = process_fidelity(r.chi, ideal);
}

inline RealVector weighted_mean(const RealMatrix& samples, const RealVector& w) {
  return detail::pairwise_row_sum(samples, w, 0, samples.rows()) / w.sum();
}

inline PipelineResult run_pipeline(const ExperimentPipeline& p, const DephasingModel& model, const CodewordSet& cw,
                                   std::uint64_t master_seed) {
  p.validate();
  model.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const PlanReadout readout(pipeline_plan(p), cw.fock);
  const detail::PipelineRunner runner(p, model, cw, readout);

  PipelineResult r;
  r.kind = p.kind;
  r.trajectories = p.trajectories;
  r.labels = readout.labels();
  if (p.kind != PipelineKind::BellQst) r.inputs = tomography_inputs(pipeline_modes(p.kind));
  const auto states = p.kind == PipelineKind::BellQst ? 1 : 2 * static_cast<Eigen::Index>(r.inputs.size());
  r.samples.resize(p.trajectories, states * static_cast<Eigen::Index>(r.labels.size()));
  RealVector acc(p.trajectories);

  std::vector<std::string> errors(p.threads);
  auto work = [&](int w) {
    try {
      for (int t = w; t < p.trajectories; t += p.threads) {
        auto [row, a] = runner.trajectory(mix_seed(master_seed, static_cast<std::uint64_t>(t)), r.inputs);
        r.samples.row(t) = row.transpose();
        acc(t) = a;
      }
    } catch (const std::exception& e) {
      errors[w] = e.what();
    }
  };
  if (p.threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < p.threads; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (!e.empty()) throw ValidationError(e);

  r.acceptance = acc.mean();
  r.weights = p.weighting == PostSelectionWeighting::Equal ? RealVector(RealVector::Ones(p.trajectories)) : acc;
  evaluate_pipeline_row(p, readout, weighted_mean(r.samples, r.weights), r);
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------
// Bootstrap

struct BootstrapSummary {
  double estimate = 0.0;
  double std_error = 0.0;
  double lower = 0.0;  // percentile interval
  double upper = 0.0;
  int resamples = 0;
};

/// Resamples trajectories with replacement and re-runs the post-processing.
inline BootstrapSummary bootstrap_fidelity(const ExperimentPipeline& p, const CodewordSet& cw, const PipelineResult& r,
                                           int resamples, std::uint64_t seed, double level = 0.95) {
  require(resamples >= 2, "bootstrap needs at least two resamples");
  require(level > 0.0 && level < 1.0, "confidence level must be in (0, 1)");
  const PlanReadout readout(pipeline_plan(p), cw.fock);
  const auto n = r.samples.rows();
  std::vector<double> f(resamples);
  PipelineResult scratch = r;
  for (int b = 0; b < resamples; ++b) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(b)));
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    RealMatrix s(n, r.samples.cols());
    RealVector w(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto j = pick(rng);
      s.row(k) = r.samples.row(j);
      w(k) = r.weights(j);
    }
    evaluate_pipeline_row(p, readout, weighted_mean(s, w), scratch);
    f[b] = scratch.fidelity;
  }
  BootstrapSummary out;
  out.estimate = r.fidelity;
  out.resamples = resamples;
  double mean = 0.0;
  for (double v : f) mean += v;
  mean /= resamples;
  double var = 0.0;
  for (double v : f) var += (v - mean) * (v - mean);
  out.std_error = std::sqrt(var / (resamples - 1));
  std::sort(f.begin(), f.end());
  const double a = 0.5 * (1.0 - level);
  auto quantile = [&](double q) {
    const double pos = q * (resamples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, f.size() - 1);
    return f[lo] + (pos - lo) * (f[hi] - f[lo]);
  };
  out.lower = quantile(a);
  out.upper = quantile(1.0 - a);
  return out;
}

// ---------------------------------------------------------------------------
// Error budget

struct NoiseScenario {
  std::string name;
  double gamma_rate = 0.0;
  double nbar = 0.0;
  PlanKind readout = PlanKind::Sssd;
  int truncation = reference::sssd_truncation;
  double rabi_scale = 1.0;
  int trajectories = reference::noise_trajectories;
};

inline std::vector<NoiseScenario> standard_scenarios(int trajectories = reference::noise_trajectories) {
  return {
      {"readout", 0.0, 0.0, PlanKind::Sssd, 2, 1.0, 1},
      {"dephasing", reference::dephasing_rate, 0.0, PlanKind::Sssd, 2, 1.0, trajectories},
      {"thermal", 0.0, reference::thermal_nbar, PlanKind::Sssd, 2, 1.0, trajectories},
      {"improved", reference::dephasing_rate_improved, 0.0, PlanKind::Sssd, 2,
       reference::rabi_rate_improved / reference::rabi_rate, trajectories},
  };
}

struct BudgetRow {
  std::string scenario;
  double fidelity = 0.0;
  double std_error = 0.0;
  int trajectories = 0;
  double acceptance = 0.0;
  double wall_seconds = 0.0;
};

inline std::vector<BudgetRow> error_budget(const ExperimentPipeline& base, const DephasingModel& model,
                                           const CodewordSet& cw, const std::vector<NoiseScenario>& scenarios,
                                           std::uint64_t master_seed, int bootstrap_resamples = 200) {
  std::vector<BudgetRow> rows;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const auto& s = scenarios[i];
    ExperimentPipeline p = base;
    p.nbar = s.nbar;
    p.readout = s.readout;
    p.truncation = s.truncation;
    p.rabi_scale = s.rabi_scale;
    p.trajectories = s.trajectories;
    DephasingModel m = model;
    m.gamma_rate = s.gamma_rate;
    const std::uint64_t seed = mix_seed(master_seed, i);
    const PipelineResult r = run_pipeline(p, m, cw, seed);
    BudgetRow row{s.name, r.fidelity, 0.0, r.trajectories, r.acceptance, r.wall_seconds};
    if (r.trajectories > 1 && bootstrap_resamples >= 2)
      row.std_error = bootstrap_fidelity(p, cw, r, bootstrap_resamples, mix_seed(seed, 0xB007)).std_error;
    rows.push_back(row);
  }
  return rows;
}

inline void write_budget_table(std::ostream& os, const std::vector<BudgetRow>& rows, bool with_timing = true) {
  os << "# scenario\tfidelity\tstderr\ttrajectories\tacceptance" << (with_timing ? "\twall_seconds" : "") << '\n';
  os << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.scenario << '\t' << r.fidelity << '\t' << r.std_error << '\t' << r.trajectories << '\t' << r.acceptance;
    if (with_timing) os << '\t' << r.wall_seconds;
    os << '\n';
  }
}

/// Scenario file: one scenario per line,
/// "name gamma_rate nbar readout truncation rabi_scale trajectories"; '#' comments.
inline std::vector<NoiseScenario> read_scenarios(std::istream& is) {
  std::vector<NoiseScenario> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    NoiseScenario s;
    std::string readout;
    if (!(ls >> s.name)) continue;
    if (!(ls >> s.gamma_rate >> s.nbar >> readout >> s.truncation >> s.rabi_scale >> s.trajectories))
      throw IoError("scenario line " + std::to_string(lineno) + ": expected 7 fields");
    if (readout == "sssd")
      s.readout = PlanKind::Sssd;
    else if (readout == "logical_pauli")
      s.readout = PlanKind::LogicalPauli;
    else
      throw IoError("scenario line " + std::to_string(lineno) + ": unknown readout '" + readout + "'");
    if (s.gamma_rate < 0 || s.nbar < 0 || s.rabi_scale <= 0 || s.trajectories <= 0)
      throw IoError("scenario line " + std::to_string(lineno) + ": values out of range");
    out.push_back(s);
  }
  return out;
}

inline void write_scenarios(std::ostream& os, const std::vector<NoiseScenario>& scenarios) {
  os << "# name gamma_rate nbar readout truncation rabi_scale trajectories\n" << std::setprecision(17);
  for (const auto& s : scenarios)
    os << s.name << ' ' << s.gamma_rate << ' ' << s.nbar << ' '
       << (s.readout == PlanKind::Sssd ? "sssd" : "logical_pauli") << ' ' << s.truncation << ' ' << s.rabi_scale << ' '
       << s.trajectories << '\n';
}

}  // namespace gkp

#endif  // GKP_NOISE_SIM_HPP
