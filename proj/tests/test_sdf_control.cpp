#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "gkp/sdf_control.hpp"

using namespace gkp;

namespace {

SdfPulse random_pulse(int mode, int segments, double dt, std::mt19937_64& rng, int order = 3) {
  std::uniform_real_distribution<double> u(-pi, pi);
  SdfPulse p = make_pulse(IonParams{}, mode, segments, dt, order);
  for (int k = 0; k < segments; ++k) {
    p.phi_r[k] = u(rng);
    p.phi_b[k] = u(rng);
  }
  return p;
}

// D(g sigma_x / 2) = |+><+| (x) D(g/2) + |-><-| (x) D(-g/2) in the local basis.
Operator spin_displacement(int n, cplx g) {
  const Operator dp = displacement_matrix(n, 0.5 * g);
  const Operator dm = displacement_matrix(n, -0.5 * g);
  Operator out(2 * n, 2 * n);
  out.topLeftCorner(n, n) = 0.5 * (dp + dm);
  out.bottomRightCorner(n, n) = 0.5 * (dp + dm);
  out.topRightCorner(n, n) = 0.5 * (dp - dm);
  out.bottomLeftCorner(n, n) = 0.5 * (dp - dm);
  return out;
}

}  // namespace

TEST(SdfHamiltonian, ZeroPhaseFirstOrder) {
  const int n = 8;
  const double rabi = 2.0 * pi * 2.4e3;
  const Operator h = local_sdf_hamiltonian(n, rabi, 0.083, 1, 0.0, 0.0);
  const Operator a = annihilation(n);
  const Operator expect = 0.5 * rabi * kron(sigma_x(), a + a.adjoint());
  EXPECT_LT(max_abs(h - expect), 1e-9);
  EXPECT_LT(max_abs(Operator(h.imag().cast<cplx>())), 1e-15);
}

TEST(SdfHamiltonian, HermitianForRandomPhases) {
  std::mt19937_64 rng(1);
  const HilbertConfig cfg{6, 2, true};
  for (int mode = 0; mode < 2; ++mode) {
    const SdfPulse p = random_pulse(mode, 5, 1e-6, rng);
    for (int k = 0; k < 5; ++k) EXPECT_LT(hermiticity_residual(sdf_hamiltonian(p, cfg, k)), 1e-12);
  }
}

TEST(SdfHamiltonian, ThirdOrderCorrectionScalesWithFockLevel) {
  const int n = 30;
  const double eta = 0.083;
  const Operator h1 = local_sdf_hamiltonian(n, 1.0, eta, 1, 0.0, 0.0);
  const Operator h3 = local_sdf_hamiltonian(n, 1.0, eta, 3, 0.0, 0.0);
  for (int level = 1; level < 20; ++level) {
    Ket v = Ket::Zero(2 * n);
    v(n + level) = 1.0;  // |down, level>
    const double ratio = ((h3 - h1) * v).norm() / (h1 * v).norm();
    const double nn = level;
    const double oracle = 0.5 * eta * eta * std::sqrt((nn * nn * nn + (nn + 1) * (nn + 1) * (nn + 1)) / (2 * nn + 1));
    EXPECT_NEAR(ratio, oracle, 1e-12);
    EXPECT_NEAR(ratio / (0.5 * eta * eta * nn), 1.0, 1.0 / nn);
  }
}

TEST(SdfHamiltonian, RejectsSpinlessConfig) {
  SdfPulse p = make_pulse(IonParams{}, kModeX, 3, 1e-6);
  EXPECT_THROW(sdf_hamiltonian(p, {5, 1, false}, 0), ValidationError);
  EXPECT_THROW(sdf_hamiltonian(p, {5, 1, true}, 3), ValidationError);
}

TEST(SdfPropagator, ChiralEigensystemMatchesDenseExponential) {
  std::mt19937_64 rng(2);
  SidebandOperators ops(12, 0.083, 3);
  const Operator k = ops.coupling(1e4, 0.3, -1.1);
  const Operator h = local_hamiltonian_from_coupling(k);
  EXPECT_LT(max_abs(chiral_eigensystem(k).propagator(3e-5) - expm_hermitian(h, 3e-5)), 1e-12);
}

TEST(SdfPropagator, ZeroRabiIsIdentity) {
  std::mt19937_64 rng(3);
  SdfPulse p = random_pulse(kModeX, 10, 2e-6, rng);
  p.rabi_rate = 0.0;
  EXPECT_LT(max_abs(local_pulse_propagator(p, 10) - Operator::Identity(20, 20)), 1e-14);
}

TEST(SdfPropagator, ConstantPulseIsSpinDependentDisplacement) {
  const int n = 40;
  const double rabi = 2.0 * pi * 2.4e3;
  for (double phi_m : {0.0, 0.7, -2.0}) {
    SdfPulse p = make_pulse(IonParams{}, kModeX, 4, 20e-6, 1);
    std::fill(p.phi_r.begin(), p.phi_r.end(), phi_m);
    std::fill(p.phi_b.begin(), p.phi_b.end(), -phi_m);
    const double t = p.duration();
    const cplx gamma = -I * rabi * t * std::exp(-I * phi_m);
    const Operator u = local_pulse_propagator(p, n);
    EXPECT_LT(max_abs(u - spin_displacement(n, gamma)), 1e-6);
    EXPECT_LT(max_abs(u - spin_displacement(n, gamma)), 1e-10);
  }
}

TEST(SdfPropagator, SpinPhaseShiftNegatesDisplacement) {
  const int n = 30;
  SdfPulse p = make_pulse(IonParams{}, kModeX, 3, 15e-6, 1);
  const double phi_m = 0.4;
  std::fill(p.phi_r.begin(), p.phi_r.end(), phi_m + pi);
  std::fill(p.phi_b.begin(), p.phi_b.end(), -phi_m + pi);
  const cplx gamma = -I * p.rabi_rate * p.duration() * std::exp(-I * phi_m);
  EXPECT_LT(max_abs(local_pulse_propagator(p, n) - spin_displacement(n, -gamma)), 1e-10);
}

TEST(SdfPropagator, SplittingSegmentsLeavesPropagatorUnchanged) {
  std::mt19937_64 rng(4);
  const SdfPulse p = random_pulse(kModeX, 6, 4e-6, rng);
  SdfPulse fine = p;
  fine.segment_duration = p.segment_duration / 2;
  fine.phi_r.clear();
  fine.phi_b.clear();
  for (int k = 0; k < p.segments(); ++k)
    for (int r = 0; r < 2; ++r) {
      fine.phi_r.push_back(p.phi_r[k]);
      fine.phi_b.push_back(p.phi_b[k]);
    }
  EXPECT_LT(max_abs(local_pulse_propagator(p, 12) - local_pulse_propagator(fine, 12)), 1e-10);
}

TEST(SdfPropagator, UnitaryAt800Segments) {
  std::mt19937_64 rng(5);
  const SdfPulse p = random_pulse(kModeY, 800, 1.5e-6, rng);
  const Operator u = local_pulse_propagator(p, 20);
  EXPECT_LT(unitarity_residual(u), 1e-8);
}

TEST(SdfPropagator, FullSpaceMatchesPiecewiseSegments) {
  std::mt19937_64 rng(6);
  const HilbertConfig cfg{5, 2, true};
  const SdfPulse p = random_pulse(kModeY, 4, 5e-6, rng);
  std::vector<Segment> segs;
  for (int k = 0; k < p.segments(); ++k) segs.push_back({sdf_hamiltonian(p, cfg, k), p.segment_duration});
  EXPECT_LT(max_abs(pulse_propagator(p, cfg) - propagate_piecewise(segs)), 1e-10);
}

TEST(SdfSequence, InversePulseUndoes) {
  std::mt19937_64 rng(7);
  const HilbertConfig cfg{8, 2, true};
  const SdfPulse p = random_pulse(kModeX, 12, 3e-6, rng);
  const Operator u = sequence_propagator({p, inverse_pulse(p)}, cfg);
  EXPECT_LT(max_abs(u - Operator::Identity(cfg.dim(), cfg.dim())), 1e-6);
}

TEST(SdfSequence, EmptyIsIdentityAndModeChecked) {
  const HilbertConfig cfg{4, 2, true};
  EXPECT_LT(max_abs(sequence_propagator({}, cfg) - Operator::Identity(cfg.dim(), cfg.dim())), 0.0 + 1e-300);
  SdfPulse p = make_pulse(IonParams{}, kModeY, 2, 1e-6);
  EXPECT_THROW(sequence_propagator({p}, HilbertConfig{4, 1, true}), ValidationError);
}

TEST(SdfSequence, CzCompositionDuration) {
  SdfPulse u1 = make_pulse(IonParams{}, kModeY, 120, 1.5e-6);
  SdfPulse u2 = make_pulse(IonParams{}, kModeX, 720, (993e-6 - 2 * u1.duration()) / 720);
  const SdfPulse u3 = inverse_pulse(u1);
  EXPECT_NEAR(u1.duration() + u2.duration() + u3.duration(), 993e-6, 1e-15);
}

TEST(SdfSequence, SharedEtaMakesModesEquivalent) {
  std::mt19937_64 rng(8);
  const IonParams ion = IonParams::shared_eta();
  SdfPulse px = random_pulse(kModeX, 5, 4e-6, rng);
  px.eta = ion.eta(kModeX);
  SdfPulse py = px;
  py.mode = kModeY;
  py.eta = ion.eta(kModeY);
  EXPECT_EQ(max_abs(local_pulse_propagator(px, 10) - local_pulse_propagator(py, 10)), 0.0);
}

TEST(Filter, DcPreservedAndLength) {
  PulseConstraints c;
  c.zero_start = false;
  const std::vector<double> raw(90, 0.7);
  const auto out = filter_and_resample(raw, c, 339e-6);
  ASSERT_EQ(out.size(), 240u);
  for (double v : out) EXPECT_NEAR(v, 0.7, 1e-12);
}

TEST(Filter, ZeroStart) {
  PulseConstraints c;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> raw(90);
  for (auto& v : raw) v = u(rng);
  const auto out = filter_and_resample(raw, c, 339e-6);
  EXPECT_EQ(out[0], 0.0);
}

TEST(Filter, StepResponseStopband) {
  PulseConstraints c;
  c.zero_start = false;
  const double t = 1.2e-3;
  std::vector<double> raw(90, 0.0);
  for (int j = 45; j < 90; ++j) raw[j] = 1.0;
  const auto y = filter_and_resample(raw, c, t);
  // Spectrum of the differenced train (the step's impulse response).
  const int n = static_cast<int>(y.size()) - 1;
  const double dt = t / y.size();
  const double f_c = c.sinc_cutoff / (2 * pi);
  double pass = 0.0, stop = 0.0;
  for (int k = 1; k <= n / 2; ++k) {
    cplx acc = 0.0;
    for (int j = 0; j < n; ++j) acc += (y[j + 1] - y[j]) * std::exp(-2.0 * pi * I * double(k) * double(j) / double(n));
    const double f = k / (n * dt);
    if (f < 0.5 * f_c) pass = std::max(pass, std::abs(acc));
    if (f >= 1.5 * f_c) stop = std::max(stop, std::abs(acc));
  }
  EXPECT_GT(20.0 * std::log10(pass / stop), 20.0);
}

TEST(Filter, CutoffWarning) {
  bool warn = false;
  PulseConstraints c;
  filter_and_resample(std::vector<double>(90, 0.0), c, 10e-6, &warn);
  EXPECT_TRUE(warn);
  filter_and_resample(std::vector<double>(90, 0.0), c, 500e-6, &warn);
  EXPECT_FALSE(warn);
}

TEST(Filter, DifferenceLimitGuaranteesResampledCompliance) {
  PulseConstraints c;
  c.t_max = 600e-6;
  const double lim = raw_difference_limit(c);
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> sgn(0, 1);
  for (double t : {100e-6, 337e-6, 599e-6}) {
    std::vector<double> r(90, 0.0), b(90, 0.0);
    for (int j = 1; j < 90; ++j) {
      r[j] = r[j - 1] + (sgn(rng) ? lim : -lim);
      b[j] = b[j - 1] + lim * ((j / 7) % 2 ? 1 : -1);
    }
    SdfPulse p = make_pulse(IonParams{}, kModeX, 240, t / 240);
    p.phi_r = filter_and_resample(r, c, t);
    p.phi_b = filter_and_resample(b, c, t);
    EXPECT_TRUE(validate_constraints(p, c).compliant()) << t;
  }
}

TEST(Constraints, ZeroPulseCompliant) {
  PulseConstraints c;
  SdfPulse p = make_pulse(IonParams{}, kModeX, 240, 1e-6);
  EXPECT_TRUE(validate_constraints(p, c).compliant());
}

TEST(Constraints, PiJumpViolatesSingleQubitBudget) {
  PulseConstraints c;
  c.slew_rate_times_t = 2 * pi * 60;
  SdfPulse p = make_pulse(IonParams{}, kModeX, 240, 339e-6 / 240);
  for (int k = 120; k < 240; ++k) p.phi_r[k] = pi;
  const auto r = validate_constraints(p, c);
  const double sr = c.slew_rate_times_t / 339e-6;
  EXPECT_EQ(r.slew_ok, pi / (339e-6 / 240) <= sr);
  EXPECT_FALSE(r.slew_ok);
  EXPECT_FALSE(r.compliant());
}

TEST(Constraints, CzBudgetAccepted) {
  PulseConstraints c;
  c.n_opt = 270;
  c.n_seg = 720;
  c.slew_rate_times_t = 2 * pi * 80;
  EXPECT_NO_THROW(c.validate());
  c.slew_rate_times_t = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Waveform, RoundTripIsBitExact) {
  std::mt19937_64 rng(11);
  SdfPulse p = random_pulse(kModeY, 240, 339e-6 / 240, rng);
  quantize_phases(p);
  std::stringstream ss;
  write_waveform(ss, p);
  const SdfPulse q = read_waveform(ss);
  EXPECT_TRUE(p == q);
  std::stringstream s2;
  write_waveform(s2, q);
  std::stringstream s1;
  write_waveform(s1, p);
  EXPECT_EQ(s1.str(), s2.str());
}

TEST(Waveform, RejectsMalformed) {
  std::stringstream ss("format_version 99\n");
  EXPECT_THROW(read_waveform(ss), IoError);
  std::stringstream s2("format_version 1\nmode x\nsegments 2\n0 0\n");
  EXPECT_THROW(read_waveform(s2), IoError);
}
