#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "gkp/noise_sim.hpp"

using namespace gkp;

namespace {

const CodewordSet& desk_codewords() {
  static const CodewordSet cw = synthesize_codewords(20, {1.0, 3.0});
  return cw;
}

SdfPulse random_pulse(int mode, int segments, double total, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-pi, pi);
  SdfPulse p = make_pulse(IonParams::shared_eta(), mode, segments, total / segments);
  for (int k = 0; k < segments; ++k) {
    p.phi_r[k] = u(rng);
    p.phi_b[k] = u(rng);
  }
  return p;
}

SdfPulse idle_pulse(int mode, int segments, double total) {
  SdfPulse p = make_pulse(IonParams::shared_eta(), mode, segments, total / segments);
  p.rabi_rate = 0.0;
  return p;
}

Ket random_ket(int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Ket v(dim);
  for (auto& c : v) c = {n(rng), n(rng)};
  return v / v.norm();
}

ExperimentPipeline idle_sq_pipeline(int trajectories, double duration) {
  ExperimentPipeline p;
  p.kind = PipelineKind::SqGateQpt;
  p.gate = {idle_pulse(kModeX, 25, duration)};
  p.gate_label = "I";
  p.trajectories = trajectories;
  return p;
}

}  // namespace

TEST(NoiseTrajectory, ZeroRateGivesZeros) {
  DephasingModel m;
  m.gamma_rate = 0.0;
  const auto tr = sample_trajectory(m, 50, 1e-6, 9);
  for (int mode : {0, 1})
    for (double e : tr.eps[mode]) EXPECT_EQ(e, 0.0);
}

TEST(NoiseTrajectory, SegmentStatistics) {
  DephasingModel m;
  m.gamma_rate = 18.0;
  const double tau = 2.8e-6;
  const double sigma = dephasing_sigma(m, tau);
  EXPECT_NEAR(sigma, 3585.7, 0.1);
  const auto tr = sample_trajectory(m, 100000, tau, 123);
  for (int mode : {0, 1}) {
    double s2 = 0.0;
    for (double e : tr.eps[mode]) s2 += e * e;
    EXPECT_NEAR(std::sqrt(s2 / 100000.0) / sigma, 1.0, 0.02);
  }
}

TEST(NoiseTrajectory, DeterministicAndUnitSwitch) {
  DephasingModel m;
  const auto a = sample_trajectory(m, 30, 1e-6, 5);
  const auto b = sample_trajectory(m, 30, 1e-6, 5);
  EXPECT_EQ(a.eps, b.eps);
  DephasingModel c = m;
  c.unit = RateUnit::Cyclic;
  EXPECT_NEAR(dephasing_sigma(c, 1e-6) / dephasing_sigma(m, 1e-6), std::sqrt(2.0 * pi), 1e-12);
  m.dephase_y = false;
  const auto only_x = sample_trajectory(m, 30, 1e-6, 5);
  for (double e : only_x.eps[kModeY]) EXPECT_EQ(e, 0.0);
}

TEST(NoiseTrajectory, CorrelationTimeOverride) {
  DephasingModel m;
  m.correlation_time = 1e-5;
  const auto tr = sample_trajectory(m, 20000, 1e-6, 8);
  double s2 = 0.0;
  for (double e : tr.eps[0]) s2 += e * e;
  EXPECT_NEAR(std::sqrt(s2 / 20000.0) / dephasing_sigma(m, 1e-5), 1.0, 0.03);
  EXPECT_THROW(sample_trajectory(DephasingModel{18.0}, 5, 0.0, 1), ValidationError);
}

TEST(NoisyPropagator, ZeroTrajectoryMatchesNoiseless) {
  const HilbertConfig cfg{8, 2, true};
  const SdfPulse p = random_pulse(kModeY, 12, 100e-6, 1);
  DephasingModel m;
  m.gamma_rate = 0.0;
  const auto u = noisy_propagator(p, sample_trajectory(m, p, 1), cfg);
  EXPECT_LT(max_abs(u - pulse_propagator(p, cfg)), 1e-12);
}

TEST(NoisyPropagator, KetApplicationMatchesMatrix) {
  const HilbertConfig cfg{7, 2, true};
  const SdfPulse p = random_pulse(kModeX, 10, 120e-6, 2);
  const DephasingModel m{2000.0};
  const auto tr = sample_trajectory(m, p, 17);
  Ket psi = random_ket(cfg.dim(), 3);
  const Ket expect = noisy_propagator(p, tr, cfg) * psi;
  apply_noisy_pulse(p, tr, cfg, psi);
  EXPECT_LT((psi - expect).norm(), 1e-12);
  EXPECT_LT(unitarity_residual(noisy_propagator(p, tr, cfg)), 1e-10);
}

TEST(NoisyPropagator, IdleModeNoiseLeavesTargetModeUnchanged) {
  const HilbertConfig cfg{10, 2, true};
  const SdfPulse p = random_pulse(kModeX, 10, 150e-6, 4);
  NoiseTrajectory tr;
  tr.eps[kModeX].assign(10, 0.0);
  tr.eps[kModeY].assign(10, 4.0e4);
  const Ket motional = product_ket(random_ket(10, 5), random_ket(10, 6));
  Ket a = with_spin(kSpinDown, motional), b = a;
  apply_noisy_pulse(p, tr, cfg, a);
  apply_pulse(p, cfg, b);
  EXPECT_LT(max_abs(reduced_mode_density(cfg, a, kModeX) - reduced_mode_density(cfg, b, kModeX)), 1e-9);
  EXPECT_GT(max_abs(reduced_mode_density(cfg, a, kModeY) - reduced_mode_density(cfg, b, kModeY)), 1e-3);
}

TEST(NoisyPropagator, DephasingPreservesFockPopulations) {
  const HilbertConfig cfg{9, 2, true};
  const SdfPulse p = idle_pulse(kModeY, 20, 200e-6);
  const auto tr = sample_trajectory(DephasingModel{5000.0}, p, 11);
  Ket psi = random_ket(cfg.dim(), 12);
  const RealVector before = psi.cwiseAbs2();
  apply_noisy_pulse(p, tr, cfg, psi);
  EXPECT_LT((psi.cwiseAbs2() - before).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(NoisyPropagator, LengthMismatchThrows) {
  const HilbertConfig cfg{5, 1, true};
  const SdfPulse p = random_pulse(kModeX, 10, 100e-6, 1);
  const auto tr = sample_trajectory(DephasingModel{}, 9, 1e-5, 1);
  EXPECT_THROW(noisy_propagator(p, tr, cfg), ValidationError);
  Ket psi = random_ket(cfg.dim(), 1);
  EXPECT_THROW(apply_noisy_pulse(p, tr, cfg, psi), ValidationError);
}

TEST(NoisyPropagator, EnsembleMatchesGaussianDephasing) {
  const int n = 6, segments = 10, trajectories = 10000;
  const double tau = 1e-5;
  const DephasingModel m{1e4};
  const HilbertConfig cfg{n, 1, true};
  const SdfPulse p = idle_pulse(kModeX, segments, segments * tau);
  const Ket motional = Ket::Constant(n, 1.0 / std::sqrt(double(n)));
  Operator avg = Operator::Zero(n, n);
  for (int t = 0; t < trajectories; ++t) {
    Ket psi = with_spin(kSpinDown, motional);
    apply_noisy_pulse(p, sample_trajectory(m, p, mix_seed(77, t)), cfg, psi);
    const Ket v = spin_component(psi, kSpinDown);
    avg += v * v.adjoint();
  }
  avg /= double(trajectories);
  const double s2t2 = std::pow(dephasing_sigma(m, tau) * tau, 2);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const double decay = std::exp(-s2t2 * (a - b) * (a - b) * segments / 2.0);
      EXPECT_NEAR(std::abs(avg(a, b) - decay / n), 0.0, 0.03 / n) << a << "," << b;
    }
}

TEST(PlanReadout, MatchesPlanExpectations) {
  const Ket psi = product_ket(desk_codewords()[Logical::PlusX], desk_codewords()[Logical::PlusY]);
  const PlanReadout r(sssd_plan(2, 2), 20);
  const RealVector v = r.expectations(psi);
  const auto ex = pauli_expectations(psi, r.plan());
  for (std::size_t i = 0; i < r.labels().size(); ++i) EXPECT_NEAR(v(i), ex.at(r.labels()[i]), 1e-12);
}

TEST(Pipeline, NoiselessIdentityGivesUnitProcessFidelity) {
  auto p = idle_sq_pipeline(1, 0.0);
  p.gate[0].segment_duration = 0.0;
  const auto r = run_pipeline(p, DephasingModel{0.0}, desk_codewords(), 1);
  EXPECT_NEAR(r.fidelity, 1.0, 1e-6);
  EXPECT_NEAR(r.acceptance, 1.0, 1e-12);
  EXPECT_TRUE(check_chi(r.chi).ok());
}

TEST(Pipeline, AcceptanceBelowOneForEntanglingPulse) {
  auto p = idle_sq_pipeline(2, 0.0);
  p.gate = {random_pulse(kModeX, 20, 150e-6, 3)};
  const auto r = run_pipeline(p, DephasingModel{0.0}, desk_codewords(), 1);
  EXPECT_GT(r.acceptance, 0.0);
  EXPECT_LT(r.acceptance, 1.0);
}

TEST(Pipeline, ZeroAcceptanceIsReported) {
  CodewordSet cw;
  cw.fock = 2;
  for (auto& s : cw.states) s = Ket::Unit(2, 0);
  ExperimentPipeline p;
  p.kind = PipelineKind::BellQst;
  p.trajectories = 1;
  p.readout = PlanKind::LogicalPauli;
  // |down, 0> -> |up, 1>: a blue-sideband pi pulse in a two-level truncation.
  SdfPulse flip = make_pulse(IonParams::shared_eta(), kModeY, 1, pi / reference::rabi_rate, 1);
  p.gate = {flip, make_pulse(IonParams::shared_eta(), kModeX, 1, 0.0), make_pulse(IonParams::shared_eta(), kModeY, 1, 0.0)};
  try {
    run_pipeline(p, DephasingModel{0.0}, cw, 1);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("post-selection probability is zero"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, Validation) {
  auto p = idle_sq_pipeline(0, 100e-6);
  EXPECT_THROW(run_pipeline(p, DephasingModel{}, desk_codewords(), 1), ValidationError);
  p.trajectories = 1;
  p.gate_label = "nope";
  EXPECT_THROW(run_pipeline(p, DephasingModel{}, desk_codewords(), 1), ValidationError);
  ExperimentPipeline cz;
  cz.kind = PipelineKind::CzQpt;
  cz.gate = {idle_pulse(kModeX, 4, 1e-5), idle_pulse(kModeX, 4, 1e-5)};
  EXPECT_THROW(cz.validate(), ValidationError);
}

TEST(Pipeline, IdenticalPrepInputsAreRankDeficient) {
  auto p = idle_sq_pipeline(1, 0.0);
  p.gate[0].segment_duration = 0.0;
  for (auto l : tomography_input_labels()) p.prep[l] = make_pulse(IonParams::shared_eta(), kModeX, 1, 0.0);
  EXPECT_THROW(run_pipeline(p, DephasingModel{0.0}, desk_codewords(), 1), ValidationError);
}

TEST(Pipeline, DeterministicAcrossThreads) {
  auto p = idle_sq_pipeline(12, 200e-6);
  p.gate = {random_pulse(kModeX, 30, 200e-6, 9)};
  const auto a = run_pipeline(p, DephasingModel{}, desk_codewords(), 42);
  const auto b = run_pipeline(p, DephasingModel{}, desk_codewords(), 42);
  p.threads = 3;
  const auto c = run_pipeline(p, DephasingModel{}, desk_codewords(), 42);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.samples, c.samples);
  EXPECT_EQ(a.fidelity, c.fidelity);
  EXPECT_EQ(a.chi, c.chi);
  const auto d = run_pipeline(p, DephasingModel{}, desk_codewords(), 43);
  EXPECT_NE(a.samples, d.samples);
}

TEST(Pipeline, RabiRescalingKeepsNoiselessUnitary) {
  const SdfPulse p = random_pulse(kModeX, 15, 120e-6, 5);
  const HilbertConfig cfg{8, 1, true};
  EXPECT_LT(max_abs(pulse_propagator(rescale_rabi(p, 10.0), cfg) - pulse_propagator(p, cfg)), 1e-10);
}

TEST(Pipeline, FidelityDecreasesWithDephasing) {
  std::vector<BootstrapSummary> s;
  for (double g : {0.0, 5.0, 18.0}) {
    const auto p = idle_sq_pipeline(200, 400e-6);
    const auto r = run_pipeline(p, DephasingModel{g}, desk_codewords(), 2024);
    s.push_back(bootstrap_fidelity(p, desk_codewords(), r, 200, 7));
  }
  EXPECT_NEAR(s[0].estimate, 1.0, 1e-6);
  EXPECT_GT(s[0].estimate, s[1].estimate);
  EXPECT_GT(s[1].estimate, s[2].estimate);
  EXPECT_GT(s[1].lower, s[2].upper);
  EXPECT_GT(s[0].lower, s[1].upper);
}

TEST(Pipeline, BellPipelineNoiseless) {
  ExperimentPipeline p;
  p.kind = PipelineKind::BellQst;
  p.trajectories = 1;
  p.gate = {make_pulse(IonParams::shared_eta(), kModeY, 1, 0.0), make_pulse(IonParams::shared_eta(), kModeX, 1, 0.0),
            make_pulse(IonParams::shared_eta(), kModeY, 1, 0.0)};
  const auto r = run_pipeline(p, DephasingModel{0.0}, desk_codewords(), 1);
  // Vacuum is far from any logical Bell state; the fidelity stays a valid number in [0, 1].
  EXPECT_GE(r.fidelity, 0.0);
  EXPECT_LE(r.fidelity, 1.0);
  EXPECT_EQ(r.output_states.size(), 1u);
  EXPECT_NEAR(r.output_states[0].trace().real(), 1.0, 1e-12);
}

TEST(ErrorBudget, ScenarioFileRoundTrip) {
  const auto s = standard_scenarios(50);
  std::stringstream ss;
  write_scenarios(ss, s);
  const auto back = read_scenarios(ss);
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(back[i].name, s[i].name);
    EXPECT_EQ(back[i].gamma_rate, s[i].gamma_rate);
    EXPECT_EQ(back[i].nbar, s[i].nbar);
    EXPECT_EQ(back[i].rabi_scale, s[i].rabi_scale);
    EXPECT_EQ(back[i].trajectories, s[i].trajectories);
  }
  std::istringstream bad("dephasing 18 0 sssd 2\n");
  EXPECT_THROW(read_scenarios(bad), IoError);
  std::istringstream bad2("x 18 0 magic 2 1 10\n");
  EXPECT_THROW(read_scenarios(bad2), IoError);
}

TEST(ErrorBudget, RowsPerScenario) {
  auto p = idle_sq_pipeline(1, 300e-6);
  std::vector<NoiseScenario> sc = {{"readout", 0.0, 0.0, PlanKind::Sssd, 2, 1.0, 1},
                                   {"dephasing", 18.0, 0.0, PlanKind::Sssd, 2, 1.0, 40},
                                   {"improved", 5.0, 0.0, PlanKind::Sssd, 2, 10.0, 40}};
  const auto rows = error_budget(p, DephasingModel{}, desk_codewords(), sc, 3, 50);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_NEAR(rows[0].fidelity, 1.0, 1e-6);
  EXPECT_LT(rows[1].fidelity, rows[2].fidelity);
  EXPECT_GT(rows[1].std_error, 0.0);
  std::ostringstream os;
  write_budget_table(os, rows, false);
  EXPECT_EQ(os.str().find("wall_seconds"), std::string::npos);
  EXPECT_NE(os.str().find("dephasing\t"), std::string::npos);
}
