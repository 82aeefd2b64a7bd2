#include <gtest/gtest.h>

#include <random>

#include "gkp/pulse_optimizer.hpp"

using namespace gkp;

namespace {

Ket random_ket(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Ket v(n);
  for (int i = 0; i < n; ++i) v(i) = cplx{g(rng), g(rng)};
  return v / v.norm();
}

// Orthonormal stand-in codewords; only the algebra matters for these tests.
CodewordSet random_codewords(int fock, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CodewordSet cw;
  cw.fock = fock;
  Ket zp = random_ket(fock, rng);
  Ket zm = random_ket(fock, rng);
  zm -= zp.dot(zm) * zp;
  zm /= zm.norm();
  for (Logical l : kAllLogical) {
    const auto v = logical_vector(l);
    Ket s = v(0) * zp + v(1) * zm;
    cw.states[static_cast<int>(l)] = s / s.norm();
  }
  return cw;
}

SdfPulse random_pulse(int mode, int segments, double total, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-pi, pi);
  SdfPulse p = make_pulse(IonParams::shared_eta(), mode, segments, total / segments);
  for (int k = 0; k < segments; ++k) {
    p.phi_r[k] = u(rng);
    p.phi_b[k] = u(rng);
  }
  return p;
}

using FidelityFn = std::function<double(const std::vector<SdfPulse>&, std::vector<BlockGradient>*)>;

// Worst relative error (inf-norm of the difference over inf-norm of the
// finite-difference gradient) over all pulses and parameter kinds.
double gradient_error(const FidelityFn& f, std::vector<SdfPulse> pulses) {
  std::vector<BlockGradient> g;
  f(pulses, &g);
  const double h = 1e-6;
  double err = 0.0, scale = 0.0;
  for (std::size_t b = 0; b < pulses.size(); ++b) {
    for (int side = 0; side < 2; ++side)
      for (int k = 0; k < pulses[b].segments(); ++k) {
        auto& phi = side == 0 ? pulses[b].phi_r : pulses[b].phi_b;
        const double keep = phi[k];
        phi[k] = keep + h;
        const double fp = f(pulses, nullptr);
        phi[k] = keep - h;
        const double fm = f(pulses, nullptr);
        phi[k] = keep;
        const double fd = (fp - fm) / (2 * h);
        const double an = side == 0 ? g[b].d_phi_r(k) : g[b].d_phi_b(k);
        err = std::max(err, std::abs(an - fd));
        scale = std::max(scale, std::abs(fd));
      }
    const double keep = pulses[b].segment_duration;
    const double hd = 1e-6 * keep;
    pulses[b].segment_duration = keep + hd;
    const double fp = f(pulses, nullptr);
    pulses[b].segment_duration = keep - hd;
    const double fm = f(pulses, nullptr);
    pulses[b].segment_duration = keep;
    const double fd = (fp - fm) / (2 * hd) * keep;
    err = std::max(err, std::abs(g[b].d_segment_duration * keep - fd));
  }
  return err / scale;
}

constexpr int kFock = 10;
constexpr int kSegments = 10;
constexpr double kDuration = 150e-6;

}  // namespace

TEST(ChainGradient, StatePrepMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  const CodewordSet cw = random_codewords(kFock, 2);
  const auto pulses = std::vector<SdfPulse>{random_pulse(kModeX, kSegments, kDuration, rng)};
  FidelityFn f = [&](const std::vector<SdfPulse>& p, std::vector<BlockGradient>* g) {
    return fidelity_state_prep(p[0], cw[Logical::PlusZ], g);
  };
  EXPECT_GT(f(pulses, nullptr), 1e-4);
  EXPECT_LT(gradient_error(f, pulses), 1e-4);
}

TEST(ChainGradient, SqGateMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const CodewordSet cw = random_codewords(kFock, 4);
  const auto pulses = std::vector<SdfPulse>{random_pulse(kModeX, kSegments, kDuration, rng)};
  FidelityFn f = [&](const std::vector<SdfPulse>& p, std::vector<BlockGradient>* g) {
    return fidelity_sq_gate(p[0], "Rx(-pi/2)", cw, g);
  };
  EXPECT_LT(gradient_error(f, pulses), 1e-4);
}

TEST(ChainGradient, CzMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const CodewordSet cw = random_codewords(kFock, 6);
  const auto pulses =
      std::vector<SdfPulse>{random_pulse(kModeY, kSegments, kDuration, rng), random_pulse(kModeX, kSegments, kDuration, rng)};
  FidelityFn f = [&](const std::vector<SdfPulse>& p, std::vector<BlockGradient>* g) {
    return fidelity_cz(p[0], p[1], cw, cw, g);
  };
  EXPECT_LT(gradient_error(f, pulses), 1e-4);
}

TEST(ChainGradient, BellMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  const CodewordSet cw = random_codewords(kFock, 8);
  const auto pulses = std::vector<SdfPulse>{random_pulse(kModeY, kSegments, kDuration, rng),
                                            random_pulse(kModeX, kSegments, kDuration, rng),
                                            random_pulse(kModeY, kSegments, kDuration, rng)};
  FidelityFn f = [&](const std::vector<SdfPulse>& p, std::vector<BlockGradient>* g) {
    return fidelity_bell(p[0], p[1], p[2], cw, cw, g);
  };
  EXPECT_LT(gradient_error(f, pulses), 1e-4);
}

TEST(ChainFidelity, MatchesDensePropagator) {
  std::mt19937_64 rng(9);
  const CodewordSet cw = random_codewords(6, 10);
  const SdfPulse p1 = random_pulse(kModeY, 4, kDuration, rng);
  const SdfPulse p2 = random_pulse(kModeX, 4, kDuration, rng);
  const HilbertConfig cfg{6, 2, true};
  const Operator u = sequence_propagator({p1, p2, inverse_pulse(p1)}, cfg);
  const Eigen::MatrixXcd basis = logical_basis_2q(cw, cw);
  const Operator cz = two_level_gate("CZ");
  double expected = 0.0;
  int count = 0;
  for (Logical ly : kAllLogical)
    for (Logical lx : kAllLogical) {
      Eigen::VectorXcd v(4);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) v(2 * a + b) = logical_vector(ly)(a) * logical_vector(lx)(b);
      const Ket in = basis * v, out = basis * (cz * v);
      expected += std::norm(out.dot(u * in));
      ++count;
    }
  EXPECT_NEAR(fidelity_cz(p1, p2, cw, cw), expected / count, 1e-12);
}

TEST(ChainFidelity, GlobalPhaseOfTargetGateIsIrrelevant) {
  std::mt19937_64 rng(11);
  const CodewordSet cw = random_codewords(kFock, 12);
  const SdfPulse p = random_pulse(kModeX, kSegments, kDuration, rng);
  const Operator g = two_level_gate("T");
  EXPECT_NEAR(fidelity_sq_gate(p, g, cw), fidelity_sq_gate(p, Operator(std::exp(I * 0.7) * g), cw), 1e-13);
}

TEST(ChainFidelity, ZeroDurationPreparesTheInitialState) {
  SdfPulse p = make_pulse(IonParams::shared_eta(), kModeX, 5, 0.0);
  Ket vac = Ket::Zero(8);
  vac(0) = 1.0;
  EXPECT_NEAR(fidelity_state_prep(p, vac), 1.0, 1e-15);
}

TEST(GateFidelity, IdealAndDepolarizingLimits) {
  RealMatrix r = pauli_transfer_matrix(two_level_gate("H"));
  EXPECT_NEAR(average_gate_fidelity_from_ptm(r, r), 1.0, 1e-14);
  RealMatrix dep = RealMatrix::Zero(4, 4);
  dep(0, 0) = 1.0;
  EXPECT_NEAR(average_gate_fidelity_from_ptm(r, dep), 0.5, 1e-14);
  RealMatrix r2 = pauli_transfer_matrix(two_level_gate("CZ"));
  RealMatrix dep2 = RealMatrix::Zero(16, 16);
  dep2(0, 0) = 1.0;
  EXPECT_NEAR(average_gate_fidelity_from_ptm(r2, r2), 1.0, 1e-14);
  EXPECT_NEAR(average_gate_fidelity_from_ptm(r2, dep2), 0.25, 1e-14);
}

TEST(GateFidelity, AgreesWithStateAverageForUnitaryLogicalAction) {
  // For a unitary logical block the average gate fidelity equals the mean
  // fidelity over the six Pauli eigenstates (a 2-design).
  const Operator ideal = two_level_gate("Rz(-pi/2)");
  const Operator actual = two_level_gate("Rx(-pi/2)") * two_level_gate("T");
  const Eigen::MatrixXcd basis = Eigen::MatrixXcd::Identity(2, 2);
  double mean = 0.0;
  for (Logical l : kAllLogical) {
    const Eigen::VectorXcd v = logical_vector(l);
    mean += std::norm((ideal * v).dot(actual * v));
  }
  mean /= 6.0;
  EXPECT_NEAR(average_gate_fidelity(actual, ideal, basis), mean, 1e-14);
}

TEST(GateFidelity, EmbeddedIdealGateIsPerfect) {
  const CodewordSet cw = random_codewords(8, 13);
  const Eigen::MatrixXcd b = logical_basis_1q(cw);
  const Operator g = two_level_gate("T");
  const Operator u = b * g * b.adjoint() + (Operator::Identity(b.rows(), b.rows()) - b * b.adjoint());
  EXPECT_NEAR(average_gate_fidelity(u, g, b), 1.0, 1e-12);
}

TEST(Lbfgs, SolvesBoxedRosenbrock) {
  Objective f = [](const RealVector& x, RealVector& g) {
    g.resize(2);
    g(0) = -2 * (1 - x(0)) - 400 * x(0) * (x(1) - x(0) * x(0));
    g(1) = 200 * (x(1) - x(0) * x(0));
    return std::pow(1 - x(0), 2) + 100 * std::pow(x(1) - x(0) * x(0), 2);
  };
  RealVector lo(2), hi(2), x0(2);
  lo << -2, -2;
  hi << 2, 0.5;
  x0 << -1.2, 0.4;
  LbfgsSettings s;
  s.max_iterations = 500;
  s.gtol = 1e-9;
  const auto r = minimize_box(f, x0, lo, hi, s);
  EXPECT_TRUE(r.converged);
  // Constrained optimum lies on y = 0.5.
  EXPECT_NEAR(r.x(1), 0.5, 1e-8);
  EXPECT_NEAR(r.x(0), 0.7071, 2e-3);
  for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_LE(r.history[i].second, r.history[i - 1].second);
}

namespace {

OptimizationProblem small_problem(ProblemKind kind, const std::string& target, bool zero_start) {
  OptimizationProblem p;
  p.kind = kind;
  p.target = target;
  p.fock = 8;
  PulseConstraints c;
  c.n_opt = 6;
  c.n_seg = 12;
  c.slew_rate_times_t = 2 * pi * 20;
  c.zero_start = zero_start;
  c.t_max = 400e-6;
  p.constraints.assign(pulse_count(kind), c);
  p.t_max = 400e-6;
  p.epsilon = 0.05;
  p.settings.restarts = 2;
  p.settings.lbfgs.max_iterations = 30;
  return p;
}

void check_objective_gradient(const OptimizationProblem& prob, std::uint64_t seed) {
  const CodewordSet cw = random_codewords(prob.fock, seed);
  const ProblemObjective obj(prob, cw);
  std::mt19937_64 rng(seed);
  RealVector x = obj.parameterization().random_start(rng, 1.0, 0.6);
  RealVector g;
  obj(x, g);
  const double h = 1e-6;
  double err = 0.0, scale = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    RealVector xp = x, xm = x, dummy;
    xp(i) += h;
    xm(i) -= h;
    const double fd = (obj(xp, dummy) - obj(xm, dummy)) / (2 * h);
    err = std::max(err, std::abs(fd - g(i)));
    scale = std::max(scale, std::abs(fd));
  }
  EXPECT_LT(err / scale, 1e-4) << to_string(prob.kind);
}

}  // namespace

TEST(ProblemObjective, RawParameterGradientThroughFilter) {
  check_objective_gradient(small_problem(ProblemKind::StatePrep, "+Z", true), 21);
  check_objective_gradient(small_problem(ProblemKind::SqGate, "T", false), 22);
  check_objective_gradient(small_problem(ProblemKind::CzGate, "CZ", true), 23);
  check_objective_gradient(small_problem(ProblemKind::BellPrep, "", true), 24);
}

TEST(Optimize, VacuumTargetConvergesImmediately) {
  OptimizationProblem p = small_problem(ProblemKind::StatePrep, "vacuum", true);
  p.settings.restarts = 1;
  const auto r = optimize(p, random_codewords(p.fock, 30), 7);
  EXPECT_GE(r.report.fidelity, 1.0 - 1e-6);
  EXPECT_LE(r.report.iterations, 5);
  EXPECT_TRUE(r.report.converged);
}

TEST(Optimize, ReportIsConsistentAndPulsesAreCompliant) {
  OptimizationProblem p = small_problem(ProblemKind::SqGate, "Rz(-pi/2)", true);
  const CodewordSet cw = random_codewords(p.fock, 31);
  const auto r = optimize(p, cw, 11);
  ASSERT_EQ(r.pulses.size(), 1u);
  const double expected = (1.0 - r.report.fidelity) + p.epsilon * r.report.duration / p.t_max;
  EXPECT_EQ(r.report.cost, expected);
  EXPECT_NEAR(r.report.fidelity, fidelity_sq_gate(r.pulses[0], "Rz(-pi/2)", cw), 1e-15);
  EXPECT_TRUE(validate_constraints(r.pulses[0], p.constraints[0]).compliant());
  EXPECT_LE(r.report.history.back().second, r.report.history.front().second);
}

TEST(Optimize, DeterministicAcrossThreadCounts) {
  OptimizationProblem p = small_problem(ProblemKind::StatePrep, "+Z", true);
  p.settings.restarts = 3;
  const CodewordSet cw = random_codewords(p.fock, 32);
  const auto a = optimize(p, cw, 99);
  p.settings.threads = 3;
  const auto b = optimize(p, cw, 99);
  EXPECT_TRUE(a.pulses == b.pulses);
  EXPECT_EQ(a.report.cost, b.report.cost);
  const auto c = optimize(p, cw, 100);
  EXPECT_FALSE(a.pulses == c.pulses);
}

TEST(Optimize, BudgetExhaustionIsFlagged) {
  OptimizationProblem p = small_problem(ProblemKind::StatePrep, "+Z", true);
  p.settings.restarts = 1;
  p.settings.lbfgs.max_iterations = 1;
  const auto r = optimize(p, random_codewords(p.fock, 33), 5);
  EXPECT_FALSE(r.report.converged);
}

TEST(Optimize, RejectsInvalidProblems) {
  OptimizationProblem p = small_problem(ProblemKind::StatePrep, "+Q", true);
  EXPECT_THROW(p.validate(), ValidationError);
  p = small_problem(ProblemKind::CzGate, "CZ", true);
  p.constraints.pop_back();
  EXPECT_THROW(p.validate(), ValidationError);
  p = small_problem(ProblemKind::SqGate, "CZ", true);
  EXPECT_THROW(p.validate(), ValidationError);
}

namespace {

const CodewordSet& desk_codewords() {
  static const CodewordSet cw = synthesize_codewords(20, {1.0, 3.0});
  return cw;
}

SdfPulse idle_pulse(int mode) { return make_pulse(IonParams::shared_eta(), mode, 3, 0.0); }

}  // namespace

TEST(FidelityExamples, IdlePrepEqualsVacuumWeightOfCodeword) {
  const CodewordSet& cw = desk_codewords();
  const cplx c0 = cw[Logical::PlusZ](0);
  EXPECT_NEAR(fidelity_state_prep(idle_pulse(kModeX), cw[Logical::PlusZ]), std::norm(c0), 1e-12);
  EXPECT_LT(std::norm(c0), 1.0);
}

TEST(FidelityExamples, IdleIdentityGateIsPerfect) {
  EXPECT_NEAR(fidelity_sq_gate(idle_pulse(kModeX), "I", desk_codewords()), 1.0, 1e-12);
}

TEST(FidelityExamples, RxMinusHalfPiTakesPlusZToPlusY) {
  const CodewordSet& cw = desk_codewords();
  const Eigen::VectorXcd v = two_level_gate("Rx(-pi/2)") * logical_vector(Logical::PlusZ);
  const Ket t = detail::logical_state(cw, v);
  EXPECT_NEAR(std::abs(cw[Logical::PlusY].dot(t)), 1.0, 1e-12);
}

TEST(FidelityExamples, CzTakesMinusZPlusXToMinusZMinusX) {
  const CodewordSet& cw = desk_codewords();
  Eigen::VectorXcd v(4);
  const auto vy = logical_vector(Logical::MinusZ), vx = logical_vector(Logical::PlusX);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) v(2 * a + b) = vy(a) * vx(b);
  const Ket t = detail::logical_state2(cw, cw, two_level_gate("CZ") * v);
  const Ket expected = product_ket(cw[Logical::MinusZ], cw[Logical::MinusX]);
  EXPECT_NEAR(std::abs(expected.dot(t)), 1.0, 1e-12);
}

TEST(FidelityExamples, IdleCzIsTheMeanInputTargetOverlap) {
  const CodewordSet cw = random_codewords(12, 40);
  const HilbertConfig cfg{12, 2, true};
  const auto terms = two_qubit_gate_terms(cfg, cw, cw, two_level_gate("CZ"));
  ASSERT_EQ(terms.size(), 36u);
  double mean = 0.0;
  for (const auto& t : terms) mean += std::norm(t.target.dot(t.input));
  mean /= 36.0;
  const double f = fidelity_cz(idle_pulse(kModeY), idle_pulse(kModeX), cw, cw);
  EXPECT_NEAR(f, mean, 1e-12);
  EXPECT_LT(f, 1.0);
}

TEST(FidelityExamples, IdleBellIsTheTwoModeVacuumWeight) {
  const CodewordSet cw = random_codewords(12, 40);
  const Ket bell = bell_target(cw, cw);
  EXPECT_NEAR(bell.norm(), 1.0, 1e-9);
  const double f = fidelity_bell(idle_pulse(kModeY), idle_pulse(kModeX), idle_pulse(kModeY), cw, cw);
  EXPECT_NEAR(f, std::norm(bell(0)), 1e-12);
}

TEST(FidelityExamples, UnknownGateLabelIsRejected) {
  EXPECT_THROW(fidelity_sq_gate(idle_pulse(kModeX), "Q", desk_codewords()), ValidationError);
}
