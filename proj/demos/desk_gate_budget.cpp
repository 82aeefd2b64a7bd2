// Desk-scale walk-through: codewords, an Rx(-pi/2) pulse, then noisy QPT
// at three dephasing rates.

#include <cstdio>

#include "gkp/noise_sim.hpp"

using namespace gkp;

int main(int argc, char** argv) {
  const int trajectories = argc > 1 ? std::atoi(argv[1]) : 50;
  const CodewordSet cw = synthesize_codewords(20, {1.0, 3.0});
  const auto& s = cw.squeezing_of(Logical::PlusZ);
  std::printf("codewords: fock 20, J/w0 3, +Z squeezing [%.2f, %.2f] dB\n", s.position_db(), s.momentum_db());

  OptimizationProblem prob;
  prob.kind = ProblemKind::SqGate;
  prob.target = "Rx(-pi/2)";
  prob.epsilon = reference::sq_epsilon;
  prob.t_max = reference::sq_t_max;
  PulseConstraints c;
  c.n_opt = 40;
  c.n_seg = 120;
  c.t_max = prob.t_max;
  prob.constraints = {c};
  prob.settings.restarts = 1;
  const auto r = optimize(prob, cw, 1);
  const double fgate = average_gate_fidelity(pulse_propagator(r.pulses[0], {20, 1, true}), two_level_gate(prob.target), cw);
  std::printf("pulse: T = %.1f us, F = %.4f, average gate fidelity %.4f\n", r.report.duration * 1e6, r.report.fidelity, fgate);

  ExperimentPipeline p;
  p.kind = PipelineKind::SqGateQpt;
  p.gate = r.pulses;
  p.gate_label = prob.target;
  p.trajectories = trajectories;
  for (double gamma : {0.0, reference::dephasing_rate_improved, reference::dephasing_rate}) {
    const auto res = run_pipeline(p, DephasingModel{gamma}, cw, 7);
    const auto b = bootstrap_fidelity(p, cw, res, 200, 11);
    std::printf("gamma %5.1f 1/s: process fidelity %.4f +- %.4f (%d trajectories)\n", gamma, res.fidelity, b.std_error,
                trajectories);
  }
}
