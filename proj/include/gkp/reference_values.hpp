#ifndef GKP_REFERENCE_VALUES_HPP
#define GKP_REFERENCE_VALUES_HPP

// Published reference numbers for the square GKP workbench, in one place.
// Every acceptance comparison and report line reads from here.

#include <array>
#include <string_view>

namespace gkp::reference {

inline constexpr double two_pi = 6.283185307179586;

// --- Codewords (grid Hamiltonian, J/w0 = 5.95, 50 Fock levels)
inline constexpr double codeword_ratio = 5.95;
inline constexpr int codeword_fock = 50;
// [position dB, momentum dB] for +Z, -Z, +X, +Y
inline constexpr std::array<std::array<double, 2>, 4> codeword_squeezing_db = {{
    {8.39, 7.90},
    {8.36, 8.88},
    {7.90, 8.39},
    {8.38, 8.38},
}};
inline constexpr std::array<std::string_view, 4> codeword_squeezing_labels = {"+Z", "-Z", "+X", "+Y"};
inline constexpr double codeword_squeezing_tol_db = 0.05;

// --- Ion and control settings
inline constexpr double eta_x = 0.083;
inline constexpr double eta_y = 0.078;
inline constexpr double rabi_rate = two_pi * 2.4e3;          // rad/s
inline constexpr double rabi_rate_improved = two_pi * 24e3;  // rad/s
inline constexpr double mode_freq_x = two_pi * 1.33e6;       // rad/s
inline constexpr double mode_freq_y = two_pi * 1.51e6;       // rad/s
inline constexpr double sinc_cutoff = two_pi * 35e3;         // rad/s
inline constexpr double dephasing_rate = 18.0;               // 1/s
inline constexpr double dephasing_rate_improved = 5.0;       // 1/s
inline constexpr double thermal_nbar = 0.05;

struct PulseSettings {
  int n_opt;
  int n_seg;
  double slew_rate_times_t;  // rad
};

// State preparation: T_max 2 ms, epsilon 0.05.
inline constexpr double prep_t_max = 2e-3;
inline constexpr double prep_epsilon = 0.05;
inline constexpr PulseSettings prep_pulse{90, 240, two_pi * 60};
// Single-qubit gates: T_max 600 us, epsilon 0.01.
inline constexpr double sq_t_max = 600e-6;
inline constexpr double sq_epsilon = 0.01;
inline constexpr PulseSettings sq_pulse{90, 240, two_pi * 60};
// CZ: U1 (mode y) and U2 (mode x), T_max 2 ms, epsilon 0.05.
inline constexpr double cz_t_max = 2e-3;
inline constexpr double cz_epsilon = 0.05;
inline constexpr PulseSettings cz_pulse_1{30, 120, two_pi * 20};
inline constexpr PulseSettings cz_pulse_2{270, 720, two_pi * 80};
inline constexpr double cz_total_duration = 993e-6;
// Bell preparation: modes (y, x, y), T_max 2 ms, epsilon 0.05.
inline constexpr double bell_t_max = 2e-3;
inline constexpr double bell_epsilon = 0.05;
inline constexpr std::array<PulseSettings, 3> bell_pulses = {{{45, 400, two_pi * 30}, {90, 800, two_pi * 60}, {45, 400, two_pi * 30}}};

// --- Optimised-pulse quality
inline constexpr double prep_fidelity_min = 0.995;
inline constexpr double sq_gate_fidelity_min = 0.998;
inline constexpr double cz_gate_fidelity = 0.990;
inline constexpr double bell_prep_fidelity = 0.984;

// --- Logical readout
inline constexpr int sssd_truncation = 2;
inline constexpr int sssd_single_mode_count = 12;
inline constexpr int sssd_two_mode_count = 168;
inline constexpr int cz_logical_pauli_count = 240;
inline constexpr int cz_sssd_count = 2688;
// Process-fidelity shift from N = 2 to N = 3 (Rx(-pi/2), Rz(-pi/2), T) and CZ.
inline constexpr std::array<double, 3> sssd_shift_single = {2e-3, 2e-5, 4e-4};
inline constexpr double sssd_shift_cz = 5e-3;

// --- Experiment
inline constexpr std::array<double, 3> sq_process_fidelity_experiment = {0.943, 0.960, 0.959};
inline constexpr double cz_process_fidelity_experiment = 0.680;
inline constexpr double bell_state_fidelity_experiment = 0.842;
inline constexpr double bell_state_fidelity_with_dephasing = 0.807;

// --- Error budget (simulated)
inline constexpr std::array<double, 3> sq_process_fidelity_ideal = {0.993, 0.998, 0.999};
inline constexpr double cz_process_fidelity_logical_pauli = 0.955;
inline constexpr double cz_process_fidelity_sssd = 0.992;
inline constexpr double bell_state_fidelity_ideal = 0.971;
inline constexpr double bell_sssd_shift = 0.012;
inline constexpr std::array<double, 3> sq_process_fidelity_dephasing = {0.969, 0.975, 0.982};
inline constexpr double cz_process_fidelity_dephasing_logical_pauli = 0.742;
inline constexpr double cz_process_fidelity_dephasing_sssd = 0.795;
inline constexpr double bell_thermal_error = 0.028;
inline constexpr std::array<double, 3> sq_process_fidelity_improved = {0.994, 0.998, 0.999};
inline constexpr double cz_process_fidelity_improved = 0.987;
inline constexpr double bell_state_fidelity_improved = 0.968;

inline constexpr int noise_trajectories = 1000;

}  // namespace gkp::reference

#endif  // GKP_REFERENCE_VALUES_HPP
