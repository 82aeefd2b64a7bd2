#ifndef GKP_IO_WORKBENCH_HPP
#define GKP_IO_WORKBENCH_HPP

// Run manifests, result bundles and the workbench commands
// (synthesize-codewords, optimize, simulate, tomography, report).
//
// A manifest is JSON with every parameter resolved. A bundle is a directory
// holding manifest.json, text artifacts, checksums.sha256 over both, and an
// unchecksummed timing.json.

#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gkp/noise_sim.hpp"
#include "gkp/pulse_optimizer.hpp"
#include "gkp/tomography.hpp"

namespace gkp::io {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

enum class ExitCode : int { Ok = 0, Validation = 2, Convergence = 3, Io = 4 };

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw IoError("SHA-256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << s;
  if (!out) throw IoError("write failed for " + p.string());
}

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw IoError(what + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Bundles

struct Bundle {
  Json manifest;
  std::map<std::string, std::string> artifacts;  // relative path -> content
  Json timing = Json::object();
  bool converged = true;

  std::string manifest_text() const { return manifest.dump(2) + "\n"; }

  std::string checksums() const {
    std::map<std::string, std::string> all = artifacts;
    all["manifest.json"] = manifest_text();
    std::string out;
    for (const auto& [name, content] : all) out += sha256_hex(content) + "  " + name + "\n";
    return out;
  }

  const std::string& artifact(const std::string& name) const {
    auto it = artifacts.find(name);
    if (it == artifacts.end()) throw IoError("bundle has no artifact " + name);
    return it->second;
  }
};

inline void write_bundle(const Bundle& b, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "manifest.json", b.manifest_text());
  for (const auto& [name, content] : b.artifacts) {
    const auto path = dir / name;
    std::filesystem::create_directories(path.parent_path(), ec);
    write_text(path, content);
  }
  write_text(dir / "checksums.sha256", b.checksums());
  write_text(dir / "timing.json", b.timing.dump(2) + "\n");
}

/// Loads a bundle and verifies every checksum.
inline Bundle read_bundle(const std::filesystem::path& dir) {
  Bundle b;
  const std::string manifest = read_text(dir / "manifest.json");
  b.manifest = parse_json(manifest, (dir / "manifest.json").string());
  std::istringstream sums(read_text(dir / "checksums.sha256"));
  std::string line;
  while (std::getline(sums, line)) {
    if (line.empty()) continue;
    const auto sep = line.find("  ");
    if (sep == std::string::npos) throw IoError("malformed checksum line: " + line);
    const std::string digest = line.substr(0, sep), name = line.substr(sep + 2);
    const std::string content = read_text(dir / name);
    if (sha256_hex(content) != digest) throw IoError("checksum mismatch for " + (dir / name).string());
    if (name != "manifest.json") b.artifacts[name] = content;
  }
  if (std::filesystem::exists(dir / "timing.json")) b.timing = parse_json(read_text(dir / "timing.json"), "timing.json");
  return b;
}

// ---------------------------------------------------------------------------
// Manifest resolution

/// Overlays `user` onto `defaults`; keys absent from the defaults are rejected.
/// Arrays and values whose default is null are replaced wholesale.
inline void overlay(Json& defaults, const Json& user, const std::string& path = "") {
  if (!user.is_object()) throw ValidationError("manifest section '" + path + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.contains(it.key())) throw ValidationError("unknown manifest key '" + key + "'");
    Json& d = defaults[it.key()];
    const Json& v = it.value();
    const bool same_type = d.is_null() || (d.is_number() && v.is_number()) || d.type() == v.type();
    if (!same_type) throw ValidationError("manifest key '" + key + "' expects " + d.type_name() + ", got " + v.type_name());
    if (d.is_number_integer() && v.is_number_float() && v.get<double>() != std::floor(v.get<double>()))
      throw ValidationError("manifest key '" + key + "' expects an integer");
    if (d.is_object() && !d.empty() && it.value().is_object())
      overlay(d, it.value(), key);
    else
      d = it.value();
  }
}

enum class Preset { Desk, Paper };

inline Preset parse_preset(const std::string& s) {
  if (s == "desk") return Preset::Desk;
  if (s == "paper") return Preset::Paper;
  throw ValidationError("unknown preset '" + s + "' (desk or paper)");
}
inline std::string to_string(Preset p) { return p == Preset::Desk ? "desk" : "paper"; }

inline Json codeword_defaults(Preset p) {
  return p == Preset::Desk ? Json{{"ratio", 3.0}, {"omega0", 1.0}, {"fock", 20}}
                           : Json{{"ratio", reference::codeword_ratio}, {"omega0", 1.0}, {"fock", reference::codeword_fock}};
}

inline Json pulse_json(int n_opt, int n_seg, double srt, double t_max) {
  return {{"n_opt", n_opt},
          {"n_seg", n_seg},
          {"slew_rate_times_t", srt},
          {"sinc_cutoff", reference::sinc_cutoff},
          {"zero_start", true},
          {"t_max", t_max}};
}

inline Json optimize_defaults(Preset preset, ProblemKind kind) {
  const bool desk = preset == Preset::Desk;
  Json pulses = Json::array();
  double eps = 0.0, t_max = 0.0;
  int desk_iterations = 200;
  Json fidelity_target = nullptr;
  std::string target;
  const double srt = reference::prep_pulse.slew_rate_times_t;
  switch (kind) {
    case ProblemKind::StatePrep:
      t_max = reference::prep_t_max;
      eps = desk ? 0.01 : reference::prep_epsilon;
      target = "+Z";
      desk_iterations = 400;
      if (desk) fidelity_target = 0.98;
      pulses.push_back(desk ? pulse_json(40, 120, srt, t_max)
                            : pulse_json(reference::prep_pulse.n_opt, reference::prep_pulse.n_seg, srt, t_max));
      break;
    case ProblemKind::SqGate:
      t_max = reference::sq_t_max;
      eps = reference::sq_epsilon;
      target = "Rx(-pi/2)";
      if (desk) fidelity_target = 0.99;
      pulses.push_back(desk ? pulse_json(40, 120, srt, t_max)
                            : pulse_json(reference::sq_pulse.n_opt, reference::sq_pulse.n_seg, srt, t_max));
      break;
    case ProblemKind::CzGate: {
      t_max = reference::cz_t_max;
      eps = reference::cz_epsilon;
      target = "CZ";
      const auto& a = reference::cz_pulse_1;
      const auto& b = reference::cz_pulse_2;
      if (desk) {
        pulses.push_back(pulse_json(20, 60, a.slew_rate_times_t, t_max));
        pulses.push_back(pulse_json(60, 180, b.slew_rate_times_t, t_max));
      } else {
        pulses.push_back(pulse_json(a.n_opt, a.n_seg, a.slew_rate_times_t, t_max));
        pulses.push_back(pulse_json(b.n_opt, b.n_seg, b.slew_rate_times_t, t_max));
      }
      break;
    }
    case ProblemKind::BellPrep:
      t_max = reference::bell_t_max;
      eps = reference::bell_epsilon;
      target = "bell_phi_plus";
      for (const auto& s : reference::bell_pulses)
        pulses.push_back(desk ? pulse_json(s.n_opt / 3, s.n_seg / 4, s.slew_rate_times_t, t_max)
                              : pulse_json(s.n_opt, s.n_seg, s.slew_rate_times_t, t_max));
      break;
  }
  const IonParams ion = IonParams::shared_eta();
  return {{"kind", to_string(kind)},
          {"target", target},
          {"epsilon", eps},
          {"t_max", t_max},
          {"lamb_dicke_order", 3},
          {"codewords", codeword_defaults(preset)},
          {"ion", {{"eta_x", ion.eta_x}, {"eta_y", ion.eta_y}, {"rabi_rate", ion.rabi_rate}}},
          {"pulses", pulses},
          {"optimizer",
           {{"restarts", desk ? 1 : 4},
            {"iterations", desk ? desk_iterations : 2000},
            {"init_tau", 0.5},
            {"init_phase_range", pi / 4},
            {"warmup_fraction", 0.3},
            {"memory", 10},
            {"gtol", 1e-7},
            {"ftol", 1e-10},
            {"patience", 3},
            {"initial_step", 0.05},
            {"max_seconds", 0.0}}},
          {"fidelity_target", fidelity_target}};
}

inline Json simulate_defaults(Preset preset, PipelineKind kind) {
  const int trajectories = preset == Preset::Desk ? 100 : reference::noise_trajectories;
  return {{"pipeline",
           {{"kind", to_string(kind)},
            {"gate_label", kind == PipelineKind::SqGateQpt ? "Rx(-pi/2)" : kind == PipelineKind::CzQpt ? "CZ" : "bell_phi_plus"},
            {"readout", kind == PipelineKind::CzQpt ? "logical_pauli" : "sssd"},
            {"truncation", reference::sssd_truncation},
            {"reduction", "mode_parity"},
            {"trajectories", trajectories},
            {"nbar", 0.0},
            {"rabi_scale", 1.0},
            {"weighting", "equal"}}},
          {"noise",
           {{"gamma_rate", reference::dephasing_rate},
            {"unit", "angular"},
            {"correlation_time", 0.0},
            {"dephase_x", true},
            {"dephase_y", true}}},
          {"codewords", codeword_defaults(preset)},
          {"inputs", {{"codewords", ""}, {"prep", Json::object()}, {"gate", Json::array()}}},
          {"bootstrap_resamples", 200},
          {"scenarios", Json::array()}};
}

inline Json synthesize_defaults(Preset preset) {
  Json c = codeword_defaults(preset);
  c["wigner"] = {{"half_width", 5.0}, {"points", 41}};
  return c;
}

inline Json tomography_defaults() {
  return {{"qubits", 1}, {"ideal_gate", ""}, {"target_state", ""}, {"inputs", {{"expectations", ""}}}};
}

struct RunManifest {
  std::string command;
  std::uint64_t seed = 1;
  Preset preset = Preset::Desk;
  Json parameters;

  Json to_json() const {
    return {{"format_version", kFormatVersion},
            {"command", command},
            {"preset", to_string(preset)},
            {"seed", seed},
            {"parameters", parameters}};
  }
};

inline RunManifest manifest_from_json(const Json& j) {
  try {
    RunManifest m;
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion)
      throw ValidationError("manifest format_version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kFormatVersion) + ")");
    m.command = j.at("command").get<std::string>();
    m.preset = parse_preset(j.at("preset").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.parameters = j.at("parameters");
    return m;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
}

/// Defaults for the command and preset with the user's parameters overlaid.
inline RunManifest resolve_manifest(const std::string& command, Preset preset, const Json& user_parameters,
                                    std::uint64_t seed) {
  RunManifest m;
  m.command = command;
  m.preset = preset;
  m.seed = seed;
  if (command == "synthesize-codewords") {
    m.parameters = synthesize_defaults(preset);
  } else if (command == "optimize") {
    const auto kind = parse_problem_kind(user_parameters.value("kind", std::string("state_prep")));
    m.parameters = optimize_defaults(preset, kind);
  } else if (command == "simulate") {
    std::string kind = "sq_gate_qpt";
    if (user_parameters.contains("pipeline")) kind = user_parameters["pipeline"].value("kind", kind);
    m.parameters = simulate_defaults(preset, parse_pipeline_kind(kind));
  } else if (command == "tomography") {
    m.parameters = tomography_defaults();
  } else {
    throw ValidationError("unknown command '" + command + "'");
  }
  if (!user_parameters.is_null()) overlay(m.parameters, user_parameters);
  return m;
}

// ---------------------------------------------------------------------------
// Text artifacts

namespace detail {

inline std::ostringstream text_stream() {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "# format_version " << kFormatVersion << "\n";
  return os;
}

template <class T>
T get(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("manifest parameter '") + key + "': " + e.what());
  }
}

inline std::string logical_file_tag(Logical l) {
  static const std::array<const char*, 6> tags = {"plus_z", "minus_z", "plus_x", "minus_x", "plus_y", "minus_y"};
  return tags[static_cast<int>(l)];
}

inline std::string pauli_name(int index, int qubits) {
  static const char* p = "IXYZ";
  if (qubits == 1) return std::string(1, p[index]);
  return std::string{p[index / 4], p[index % 4]};
}

}  // namespace detail

inline std::string write_codewords(const CodewordSet& cw) {
  auto os = detail::text_stream();
  os << "# ratio " << cw.params.ratio() << " omega0 " << cw.params.omega0 << " fock " << cw.fock << "\n";
  os << "# state n re im\n";
  for (Logical l : kAllLogical)
    for (int n = 0; n < cw.fock; ++n) os << to_string(l) << ' ' << n << ' ' << cw[l](n).real() << ' ' << cw[l](n).imag() << '\n';
  return os.str();
}

/// Restores the six states (diagnostics and squeezing are recomputed).
inline CodewordSet read_codewords(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  CodewordSet cw;
  int version = -1;
  std::map<std::string, std::vector<std::pair<int, cplx>>> rows;
  while (std::getline(is, line)) {
    if (line.rfind("# format_version", 0) == 0) {
      version = std::stoi(line.substr(17));
      continue;
    }
    if (line.rfind("# ratio", 0) == 0) {
      std::istringstream ls(line.substr(2));
      std::string k;
      double ratio = 0.0;
      ls >> k >> ratio >> k >> cw.params.omega0 >> k >> cw.fock;
      cw.params.J = ratio * cw.params.omega0;
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string label;
    int n;
    double re, im;
    if (!(ls >> label >> n >> re >> im)) throw IoError("malformed codeword line: " + line);
    rows[label].push_back({n, {re, im}});
  }
  if (version != kFormatVersion) throw IoError("codeword file has unsupported format_version");
  if (cw.fock <= 0) throw IoError("codeword file lacks the fock header");
  for (Logical l : kAllLogical) {
    auto it = rows.find(std::string(to_string(l)));
    if (it == rows.end() || static_cast<int>(it->second.size()) != cw.fock)
      throw IoError("codeword file lacks amplitudes for " + std::string(to_string(l)));
    Ket v = Ket::Zero(cw.fock);
    for (const auto& [n, c] : it->second) {
      if (n < 0 || n >= cw.fock) throw IoError("Fock index out of range in codeword file");
      v(n) = c;
    }
    cw.states[static_cast<int>(l)] = v;
    cw.squeezing[static_cast<int>(l)] = squeezing_from_stabilizers(v);
  }
  return cw;
}

inline std::string write_squeezing_table(const CodewordSet& cw, bool with_reference) {
  auto os = detail::text_stream();
  os << "# state position_db momentum_db" << (with_reference ? " ref_position_db ref_momentum_db" : "") << "\n";
  const std::array<Logical, 4> order = {Logical::PlusZ, Logical::MinusZ, Logical::PlusX, Logical::PlusY};
  os << std::setprecision(6);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& s = cw.squeezing_of(order[i]);
    os << to_string(order[i]) << ' ' << s.position_db() << ' ' << s.momentum_db();
    if (with_reference)
      os << ' ' << reference::codeword_squeezing_db[i][0] << ' ' << reference::codeword_squeezing_db[i][1];
    os << '\n';
  }
  return os.str();
}

inline std::string write_wigner_grid(const Ket& state, double half_width, int points) {
  const auto grid = square_grid(half_width, points);
  const auto w = wigner_function(state, grid);
  auto os = detail::text_stream();
  os << "# x p W\n";
  for (std::size_t i = 0; i < grid.size(); ++i) os << grid[i].x << ' ' << grid[i].p << ' ' << w[i] << '\n';
  return os.str();
}

/// chi bar-chart data: one row per element, real and imaginary parts split.
inline std::string write_chi_table(const Operator& chi) {
  const int qubits = chi.rows() == 4 ? 1 : 2;
  auto os = detail::text_stream();
  os << "# m n label_m label_n re im\n";
  for (int m = 0; m < chi.rows(); ++m)
    for (int n = 0; n < chi.cols(); ++n)
      os << m << ' ' << n << ' ' << detail::pauli_name(m, qubits) << ' ' << detail::pauli_name(n, qubits) << ' '
         << chi(m, n).real() << ' ' << chi(m, n).imag() << '\n';
  return os.str();
}

inline Operator read_chi_table(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<std::tuple<int, int, cplx>> entries;
  int dim = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int m, n;
    std::string a, b;
    double re, im;
    if (!(ls >> m >> n >> a >> b >> re >> im)) throw IoError("malformed chi line: " + line);
    entries.emplace_back(m, n, cplx{re, im});
    dim = std::max({dim, m + 1, n + 1});
  }
  if (dim != 4 && dim != 16) throw IoError("chi table must be 4 x 4 or 16 x 16");
  Operator chi = Operator::Zero(dim, dim);
  for (const auto& [m, n, v] : entries) chi(m, n) = v;
  return chi;
}

/// Logical density matrices, one block per state.
inline std::string write_states_table(const std::vector<std::pair<std::string, Operator>>& states) {
  auto os = detail::text_stream();
  os << "# state row col re im\n";
  for (const auto& [name, rho] : states)
    for (int r = 0; r < rho.rows(); ++r)
      for (int c = 0; c < rho.cols(); ++c) os << name << ' ' << r << ' ' << c << ' ' << rho(r, c).real() << ' ' << rho(r, c).imag() << '\n';
  return os.str();
}

/// Pauli bar data Tr(rho E) for every Pauli label.
inline std::string write_pauli_bars(const Operator& rho) {
  const int qubits = qubits_for_dim(rho.rows());
  const auto basis = pauli_basis(qubits);
  auto os = detail::text_stream();
  os << "# label value\n";
  for (std::size_t i = 0; i < basis.size(); ++i)
    os << detail::pauli_name(static_cast<int>(i), qubits) << ' ' << (rho * basis[i]).trace().real() << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands

inline CodewordSet codewords_from(const Json& c) {
  const double ratio = detail::get<double>(c, "ratio");
  const double omega0 = detail::get<double>(c, "omega0");
  const int fock = detail::get<int>(c, "fock");
  require(ratio > 0.0 && omega0 > 0.0, "J/omega0 and omega0 must be positive");
  require(fock >= 2, "fock truncation must be at least 2");
  return synthesize_codewords(fock, {omega0, ratio * omega0});
}

inline Bundle cmd_synthesize_codewords(const RunManifest& m) {
  const auto t0 = std::chrono::steady_clock::now();
  const Json& p = m.parameters;
  const CodewordSet cw = codewords_from(p);
  const double half = detail::get<double>(p.at("wigner"), "half_width");
  const int points = detail::get<int>(p.at("wigner"), "points");
  require(half > 0.0 && points >= 2, "Wigner grid needs half_width > 0 and at least 2 points");
  Bundle b;
  b.manifest = m.to_json();
  const bool paper_settings = p.at("ratio").get<double>() == reference::codeword_ratio &&
                              p.at("fock").get<int>() == reference::codeword_fock;
  b.artifacts["codewords.tsv"] = write_codewords(cw);
  b.artifacts["squeezing.tsv"] = write_squeezing_table(cw, paper_settings);
  Json diag = {{"lowest_energies", std::vector<double>(cw.diagnostics.lowest_energies.data(),
                                                       cw.diagnostics.lowest_energies.data() +
                                                           cw.diagnostics.lowest_energies.size())},
               {"gap_ratio", cw.diagnostics.gap_ratio},
               {"truncation_defect", cw.diagnostics.truncation_defect},
               {"tail_weight", cw.diagnostics.tail_weight}};
  b.artifacts["diagnostics.json"] = diag.dump(2) + "\n";
  for (Logical l : {Logical::PlusZ, Logical::MinusZ, Logical::PlusX, Logical::PlusY})
    b.artifacts["wigner_" + detail::logical_file_tag(l) + ".tsv"] = write_wigner_grid(cw[l], half, points);
  b.timing["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return b;
}

inline OptimizationProblem problem_from(const Json& p, int threads) {
  OptimizationProblem prob;
  prob.kind = parse_problem_kind(detail::get<std::string>(p, "kind"));
  prob.target = detail::get<std::string>(p, "target");
  prob.epsilon = detail::get<double>(p, "epsilon");
  prob.t_max = detail::get<double>(p, "t_max");
  prob.lamb_dicke_order = detail::get<int>(p, "lamb_dicke_order");
  const Json& c = p.at("codewords");
  prob.fock = detail::get<int>(c, "fock");
  prob.grid = {detail::get<double>(c, "omega0"), detail::get<double>(c, "ratio") * detail::get<double>(c, "omega0")};
  const Json& ion = p.at("ion");
  prob.ion.eta_x = detail::get<double>(ion, "eta_x");
  prob.ion.eta_y = detail::get<double>(ion, "eta_y");
  prob.ion.rabi_rate = detail::get<double>(ion, "rabi_rate");
  for (const auto& j : p.at("pulses")) {
    PulseConstraints pc;
    pc.n_opt = detail::get<int>(j, "n_opt");
    pc.n_seg = detail::get<int>(j, "n_seg");
    pc.slew_rate_times_t = detail::get<double>(j, "slew_rate_times_t");
    pc.sinc_cutoff = detail::get<double>(j, "sinc_cutoff");
    pc.zero_start = detail::get<bool>(j, "zero_start");
    pc.t_max = detail::get<double>(j, "t_max");
    prob.constraints.push_back(pc);
  }
  const Json& o = p.at("optimizer");
  prob.settings.restarts = detail::get<int>(o, "restarts");
  prob.settings.threads = threads;
  prob.settings.init_tau = detail::get<double>(o, "init_tau");
  prob.settings.init_phase_range = detail::get<double>(o, "init_phase_range");
  prob.settings.warmup_fraction = detail::get<double>(o, "warmup_fraction");
  prob.settings.lbfgs.max_iterations = detail::get<int>(o, "iterations");
  prob.settings.lbfgs.memory = detail::get<int>(o, "memory");
  prob.settings.lbfgs.gtol = detail::get<double>(o, "gtol");
  prob.settings.lbfgs.ftol = detail::get<double>(o, "ftol");
  prob.settings.lbfgs.patience = detail::get<int>(o, "patience");
  prob.settings.lbfgs.initial_step = detail::get<double>(o, "initial_step");
  prob.settings.lbfgs.max_seconds = detail::get<double>(o, "max_seconds");
  require(prob.settings.lbfgs.max_iterations >= 1, "iteration budget must be positive");
  prob.validate();
  return prob;
}

inline std::string waveform_text(const SdfPulse& p) {
  std::ostringstream os;
  write_waveform(os, p);
  return os.str();
}

/// Returns the bundle; `converged` is false when the budget ran out before a
/// stopping rule (or the fidelity target, when set) was met.
inline Bundle cmd_optimize(const RunManifest& m, int threads = 1) {
  const OptimizationProblem prob = problem_from(m.parameters, threads);
  const CodewordSet cw = synthesize_codewords(prob.fock, prob.grid);
  const OptimizationResult r = optimize(prob, cw, m.seed);
  Bundle b;
  b.manifest = m.to_json();
  for (std::size_t i = 0; i < r.pulses.size(); ++i)
    b.artifacts["pulse_" + std::to_string(i) + ".wf"] = waveform_text(r.pulses[i]);
  const auto& rep = r.report;
  Json report = {{"fidelity", rep.fidelity},  {"duration", rep.duration},       {"cost", rep.cost},
                 {"epsilon", rep.epsilon},    {"t_max", rep.t_max},             {"iterations", rep.iterations},
                 {"evaluations", rep.evaluations}, {"best_restart", rep.best_restart}, {"converged", rep.converged},
                 {"history", rep.history}};
  if (prob.kind == ProblemKind::SqGate) {
    const Operator u = pulse_propagator(r.pulses[0], {prob.fock, 1, true});
    report["average_gate_fidelity"] = average_gate_fidelity(u, two_level_gate(prob.target), cw);
  }
  const Json& target = m.parameters.at("fidelity_target");
  b.converged = rep.converged || (!target.is_null() && rep.fidelity >= target.get<double>());
  report["status"] = b.converged ? "converged" : "budget_exhausted";
  b.artifacts["report.json"] = report.dump(2) + "\n";
  b.timing["wall_seconds"] = rep.wall_seconds;
  return b;
}

inline std::map<Logical, SdfPulse> load_prep(const Json& prep, Json& echo) {
  std::map<Logical, SdfPulse> out;
  for (auto it = prep.begin(); it != prep.end(); ++it) {
    const std::string path = it.value().get<std::string>();
    const std::string text = read_text(path);
    std::istringstream is(text);
    out[parse_logical(it.key())] = read_waveform(is);
    echo["prep"][it.key()] = {{"path", path}, {"sha256", sha256_hex(text)}};
  }
  return out;
}

inline std::vector<SdfPulse> load_gate(const Json& gate, Json& echo) {
  std::vector<SdfPulse> out;
  echo["gate"] = Json::array();
  for (const auto& g : gate) {
    const std::string path = g.get<std::string>();
    const std::string text = read_text(path);
    std::istringstream is(text);
    out.push_back(read_waveform(is));
    echo["gate"].push_back({{"path", path}, {"sha256", sha256_hex(text)}});
  }
  return out;
}

inline ExperimentPipeline pipeline_from(const Json& p) {
  ExperimentPipeline e;
  e.kind = parse_pipeline_kind(detail::get<std::string>(p, "kind"));
  e.gate_label = detail::get<std::string>(p, "gate_label");
  const auto readout = detail::get<std::string>(p, "readout");
  if (readout == "sssd")
    e.readout = PlanKind::Sssd;
  else if (readout == "logical_pauli")
    e.readout = PlanKind::LogicalPauli;
  else
    throw ValidationError("unknown readout '" + readout + "' (sssd or logical_pauli)");
  e.truncation = detail::get<int>(p, "truncation");
  e.reduction = parse_plan_reduction(detail::get<std::string>(p, "reduction"));
  e.trajectories = detail::get<int>(p, "trajectories");
  e.nbar = detail::get<double>(p, "nbar");
  e.rabi_scale = detail::get<double>(p, "rabi_scale");
  e.weighting = parse_weighting(detail::get<std::string>(p, "weighting"));
  return e;
}

inline DephasingModel noise_from(const Json& n) {
  DephasingModel d;
  d.gamma_rate = detail::get<double>(n, "gamma_rate");
  d.unit = parse_rate_unit(detail::get<std::string>(n, "unit"));
  d.correlation_time = detail::get<double>(n, "correlation_time");
  d.dephase_x = detail::get<bool>(n, "dephase_x");
  d.dephase_y = detail::get<bool>(n, "dephase_y");
  d.validate();
  return d;
}

inline std::vector<NoiseScenario> scenarios_from(const Json& s) {
  std::vector<NoiseScenario> out;
  for (const auto& j : s) {
    NoiseScenario sc;
    sc.name = detail::get<std::string>(j, "name");
    sc.gamma_rate = detail::get<double>(j, "gamma_rate");
    sc.nbar = detail::get<double>(j, "nbar");
    const auto readout = detail::get<std::string>(j, "readout");
    require(readout == "sssd" || readout == "logical_pauli", "unknown scenario readout '" + readout + "'");
    sc.readout = readout == "sssd" ? PlanKind::Sssd : PlanKind::LogicalPauli;
    sc.truncation = detail::get<int>(j, "truncation");
    sc.rabi_scale = detail::get<double>(j, "rabi_scale");
    sc.trajectories = detail::get<int>(j, "trajectories");
    require(sc.trajectories > 0 && sc.rabi_scale > 0 && sc.gamma_rate >= 0 && sc.nbar >= 0,
            "scenario '" + sc.name + "' has out-of-range values");
    out.push_back(sc);
  }
  return out;
}

inline Json scenario_json(const NoiseScenario& s) {
  return {{"name", s.name},
          {"gamma_rate", s.gamma_rate},
          {"nbar", s.nbar},
          {"readout", s.readout == PlanKind::Sssd ? "sssd" : "logical_pauli"},
          {"truncation", s.truncation},
          {"rabi_scale", s.rabi_scale},
          {"trajectories", s.trajectories}};
}

inline Bundle cmd_simulate(const RunManifest& m, int threads = 1) {
  const auto t0 = std::chrono::steady_clock::now();
  const Json& p = m.parameters;
  ExperimentPipeline pipe = pipeline_from(p.at("pipeline"));
  pipe.threads = threads;
  const DephasingModel model = noise_from(p.at("noise"));
  const Json& inputs = p.at("inputs");
  Json echo = Json::object();
  CodewordSet cw;
  const std::string cw_path = detail::get<std::string>(inputs, "codewords");
  if (!cw_path.empty()) {
    const std::string text = read_text(cw_path);
    cw = read_codewords(text);
    echo["codewords"] = {{"path", cw_path}, {"sha256", sha256_hex(text)}};
  } else {
    cw = codewords_from(p.at("codewords"));
  }
  pipe.prep = load_prep(inputs.at("prep"), echo);
  pipe.gate = load_gate(inputs.at("gate"), echo);
  const int resamples = detail::get<int>(p, "bootstrap_resamples");
  const auto scenarios = scenarios_from(p.at("scenarios"));

  const PipelineResult r = run_pipeline(pipe, model, cw, m.seed);
  Bundle b;
  b.manifest = m.to_json();
  b.manifest["input_checksums"] = echo;
  Json result = {{"kind", to_string(pipe.kind)},
                 {"fidelity", r.fidelity},
                 {"fidelity_kind", pipe.kind == PipelineKind::BellQst ? "state" : "process"},
                 {"acceptance", r.acceptance},
                 {"trajectories", r.trajectories},
                 {"codeword_ratio", cw.params.ratio()},
                 {"codeword_fock", cw.fock}};
  if (r.trajectories > 1 && resamples >= 2) {
    const auto bs = bootstrap_fidelity(pipe, cw, r, resamples, mix_seed(m.seed, 0xB007));
    result["bootstrap"] = {{"resamples", bs.resamples}, {"std_error", bs.std_error}, {"lower_95", bs.lower}, {"upper_95", bs.upper}};
  }
  std::vector<std::pair<std::string, Operator>> states;
  if (pipe.kind == PipelineKind::BellQst) {
    states.push_back({"bell", r.output_states[0]});
    b.artifacts["pauli_bars.tsv"] = write_pauli_bars(r.output_states[0]);
  } else {
    for (std::size_t i = 0; i < r.inputs.size(); ++i) {
      std::string tag;
      for (auto l : r.inputs[i]) tag += std::string(to_string(l));
      states.push_back({"in" + tag, r.input_states[i]});
      states.push_back({"out" + tag, r.output_states[i]});
    }
    b.artifacts["chi.tsv"] = write_chi_table(r.chi);
    const auto c = check_chi(r.chi);
    result["chi_constraints"] = {{"hermiticity", c.hermiticity}, {"min_eigenvalue", c.min_eigenvalue}, {"tp_residual", c.tp_residual}};
  }
  b.artifacts["states.tsv"] = write_states_table(states);
  if (!scenarios.empty()) {
    const auto rows = error_budget(pipe, model, cw, scenarios, mix_seed(m.seed, 0xB4D6E7), resamples);
    std::ostringstream os;
    write_budget_table(os, rows, false);
    b.artifacts["budget.tsv"] = os.str();
    Json times = Json::object();
    for (const auto& row : rows) times[row.scenario] = row.wall_seconds;
    b.timing["scenario_wall_seconds"] = times;
  }
  b.artifacts["result.json"] = result.dump(2) + "\n";
  b.timing["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return b;
}

/// Expectation file: "state role label value" with role input, output or state.
struct ExpectationSets {
  std::map<int, std::map<std::string, double>> inputs, outputs, states;
};

inline ExpectationSets read_expectations(const std::string& text) {
  ExpectationSets s;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int id;
    std::string role, label;
    double v;
    if (!(ls >> id >> role >> label >> v)) throw IoError("expectation line " + std::to_string(lineno) + " is malformed");
    if (role == "input")
      s.inputs[id][label] = v;
    else if (role == "output")
      s.outputs[id][label] = v;
    else if (role == "state")
      s.states[id][label] = v;
    else
      throw IoError("expectation line " + std::to_string(lineno) + ": unknown role '" + role + "'");
  }
  return s;
}

inline Bundle cmd_tomography(const RunManifest& m) {
  const Json& p = m.parameters;
  const int qubits = detail::get<int>(p, "qubits");
  require(qubits == 1 || qubits == 2, "qubits must be 1 or 2");
  const std::string path = detail::get<std::string>(p.at("inputs"), "expectations");
  if (path.empty()) throw ValidationError("tomography needs inputs.expectations");
  const std::string text = read_text(path);
  const ExpectationSets sets = read_expectations(text);
  Bundle b;
  b.manifest = m.to_json();
  b.manifest["input_checksums"] = {{"expectations", {{"path", path}, {"sha256", sha256_hex(text)}}}};
  Json result = Json::object();
  std::vector<std::pair<std::string, Operator>> states;
  if (!sets.states.empty()) {
    require(sets.inputs.empty() && sets.outputs.empty(), "mix of state and process expectations");
    for (const auto& [id, ex] : sets.states) {
      const Operator rho = reconstruct_logical_state(ex, qubits);
      const Operator phys = project_physical_state(rho);
      states.push_back({"raw" + std::to_string(id), rho});
      states.push_back({"physical" + std::to_string(id), phys});
      const std::string target = detail::get<std::string>(p, "target_state");
      if (target == "bell_phi_plus") {
        require(qubits == 2, "Bell target needs two qubits");
        result["state_fidelity"][std::to_string(id)] = state_fidelity(phys, bell_phi_plus());
      } else if (!target.empty()) {
        require(qubits == 1, "logical-label targets are single-qubit");
        result["state_fidelity"][std::to_string(id)] = state_fidelity(phys, logical_vector(parse_logical(target)));
      }
      b.artifacts["pauli_bars_" + std::to_string(id) + ".tsv"] = write_pauli_bars(phys);
    }
  } else {
    require(!sets.inputs.empty() && sets.inputs.size() == sets.outputs.size(), "process data needs paired inputs and outputs");
    std::vector<Operator> in, out;
    for (const auto& [id, ex] : sets.inputs) {
      auto it = sets.outputs.find(id);
      require(it != sets.outputs.end(), "no output expectations for input " + std::to_string(id));
      in.push_back(reconstruct_logical_state(ex, qubits));
      out.push_back(reconstruct_logical_state(it->second, qubits));
      states.push_back({"in" + std::to_string(id), in.back()});
      states.push_back({"out" + std::to_string(id), out.back()});
    }
    const ChiFit fit = fit_chi(in, out);
    b.artifacts["chi.tsv"] = write_chi_table(fit.chi);
    result["residual"] = fit.residual;
    result["iterations"] = fit.iterations;
    result["converged"] = fit.converged;
    result["chi_constraints"] = {{"hermiticity", fit.constraints.hermiticity},
                                 {"min_eigenvalue", fit.constraints.min_eigenvalue},
                                 {"tp_residual", fit.constraints.tp_residual}};
    const std::string ideal = detail::get<std::string>(p, "ideal_gate");
    if (!ideal.empty()) result["process_fidelity"] = process_fidelity(fit.chi, two_level_gate(ideal));
  }
  b.artifacts["states.tsv"] = write_states_table(states);
  b.artifacts["result.json"] = result.dump(2) + "\n";
  return b;
}

// ---------------------------------------------------------------------------
// Report

struct ReferenceValue {
  std::string name;
  double value = 0.0;
};

inline std::optional<ReferenceValue> reference_for_simulation(const Json& params, double gamma, double nbar,
                                                              const std::string& readout, double rabi_scale) {
  const auto kind = parse_pipeline_kind(params.at("pipeline").at("kind").get<std::string>());
  const bool improved = gamma == reference::dephasing_rate_improved &&
                        rabi_scale == reference::rabi_rate_improved / reference::rabi_rate;
  const bool dephased = gamma == reference::dephasing_rate && rabi_scale == 1.0;
  const bool ideal = gamma == 0.0 && rabi_scale == 1.0;
  if (nbar != 0.0) return std::nullopt;
  if (kind == PipelineKind::SqGateQpt) {
    const std::string g = params.at("pipeline").at("gate_label").get<std::string>();
    const std::array<std::string, 3> gates = {"Rx(-pi/2)", "Rz(-pi/2)", "T"};
    const auto it = std::find(gates.begin(), gates.end(), g);
    if (it == gates.end() || readout != "sssd") return std::nullopt;
    const auto i = static_cast<std::size_t>(it - gates.begin());
    const std::string idx = "[" + std::to_string(i) + "]";
    if (ideal) return ReferenceValue{"sq_process_fidelity_ideal" + idx, reference::sq_process_fidelity_ideal[i]};
    if (dephased) return ReferenceValue{"sq_process_fidelity_dephasing" + idx, reference::sq_process_fidelity_dephasing[i]};
    if (improved) return ReferenceValue{"sq_process_fidelity_improved" + idx, reference::sq_process_fidelity_improved[i]};
  } else if (kind == PipelineKind::CzQpt) {
    const bool lp = readout == "logical_pauli";
    if (ideal) return lp ? ReferenceValue{"cz_process_fidelity_logical_pauli", reference::cz_process_fidelity_logical_pauli}
                         : ReferenceValue{"cz_process_fidelity_sssd", reference::cz_process_fidelity_sssd};
    if (dephased)
      return lp ? ReferenceValue{"cz_process_fidelity_dephasing_logical_pauli", reference::cz_process_fidelity_dephasing_logical_pauli}
                : ReferenceValue{"cz_process_fidelity_dephasing_sssd", reference::cz_process_fidelity_dephasing_sssd};
    if (improved && !lp) return ReferenceValue{"cz_process_fidelity_improved", reference::cz_process_fidelity_improved};
  } else {
    if (readout != "sssd") return std::nullopt;
    if (ideal) return ReferenceValue{"bell_state_fidelity_ideal", reference::bell_state_fidelity_ideal};
    if (dephased) return ReferenceValue{"bell_state_fidelity_with_dephasing", reference::bell_state_fidelity_with_dephasing};
    if (improved) return ReferenceValue{"bell_state_fidelity_improved", reference::bell_state_fidelity_improved};
  }
  return std::nullopt;
}

inline std::optional<ReferenceValue> reference_for_optimization(const Json& params) {
  switch (parse_problem_kind(params.at("kind").get<std::string>())) {
    case ProblemKind::StatePrep: return ReferenceValue{"prep_fidelity_min", reference::prep_fidelity_min};
    case ProblemKind::SqGate: return ReferenceValue{"sq_gate_fidelity_min", reference::sq_gate_fidelity_min};
    case ProblemKind::CzGate: return ReferenceValue{"cz_gate_fidelity", reference::cz_gate_fidelity};
    case ProblemKind::BellPrep: return ReferenceValue{"bell_prep_fidelity", reference::bell_prep_fidelity};
  }
  return std::nullopt;
}

inline bool paper_codewords(double ratio, int fock) {
  return ratio == reference::codeword_ratio && fock == reference::codeword_fock;
}

namespace detail {

inline std::string fmt(double v, int digits = 5) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline std::string ref_cell(const std::optional<ReferenceValue>& r) {
  return r ? fmt(r->value, 3) + "  (reference::" + r->name + ")" : "-";
}

}  // namespace detail

/// Consolidated summary; all bundles must share one format version.
inline std::string cmd_report(const std::vector<std::pair<std::string, Bundle>>& bundles) {
  require(!bundles.empty(), "report needs at least one bundle");
  std::optional<int> version;
  for (const auto& [name, b] : bundles) {
    const int v = b.manifest.value("format_version", -1);
    if (version && *version != v)
      throw ValidationError("format_version mismatch between bundles (" + std::to_string(*version) + " vs " +
                            std::to_string(v) + " in " + name + ")");
    version = v;
  }
  if (*version != kFormatVersion) throw ValidationError("bundles use unsupported format_version " + std::to_string(*version));

  std::ostringstream os;
  os << "bundle | command | quantity | value | reference\n";
  for (const auto& [name, b] : bundles) {
    const std::string cmd = b.manifest.at("command").get<std::string>();
    const Json& params = b.manifest.at("parameters");
    auto row = [&](const std::string& q, double v, const std::optional<ReferenceValue>& r) {
      os << name << " | " << cmd << " | " << q << " | " << detail::fmt(v) << " | " << detail::ref_cell(r) << "\n";
    };
    if (cmd == "synthesize-codewords") {
      const CodewordSet cw = read_codewords(b.artifact("codewords.tsv"));
      const bool paper = params.at("ratio").get<double>() == reference::codeword_ratio &&
                         params.at("fock").get<int>() == reference::codeword_fock;
      const std::array<Logical, 4> order = {Logical::PlusZ, Logical::MinusZ, Logical::PlusX, Logical::PlusY};
      for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& s = cw.squeezing_of(order[i]);
        const std::string st(to_string(order[i]));
        const std::string idx = "[" + std::to_string(i) + "]";
        row("squeezing_db " + st + " position", s.position_db(),
            paper ? std::optional<ReferenceValue>({"codeword_squeezing_db" + idx + "[0]", reference::codeword_squeezing_db[i][0]})
                  : std::nullopt);
        row("squeezing_db " + st + " momentum", s.momentum_db(),
            paper ? std::optional<ReferenceValue>({"codeword_squeezing_db" + idx + "[1]", reference::codeword_squeezing_db[i][1]})
                  : std::nullopt);
      }
    } else if (cmd == "optimize") {
      const Json rep = parse_json(b.artifact("report.json"), name + "/report.json");
      const Json& c = params.at("codewords");
      const bool paper = paper_codewords(c.at("ratio").get<double>(), c.at("fock").get<int>());
      row("fidelity", rep.at("fidelity").get<double>(), paper ? reference_for_optimization(params) : std::nullopt);
      if (rep.contains("average_gate_fidelity")) row("average_gate_fidelity", rep.at("average_gate_fidelity").get<double>(), std::nullopt);
      row("duration_us", rep.at("duration").get<double>() * 1e6, std::nullopt);
    } else if (cmd == "simulate") {
      const Json res = parse_json(b.artifact("result.json"), name + "/result.json");
      const Json& pl = params.at("pipeline");
      const bool paper = paper_codewords(res.at("codeword_ratio").get<double>(), res.at("codeword_fock").get<int>());
      auto ref = [&](double gamma, double nbar, const std::string& readout, double rabi_scale) {
        return paper ? reference_for_simulation(params, gamma, nbar, readout, rabi_scale) : std::nullopt;
      };
      row(res.at("fidelity_kind").get<std::string>() + "_fidelity", res.at("fidelity").get<double>(),
          ref(params.at("noise").at("gamma_rate").get<double>(), pl.at("nbar").get<double>(), pl.at("readout").get<std::string>(),
              pl.at("rabi_scale").get<double>()));
      row("acceptance", res.at("acceptance").get<double>(), std::nullopt);
      if (b.artifacts.count("budget.tsv")) {
        os << "\nerror budget (" << name << ")\n";
        os << "scenario | fidelity | infidelity | stderr | trajectories | reference\n";
        const auto scen = scenarios_from(params.at("scenarios"));
        std::istringstream is(b.artifact("budget.tsv"));
        std::string line;
        std::size_t k = 0;
        while (std::getline(is, line)) {
          if (line.empty() || line[0] == '#') continue;
          std::istringstream ls(line);
          std::string sname;
          double f, se, acc;
          int n;
          ls >> sname >> f >> se >> n >> acc;
          std::optional<ReferenceValue> sref;
          if (k < scen.size())
            sref = ref(scen[k].gamma_rate, scen[k].nbar,
                                           scen[k].readout == PlanKind::Sssd ? "sssd" : "logical_pauli", scen[k].rabi_scale);
          os << sname << " | " << detail::fmt(f) << " | " << detail::fmt(1.0 - f) << " | " << detail::fmt(se) << " | " << n
             << " | " << detail::ref_cell(sref) << "\n";
          ++k;
        }
        os << "\n";
      }
    } else if (cmd == "tomography") {
      const Json res = parse_json(b.artifact("result.json"), name + "/result.json");
      if (res.contains("process_fidelity")) row("process_fidelity", res.at("process_fidelity").get<double>(), std::nullopt);
      if (res.contains("state_fidelity"))
        for (auto it = res["state_fidelity"].begin(); it != res["state_fidelity"].end(); ++it)
          row("state_fidelity " + it.key(), it.value().get<double>(), std::nullopt);
    } else {
      throw ValidationError("bundle " + name + " has unknown command '" + cmd + "'");
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Dispatch

inline ExitCode exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return ExitCode::Io;
  if (dynamic_cast<const ConvergenceError*>(&e)) return ExitCode::Convergence;
  return ExitCode::Validation;
}

inline Bundle run_manifest(const RunManifest& m, int threads = 1) {
  if (m.command == "synthesize-codewords") return cmd_synthesize_codewords(m);
  if (m.command == "optimize") return cmd_optimize(m, threads);
  if (m.command == "simulate") return cmd_simulate(m, threads);
  if (m.command == "tomography") return cmd_tomography(m);
  throw ValidationError("command '" + m.command + "' does not produce a bundle");
}

inline std::filesystem::path default_output_root() {
  const char* env = std::getenv("GKP_OUTPUT_ROOT");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("gkp_out");
}

}  // namespace gkp::io

#endif  // GKP_IO_WORKBENCH_HPP
