// gkp-workbench: command-line front end for codeword synthesis, pulse
// optimization, noisy simulation, tomography and reporting.

#include <CLI11.hpp>

#include <iostream>

#include "gkp/io/workbench.hpp"

namespace fs = std::filesystem;
using namespace gkp;
using namespace gkp::io;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 1;
  bool seed_given = false;
  int threads = 1;
  std::string preset = "desk";
  bool dry_run = false;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON parameter overlay, or a manifest.json to replay");
  app->add_option("--out", c.out, "output directory (default: $GKP_OUTPUT_ROOT/<command>)");
  app->add_option("--seed", c.seed, "master seed")->each([&c](const std::string&) { c.seed_given = true; });
  app->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--preset", c.preset, "parameter preset")->check(CLI::IsMember({"desk", "paper"}));
  app->add_flag("--dry-run", c.dry_run, "print the resolved manifest and exit");
  app->add_option("--set", c.sets, "override a parameter: dotted.key=<json value>");
}

/// Turns "a.b.c=value" into {"a":{"b":{"c":value}}}; bare strings need no quotes.
Json set_patch(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("--set expects key=value, got '" + s + "'");
  const std::string key = s.substr(0, eq), raw = s.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;
  }
  Json patch = value;
  std::vector<std::string> parts;
  std::stringstream ks(key);
  for (std::string part; std::getline(ks, part, '.');) parts.push_back(part);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, patch}};
  return patch;
}

void deep_merge(Json& base, const Json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
      deep_merge(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

RunManifest build_manifest(const std::string& command, const Common& c, Json extra) {
  Json user = Json::object();
  std::uint64_t seed = c.seed;
  Preset preset = parse_preset(c.preset);
  if (!c.config.empty()) {
    const Json cfg = parse_json(read_text(c.config), c.config);
    if (cfg.contains("format_version")) {
      RunManifest m = manifest_from_json(cfg);
      if (m.command != command)
        throw ValidationError("manifest is for '" + m.command + "', not '" + command + "'");
      user = m.parameters;
      preset = m.preset;
      if (!c.seed_given) seed = m.seed;
    } else {
      user = cfg;
    }
  }
  deep_merge(user, extra);
  for (const auto& s : c.sets) deep_merge(user, set_patch(s));
  return resolve_manifest(command, preset, user, seed);
}

fs::path output_dir(const Common& c, const std::string& command) {
  return c.out.empty() ? default_output_root() / command : fs::path(c.out);
}

int finish(const RunManifest& m, const Common& c) {
  if (c.dry_run) {
    std::cout << m.to_json().dump(2) << "\n";
    return 0;
  }
  const Bundle b = run_manifest(m, c.threads);
  const fs::path dir = output_dir(c, m.command);
  write_bundle(b, dir);
  std::cout << "wrote " << dir.string() << "\n";
  if (b.artifacts.count("result.json")) std::cout << b.artifact("result.json");
  if (b.artifacts.count("report.json")) {
    const Json rep = parse_json(b.artifact("report.json"), "report.json");
    std::cout << "fidelity " << rep["fidelity"] << " duration " << rep["duration"] << " status "
              << rep["status"].get<std::string>() << "\n";
  }
  if (!b.converged) {
    std::cerr << "error: optimization budget exhausted before convergence\n";
    return static_cast<int>(ExitCode::Convergence);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GKP qubit simulation and optimization workbench"};
  app.require_subcommand(1);

  Common c;
  auto* syn = app.add_subcommand("synthesize-codewords", "compute the six logical states and their diagnostics");
  add_common(syn, c);

  auto* opt = app.add_subcommand("optimize", "optimize SDF pulse waveforms");
  add_common(opt, c);
  std::string opt_kind, opt_target;
  opt->add_option("--kind", opt_kind, "state_prep, sq_gate, cz_gate or bell_prep");
  opt->add_option("--target", opt_target, "logical label or gate label");

  auto* sim = app.add_subcommand("simulate", "noisy tomography pipelines");
  add_common(sim, c);
  std::string sim_kind, codewords_file, scenario_file;
  std::vector<std::string> gate_files, prep_specs;
  int trajectories = -1;
  sim->add_option("--kind", sim_kind, "sq_gate_qpt, cz_qpt or bell_qst");
  sim->add_option("--gate", gate_files, "gate waveform files in order");
  sim->add_option("--prep", prep_specs, "state preparation waveform: <label>=<file>");
  sim->add_option("--codewords", codewords_file, "codewords.tsv from synthesize-codewords");
  sim->add_option("--trajectories", trajectories, "noise trajectories");
  sim->add_option("--scenarios", scenario_file, "scenario file for an error budget");

  auto* tom = app.add_subcommand("tomography", "state and process reconstruction from expectation values");
  add_common(tom, c);
  std::string expectations_file;
  tom->add_option("--expectations", expectations_file, "lines of 'id role label value'");

  auto* rep = app.add_subcommand("report", "summarize result bundles");
  std::vector<std::string> bundle_dirs;
  rep->add_option("bundles", bundle_dirs, "bundle directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::Validation);
  }

  try {
    if (*rep) {
      std::vector<std::pair<std::string, Bundle>> bundles;
      for (const auto& d : bundle_dirs) bundles.emplace_back(fs::path(d).filename().string(), read_bundle(d));
      std::cout << cmd_report(bundles);
      return 0;
    }
    if (*syn) return finish(build_manifest("synthesize-codewords", c, Json::object()), c);
    if (*opt) {
      Json extra = Json::object();
      if (!opt_kind.empty()) extra["kind"] = opt_kind;
      if (!opt_target.empty()) extra["target"] = opt_target;
      return finish(build_manifest("optimize", c, extra), c);
    }
    if (*sim) {
      Json extra = Json::object();
      if (!sim_kind.empty()) extra["pipeline"]["kind"] = sim_kind;
      if (trajectories != -1) extra["pipeline"]["trajectories"] = trajectories;
      if (!codewords_file.empty()) extra["inputs"]["codewords"] = codewords_file;
      if (!gate_files.empty()) extra["inputs"]["gate"] = gate_files;
      for (const auto& s : prep_specs) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ValidationError("--prep expects <label>=<file>");
        extra["inputs"]["prep"][s.substr(0, eq)] = s.substr(eq + 1);
      }
      if (!scenario_file.empty()) {
        std::istringstream is(read_text(scenario_file));
        Json list = Json::array();
        for (const auto& sc : read_scenarios(is)) list.push_back(scenario_json(sc));
        extra["scenarios"] = list;
      }
      return finish(build_manifest("simulate", c, extra), c);
    }
    if (*tom) {
      Json extra = Json::object();
      if (!expectations_file.empty()) extra["inputs"]["expectations"] = expectations_file;
      return finish(build_manifest("tomography", c, extra), c);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(exit_code_for(e));
  }
  return 0;
}
