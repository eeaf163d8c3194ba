#pragma once

#include <fstream>
#include <map>
#include <string>

#include "pairopt/synthetic.hpp"
#include "run_config.hpp"

namespace pairopt::cli {

/// A synth run: the scene spec plus trial count, acceptance gates and an
/// optional replay dump directory.
struct SynthRun {
  SceneSpec scene;
  int trials = 200;
  double gate_min_depth_improvement = 0.20;
  double gate_min_improved_fraction = 0.90;
  std::string dump_dir;

  bool gate_passed(const ExperimentReport& rep) const {
    return rep.diverged == 0 && rep.depth_improvement() >= gate_min_depth_improvement &&
           rep.improved_fraction >= gate_min_improved_fraction;
  }
};

inline SynthRun parse_synth_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open synth spec " + path);
  SynthRun run;
  SceneSpec& s = run.scene;

  const std::map<std::string, std::function<void(const std::string&)>> setters = {
      {"trials", [&](const std::string& v) { run.trials = detail::parse_number<int>(v); }},
      {"min_objects", [&](const std::string& v) { s.min_objects = detail::parse_number<int>(v); }},
      {"max_objects", [&](const std::string& v) { s.max_objects = detail::parse_number<int>(v); }},
      {"min_depth", [&](const std::string& v) { s.min_depth = detail::parse_number<double>(v); }},
      {"max_depth", [&](const std::string& v) { s.max_depth = detail::parse_number<double>(v); }},
      {"min_lateral", [&](const std::string& v) { s.min_lateral = detail::parse_number<double>(v); }},
      {"max_lateral", [&](const std::string& v) { s.max_lateral = detail::parse_number<double>(v); }},
      {"ground_y", [&](const std::string& v) { s.ground_y = detail::parse_number<double>(v); }},
      {"class", [&](const std::string& v) { s.cls = detail::trim(v); }},
      {"mean_w", [&](const std::string& v) { s.mean_w = detail::parse_number<double>(v); }},
      {"mean_h", [&](const std::string& v) { s.mean_h = detail::parse_number<double>(v); }},
      {"mean_l", [&](const std::string& v) { s.mean_l = detail::parse_number<double>(v); }},
      {"dim_jitter", [&](const std::string& v) { s.dim_jitter = detail::parse_number<double>(v); }},
      {"sigma_z", [&](const std::string& v) { s.sigma_z_true = detail::parse_number<double>(v); }},
      {"sigma_uv", [&](const std::string& v) { s.sigma_uv_true = detail::parse_number<double>(v); }},
      {"sigma_k", [&](const std::string& v) { s.sigma_k_true = detail::parse_number<double>(v); }},
      {"miscalibration",
       [&](const std::string& v) { s.miscalibration = detail::parse_number<double>(v); }},
      {"sigma_floor", [&](const std::string& v) { s.sigma_floor = detail::parse_number<double>(v); }},
      {"noise",
       [&](const std::string& v) {
         const std::string t = detail::trim(v);
         if (t == "gaussian") {
           s.noise = NoiseKind::kGaussian;
         } else if (t == "laplace") {
           s.noise = NoiseKind::kLaplace;
         } else {
           throw config_error("noise must be 'gaussian' or 'laplace'");
         }
       }},
      {"seed", [&](const std::string& v) { s.seed = detail::parse_number<std::uint64_t>(v); }},
      {"min_separation",
       [&](const std::string& v) { s.min_separation = detail::parse_number<double>(v); }},
      {"cam_fx", [&](const std::string& v) { s.cam.fx = detail::parse_number<double>(v); }},
      {"cam_fy", [&](const std::string& v) { s.cam.fy = detail::parse_number<double>(v); }},
      {"cam_ax", [&](const std::string& v) { s.cam.ax = detail::parse_number<double>(v); }},
      {"cam_ay", [&](const std::string& v) { s.cam.ay = detail::parse_number<double>(v); }},
      {"cam_s", [&](const std::string& v) { s.cam.s = detail::parse_number<int>(v); }},
      {"dump_dir", [&](const std::string& v) { run.dump_dir = detail::trim(v); }},
      {"gate_min_depth_improvement",
       [&](const std::string& v) {
         run.gate_min_depth_improvement = detail::parse_number<double>(v);
       }},
      {"gate_min_improved_fraction",
       [&](const std::string& v) {
         run.gate_min_improved_fraction = detail::parse_number<double>(v);
       }},
  };

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw config_error(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    try {
      it->second(line.substr(eq + 1));
    } catch (const config_error& e) {
      throw config_error(path + ":" + std::to_string(line_no) + " (" + key + "): " + e.what());
    }
  }

  if (run.trials < 1) throw config_error("trials: must be >= 1");
  if (!(s.sigma_z_true >= 0.0) || !(s.sigma_uv_true >= 0.0) || !(s.sigma_k_true >= 0.0)) {
    throw config_error("sigma_z/sigma_uv/sigma_k: noise scales must be >= 0");
  }
  if (!(s.sigma_floor > 0.0)) throw config_error("sigma_floor: must be positive");
  if (!(s.miscalibration > 0.0)) throw config_error("miscalibration: must be positive");
  return run;
}

/// Spec echo for the synth report header.
inline std::string synth_spec_echo(const SynthRun& run) {
  const SceneSpec& s = run.scene;
  std::ostringstream os;
  os << "# trials = " << run.trials << "\n";
  os << "# objects = [" << s.min_objects << ", " << s.max_objects << "]\n";
  os << "# depth = [" << s.min_depth << ", " << s.max_depth << "]\n";
  os << "# lateral = [" << s.min_lateral << ", " << s.max_lateral << "]\n";
  os << "# class = " << s.cls << "\n";
  os << "# sigma_z = " << s.sigma_z_true << "\n";
  os << "# sigma_uv = " << s.sigma_uv_true << "\n";
  os << "# sigma_k = " << s.sigma_k_true << "\n";
  os << "# miscalibration = " << s.miscalibration << "\n";
  os << "# sigma_floor = " << s.sigma_floor << "\n";
  os << "# noise = " << (s.noise == NoiseKind::kGaussian ? "gaussian" : "laplace") << "\n";
  os << "# seed = " << s.seed << "\n";
  os << "# written sigma fields carry the injected noise scale times miscalibration\n";
  os << "# gate_min_depth_improvement = " << run.gate_min_depth_improvement << "\n";
  os << "# gate_min_improved_fraction = " << run.gate_min_improved_fraction << "\n";
  return os.str();
}

}  // namespace pairopt::cli
