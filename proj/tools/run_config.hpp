#pragma once

#include <atomic>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pairopt/eval.hpp"
#include "pairopt/kitti_io.hpp"
#include "pairopt/optimizer.hpp"
#include "pairopt/pairing.hpp"

namespace pairopt::cli {

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a run depends on besides the input paths. File values are
/// overridden by flags; the effective set is echoed into report outputs.
struct RunConfig {
  int downsample = 4;
  double score_threshold = 0.05;
  int jobs = 1;
  std::uint64_t seed = 0;
  int precision = 6;
  std::string pair_blockers = "all";  ///< "all" or "same_class"
  double pair_sigma_k = 0.1;          ///< sigma written into pair files
  double weight_clamp = kDefaultWeightClamp;
  double lm_initial_lambda = 1e-3;
  int lm_max_iterations = 100;
  double lm_cost_tolerance = 1e-10;
  double lm_step_tolerance = 1e-10;
  double lm_min_depth = 1e-3;
  std::string iou_thresholds = "0.5,0.7";
  bool van_ignores_car = true;
  double dontcare_overlap = 0.5;
  std::string classes = "Car,Pedestrian,Cyclist";
  double easy_min_height = 40.0, moderate_min_height = 25.0, hard_min_height = 25.0;
  int easy_max_occlusion = 0, moderate_max_occlusion = 1, hard_max_occlusion = 2;
  double easy_max_truncation = 0.15, moderate_max_truncation = 0.30, hard_max_truncation = 0.50;

  SolveOptions solve_options() const {
    SolveOptions o;
    o.initial_lambda = lm_initial_lambda;
    o.max_iterations = lm_max_iterations;
    o.cost_tolerance = lm_cost_tolerance;
    o.step_tolerance = lm_step_tolerance;
    o.min_depth = lm_min_depth;
    return o;
  }

  DifficultyThresholds difficulty_thresholds() const {
    DifficultyThresholds t;
    t.min_height[0] = easy_min_height;
    t.min_height[1] = moderate_min_height;
    t.min_height[2] = hard_min_height;
    t.max_occlusion[0] = easy_max_occlusion;
    t.max_occlusion[1] = moderate_max_occlusion;
    t.max_occlusion[2] = hard_max_occlusion;
    t.max_truncation[0] = easy_max_truncation;
    t.max_truncation[1] = moderate_max_truncation;
    t.max_truncation[2] = hard_max_truncation;
    return t;
  }

  PairMatchOptions match_options() const {
    return {pair_blockers == "same_class"};
  }

  EvalOptions eval_options() const {
    EvalOptions o;
    o.classes = split_list(classes);
    o.iou_thresholds.clear();
    for (const std::string& t : split_list(iou_thresholds)) {
      o.iou_thresholds.push_back(std::stod(t));
    }
    o.van_ignores_car = van_ignores_car;
    o.dontcare_overlap = dontcare_overlap;
    o.difficulty = difficulty_thresholds();
    return o;
  }

  void validate() const {
    if (downsample < 1) throw config_error("downsample must be >= 1");
    if (score_threshold < 0.0 || score_threshold > 1.0) {
      throw config_error("score_threshold must be in [0, 1]");
    }
    if (jobs < 1) throw config_error("jobs must be >= 1");
    if (precision < 0 || precision > 17) throw config_error("precision must be in [0, 17]");
    if (pair_blockers != "all" && pair_blockers != "same_class") {
      throw config_error("pair_blockers must be 'all' or 'same_class'");
    }
    if (!(pair_sigma_k > 0.0)) throw config_error("pair_sigma_k must be positive");
    if (!(weight_clamp > 0.0)) throw config_error("weight_clamp must be positive");
    if (!(lm_initial_lambda > 0.0)) throw config_error("lm_initial_lambda must be positive");
    if (lm_max_iterations < 1) throw config_error("lm_max_iterations must be >= 1");
    if (!(lm_min_depth > 0.0)) throw config_error("lm_min_depth must be positive");
    if (!(dontcare_overlap >= 0.0 && dontcare_overlap <= 1.0)) {
      throw config_error("dontcare_overlap must be in [0, 1]");
    }
  }

  static std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(csv);
    while (std::getline(is, item, ',')) {
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }
};

namespace detail {

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& v) {
  T out{};
  const std::string t = trim(v);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size()) {
    throw config_error("bad numeric value '" + v + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "on") return true;
  if (t == "false" || t == "0" || t == "off") return false;
  throw config_error("bad boolean value '" + v + "'");
}

inline const std::map<std::string, Field>& config_fields() {
  auto num = [](auto member) {
    using T = std::remove_reference_t<decltype(std::declval<RunConfig&>().*member)>;
    return Field{[member](RunConfig& c, const std::string& v) { c.*member = parse_number<T>(v); },
                 [member](const RunConfig& c) {
                   if constexpr (std::is_floating_point_v<T>) {
                     std::ostringstream os;
                     os << (c.*member);
                     return os.str();
                   } else {
                     return std::to_string(c.*member);
                   }
                 }};
  };
  auto str = [](auto member) {
    return Field{[member](RunConfig& c, const std::string& v) { c.*member = trim(v); },
                 [member](const RunConfig& c) { return c.*member; }};
  };
  auto boolean = [](auto member) {
    return Field{[member](RunConfig& c, const std::string& v) { c.*member = parse_bool(v); },
                 [member](const RunConfig& c) { return (c.*member) ? "true" : "false"; }};
  };
  static const std::map<std::string, Field> fields = {
      {"downsample", num(&RunConfig::downsample)},
      {"score_threshold", num(&RunConfig::score_threshold)},
      {"jobs", num(&RunConfig::jobs)},
      {"seed", num(&RunConfig::seed)},
      {"precision", num(&RunConfig::precision)},
      {"pair_blockers", str(&RunConfig::pair_blockers)},
      {"pair_sigma_k", num(&RunConfig::pair_sigma_k)},
      {"weight_clamp", num(&RunConfig::weight_clamp)},
      {"lm_initial_lambda", num(&RunConfig::lm_initial_lambda)},
      {"lm_max_iterations", num(&RunConfig::lm_max_iterations)},
      {"lm_cost_tolerance", num(&RunConfig::lm_cost_tolerance)},
      {"lm_step_tolerance", num(&RunConfig::lm_step_tolerance)},
      {"lm_min_depth", num(&RunConfig::lm_min_depth)},
      {"iou_thresholds", str(&RunConfig::iou_thresholds)},
      {"van_ignores_car", boolean(&RunConfig::van_ignores_car)},
      {"dontcare_overlap", num(&RunConfig::dontcare_overlap)},
      {"classes", str(&RunConfig::classes)},
      {"easy_min_height", num(&RunConfig::easy_min_height)},
      {"moderate_min_height", num(&RunConfig::moderate_min_height)},
      {"hard_min_height", num(&RunConfig::hard_min_height)},
      {"easy_max_occlusion", num(&RunConfig::easy_max_occlusion)},
      {"moderate_max_occlusion", num(&RunConfig::moderate_max_occlusion)},
      {"hard_max_occlusion", num(&RunConfig::hard_max_occlusion)},
      {"easy_max_truncation", num(&RunConfig::easy_max_truncation)},
      {"moderate_max_truncation", num(&RunConfig::moderate_max_truncation)},
      {"hard_max_truncation", num(&RunConfig::hard_max_truncation)},
  };
  return fields;
}

}  // namespace detail

/// Applies a line-oriented "key = value" config file. Unknown keys are
/// rejected; '#' starts a comment.
inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file " + path);
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
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto& fields = detail::config_fields();
    const auto it = fields.find(key);
    if (it == fields.end()) {
      throw config_error(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    try {
      it->second.set(cfg, value);
    } catch (const config_error& e) {
      throw config_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

/// '#'-prefixed effective-config block, prepended to report outputs.
inline std::string config_echo(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : detail::config_fields()) {
    out += "# " + key + " = " + field.get(cfg) + "\n";
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

/// Sorted ids (file stems) of the .txt files in a directory.
inline std::vector<std::string> image_ids(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error(dir.string() + " is not a directory");
  }
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Runs fn(i) for i in [0, n) on `jobs` threads. Exceptions are caught by
/// the callee; this helper only distributes indices.
template <typename Fn>
inline void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  const int count = std::min<std::size_t>(jobs, n);
  for (int w = 0; w < count; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace pairopt::cli
