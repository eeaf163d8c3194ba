#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pairopt/camera.hpp"
#include "pairopt/detections.hpp"
#include "pairopt/geometry.hpp"
#include "pairopt/kitti_io.hpp"
#include "pairopt/optimizer.hpp"
#include "pairopt/pairing.hpp"

namespace pairopt {

class generation_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NoiseKind { kGaussian, kLaplace };

inline CameraModel default_synthetic_camera() {
  CameraModel cam;
  cam.fx = cam.fy = 721.5377;
  cam.ax = 609.5593;
  cam.ay = 172.854;
  cam.s = 4;
  return cam;
}

/// Everything a synthetic trial depends on. Identical spec (including seed)
/// reproduces the identical scene, corruption and report.
struct SceneSpec {
  int min_objects = 2;
  int max_objects = 6;
  double min_depth = 8.0;   // [m]
  double max_depth = 40.0;
  double min_lateral = -10.0;
  double max_lateral = 10.0;
  double ground_y = 1.65;   // camera height above ground, y-down frame
  std::string cls = "Car";
  double mean_w = 1.63, mean_h = 1.53, mean_l = 3.88;
  double dim_jitter = 0.10;          // relative, uniform
  double sigma_z_true = 0.0;         // injected noise scales
  double sigma_uv_true = 0.0;
  double sigma_k_true = 0.0;
  double miscalibration = 1.0;       // written sigma = true scale * this
  double sigma_floor = 1e-6;
  NoiseKind noise = NoiseKind::kGaussian;
  std::uint64_t seed = 0;
  CameraModel cam = default_synthetic_camera();
  double min_separation = 2.0;       // BEV center distance [m]
  int max_placement_retries = 200;
  PairMatchOptions match;
};

struct Scene {
  std::vector<ObjectHypothesis> truth;
  std::vector<PairConstraintRecord> constraints;
  std::vector<Box3D> boxes;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t salt) {
  return splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ salt);
}

class NoiseSource {
 public:
  NoiseSource(std::uint64_t seed, NoiseKind kind) : rng_(seed), kind_(kind) {}

  /// Zero-mean draw with standard deviation `scale`.
  double draw(double scale) {
    if (scale <= 0.0) return 0.0;
    if (kind_ == NoiseKind::kGaussian) {
      return std::normal_distribution<double>(0.0, scale)(rng_);
    }
    // Laplace with std `scale`: b = scale / sqrt(2).
    const double b = scale / std::numbers::sqrt2;
    const double u = std::uniform_real_distribution<double>(-0.5, 0.5)(rng_);
    return -b * (u < 0.0 ? -1.0 : 1.0) * std::log(1.0 - 2.0 * std::abs(u));
  }

 private:
  std::mt19937_64 rng_;
  NoiseKind kind_;
};

inline ObjectHypothesis hypothesis_from_box(const Box3D& box, const std::string& cls,
                                            const CameraModel& cam, double sigma_floor) {
  ObjectHypothesis o;
  o.cls = cls;
  o.width = box.w;
  o.height = box.h;
  o.length = box.l;
  o.z = box.center.z;
  o.sigma_z = o.sigma_uv = sigma_floor;
  o.score = 1.0;
  o.truncated = 0.0;
  o.occluded = 0;

  double lo_u = 1e300, hi_u = -1e300, lo_v = 1e300, hi_v = -1e300;
  for (const WorldPoint& corner : box_corners(box)) {
    const FeaturePoint f = project(cam, corner);
    lo_u = std::min(lo_u, f.u);
    hi_u = std::max(hi_u, f.u);
    lo_v = std::min(lo_v, f.v);
    hi_v = std::max(hi_v, f.v);
  }
  o.bbox_center = {0.5 * (lo_u + hi_u), 0.5 * (lo_v + hi_v)};
  o.bbox_w = hi_u - lo_u;
  o.bbox_h = hi_v - lo_v;
  o.keypoint = {std::round(o.bbox_center.u), std::round(o.bbox_center.v)};
  const FeaturePoint proj = project(cam, box.center);
  o.offset_u = proj.u - o.keypoint.u;
  o.offset_v = proj.v - o.keypoint.v;
  o.alpha = global_to_local_yaw(box.yaw, viewing_angle(box.center.x, box.center.z));
  return o;
}

}  // namespace detail

/// Places objects on the ground plane with disjoint BEV footprints and
/// derives the exact pair constraints from the matched ground-truth pairs.
inline Scene generate_scene(const SceneSpec& spec) {
  if (spec.min_objects < 1 || spec.max_objects < spec.min_objects) {
    throw std::invalid_argument("generate_scene: bad object count range");
  }
  if (!(spec.min_depth > 0.0) || spec.max_depth < spec.min_depth ||
      spec.max_lateral < spec.min_lateral) {
    throw std::invalid_argument("generate_scene: bad placement ranges");
  }
  std::mt19937_64 rng(detail::mix_seed(spec.seed, 0, 0x5ce7e));
  std::uniform_int_distribution<int> count_dist(spec.min_objects, spec.max_objects);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int n = count_dist(rng);
  Scene scene;
  for (int i = 0; i < n; ++i) {
    Box3D box;
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_placement_retries && !placed; ++attempt) {
      const double jitter = spec.dim_jitter;
      box.w = spec.mean_w * (1.0 + jitter * (2.0 * unit(rng) - 1.0));
      box.h = spec.mean_h * (1.0 + jitter * (2.0 * unit(rng) - 1.0));
      box.l = spec.mean_l * (1.0 + jitter * (2.0 * unit(rng) - 1.0));
      box.yaw = wrap_angle(std::numbers::pi * (2.0 * unit(rng) - 1.0));
      box.center = {spec.min_lateral + (spec.max_lateral - spec.min_lateral) * unit(rng),
                    spec.ground_y - 0.5 * box.h,
                    spec.min_depth + (spec.max_depth - spec.min_depth) * unit(rng)};
      placed = true;
      for (const Box3D& other : scene.boxes) {
        const double dx = box.center.x - other.center.x;
        const double dz = box.center.z - other.center.z;
        if (std::hypot(dx, dz) < spec.min_separation || bev_iou(box, other) > 0.0) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) {
      throw generation_error("generate_scene: placement failed after " +
                             std::to_string(spec.max_placement_retries) + " retries");
    }
    scene.boxes.push_back(box);
    scene.truth.push_back(detail::hypothesis_from_box(box, spec.cls, spec.cam, spec.sigma_floor));
  }

  std::vector<FeaturePoint> centers;
  std::vector<int> classes(scene.truth.size(), 0);
  for (const auto& o : scene.truth) centers.push_back(o.bbox_center);
  for (const PairCandidate& c : match_pairs(centers, classes, spec.match)) {
    const PairTarget t = pair_target(scene.boxes[c.i].center, scene.boxes[c.j].center);
    scene.constraints.push_back({c.i, c.j, t.kx, t.ky, t.kz, spec.sigma_floor});
  }
  return scene;
}

/// Injects calibrated noise into a scene's predictions. Written sigma fields
/// are the true noise scales times the miscalibration factor, floored.
inline PredictionSet corrupt(const Scene& scene, const SceneSpec& spec,
                             std::uint64_t noise_seed) {
  detail::NoiseSource noise(noise_seed, spec.noise);
  const double sigma_z = std::max(spec.sigma_floor, spec.sigma_z_true * spec.miscalibration);
  const double sigma_uv = std::max(spec.sigma_floor, spec.sigma_uv_true * spec.miscalibration);
  const double sigma_k = std::max(spec.sigma_floor, spec.sigma_k_true * spec.miscalibration);

  PredictionSet out;
  out.objects = scene.truth;
  for (auto& o : out.objects) {
    o.z = std::max(0.5, o.z + noise.draw(spec.sigma_z_true));
    o.offset_u += noise.draw(spec.sigma_uv_true);
    o.offset_v += noise.draw(spec.sigma_uv_true);
    o.sigma_z = sigma_z;
    o.sigma_uv = sigma_uv;
  }
  out.pairs = scene.constraints;
  for (auto& p : out.pairs) {
    p.kx = std::max(0.0, p.kx + noise.draw(spec.sigma_k_true));
    p.ky = std::max(0.0, p.ky + noise.draw(spec.sigma_k_true));
    p.kz = std::max(0.0, p.kz + noise.draw(spec.sigma_k_true));
    p.sigma_k = sigma_k;
  }
  return out;
}

struct TrialStats {
  int objects = 0;
  int paired_objects = 0;
  int edges = 0;
  double depth_err_before_sum = 0.0;  ///< over paired objects
  double depth_err_after_sum = 0.0;
  double center_err_before_sum = 0.0;
  double center_err_after_sum = 0.0;
  bool improved = false;
  bool diverged = false;
};

struct ExperimentReport {
  int trials = 0;
  int trials_with_pairs = 0;
  int paired_objects = 0;
  int diverged = 0;
  double depth_mae_before = 0.0;  ///< pooled over paired objects
  double depth_mae_after = 0.0;
  double center_mae_before = 0.0;
  double center_mae_after = 0.0;
  double improved_fraction = 0.0;  ///< of trials with at least one pair

  double depth_improvement() const {
    return depth_mae_before > 0.0 ? 1.0 - depth_mae_after / depth_mae_before : 0.0;
  }

  std::string to_kv() const {
    auto f = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.6f", v);
      return std::string(buf);
    };
    std::string s;
    s += "trials = " + std::to_string(trials) + "\n";
    s += "trials_with_pairs = " + std::to_string(trials_with_pairs) + "\n";
    s += "paired_objects = " + std::to_string(paired_objects) + "\n";
    s += "diverged = " + std::to_string(diverged) + "\n";
    s += "depth_mae_before = " + f(depth_mae_before) + "\n";
    s += "depth_mae_after = " + f(depth_mae_after) + "\n";
    s += "depth_improvement = " + f(depth_improvement()) + "\n";
    s += "center_mae_before = " + f(center_mae_before) + "\n";
    s += "center_mae_after = " + f(center_mae_after) + "\n";
    s += "improved_fraction = " + f(improved_fraction) + "\n";
    return s;
  }
};

/// One generate -> corrupt -> match -> solve round.
inline TrialStats run_trial(const SceneSpec& spec, std::uint64_t trial_index,
                            const SolveOptions& solve_opt = {},
                            PredictionSet* corrupted_out = nullptr,
                            std::vector<ObjectHypothesis>* refined_out = nullptr) {
  SceneSpec trial_spec = spec;
  trial_spec.seed = detail::mix_seed(spec.seed, trial_index, 0x9c3e);
  const Scene scene = generate_scene(trial_spec);
  const PredictionSet pred = corrupt(scene, spec, detail::mix_seed(spec.seed, trial_index, 0xc0));
  if (corrupted_out) *corrupted_out = pred;

  const ConstraintGraph graph = build_graph(pred.objects, pred.pairs, spec.cam);
  const SolveResult solved = solve(graph, solve_opt);
  if (refined_out) *refined_out = solved.objects;

  TrialStats stats;
  stats.objects = static_cast<int>(scene.truth.size());
  stats.edges = static_cast<int>(graph.edges().size());
  stats.diverged = solved.report.diverged();
  for (const GraphVertex& v : graph.vertices()) {
    const int i = v.object_index;
    const WorldPoint truth = scene.truth[i].center(spec.cam);
    const WorldPoint before = pred.objects[i].center(spec.cam);
    const WorldPoint after = solved.objects[i].center(spec.cam);
    stats.paired_objects += 1;
    stats.depth_err_before_sum += std::abs(before.z - truth.z);
    stats.depth_err_after_sum += std::abs(after.z - truth.z);
    auto dist = [](const WorldPoint& a, const WorldPoint& b) {
      return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) +
                       (a.z - b.z) * (a.z - b.z));
    };
    stats.center_err_before_sum += dist(before, truth);
    stats.center_err_after_sum += dist(after, truth);
  }
  stats.improved = stats.paired_objects > 0 &&
                   stats.depth_err_after_sum < stats.depth_err_before_sum;
  return stats;
}

/// Runs seeded trials (optionally across threads; aggregation order is by
/// trial index, so the report does not depend on the thread count).
inline ExperimentReport run_experiment(const SceneSpec& spec, int trials, int jobs = 1,
                                       const SolveOptions& solve_opt = {}) {
  if (trials < 1) throw std::invalid_argument("run_experiment: trials must be >= 1");
  std::vector<TrialStats> stats(trials);
  jobs = std::max(1, jobs);
  if (jobs == 1) {
    for (int t = 0; t < trials; ++t) stats[t] = run_trial(spec, t, solve_opt);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (int t = next.fetch_add(1); t < trials; t = next.fetch_add(1)) {
          stats[t] = run_trial(spec, t, solve_opt);
        }
      });
    }
    for (auto& w : workers) w.join();
  }

  ExperimentReport rep;
  rep.trials = trials;
  int improved = 0;
  for (const TrialStats& s : stats) {
    if (s.diverged) rep.diverged += 1;
    if (s.paired_objects == 0) continue;
    rep.trials_with_pairs += 1;
    rep.paired_objects += s.paired_objects;
    rep.depth_mae_before += s.depth_err_before_sum;
    rep.depth_mae_after += s.depth_err_after_sum;
    rep.center_mae_before += s.center_err_before_sum;
    rep.center_mae_after += s.center_err_after_sum;
    if (s.improved) improved += 1;
  }
  if (rep.paired_objects > 0) {
    rep.depth_mae_before /= rep.paired_objects;
    rep.depth_mae_after /= rep.paired_objects;
    rep.center_mae_before /= rep.paired_objects;
    rep.center_mae_after /= rep.paired_objects;
  }
  rep.improved_fraction =
      rep.trials_with_pairs > 0 ? static_cast<double>(improved) / rep.trials_with_pairs : 0.0;
  return rep;
}

}  // namespace pairopt
