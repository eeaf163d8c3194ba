#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pairopt/camera.hpp"

namespace pairopt {

/// An effective object pair: the circle spanned by the two 2D box centers
/// (their distance as diameter) contains no third object center strictly
/// inside. `keypoint` is the per-axis nearest-integer rounding of the
/// midpoint, the feature cell the pair's distance prediction is read from.
struct PairCandidate {
  int i = 0;  ///< object indices, i < j
  int j = 0;
  FeaturePoint center_i;
  FeaturePoint center_j;
  FeaturePoint keypoint;
};

/// Ground-truth regression target of one pair: entrywise absolute 3D
/// displacement in the frame rotated to the pair midpoint's viewing ray.
struct PairTarget {
  double kx = 0.0;
  double ky = 0.0;
  double kz = 0.0;
  double gamma_mid = 0.0;
};

struct PairMatchOptions {
  /// When true, only same-class centers can disqualify a pair; default is
  /// that any third object center blocks.
  bool same_class_blockers_only = false;
};

/// Selects effective same-class pairs by the range-circle rule. Boundary
/// contact does not disqualify; only centers strictly inside the circle do.
inline std::vector<PairCandidate> match_pairs(std::span<const FeaturePoint> centers,
                                              std::span<const int> classes,
                                              const PairMatchOptions& opt = {}) {
  if (centers.size() != classes.size()) {
    throw std::invalid_argument("match_pairs: centers/classes size mismatch");
  }
  const int n = static_cast<int>(centers.size());
  std::vector<PairCandidate> out;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (classes[i] != classes[j]) continue;
      const double mu = 0.5 * (centers[i].u + centers[j].u);
      const double mv = 0.5 * (centers[i].v + centers[j].v);
      const double du = centers[i].u - centers[j].u;
      const double dv = centers[i].v - centers[j].v;
      const double r2 = 0.25 * (du * du + dv * dv);
      bool blocked = false;
      for (int k = 0; k < n && !blocked; ++k) {
        if (k == i || k == j) continue;
        if (opt.same_class_blockers_only && classes[k] != classes[i]) continue;
        const double bu = centers[k].u - mu;
        const double bv = centers[k].v - mv;
        blocked = bu * bu + bv * bv < r2;
      }
      if (blocked) continue;
      out.push_back({i, j, centers[i], centers[j],
                     {std::round(mu), std::round(mv)}});
    }
  }
  return out;
}

/// Ground-truth pair distance k^v = |R(gamma_mid) (c_i - c_j)| entrywise,
/// with gamma_mid the viewing angle of the 3D midpoint.
inline PairTarget pair_target(const WorldPoint& ci, const WorldPoint& cj) {
  const double pz = 0.5 * (ci.z + cj.z);
  if (!std::isfinite(pz) || pz <= 0.0) {
    throw std::invalid_argument("pair_target: midpoint depth must be positive");
  }
  const double px = 0.5 * (ci.x + cj.x);
  const double gamma = std::atan2(px, pz);
  const Eigen::Vector3d kw(ci.x - cj.x, ci.y - cj.y, ci.z - cj.z);
  const Eigen::Vector3d kv = rotation_about_y(gamma) * kw;
  return {std::abs(kv.x()), std::abs(kv.y()), std::abs(kv.z()), gamma};
}

struct PairCountRow {
  std::string cls;
  std::int64_t objects = 0;
  std::int64_t pairs = 0;
  std::int64_t paired_objects = 0;
};

struct PairCountReport {
  std::vector<PairCountRow> rows;

  /// Plain-text table: class, object, pair and paired-object counts.
  std::string to_text() const {
    std::size_t name_w = 5;
    for (const auto& r : rows) name_w = std::max(name_w, r.cls.size());
    std::ostringstream os;
    os << pad("Count", name_w) << "  " << pad_l("object", 10) << "  "
       << pad_l("pair", 10) << "  " << pad_l("paired object", 14) << "\n";
    for (const auto& r : rows) {
      os << pad(r.cls, name_w) << "  " << pad_l(std::to_string(r.objects), 10)
         << "  " << pad_l(std::to_string(r.pairs), 10) << "  "
         << pad_l(std::to_string(r.paired_objects), 14) << "\n";
    }
    return os.str();
  }

 private:
  static std::string pad(std::string s, std::size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  }
  static std::string pad_l(const std::string& s, std::size_t w) {
    return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
  }
};

/// Aggregates per-class object/pair counts over a label set, one image at a
/// time. "Paired object" counts objects appearing in at least one pair.
class PairCountAccumulator {
 public:
  explicit PairCountAccumulator(PairMatchOptions opt = {}) : opt_(opt) {}

  void add_image(std::span<const std::string> classes,
                 std::span<const FeaturePoint> centers) {
    if (classes.size() != centers.size()) {
      throw std::invalid_argument("add_image: classes/centers size mismatch");
    }
    std::vector<int> ids(classes.size());
    for (std::size_t k = 0; k < classes.size(); ++k) {
      ids[k] = class_id(classes[k]);
      counts_[classes[k]].objects += 1;
    }
    const auto pairs = match_pairs(centers, ids, opt_);
    std::set<int> paired;
    for (const auto& p : pairs) {
      counts_[classes[p.i]].pairs += 1;
      paired.insert(p.i);
      paired.insert(p.j);
    }
    for (int idx : paired) counts_[classes[idx]].paired_objects += 1;
  }

  PairCountReport report() const {
    PairCountReport rep;
    // Benchmark classes first, the rest alphabetically.
    for (const char* name : {"Car", "Pedestrian", "Cyclist"}) {
      if (auto it = counts_.find(name); it != counts_.end()) {
        rep.rows.push_back({it->first, it->second.objects, it->second.pairs,
                            it->second.paired_objects});
      }
    }
    for (const auto& [name, c] : counts_) {
      if (name == "Car" || name == "Pedestrian" || name == "Cyclist") continue;
      rep.rows.push_back({name, c.objects, c.pairs, c.paired_objects});
    }
    return rep;
  }

 private:
  struct Counts {
    std::int64_t objects = 0;
    std::int64_t pairs = 0;
    std::int64_t paired_objects = 0;
  };

  int class_id(const std::string& name) {
    auto [it, inserted] = ids_.emplace(name, static_cast<int>(ids_.size()));
    return it->second;
  }

  PairMatchOptions opt_;
  std::map<std::string, Counts> counts_;
  std::map<std::string, int> ids_;
};

}  // namespace pairopt
