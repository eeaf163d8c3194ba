#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pairopt/geometry.hpp"
#include "pairopt/kitti_io.hpp"

namespace pairopt {

class validation_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ApMode { kAp40, kAp11 };

inline const char* to_string(ApMode m) { return m == ApMode::kAp40 ? "AP40" : "AP11"; }

enum class DetFlag { kTruePositive, kFalsePositive, kIgnored };

struct EvalOptions {
  std::vector<std::string> classes = {"Car", "Pedestrian", "Cyclist"};
  std::vector<double> iou_thresholds = {0.5, 0.7};
  /// The benchmark treats Van ground truths as ignore regions when
  /// evaluating Car detections.
  bool van_ignores_car = true;
  /// A non-TP detection whose 2D intersection-over-detection-area with a
  /// DontCare region reaches this value is not counted as a false positive.
  double dontcare_overlap = 0.5;
  DifficultyThresholds difficulty;
};

/// Axis-aligned pixel-box IoU of two label records.
inline double box2d_iou(const LabelRecord& a, const LabelRecord& b) {
  const double iw = std::min(a.right, b.right) - std::max(a.left, b.left);
  const double ih = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = (a.right - a.left) * (a.bottom - a.top) +
                     (b.right - b.left) * (b.bottom - b.top) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

using IouFn = std::function<double(const LabelRecord& gt, const LabelRecord& det)>;

struct MatchedDetections {
  std::vector<DetFlag> flags;       ///< aligned with the input detections
  std::vector<double> similarity;   ///< (1 + cos d_alpha)/2 for TPs, else 0
  int counted_gts = 0;              ///< ground truths inside the difficulty bin
};

/// Greedy score-ordered matching for one image and one class. Each counted
/// ground truth is used at most once. Ground truths outside the difficulty
/// bin, Van boxes under Car evaluation, and DontCare regions ignore the
/// detections they overlap instead of turning them into false positives.
inline MatchedDetections match_detections(const std::vector<LabelRecord>& gts,
                                          const std::vector<LabelRecord>& dets,
                                          const IouFn& iou_fn, double threshold,
                                          Difficulty bin, const std::string& cls,
                                          const EvalOptions& opt = {}) {
  for (std::size_t k = 1; k < dets.size(); ++k) {
    if (dets[k].score.value_or(1.0) > dets[k - 1].score.value_or(1.0)) {
      throw std::invalid_argument("match_detections: detections must be sorted by score");
    }
  }
  auto safe_iou = [&](const LabelRecord& g, const LabelRecord& d) {
    try {
      return iou_fn(g, d);
    } catch (const std::invalid_argument&) {
      return 0.0;
    }
  };

  std::vector<int> counted, ignored, dontcare;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const LabelRecord& r = gts[g];
    if (r.dont_care()) {
      dontcare.push_back(static_cast<int>(g));
    } else if (r.type == cls) {
      if (static_cast<int>(difficulty(r, opt.difficulty)) <= static_cast<int>(bin)) {
        counted.push_back(static_cast<int>(g));
      } else {
        ignored.push_back(static_cast<int>(g));
      }
    } else if (cls == "Car" && r.type == "Van" && opt.van_ignores_car) {
      ignored.push_back(static_cast<int>(g));
    }
  }

  MatchedDetections out;
  out.counted_gts = static_cast<int>(counted.size());
  out.flags.assign(dets.size(), DetFlag::kFalsePositive);
  out.similarity.assign(dets.size(), 0.0);
  std::vector<bool> used(gts.size(), false);

  for (std::size_t d = 0; d < dets.size(); ++d) {
    double best = 0.0;
    int best_gt = -1;
    for (int g : counted) {
      if (used[g]) continue;
      const double v = safe_iou(gts[g], dets[d]);
      if (v > best) {
        best = v;
        best_gt = g;
      }
    }
    if (best_gt >= 0 && best >= threshold) {
      used[best_gt] = true;
      out.flags[d] = DetFlag::kTruePositive;
      out.similarity[d] = 0.5 * (1.0 + std::cos(wrap_angle(dets[d].alpha - gts[best_gt].alpha)));
      continue;
    }
    bool drop = false;
    for (int g : ignored) {
      if (safe_iou(gts[g], dets[d]) >= threshold) {
        drop = true;
        break;
      }
    }
    for (std::size_t k = 0; k < dontcare.size() && !drop; ++k) {
      const LabelRecord& dc = gts[dontcare[k]];
      const double iw = std::min(dc.right, dets[d].right) - std::max(dc.left, dets[d].left);
      const double ih = std::min(dc.bottom, dets[d].bottom) - std::max(dc.top, dets[d].top);
      const double area = dets[d].bbox_width() * dets[d].bbox_height();
      if (iw > 0.0 && ih > 0.0 && area > 0.0 && iw * ih / area >= opt.dontcare_overlap) {
        drop = true;
      }
    }
    if (drop) out.flags[d] = DetFlag::kIgnored;
  }
  return out;
}

/// Pooled ranked outcomes of one evaluation cell. Ignored detections are
/// excluded before ranking.
struct PrCurve {
  int num_gt = 0;
  std::vector<double> scores;      ///< descending
  std::vector<char> tp;
  std::vector<double> similarity;  ///< per rank, 0 for FP
  std::vector<double> recall;      ///< cumulative, non-decreasing
  std::vector<double> precision;
  std::vector<double> sim_ratio;   ///< cumulative similarity / rank

  void build() {
    const std::size_t n = scores.size();
    recall.resize(n);
    precision.resize(n);
    sim_ratio.resize(n);
    double tps = 0.0, sims = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      tps += tp[k] ? 1.0 : 0.0;
      sims += similarity[k];
      recall[k] = num_gt > 0 ? tps / num_gt : 0.0;
      precision[k] = tps / static_cast<double>(k + 1);
      sim_ratio[k] = sims / static_cast<double>(k + 1);
    }
  }
};

struct RankedOutcome {
  double score = 0.0;
  bool tp = false;
  double similarity = 0.0;
};

inline PrCurve build_pr_curve(std::vector<RankedOutcome> outcomes, int num_gt) {
  // Stable sort keeps input order on score ties.
  std::stable_sort(outcomes.begin(), outcomes.end(),
                   [](const RankedOutcome& a, const RankedOutcome& b) { return a.score > b.score; });
  PrCurve c;
  c.num_gt = num_gt;
  c.scores.reserve(outcomes.size());
  for (const auto& o : outcomes) {
    c.scores.push_back(o.score);
    c.tp.push_back(o.tp ? 1 : 0);
    c.similarity.push_back(o.tp ? o.similarity : 0.0);
  }
  c.build();
  return c;
}

namespace detail {

/// max over ranks with recall >= r of `values`; 0 when no rank reaches r.
inline double interpolated_at(const PrCurve& c, const std::vector<double>& values, double r) {
  double best = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (c.recall[k] >= r - 1e-12) best = std::max(best, values[k]);
  }
  return best;
}

inline double ap_style_average(const PrCurve& c, const std::vector<double>& values, ApMode mode) {
  double sum = 0.0;
  if (mode == ApMode::kAp40) {
    for (int i = 1; i <= 40; ++i) sum += interpolated_at(c, values, i / 40.0);
    return sum / 40.0;
  }
  for (int i = 0; i <= 10; ++i) sum += interpolated_at(c, values, i / 10.0);
  return sum / 11.0;
}

}  // namespace detail

/// Interpolated average precision. AP40 samples recall at {1/40, ..., 1}
/// (zero excluded); AP11 samples {0, 0.1, ..., 1}.
inline double average_precision(const PrCurve& c, ApMode mode) {
  return detail::ap_style_average(c, c.precision, mode);
}

/// Average orientation similarity: AP-style average where each true
/// positive contributes (1 + cos d_alpha)/2 instead of 1.
inline double orientation_similarity(const PrCurve& c, ApMode mode) {
  return detail::ap_style_average(c, c.sim_ratio, mode);
}

struct EvalRow {
  std::string cls;
  std::string metric;  ///< AP_2D, AOS, AP_bv, AP_3D
  Difficulty difficulty = Difficulty::kEasy;
  double iou = 0.5;
  ApMode mode = ApMode::kAp40;
  double value = 0.0;
};

struct EvalTable {
  std::vector<EvalRow> rows;

  /// Aligned text, one block per class/IoU/mode with difficulty columns.
  std::string to_text() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(6);
    const char* metrics[] = {"AP_2D", "AOS", "AP_bv", "AP_3D"};
    std::vector<std::string> classes;
    std::vector<double> ious;
    for (const auto& r : rows) {
      if (std::find(classes.begin(), classes.end(), r.cls) == classes.end()) {
        classes.push_back(r.cls);
      }
      if (std::find(ious.begin(), ious.end(), r.iou) == ious.end()) ious.push_back(r.iou);
    }
    for (const auto& cls : classes) {
      for (double iou : ious) {
        for (ApMode mode : {ApMode::kAp40, ApMode::kAp11}) {
          os << "class=" << cls << " iou=" << format(iou, 2) << " mode=" << to_string(mode)
             << "\n";
          os << "  metric      Easy      Moderate  Hard\n";
          for (const char* m : metrics) {
            os << "  " << m << std::string(10 - std::min<std::size_t>(10, std::string(m).size()), ' ');
            for (Difficulty d :
                 {Difficulty::kEasy, Difficulty::kModerate, Difficulty::kHard}) {
              os << "  " << format(find(cls, m, d, iou, mode), 6);
            }
            os << "\n";
          }
        }
      }
    }
    return os.str();
  }

  /// Machine-readable key = value lines, one per row, deterministic order.
  std::string to_kv() const {
    std::ostringstream os;
    for (const auto& r : rows) {
      os << "ap." << r.cls << "." << r.metric << ".iou" << format(r.iou, 2) << "."
         << to_string(r.mode) << "." << to_string(r.difficulty) << " = "
         << format(r.value, 6) << "\n";
    }
    return os.str();
  }

  double find(const std::string& cls, const std::string& metric, Difficulty d, double iou,
              ApMode mode) const {
    for (const auto& r : rows) {
      if (r.cls == cls && r.metric == metric && r.difficulty == d && r.iou == iou &&
          r.mode == mode) {
        return r.value;
      }
    }
    return 0.0;
  }

 private:
  static std::string format(double v, int precision) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
  }
};

using LabelSet = std::map<std::string, std::vector<LabelRecord>>;

/// Full evaluation: AP_2D, AOS, AP_bv and AP_3D per class, difficulty, IoU
/// threshold and AP mode. Ground-truth and detection sets must cover the
/// same image ids.
inline EvalTable evaluate(const LabelSet& gt_set, const LabelSet& det_set,
                          const EvalOptions& opt = {}) {
  {
    std::vector<std::string> offenders;
    for (const auto& [id, _] : gt_set) {
      if (!det_set.count(id)) offenders.push_back(id + " (missing detections)");
    }
    for (const auto& [id, _] : det_set) {
      if (!gt_set.count(id)) offenders.push_back(id + " (missing ground truth)");
    }
    if (!offenders.empty()) {
      std::string msg = "evaluate: image id sets differ:";
      for (std::size_t i = 0; i < offenders.size() && i < 10; ++i) msg += " " + offenders[i];
      throw validation_error(msg);
    }
  }

  const IouFn iou_2d = box2d_iou;
  const IouFn iou_bv = [](const LabelRecord& g, const LabelRecord& d) {
    return bev_iou(label_to_box3d(g), label_to_box3d(d));
  };
  const IouFn iou_vol = [](const LabelRecord& g, const LabelRecord& d) {
    return iou_3d(label_to_box3d(g), label_to_box3d(d));
  };

  EvalTable table;
  for (const auto& cls : opt.classes) {
    // Per-image class detections, sorted by descending score once.
    std::map<std::string, std::vector<LabelRecord>> dets;
    for (const auto& [id, records] : det_set) {
      auto& v = dets[id];
      for (const auto& r : records) {
        if (r.type == cls) v.push_back(r);
      }
      std::stable_sort(v.begin(), v.end(), [](const LabelRecord& a, const LabelRecord& b) {
        return a.score.value_or(1.0) > b.score.value_or(1.0);
      });
    }

    struct Cell {
      const char* metric;
      const IouFn* fn;
    };
    const Cell cells[] = {{"AP_2D", &iou_2d}, {"AP_bv", &iou_bv}, {"AP_3D", &iou_vol}};

    for (double threshold : opt.iou_thresholds) {
      for (Difficulty bin : {Difficulty::kEasy, Difficulty::kModerate, Difficulty::kHard}) {
        for (const Cell& cell : cells) {
          std::vector<RankedOutcome> pooled;
          int num_gt = 0;
          for (const auto& [id, gts] : gt_set) {
            const auto& d = dets[id];
            const MatchedDetections m =
                match_detections(gts, d, *cell.fn, threshold, bin, cls, opt);
            num_gt += m.counted_gts;
            for (std::size_t k = 0; k < d.size(); ++k) {
              if (m.flags[k] == DetFlag::kIgnored) continue;
              pooled.push_back({d[k].score.value_or(1.0),
                                m.flags[k] == DetFlag::kTruePositive, m.similarity[k]});
            }
          }
          const PrCurve curve = build_pr_curve(std::move(pooled), num_gt);
          for (ApMode mode : {ApMode::kAp40, ApMode::kAp11}) {
            table.rows.push_back({cls, cell.metric, bin, threshold, mode,
                                  average_precision(curve, mode)});
            if (std::string(cell.metric) == "AP_2D") {
              table.rows.push_back({cls, "AOS", bin, threshold, mode,
                                    orientation_similarity(curve, mode)});
            }
          }
        }
      }
    }
  }
  return table;
}

}  // namespace pairopt
