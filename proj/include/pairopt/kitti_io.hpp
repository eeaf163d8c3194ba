#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pairopt/camera.hpp"
#include "pairopt/detections.hpp"
#include "pairopt/geometry.hpp"

namespace pairopt {

class parse_error : public std::runtime_error {
 public:
  parse_error(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_ = 0;
};

/// KITTI object label. `x, y, z` anchor at the bottom-face center in the
/// camera frame; dimensions are listed in the file as h, w, l.
struct LabelRecord {
  std::string type;
  double truncated = 0.0;
  int occluded = 0;
  double alpha = 0.0;
  double left = 0.0, top = 0.0, right = 0.0, bottom = 0.0;  // 2D box [px]
  double h = 0.0, w = 0.0, l = 0.0;                         // [m]
  double x = 0.0, y = 0.0, z = 0.0;                         // [m]
  double rotation_y = 0.0;
  std::optional<double> score;

  bool dont_care() const { return type == "DontCare"; }
  double bbox_height() const { return bottom - top; }
  double bbox_width() const { return right - left; }
};

struct FormatOptions {
  int precision = 6;  ///< decimals for every float field
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double to_double(std::string_view tok, int line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw parse_error(line, "unparseable number '" + std::string(tok) + "'");
  }
  return v;
}

inline std::string format_double(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

/// Calls fn(line_text, line_number) for every non-blank, non-comment line.
template <typename Fn>
inline void for_each_data_line(std::string_view text, Fn&& fn) {
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                                          : nl - pos);
    ++line_no;
    std::size_t first = line.find_first_not_of(" \t\r");
    if (first != std::string_view::npos && line[first] != '#') {
      fn(line, line_no);
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
}

}  // namespace detail

namespace detail {

inline LabelRecord label_from_tokens(const std::vector<std::string_view>& tok, int line_no) {
  LabelRecord r;
  r.type = std::string(tok[0]);
  r.truncated = to_double(tok[1], line_no);
  r.occluded = static_cast<int>(to_double(tok[2], line_no));
  r.alpha = to_double(tok[3], line_no);
  r.left = to_double(tok[4], line_no);
  r.top = to_double(tok[5], line_no);
  r.right = to_double(tok[6], line_no);
  r.bottom = to_double(tok[7], line_no);
  r.h = to_double(tok[8], line_no);
  r.w = to_double(tok[9], line_no);
  r.l = to_double(tok[10], line_no);
  r.x = to_double(tok[11], line_no);
  r.y = to_double(tok[12], line_no);
  r.z = to_double(tok[13], line_no);
  r.rotation_y = to_double(tok[14], line_no);
  if (tok.size() >= 16) r.score = to_double(tok[15], line_no);
  return r;
}

}  // namespace detail

/// Parses a KITTI label file: 15 whitespace-separated fields per object, 16
/// with a trailing score. '#' comment lines and blank lines are skipped.
inline std::vector<LabelRecord> parse_label_file(std::string_view text) {
  std::vector<LabelRecord> out;
  detail::for_each_data_line(text, [&](std::string_view line, int line_no) {
    const auto tok = detail::split_ws(line);
    if (tok.size() != 15 && tok.size() != 16) {
      throw parse_error(line_no, "expected 15 or 16 fields, got " + std::to_string(tok.size()));
    }
    out.push_back(detail::label_from_tokens(tok, line_no));
  });
  return out;
}

inline std::string emit_label_line(const LabelRecord& r, const FormatOptions& fmt = {}) {
  auto f = [&](double v) { return detail::format_double(v, fmt.precision); };
  std::string s = r.type + " " + f(r.truncated) + " " + std::to_string(r.occluded) + " " +
                  f(r.alpha) + " " + f(r.left) + " " + f(r.top) + " " + f(r.right) + " " +
                  f(r.bottom) + " " + f(r.h) + " " + f(r.w) + " " + f(r.l) + " " + f(r.x) +
                  " " + f(r.y) + " " + f(r.z) + " " + f(r.rotation_y);
  if (r.score) s += " " + f(*r.score);
  return s;
}

inline std::string emit_label_file(std::span<const LabelRecord> records,
                                   const FormatOptions& fmt = {}) {
  std::string out;
  for (const auto& r : records) {
    out += emit_label_line(r, fmt);
    out += '\n';
  }
  return out;
}

/// Extracts the P2 projection row of a KITTI calibration file. The first P2
/// line wins; duplicates append a warning when a sink is given.
inline CameraModel parse_calib(std::string_view text, int downsample,
                               std::vector<std::string>* warnings = nullptr) {
  if (downsample < 1) throw std::invalid_argument("parse_calib: downsample must be >= 1");
  std::optional<CameraModel> cam;
  detail::for_each_data_line(text, [&](std::string_view line, int line_no) {
    const auto tok = detail::split_ws(line);
    if (tok.empty() || tok[0] != "P2:") return;
    if (cam) {
      if (warnings) {
        warnings->push_back("line " + std::to_string(line_no) + ": duplicate P2 ignored");
      }
      return;
    }
    if (tok.size() != 13) {
      throw parse_error(line_no, "P2 must carry 12 values, got " + std::to_string(tok.size() - 1));
    }
    double p[12];
    for (int i = 0; i < 12; ++i) p[i] = detail::to_double(tok[i + 1], line_no);
    CameraModel c;
    c.fx = p[0];
    c.ax = p[2];
    c.tx = p[3];
    c.fy = p[5];
    c.ay = p[6];
    c.ty = p[7];
    c.s = downsample;
    cam = c;
  });
  if (!cam) throw parse_error(0, "calibration has no P2 line");
  return *cam;
}

/// KITTI locations anchor at the bottom-face center; the geometry module
/// expects true centers, so the y coordinate shifts up by h/2.
inline Box3D label_to_box3d(const LabelRecord& r) {
  return {{r.x, r.y - 0.5 * r.h, r.z}, r.w, r.h, r.l, wrap_angle(r.rotation_y)};
}

enum class Difficulty { kEasy = 0, kModerate = 1, kHard = 2, kIgnored = 3 };

inline const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return "Easy";
    case Difficulty::kModerate: return "Moderate";
    case Difficulty::kHard: return "Hard";
    default: return "Ignored";
  }
}

/// Benchmark difficulty thresholds. The published constants live here and
/// nowhere else.
struct DifficultyThresholds {
  double min_height[3] = {40.0, 25.0, 25.0};
  int max_occlusion[3] = {0, 1, 2};
  double max_truncation[3] = {0.15, 0.30, 0.50};
};

inline Difficulty difficulty(const LabelRecord& r, const DifficultyThresholds& t = {}) {
  if (r.dont_care()) return Difficulty::kIgnored;
  const double height = r.bbox_height();
  for (int d = 0; d < 3; ++d) {
    if (height >= t.min_height[d] && r.occluded <= t.max_occlusion[d] &&
        r.truncated <= t.max_truncation[d]) {
      return static_cast<Difficulty>(d);
    }
  }
  return Difficulty::kIgnored;
}

struct PredictionSet {
  std::vector<ObjectHypothesis> objects;
  std::vector<PairConstraintRecord> pairs;
};

/// Parses the extended prediction format: KITTI 16-field object lines plus
/// "sigma_z sigma_uv", and "PAIR i j kx ky kz sigma_k" constraint lines.
/// Feature-coordinate fields are derived from the pixel fields with the
/// camera's downsampling factor; the (u, v) prior comes from re-projecting
/// the 3D location.
inline PredictionSet parse_predictions(std::string_view text, const CameraModel& cam) {
  PredictionSet set;
  std::vector<int> pair_lines;
  detail::for_each_data_line(text, [&](std::string_view line, int line_no) {
    const auto tok = detail::split_ws(line);
    if (!tok.empty() && tok[0] == "PAIR") {
      if (tok.size() != 7) {
        throw parse_error(line_no, "PAIR line needs 6 values, got " + std::to_string(tok.size() - 1));
      }
      PairConstraintRecord p;
      p.i = static_cast<int>(detail::to_double(tok[1], line_no));
      p.j = static_cast<int>(detail::to_double(tok[2], line_no));
      p.kx = detail::to_double(tok[3], line_no);
      p.ky = detail::to_double(tok[4], line_no);
      p.kz = detail::to_double(tok[5], line_no);
      p.sigma_k = detail::to_double(tok[6], line_no);
      if (p.kx < 0.0 || p.ky < 0.0 || p.kz < 0.0) {
        throw parse_error(line_no, "pair distances must be non-negative");
      }
      if (!(p.sigma_k > 0.0)) throw parse_error(line_no, "sigma_k must be positive");
      set.pairs.push_back(p);
      pair_lines.push_back(line_no);
      return;
    }
    if (tok.size() != 18) {
      throw parse_error(line_no, "object line needs 18 fields, got " + std::to_string(tok.size()));
    }
    const LabelRecord r = detail::label_from_tokens(tok, line_no);
    const double sigma_z = detail::to_double(tok[16], line_no);
    const double sigma_uv = detail::to_double(tok[17], line_no);
    if (!(sigma_z > 0.0) || !(sigma_uv > 0.0)) {
      throw parse_error(line_no, "sigma fields must be positive");
    }
    if (!(r.z > 0.0)) throw parse_error(line_no, "prediction depth must be positive");

    ObjectHypothesis o;
    o.cls = r.type;
    o.truncated = r.truncated;
    o.occluded = r.occluded;
    o.alpha = r.alpha;
    o.width = r.w;
    o.height = r.h;
    o.length = r.l;
    o.score = r.score.value_or(1.0);
    o.sigma_z = sigma_z;
    o.sigma_uv = sigma_uv;
    o.bbox_center = {0.5 * (r.left + r.right) / cam.s, 0.5 * (r.top + r.bottom) / cam.s};
    o.bbox_w = (r.right - r.left) / cam.s;
    o.bbox_h = (r.bottom - r.top) / cam.s;
    o.keypoint = {std::round(o.bbox_center.u), std::round(o.bbox_center.v)};
    const FeaturePoint proj = project(cam, {r.x, r.y - 0.5 * r.h, r.z});
    o.offset_u = proj.u - o.keypoint.u;
    o.offset_v = proj.v - o.keypoint.v;
    o.z = r.z;
    set.objects.push_back(std::move(o));
  });

  const int n = static_cast<int>(set.objects.size());
  for (std::size_t k = 0; k < set.pairs.size(); ++k) {
    const PairConstraintRecord& p = set.pairs[k];
    if (p.i < 0 || p.j < 0 || p.i >= n || p.j >= n) {
      throw parse_error(pair_lines[k], "pair references object " +
                                           std::to_string(std::max(p.i, p.j)) + " of " +
                                           std::to_string(n));
    }
    if (p.i >= p.j) throw parse_error(pair_lines[k], "pair indices must satisfy i < j");
  }
  return set;
}

/// 16-field KITTI line implied by a hypothesis: location from the current
/// (u, v, z) state shifted back to the bottom face, global yaw from the
/// local yaw plus the viewing angle at the refined location.
inline LabelRecord hypothesis_to_label(const ObjectHypothesis& o, const CameraModel& cam) {
  LabelRecord r;
  r.type = o.cls;
  r.truncated = o.truncated;
  r.occluded = o.occluded;
  r.alpha = o.alpha;
  r.left = (o.bbox_center.u - 0.5 * o.bbox_w) * cam.s;
  r.right = (o.bbox_center.u + 0.5 * o.bbox_w) * cam.s;
  r.top = (o.bbox_center.v - 0.5 * o.bbox_h) * cam.s;
  r.bottom = (o.bbox_center.v + 0.5 * o.bbox_h) * cam.s;
  r.h = o.height;
  r.w = o.width;
  r.l = o.length;
  const WorldPoint c = o.center(cam);
  r.x = c.x;
  r.y = c.y + 0.5 * o.height;
  r.z = c.z;
  r.rotation_y = local_to_global_yaw(o.alpha, viewing_angle(c.x, c.z));
  r.score = o.score;
  return r;
}

inline std::string emit_predictions(const PredictionSet& set, const CameraModel& cam,
                                    const FormatOptions& fmt = {}) {
  std::string out;
  for (const auto& o : set.objects) {
    out += emit_label_line(hypothesis_to_label(o, cam), fmt);
    out += ' ';
    out += detail::format_double(o.sigma_z, fmt.precision);
    out += ' ';
    out += detail::format_double(o.sigma_uv, fmt.precision);
    out += '\n';
  }
  for (const auto& p : set.pairs) {
    out += "PAIR " + std::to_string(p.i) + " " + std::to_string(p.j) + " " +
           detail::format_double(p.kx, fmt.precision) + " " +
           detail::format_double(p.ky, fmt.precision) + " " +
           detail::format_double(p.kz, fmt.precision) + " " +
           detail::format_double(p.sigma_k, fmt.precision) + "\n";
  }
  return out;
}

}  // namespace pairopt
