#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "pairopt/camera.hpp"
#include "pairopt/detections.hpp"
#include "pairopt/pairing.hpp"
#include "pairopt/uncertainty.hpp"

namespace pairopt {

/// One optimization vertex: the variables (u, v, z) of a paired object,
/// regularized toward the network priors with weights 1/sigma.
struct GraphVertex {
  int object_index = 0;
  double prior_u = 0.0;
  double prior_v = 0.0;
  double prior_z = 0.0;
  double weight_uv = 1.0;  ///< shared by the u and v residuals
  double weight_z = 1.0;
};

/// One pairwise constraint edge; a single weight covers all three components.
struct GraphEdge {
  int a = 0;  ///< vertex indices
  int b = 0;
  Eigen::Vector3d measured = Eigen::Vector3d::Zero();
  double weight = 1.0;
};

/// The per-image least-squares problem: paired objects as vertices, pair
/// constraints as edges. Objects in no pair are recorded as pass-through and
/// returned untouched by solve().
class ConstraintGraph {
 public:
  ConstraintGraph(std::vector<ObjectHypothesis> objects,
                  std::vector<GraphVertex> vertices,
                  std::vector<GraphEdge> edges,
                  std::vector<int> pass_through,
                  CameraModel cam)
      : objects_(std::move(objects)),
        vertices_(std::move(vertices)),
        edges_(std::move(edges)),
        pass_through_(std::move(pass_through)),
        cam_(cam) {}

  const std::vector<ObjectHypothesis>& objects() const { return objects_; }
  const std::vector<GraphVertex>& vertices() const { return vertices_; }
  const std::vector<GraphEdge>& edges() const { return edges_; }
  const std::vector<int>& pass_through() const { return pass_through_; }
  const CameraModel& camera() const { return cam_; }

  int residual_dimension() const {
    return 3 * static_cast<int>(vertices_.size()) + 3 * static_cast<int>(edges_.size());
  }

  /// Stacked (u, v, z) per vertex at the network priors.
  Eigen::VectorXd prior_state() const {
    Eigen::VectorXd x(3 * vertices_.size());
    for (std::size_t i = 0; i < vertices_.size(); ++i) {
      x[3 * i + 0] = vertices_[i].prior_u;
      x[3 * i + 1] = vertices_[i].prior_v;
      x[3 * i + 2] = vertices_[i].prior_z;
    }
    return x;
  }

 private:
  std::vector<ObjectHypothesis> objects_;
  std::vector<GraphVertex> vertices_;
  std::vector<GraphEdge> edges_;
  std::vector<int> pass_through_;
  CameraModel cam_;
};

/// Builds the constraint graph for one image. Every object referenced by at
/// least one pair becomes a vertex; the rest pass through unmodified.
inline ConstraintGraph build_graph(std::span<const ObjectHypothesis> objects,
                                   std::span<const PairConstraintRecord> pairs,
                                   const CameraModel& cam,
                                   double weight_clamp = kDefaultWeightClamp) {
  const int n = static_cast<int>(objects.size());
  std::vector<int> vertex_of(n, -1);
  std::vector<GraphVertex> vertices;
  std::vector<GraphEdge> edges;
  edges.reserve(pairs.size());

  auto vertex_for = [&](int object_index) {
    int& slot = vertex_of[object_index];
    if (slot < 0) {
      const ObjectHypothesis& o = objects[object_index];
      slot = static_cast<int>(vertices.size());
      vertices.push_back({object_index, o.proj_u(), o.proj_v(), o.z,
                          weight_from_sigma(o.sigma_uv, weight_clamp),
                          weight_from_sigma(o.sigma_z, weight_clamp)});
    }
    return slot;
  };

  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const PairConstraintRecord& p = pairs[e];
    if (p.i < 0 || p.j < 0 || p.i >= n || p.j >= n || p.i == p.j) {
      throw std::invalid_argument("build_graph: pair " + std::to_string(e) +
                                  " references a missing object");
    }
    edges.push_back({vertex_for(p.i), vertex_for(p.j),
                     Eigen::Vector3d(p.kx, p.ky, p.kz),
                     weight_from_sigma(p.sigma_k, weight_clamp)});
  }

  std::vector<int> pass_through;
  for (int i = 0; i < n; ++i) {
    if (vertex_of[i] < 0) pass_through.push_back(i);
  }
  return ConstraintGraph(std::vector<ObjectHypothesis>(objects.begin(), objects.end()),
                         std::move(vertices), std::move(edges), std::move(pass_through), cam);
}

namespace detail {

/// k^v implied by the six variables of an edge: back-project the two
/// centers, rotate by the midpoint viewing angle, take entrywise absolutes.
inline Eigen::Vector3d edge_constraint_value(const CameraModel& cam,
                                             double ua, double va, double za,
                                             double ub, double vb, double zb) {
  const WorldPoint ca = back_project(cam, ua, va, za);
  const WorldPoint cb = back_project(cam, ub, vb, zb);
  const PairTarget t = pair_target(ca, cb);
  return {t.kx, t.ky, t.kz};
}

}  // namespace detail

/// Weighted residual vector, length 3 N^G + 3 M: per vertex the 1/sigma
/// scaled deviations from the priors, per edge the 1/sigma_k scaled
/// difference between the measured and the implied pair distance.
inline Eigen::VectorXd residuals(const ConstraintGraph& g, const Eigen::VectorXd& state) {
  const auto& vs = g.vertices();
  const auto& es = g.edges();
  if (state.size() != static_cast<Eigen::Index>(3 * vs.size())) {
    throw std::invalid_argument("residuals: state dimension mismatch");
  }
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (!(state[3 * i + 2] > 0.0)) {
      throw std::invalid_argument("residuals: non-positive depth in state");
    }
  }
  Eigen::VectorXd r(g.residual_dimension());
  for (std::size_t i = 0; i < vs.size(); ++i) {
    r[3 * i + 0] = vs[i].weight_uv * (vs[i].prior_u - state[3 * i + 0]);
    r[3 * i + 1] = vs[i].weight_uv * (vs[i].prior_v - state[3 * i + 1]);
    r[3 * i + 2] = vs[i].weight_z * (vs[i].prior_z - state[3 * i + 2]);
  }
  const std::size_t base = 3 * vs.size();
  for (std::size_t e = 0; e < es.size(); ++e) {
    const GraphEdge& edge = es[e];
    const Eigen::Vector3d k = detail::edge_constraint_value(
        g.camera(), state[3 * edge.a], state[3 * edge.a + 1], state[3 * edge.a + 2],
        state[3 * edge.b], state[3 * edge.b + 1], state[3 * edge.b + 2]);
    r.segment<3>(base + 3 * e) = edge.weight * (edge.measured - k);
  }
  return r;
}

/// Jacobian of residuals() w.r.t. the state. Vertex rows are analytic; edge
/// rows use central differences on the six variables of the edge, which
/// also differentiates through the state-dependent midpoint angle.
inline Eigen::MatrixXd residual_jacobian(const ConstraintGraph& g, const Eigen::VectorXd& state,
                                         double fd_step = 1e-6) {
  const auto& vs = g.vertices();
  const auto& es = g.edges();
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(g.residual_dimension(), state.size());
  for (std::size_t i = 0; i < vs.size(); ++i) {
    j(3 * i + 0, 3 * i + 0) = -vs[i].weight_uv;
    j(3 * i + 1, 3 * i + 1) = -vs[i].weight_uv;
    j(3 * i + 2, 3 * i + 2) = -vs[i].weight_z;
  }
  const std::size_t base = 3 * vs.size();
  for (std::size_t e = 0; e < es.size(); ++e) {
    const GraphEdge& edge = es[e];
    double vars[6] = {state[3 * edge.a], state[3 * edge.a + 1], state[3 * edge.a + 2],
                      state[3 * edge.b], state[3 * edge.b + 1], state[3 * edge.b + 2]};
    const int cols[6] = {3 * edge.a, 3 * edge.a + 1, 3 * edge.a + 2,
                         3 * edge.b, 3 * edge.b + 1, 3 * edge.b + 2};
    for (int v = 0; v < 6; ++v) {
      const double saved = vars[v];
      vars[v] = saved + fd_step;
      const Eigen::Vector3d hi = detail::edge_constraint_value(
          g.camera(), vars[0], vars[1], vars[2], vars[3], vars[4], vars[5]);
      vars[v] = saved - fd_step;
      const Eigen::Vector3d lo = detail::edge_constraint_value(
          g.camera(), vars[0], vars[1], vars[2], vars[3], vars[4], vars[5]);
      vars[v] = saved;
      // residual = w (measured - k), so d residual/d var = -w dk/d var
      j.block<3, 1>(base + 3 * e, cols[v]) = -edge.weight * (hi - lo) / (2.0 * fd_step);
    }
  }
  return j;
}

enum class SolveStatus {
  kConverged,      ///< cost or step tolerance reached
  kMaxIterations,  ///< iteration budget exhausted
  kStalled,        ///< damping grew past its cap without an acceptable step
  kDiverged,       ///< non-finite residuals; objects carry the last valid state
};

struct SolveOptions {
  double initial_lambda = 1e-3;
  double lambda_increase = 10.0;
  double lambda_decrease = 10.0;
  double lambda_max = 1e12;
  int max_iterations = 100;
  double cost_tolerance = 1e-10;  ///< relative cost decrease
  double step_tolerance = 1e-10;  ///< step norm
  double min_depth = 1e-3;        ///< steps driving any z at or below are halved
  double fd_step = 1e-6;
};

struct SolveReport {
  SolveStatus status = SolveStatus::kConverged;
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;

  bool converged() const { return status == SolveStatus::kConverged; }
  bool diverged() const { return status == SolveStatus::kDiverged; }
};

struct SolveResult {
  std::vector<ObjectHypothesis> objects;
  SolveReport report;
};

/// Levenberg-Marquardt over the graph, started from the priors. Steps are
/// accepted only when they reduce the cost, so the final cost never exceeds
/// the initial one. Pass-through objects are returned verbatim.
inline SolveResult solve(const ConstraintGraph& g, const SolveOptions& opt = {}) {
  const auto& vs = g.vertices();
  SolveResult result;
  result.objects = g.objects();
  if (vs.empty()) {
    return result;
  }

  auto write_back = [&](const Eigen::VectorXd& x) {
    for (std::size_t i = 0; i < vs.size(); ++i) {
      ObjectHypothesis& o = result.objects[vs[i].object_index];
      o.offset_u = x[3 * i + 0] - o.keypoint.u;
      o.offset_v = x[3 * i + 1] - o.keypoint.v;
      o.z = x[3 * i + 2];
    }
  };

  Eigen::VectorXd x = g.prior_state();
  Eigen::VectorXd r = residuals(g, x);
  double cost = r.squaredNorm();
  result.report.initial_cost = cost;
  result.report.final_cost = cost;
  if (!std::isfinite(cost)) {
    result.report.status = SolveStatus::kDiverged;
    return result;
  }

  double lambda = opt.initial_lambda;
  SolveStatus status = SolveStatus::kMaxIterations;
  int iterations = 0;

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    if (cost <= 1e-30) {
      status = SolveStatus::kConverged;
      break;
    }
    const Eigen::MatrixXd j = residual_jacobian(g, x, opt.fd_step);
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd gradient = j.transpose() * r;
    // Marquardt scaling keeps the step invariant under uniform residual
    // rescaling (floor protects all-but-unconstrained directions).
    Eigen::VectorXd damping_diag = jtj.diagonal().cwiseMax(1e-12);

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * damping_diag;
      Eigen::VectorXd step = a.ldlt().solve(-gradient);

      // Keep depths strictly positive by halving offending steps.
      bool feasible = step.allFinite();
      for (int halvings = 0; feasible && halvings < 32; ++halvings) {
        bool ok = true;
        for (std::size_t i = 0; i < vs.size(); ++i) {
          if (x[3 * i + 2] + step[3 * i + 2] <= opt.min_depth) {
            ok = false;
            break;
          }
        }
        if (ok) break;
        step *= 0.5;
        if (halvings == 31) feasible = false;
      }

      double candidate_cost = std::numeric_limits<double>::infinity();
      Eigen::VectorXd candidate;
      Eigen::VectorXd candidate_r;
      if (feasible) {
        candidate = x + step;
        candidate_r = residuals(g, candidate);
        const double c = candidate_r.squaredNorm();
        if (std::isfinite(c)) candidate_cost = c;
      }

      if (candidate_cost < cost) {
        const double previous = cost;
        x = candidate;
        r = candidate_r;
        cost = candidate_cost;
        lambda = std::max(lambda / opt.lambda_decrease, 1e-15);
        accepted = true;
        ++iterations;
        if (previous - cost <= opt.cost_tolerance * previous ||
            step.norm() < opt.step_tolerance) {
          status = SolveStatus::kConverged;
        }
      } else {
        lambda *= opt.lambda_increase;
        if (lambda > opt.lambda_max) {
          status = SolveStatus::kStalled;
          break;
        }
      }
    }
    if (!accepted || status == SolveStatus::kConverged || status == SolveStatus::kStalled) {
      break;
    }
  }

  write_back(x);
  result.report.status = status;
  result.report.iterations = iterations;
  result.report.final_cost = cost;
  return result;
}

/// One line of the per-image diagnostics report.
inline std::string diagnostics_line(std::string_view image_id, const ConstraintGraph& g,
                                    const SolveReport& rep) {
  std::ostringstream os;
  os << image_id << " vertices=" << g.vertices().size() << " edges=" << g.edges().size()
     << " initial_cost=" << rep.initial_cost << " final_cost=" << rep.final_cost
     << " iterations=" << rep.iterations;
  return os.str();
}

}  // namespace pairopt
