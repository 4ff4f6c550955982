#include "fpba/ba.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "fpba/kdtree.hpp"

namespace fpba {

namespace {

constexpr double kTiny = 1e-9;  // residuals below this contribute no gradient

struct PoseCache {
  std::vector<Mat3> rot;
  std::vector<Mat3> rot_t;

  explicit PoseCache(std::span<const Pose> poses) {
    rot.reserve(poses.size());
    rot_t.reserve(poses.size());
    for (const auto& p : poses) {
      rot.push_back(p.rotation_matrix());
      rot_t.push_back(rot.back().transpose());
    }
  }
};

// Adds w * dL/dp for p = R c + t to the frame gradient.
inline void accumulate(Vec6& g, const Mat3& rot_t, const Vec3& local, const Vec3& dp) {
  g.head<3>() += dp;
  g.tail<3>() += local.cross(rot_t * dp);
}

LossEval make_eval(std::size_t frames) {
  LossEval e;
  e.grad.assign(frames, Vec6::Zero());
  return e;
}

double sign(double r) { return r > 0.0 ? 1.0 : -1.0; }

}  // namespace

std::optional<WallsStrategy> parse_walls_strategy(std::string_view name) {
  if (name == "np" || name == "nearest_point") return WallsStrategy::kNearestPoint;
  if (name == "inw" || name == "iterative_nearest_wall") {
    return WallsStrategy::kIterativeNearestWall;
  }
  if (name == "fnw" || name == "fixed_nearest_wall") return WallsStrategy::kFixedNearestWall;
  return std::nullopt;
}

std::string_view to_string(WallsStrategy s) {
  switch (s) {
    case WallsStrategy::kNearestPoint: return "np";
    case WallsStrategy::kIterativeNearestWall: return "inw";
    case WallsStrategy::kFixedNearestWall: return "fnw";
  }
  return "?";
}

void BAConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidArgument, what); };
  if (!(lambda_floor >= 0.0) || !(lambda_walls >= 0.0)) fail("lambdas must be non-negative");
  if (!(lr_initial > 0.0) || !(lr_reduced > 0.0)) fail("learning rates must be positive");
  if (!(lr_reduced < lr_initial)) fail("lr_reduced must be smaller than lr_initial");
  if (lr_switch_step < 0) fail("lr_switch_step must be non-negative");
  if (!(convergence_eps > 0.0)) fail("convergence_eps must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (realign_period < 0) fail("realign_period must be non-negative");
  if (max_steps < 1) fail("max_steps must be positive");
}

// ---------------------------------------------------------------- matches

std::optional<double> sample_depth(const Frame& frame, double u, double v) {
  const auto& d = frame.depth;
  const double scale = frame.intrinsics.depth_scale;
  const int c0 = static_cast<int>(std::floor(u));
  const int r0 = static_cast<int>(std::floor(v));
  if (c0 >= 0 && r0 >= 0 && c0 + 1 < d.width && r0 + 1 < d.height) {
    const double z00 = d.at(r0, c0), z01 = d.at(r0, c0 + 1);
    const double z10 = d.at(r0 + 1, c0), z11 = d.at(r0 + 1, c0 + 1);
    const double lo = std::min({z00, z01, z10, z11});
    const double hi = std::max({z00, z01, z10, z11});
    if (lo > 0.0 && hi <= 1.05 * lo) {
      const double fu = u - c0;
      const double fv = v - r0;
      const double inv = (1.0 - fv) * ((1.0 - fu) / z00 + fu / z01) + fv * ((1.0 - fu) / z10 + fu / z11);
      return scale / inv;
    }
  }
  const int c = static_cast<int>(std::lround(u));
  const int r = static_cast<int>(std::lround(v));
  if (c < 0 || r < 0 || c >= d.width || r >= d.height) return std::nullopt;
  const std::uint16_t raw = d.at(r, c);
  if (raw == 0) return std::nullopt;
  return raw * scale;
}

MatchSetBuild build_match_set(std::span<const Frame> frames,
                              std::span<const KeypointMatch> matches) {
  std::map<int, std::uint32_t> position;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    position[frames[i].index] = static_cast<std::uint32_t>(i);
  }
  auto lift = [&](const Frame& f, double u, double v) -> std::optional<Vec3> {
    const auto z = sample_depth(f, u, v);
    if (!z) return std::nullopt;
    const auto& in = f.intrinsics;
    return Vec3((u - in.cx) * *z / in.fx, (v - in.cy) * *z / in.fy, *z);
  };
  MatchSetBuild out;
  for (const auto& m : matches) {
    const auto ia = position.find(m.frame_a);
    const auto ib = position.find(m.frame_b);
    if (ia == position.end() || ib == position.end()) {
      throw Error(ErrorCode::kUnknownFrame, "match references an unknown frame");
    }
    const auto pa = lift(frames[ia->second], m.ua, m.va);
    const auto pb = lift(frames[ib->second], m.ub, m.vb);
    if (!pa || !pb) {
      ++out.dropped_no_depth;
      continue;
    }
    out.set.pairs.push_back({ia->second, *pa, ib->second, *pb});
  }
  return out;
}

FloorModel fit_floor_model(const AnchoredCloud& floor) {
  FloorModel model;
  model.plane = fit_plane(floor.cloud.points);
  if (model.plane.normal.y() < 0.0) {
    model.plane.normal = -model.plane.normal;
    model.plane.offset = -model.plane.offset;
  }
  return model;
}

BAConfig captured_scan_config() {
  BAConfig c;
  c.lambda_walls = 0.5;
  return c;
}

// ------------------------------------------------------------ loss terms

LossEval geometric_loss(const MatchSet& matches, std::span<const Pose> poses) {
  const PoseCache cache(poses);
  LossEval e = make_eval(poses.size());
  for (const auto& m : matches.pairs) {
    const Vec3 pa = cache.rot[m.frame_a] * m.point_a + poses[m.frame_a].translation;
    const Vec3 pb = cache.rot[m.frame_b] * m.point_b + poses[m.frame_b].translation;
    const Vec3 d = pa - pb;
    const double dist = d.norm();
    e.value += dist;
    ++e.count;
    if (dist < kTiny) continue;
    const Vec3 g = d / dist;
    accumulate(e.grad[m.frame_a], cache.rot_t[m.frame_a], m.point_a, g);
    accumulate(e.grad[m.frame_b], cache.rot_t[m.frame_b], m.point_b, -g);
  }
  return e;
}

LossEval floor_loss(const AnchoredCloud& floor, std::span<const Pose> poses,
                    const FloorModel& model) {
  const PoseCache cache(poses);
  LossEval e = make_eval(poses.size());
  e.warning = floor.empty();
  const Vec3& n = model.plane.normal;
  for (std::size_t i = 0; i < floor.size(); ++i) {
    const std::uint32_t f = floor.frame(i);
    const Vec3 p = cache.rot[f] * floor.local[i] + poses[f].translation;
    const double r = n.dot(p) + model.plane.offset;
    e.value += std::abs(r);
    ++e.count;
    if (std::abs(r) < kTiny) continue;
    accumulate(e.grad[f], cache.rot_t[f], floor.local[i], sign(r) * n);
  }
  return e;
}

LossEval walls_loss_nearest_point(const AnchoredCloud& walls, std::span<const Pose> poses,
                                  const Floorplan3D& fp3d) {
  const PoseCache cache(poses);
  LossEval e = make_eval(poses.size());
  for (std::size_t i = 0; i < walls.size(); ++i) {
    const std::uint32_t f = walls.frame(i);
    const Vec3 p = cache.rot[f] * walls.local[i] + poses[f].translation;
    const auto nb = fp3d.tree.nearest(p);
    const Vec3 d = p - fp3d.points[nb.index];
    const double dist = d.norm();
    e.value += dist;
    ++e.count;
    if (dist < kTiny) continue;
    accumulate(e.grad[f], cache.rot_t[f], walls.local[i], d / dist);
  }
  return e;
}

LossEval walls_loss_iterative_nearest_wall(const AnchoredCloud& walls,
                                           std::span<const Pose> poses,
                                           const Floorplan3D& fp3d) {
  const PoseCache cache(poses);
  LossEval e = make_eval(poses.size());
  for (std::size_t i = 0; i < walls.size(); ++i) {
    const std::uint32_t f = walls.frame(i);
    const Vec3 p = cache.rot[f] * walls.local[i] + poses[f].translation;
    const auto nb = fp3d.tree.nearest(p);
    const Plane& plane = fp3d.wall_planes[fp3d.point_segment[nb.index]];
    const double r = plane.signed_distance(p);
    e.value += std::abs(r);
    ++e.count;
    if (std::abs(r) < kTiny) continue;
    accumulate(e.grad[f], cache.rot_t[f], walls.local[i], sign(r) * plane.normal);
  }
  return e;
}

LossEval walls_loss_fixed_nearest_wall(const AnchoredCloud& walls, std::span<const Pose> poses,
                                       const FixedWallAssignment& assignment,
                                       const Floorplan3D& fp3d) {
  const PoseCache cache(poses);
  LossEval e = make_eval(poses.size());
  e.warning = assignment.pairs.empty();
  for (const auto& [pi, plane_index] : assignment.pairs) {
    const std::uint32_t f = walls.frame(pi);
    const Vec3 p = cache.rot[f] * walls.local[pi] + poses[f].translation;
    const Plane& plane = fp3d.wall_planes[plane_index];
    const double r = plane.signed_distance(p);
    e.value += std::abs(r);
    ++e.count;
    if (std::abs(r) < kTiny) continue;
    accumulate(e.grad[f], cache.rot_t[f], walls.local[pi], sign(r) * plane.normal);
  }
  return e;
}

// --------------------------------------------------------- wall clusters

FixedWallAssignment cluster_walls(const PointCloud& walls, const Floorplan3D& fp3d,
                                  const ClusterOptions& opts) {
  constexpr double kPi = std::numbers::pi;
  FixedWallAssignment out;
  const double cos_parallel = std::cos(opts.angle_threshold_deg * kPi / 180.0);

  // Undirected horizontal normal angles in [0, pi).
  std::vector<std::size_t> pool;
  std::vector<double> angle(walls.size(), 0.0);
  for (std::size_t i = 0; i < walls.size(); ++i) {
    if (!walls.normal_ok(i)) continue;
    const Vec3& n = walls.normals[i];
    if (std::abs(n.y()) > 0.3) continue;
    double a = std::atan2(-n.z(), n.x());
    a = std::fmod(a, kPi);
    if (a < 0.0) a += kPi;
    angle[i] = a;
    pool.push_back(i);
  }
  auto gap = [&](double a, double b) {
    const double d = std::abs(a - b);
    return std::min(d, kPi - d);
  };
  const double window = opts.angle_threshold_deg * kPi / 180.0;

  struct ScanPlane {
    Plane plane;
    Vec3 centroid;
    std::vector<std::uint32_t> members;
  };
  std::vector<ScanPlane> planes;

  while (pool.size() >= opts.min_points) {
    // Direction mode on 1-degree bins with a +-window vote.
    constexpr int kBins = 180;
    std::array<std::size_t, kBins> hist{};
    for (std::size_t i : pool) ++hist[std::min(kBins - 1, static_cast<int>(angle[i] / kPi * kBins))];
    int best = 0;
    std::size_t best_votes = 0;
    const int half = static_cast<int>(std::round(opts.angle_threshold_deg));
    for (int b = 0; b < kBins; ++b) {
      std::size_t votes = 0;
      for (int k = -half; k <= half; ++k) votes += hist[(b + k + kBins) % kBins];
      if (votes > best_votes) {
        best_votes = votes;
        best = b;
      }
    }
    const double center = (best + 0.5) * kPi / kBins;
    std::vector<std::size_t> members, rest;
    double c2 = 0.0, s2 = 0.0;
    for (std::size_t i : pool) {
      if (gap(angle[i], center) <= window) {
        members.push_back(i);
        c2 += std::cos(2.0 * angle[i]);
        s2 += std::sin(2.0 * angle[i]);
      } else {
        rest.push_back(i);
      }
    }
    pool = std::move(rest);
    if (members.size() < opts.min_points) continue;
    const double a = 0.5 * std::atan2(s2, c2);
    const Vec3 dir(std::cos(a), 0.0, -std::sin(a));

    // Split the direction cluster along the offset axis.
    std::sort(members.begin(), members.end(), [&](std::size_t x, std::size_t y) {
      const double ox = dir.dot(walls.points[x]);
      const double oy = dir.dot(walls.points[y]);
      return ox < oy || (ox == oy && x < y);
    });
    std::size_t start = 0;
    for (std::size_t k = 1; k <= members.size(); ++k) {
      const bool split = k == members.size() ||
                         dir.dot(walls.points[members[k]]) -
                                 dir.dot(walls.points[members[k - 1]]) > opts.offset_gap;
      if (!split) continue;
      if (k - start >= opts.min_points) {
        ScanPlane sp;
        std::vector<Vec3> pts;
        for (std::size_t j = start; j < k; ++j) {
          sp.members.push_back(static_cast<std::uint32_t>(members[j]));
          pts.push_back(walls.points[members[j]]);
        }
        const CovarianceStats stats = covariance_of(pts);
        sp.centroid = stats.mean;
        // Vertical plane: total least squares on the horizontal coordinates.
        Eigen::Matrix2d cov;
        cov << stats.covariance(0, 0), stats.covariance(0, 2), stats.covariance(2, 0),
            stats.covariance(2, 2);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> solver(cov);
        Vec3 n(solver.eigenvectors()(0, 0), 0.0, solver.eigenvectors()(1, 0));
        if (std::abs(n.dot(dir)) < cos_parallel) n = dir;
        sp.plane = Plane::from_point_normal(stats.mean, n);
        planes.push_back(std::move(sp));
      }
      start = k;
    }
  }
  out.scan_planes = planes.size();
  if (planes.empty() || fp3d.wall_planes.empty()) {
    out.warning = true;
    return out;
  }

  const std::size_t nf = fp3d.wall_planes.size();
  auto parallel = [&](const Plane& a, const Plane& b) {
    return std::abs(a.normal.dot(b.normal)) >= cos_parallel;
  };
  auto distance = [&](const ScanPlane& sp, std::size_t j) {
    return std::abs(fp3d.wall_planes[j].signed_distance(sp.centroid));
  };
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> scan_best(planes.size(), kNone);
  for (std::size_t c = 0; c < planes.size(); ++c) {
    double best = 1e300;
    for (std::size_t j = 0; j < nf; ++j) {
      if (!parallel(planes[c].plane, fp3d.wall_planes[j])) continue;
      const double d = distance(planes[c], j);
      if (d < best) {
        best = d;
        scan_best[c] = j;
      }
    }
  }
  std::vector<std::size_t> fp_best(nf, kNone);
  for (std::size_t j = 0; j < nf; ++j) {
    double best = 1e300;
    for (std::size_t c = 0; c < planes.size(); ++c) {
      if (!parallel(planes[c].plane, fp3d.wall_planes[j])) continue;
      const double d = distance(planes[c], j);
      if (d < best) {
        best = d;
        fp_best[j] = c;
      }
    }
  }
  // Collinear floorplan segments share a plane; mutual nearest is checked
  // against the plane, not the segment index.
  auto same_plane = [&](std::size_t i, std::size_t j) {
    const Plane& a = fp3d.wall_planes[i];
    const Plane& b = fp3d.wall_planes[j];
    const double dot = a.normal.dot(b.normal);
    return std::abs(std::abs(dot) - 1.0) < 1e-9 && std::abs(a.offset - dot * b.offset) < 1e-9;
  };
  for (std::size_t c = 0; c < planes.size(); ++c) {
    const std::size_t j = scan_best[c];
    if (j == kNone) continue;
    bool mutual = false;
    for (std::size_t k = 0; k < nf && !mutual; ++k) {
      mutual = fp_best[k] == c && same_plane(j, k);
    }
    if (!mutual) continue;
    ++out.matched_planes;
    for (std::uint32_t idx : planes[c].members) {
      out.pairs.push_back({idx, static_cast<std::uint32_t>(j)});
    }
  }
  std::sort(out.pairs.begin(), out.pairs.end(),
            [](const auto& a, const auto& b) { return a.point < b.point; });
  out.warning = out.pairs.empty();
  return out;
}

// ------------------------------------------------------------ total loss

TotalLoss total_loss(const BAProblem& problem, std::span<const Pose> poses,
                     const BAConfig& config) {
  TotalLoss out;
  out.grad.assign(poses.size(), Vec6::Zero());
  auto add = [&](const LossEval& e, double weight, double& slot) {
    const double norm = config.normalize_terms && e.count > 0 ? 1.0 / e.count : 1.0;
    slot = e.value * norm;
    out.total += weight * slot;
    for (std::size_t f = 0; f < poses.size(); ++f) out.grad[f] += (weight * norm) * e.grad[f];
  };
  if (problem.matches != nullptr) add(geometric_loss(*problem.matches, poses), 1.0, out.geom);
  if (config.lambda_floor > 0.0 && problem.floor != nullptr && problem.floor_model != nullptr) {
    add(floor_loss(*problem.floor, poses, *problem.floor_model), config.lambda_floor, out.floor);
  }
  if (config.lambda_walls > 0.0 && problem.walls != nullptr && problem.fp3d != nullptr) {
    switch (config.walls_strategy) {
      case WallsStrategy::kNearestPoint:
        add(walls_loss_nearest_point(*problem.walls, poses, *problem.fp3d), config.lambda_walls,
            out.walls);
        break;
      case WallsStrategy::kIterativeNearestWall:
        add(walls_loss_iterative_nearest_wall(*problem.walls, poses, *problem.fp3d),
            config.lambda_walls, out.walls);
        break;
      case WallsStrategy::kFixedNearestWall:
        if (problem.assignment != nullptr) {
          add(walls_loss_fixed_nearest_wall(*problem.walls, poses, *problem.assignment,
                                            *problem.fp3d),
              config.lambda_walls, out.walls);
        }
        break;
    }
  }
  return out;
}

std::string format_log(std::span<const LogRecord> log) {
  std::string out = "# step lr L L_geom L_floor L_walls\n";
  for (const auto& r : log) {
    out += std::to_string(r.step) + " " + format_double(r.lr) + " " + format_double(r.total) +
           " " + format_double(r.geom) + " " + format_double(r.floor) + " " +
           format_double(r.walls) + "\n";
  }
  return out;
}

// -------------------------------------------------------------- optimizer

OptimizeResult optimize_poses(std::span<const Pose> initial, const MatchSet& matches,
                              const AnchoredCloud& floor, const AnchoredCloud& walls,
                              Floorplan3D fp3d, const BAConfig& config,
                              const RealignFn& realign) {
  config.validate();
  OptimizeResult res;
  res.poses.assign(initial.begin(), initial.end());
  const std::size_t n = res.poses.size();

  std::optional<FloorModel> floor_model;
  if (config.lambda_floor > 0.0 && floor.size() >= 3) floor_model = fit_floor_model(floor);

  const bool fixed = config.walls_strategy == WallsStrategy::kFixedNearestWall &&
                     config.lambda_walls > 0.0;
  AnchoredCloud posed_walls = walls;
  FixedWallAssignment assignment;
  auto rebuild_assignment = [&]() {
    if (!fixed) return;
    repose(posed_walls, res.poses);
    assignment = cluster_walls(posed_walls.cloud, fp3d);
  };
  rebuild_assignment();

  BAProblem problem;
  problem.num_frames = n;
  problem.matches = &matches;
  problem.floor = &floor;
  problem.floor_model = floor_model ? &*floor_model : nullptr;
  problem.walls = &walls;
  problem.fp3d = &fp3d;
  problem.assignment = fixed ? &assignment : nullptr;

  std::vector<Vec6> velocity(n, Vec6::Zero());
  double previous = std::numeric_limits<double>::quiet_NaN();
  for (int step = 1; step <= config.max_steps; ++step) {
    if (realign && config.realign_period > 0 && step > 1 &&
        (step - 1) % config.realign_period == 0) {
      if (auto updated = realign(res.poses)) {
        fp3d = std::move(*updated);
        ++res.realignments;
        rebuild_assignment();
      }
    }
    const double lr = step <= config.lr_switch_step ? config.lr_initial : config.lr_reduced;
    const TotalLoss loss = total_loss(problem, res.poses, config);
    const std::pair<const char*, double> terms[] = {
        {"geometric", loss.geom}, {"floor", loss.floor}, {"walls", loss.walls}};
    for (const auto& [name, value] : terms) {
      if (!std::isfinite(value)) {
        throw Error(ErrorCode::kNumerical, std::string("non-finite ") + name +
                                               " loss at step " + std::to_string(step));
      }
    }
    res.log.push_back({step, lr, loss.total, loss.geom, loss.floor, loss.walls});
    res.steps = step;
    if (step == 1) {
      for (std::size_t f = 0; f < n; ++f) {
        if (loss.grad[f].isZero(0.0)) res.frames_without_gradient.push_back(static_cast<std::uint32_t>(f));
      }
    }
    if (step > config.lr_switch_step && std::abs(loss.total - previous) < config.convergence_eps) {
      res.converged = true;
      break;
    }
    previous = loss.total;
    for (std::size_t f = 0; f < n; ++f) {
      velocity[f] = config.momentum * velocity[f] + loss.grad[f];
      res.poses[f] = res.poses[f].retract(-lr * velocity[f]);
    }
  }
  return res;
}

}  // namespace fpba
