#include "fpba/pipeline.hpp"

#include <cmath>
#include <iostream>
#include <map>
#include <numbers>

#include "fpba/floorplan.hpp"
#include "fpba/synthetic.hpp"

namespace fpba {

namespace fs = std::filesystem;

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw StageError(name, std::string(to_string(e.code())) + ": " + e.what());
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::vector<Pose> frame_poses(std::span<const Frame> frames) {
  std::vector<Pose> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.initial_pose);
  return out;
}

std::vector<Pose> compose_left(const Pose& left, std::span<const Pose> poses) {
  std::vector<Pose> out;
  out.reserve(poses.size());
  for (const auto& p : poses) out.push_back(left * p);
  return out;
}

std::vector<IndexedPose> indexed(std::span<const Frame> frames, std::span<const Pose> poses) {
  std::vector<IndexedPose> out;
  for (std::size_t i = 0; i < frames.size(); ++i) out.push_back({frames[i].index, poses[i]});
  return out;
}

// Poses listed by frame index, reordered to follow `frames`.
std::vector<Pose> poses_for_frames(std::span<const Frame> frames,
                                   const std::vector<IndexedPose>& list,
                                   const std::string& what) {
  std::map<int, Pose> by_index;
  for (const auto& ip : list) by_index[ip.index] = ip.pose;
  std::vector<Pose> out;
  for (const auto& f : frames) {
    const auto it = by_index.find(f.index);
    if (it == by_index.end()) {
      throw Error(ErrorCode::kCountMismatch,
                  what + " has no pose for frame " + std::to_string(f.index));
    }
    out.push_back(it->second);
  }
  return out;
}

double y_extent(const PointCloud& cloud, double& y_min) {
  y_min = cloud.points.front().y();
  double y_max = y_min;
  for (const auto& p : cloud.points) {
    y_min = std::min(y_min, p.y());
    y_max = std::max(y_max, p.y());
  }
  return y_max;
}

// A re-alignment is kept only when it stays close to the current placement.
bool near_transform(const SimilarityTransform& a, const SimilarityTransform& b) {
  double dyaw = std::remainder(a.yaw - b.yaw, 2.0 * std::numbers::pi);
  return std::abs(dyaw) < 5.0 * std::numbers::pi / 180.0 &&
         std::abs(a.scale / b.scale - 1.0) < 0.05 && (a.shift - b.shift).norm() < 0.3;
}

}  // namespace

SceneData load_scene(const RunConfig& config) {
  SceneData data;
  if (config.scene.empty()) throw StageError("load", "missing --scene");
  if (!fs::is_directory(config.scene)) {
    throw StageError("load", "scene directory not found: " + config.scene.string());
  }
  data.frames = stage("load", [&] { return load_sequence(config.scene); });
  const fs::path matches = config.scene / kMatchesFile;
  if (fs::exists(matches)) {
    auto res = stage("load", [&] { return load_matches(matches, data.frames); });
    data.matches = std::move(res.matches);
    data.dropped_matches = res.dropped_out_of_bounds;
  }
  fs::path fp_path = config.floorplan;
  if (!fp_path.empty() && !fs::exists(fp_path)) {
    throw StageError("load", "floorplan not found: " + fp_path.string());
  }
  if (fp_path.empty() && fs::exists(config.scene / kFloorplanFile)) {
    fp_path = config.scene / kFloorplanFile;
  }
  if (!fp_path.empty()) data.floorplan = stage("load", [&] { return parse_floorplan(fp_path); });
  const fs::path gt = config.scene / kGroundTruthFile;
  if (fs::exists(gt)) {
    data.ground_truth = stage("load", [&] {
      return poses_for_frames(data.frames, read_trajectory(gt), "ground truth");
    });
  }
  fs::path ref = config.reference;
  if (!ref.empty() && !fs::exists(ref)) {
    throw StageError("load", "reference cloud not found: " + ref.string());
  }
  if (ref.empty() && fs::exists(config.scene / kReferenceFile)) ref = config.scene / kReferenceFile;
  if (!ref.empty()) data.reference = stage("load", [&] { return import_cloud(ref); });
  return data;
}

MetricsReport compute_metrics(const MetricsInput& in) {
  MetricsReport rep;
  rep.radius = in.params.radius;
  const SemanticClouds clouds =
      stage("clouds", [&] { return build_semantic_clouds(in.frames, in.poses, in.stride); });
  const PointCloud& full = clouds.full.cloud;
  rep.points = full.size();
  rep.wall_points = clouds.walls.size();

  NeighborhoodOptions hood;
  hood.radius = in.params.radius;
  hood.max_queries = in.params.max_queries;
  hood.seed = in.seed;
  auto guarded = [&](const char* name, auto&& fn) -> std::optional<double> {
    try {
      return fn();
    } catch (const Error& e) {
      rep.warnings.push_back(std::string(name) + " absent: " + e.what());
      return std::nullopt;
    }
  };
  rep.mme = guarded("mme", [&] { return mme(full, hood); });
  rep.mpv = guarded("mpv", [&] { return mpv(full, hood); });
  MomOptions mo;
  mo.neighborhood = hood;
  mo.pixel_stride = in.params.mom_pixel_stride;
  rep.mom = guarded("mom", [&] {
    const MomResult r = mom(in.frames, in.poses, mo);
    rep.mom_frames_used = r.frames_used;
    rep.mom_frames_skipped = r.skipped_frames.size();
    return r.value;
  });
  if (in.floorplan != nullptr) {
    PointCloud walls = clouds.walls.cloud;
    for (auto& p : walls.points) p = in.leveling * p;
    rep.nsd = guarded("nsd", [&] { return nsd(walls, *in.floorplan); });
  } else {
    rep.warnings.push_back("nsd absent: no floorplan");
  }
  if (in.reference != nullptr) rep.nnd = guarded("nnd", [&] { return nnd(full, *in.reference); });
  if (in.ground_truth != nullptr) {
    rep.ate = guarded("ate", [&] { return ate(in.poses, *in.ground_truth); });
  }
  return rep;
}

std::string format_alignment(const AlignmentResult& a) {
  auto vec = [](const Vec3& v) {
    return format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
  };
  const double deg = 180.0 / std::numbers::pi;
  std::string out;
  out += "gravity: " + vec(a.gravity.gravity) + "\n";
  out += "gravity_confident: " + std::string(a.gravity.confident ? "yes" : "no") + "\n";
  out += "leveling_quaternion: " + format_double(a.leveling.rotation.x()) + " " +
         format_double(a.leveling.rotation.y()) + " " + format_double(a.leveling.rotation.z()) +
         " " + format_double(a.leveling.rotation.w()) + "\n";
  out += "y_range: " + format_double(a.y_min) + " " + format_double(a.y_max) + "\n";
  out += "floor_y: " + format_double(a.floor_y) + "\n";
  out += "boundary_points: " + std::to_string(a.boundary_points) + "\n";
  out += "yaw_deg: " + format_double(a.transform.yaw * deg) + "\n";
  out += "scale: " + format_double(a.transform.scale) + "\n";
  out += "shift: " + vec(a.transform.shift) + "\n";
  out += "residual: " + format_double(a.residual) + "\n";
  for (std::size_t i = 0; i < a.yaw.candidates.size(); ++i) {
    const auto& c = a.yaw.candidates[i];
    out += "candidate: " + format_double(c.transform.yaw * deg) + " " +
           format_double(c.transform.scale) + " " + format_double(c.cost) +
           (i == a.yaw.best ? " selected" : "") + "\n";
  }
  return out;
}

AlignmentResult run_align(const SceneData& scene, const RunConfig& config) {
  if (!scene.floorplan) throw StageError("align", "missing floorplan");
  const std::vector<Pose> poses = frame_poses(scene.frames);
  AnchoredCloud full = stage("clouds", [&] {
    return build_semantic_clouds(scene.frames, poses, config.stride).full;
  });
  if (full.empty()) throw StageError("clouds", "no valid depth in the sequence");
  if (config.alignment) {
    AlignmentResult res;
    res.transform = *config.alignment;
    res.y_max = y_extent(full.cloud, res.y_min);
    res.boundary_points = full.size();
    res.yaw.candidates[0].transform = res.transform;
    return res;
  }
  return stage("align", [&] {
    attach_normals(full, poses);
    AlignOptions opts;
    opts.seed = config.seed;
    opts.floorplan_density = config.floorplan_density;
    return align(full.cloud, *scene.floorplan, opts);
  });
}

RefineOutcome run_refine(const SceneData& scene, const RunConfig& config) {
  stage("config", [&] {
    config.ba.validate();
    if (config.stride < 1) throw Error(ErrorCode::kInvalidArgument, "stride must be >= 1");
    return 0;
  });
  RefineOutcome out;
  out.initial = frame_poses(scene.frames);
  out.alignment = run_align(scene, config);
  const Pose leveling = out.alignment.leveling;
  const Floorplan2D& fp = *scene.floorplan;
  out.placed_floorplan = out.alignment.transform.apply(fp);
  const Floorplan2D initial_placed = out.placed_floorplan;
  SimilarityTransform current = out.alignment.transform;

  const std::vector<Pose> work = compose_left(leveling, out.initial);
  Floorplan3D fp3d = stage("floorplan", [&] {
    return build_floorplan3d(out.placed_floorplan, out.alignment.y_min, out.alignment.y_max,
                             config.floorplan_density, config.seed);
  });
  SemanticClouds clouds =
      stage("clouds", [&] { return build_semantic_clouds(scene.frames, work, config.stride); });
  if (config.ba.walls_strategy == WallsStrategy::kFixedNearestWall && !clouds.walls.empty()) {
    stage("clouds", [&] {
      attach_normals(clouds.walls, work);
      return 0;
    });
  }
  const MatchSetBuild mb =
      stage("matches", [&] { return build_match_set(scene.frames, scene.matches); });
  out.dropped_matches = scene.dropped_matches + mb.dropped_no_depth;

  RealignFn realign;
  if (config.realign && !config.alignment) {
    realign = [&](std::span<const Pose> poses) -> std::optional<Floorplan3D> {
      AnchoredCloud full = clouds.full;
      repose(full, poses);
      try {
        attach_normals(full, poses);
        AlignOptions opts;
        opts.seed = config.seed;
        opts.floorplan_density = config.floorplan_density;
        opts.assume_leveled = true;
        const AlignmentResult res = align(full.cloud, fp, opts);
        if (!near_transform(res.transform, current)) return std::nullopt;
        current = res.transform;
        out.placed_floorplan = current.apply(fp);
        return build_floorplan3d(out.placed_floorplan, res.y_min, res.y_max,
                                 config.floorplan_density, config.seed);
      } catch (const Error&) {
        return std::nullopt;
      }
    };
  }
  out.optimization = stage("optimize", [&] {
    return optimize_poses(work, mb.set, clouds.floor, clouds.walls, std::move(fp3d), config.ba,
                          realign);
  });
  out.alignment.transform = current;
  out.refined = compose_left(leveling.inverse(), out.optimization.poses);

  MetricsInput in;
  in.frames = scene.frames;
  in.stride = config.stride;
  in.leveling = leveling;
  in.reference = scene.reference ? &*scene.reference : nullptr;
  in.ground_truth = scene.ground_truth ? &*scene.ground_truth : nullptr;
  in.params = config.metrics;
  in.seed = config.seed;

  in.poses = out.initial;
  in.floorplan = &initial_placed;
  out.before = compute_metrics(in);
  in.poses = out.refined;
  in.floorplan = &out.placed_floorplan;
  out.after = compute_metrics(in);
  return out;
}

// ------------------------------------------------------------ subcommands

SynthOutput synthesize(const RunConfig& config) {
  const SynthParams& sp = config.synth;
  SyntheticData data = stage("synth", [&] {
    SceneSpec spec = three_room_spec(sp.frames, config.seed);
    spec.depth_noise = sp.depth_noise;
    return generate_scene(three_room_floorplan(), spec);
  });
  const std::vector<Pose> perturbed = perturb_poses(
      data.scene.trajectory, DriftSpec{sp.drift_rot_deg, sp.drift_t}, config.seed + 1);
  for (std::size_t i = 0; i < data.frames.size(); ++i) data.frames[i].initial_pose = perturbed[i];
  MatchSpec ms;
  ms.pixel_noise = sp.pixel_noise;
  ms.mismatch_fraction = sp.mismatch_fraction;
  ms.seed = config.seed + 2;
  MatchSynthesis matches = synth_matches(data.scene, data.frames, ms);

  SynthOutput out;
  out.landmarks = data.scene.landmarks.size();
  out.mismatches = matches.mismatched.size();
  out.scene.reference =
      build_semantic_clouds(data.frames, data.scene.trajectory, config.stride).full.cloud;
  out.scene.floorplan = data.scene.floorplan;
  out.scene.ground_truth = data.scene.trajectory;
  out.scene.matches = std::move(matches.matches);
  out.scene.frames = std::move(data.frames);
  return out;
}

int cmd_synth(const RunConfig& config) {
  if (config.out.empty()) throw StageError("synth", "missing --out");
  const SynthOutput synth = synthesize(config);
  const SceneData& sd = synth.scene;
  stage("write", [&] {
    fs::create_directories(config.out);
    write_sequence(config.out, sd.frames);
    write_matches(sd.matches, config.out / kMatchesFile);
    write_floorplan(*sd.floorplan, config.out / kFloorplanFile);
    write_trajectory(indexed(sd.frames, *sd.ground_truth), config.out / kGroundTruthFile);
    export_cloud(*sd.reference, config.out / kReferenceFile);
    return 0;
  });
  std::cout << "frames: " << sd.frames.size() << "\n"
            << "landmarks: " << synth.landmarks << "\n"
            << "matches: " << sd.matches.size() << "\n"
            << "mismatches: " << synth.mismatches << "\n";
  return 0;
}

int cmd_align(const RunConfig& config) {
  const SceneData scene = load_scene(config);
  const AlignmentResult res = run_align(scene, config);
  const std::string text = format_alignment(res);
  if (!config.out.empty()) {
    stage("write", [&] {
      fs::create_directories(config.out);
      write_text_file(config.out / "alignment.txt", text);
      return 0;
    });
  }
  std::cout << text;
  return 0;
}

int cmd_refine(const RunConfig& config) {
  if (config.out.empty()) throw StageError("refine", "missing --out");
  const SceneData scene = load_scene(config);
  const RefineOutcome res = run_refine(scene, config);
  stage("write", [&] {
    fs::create_directories(config.out);
    write_trajectory(indexed(scene.frames, res.refined), config.out / "trajectory.txt");
    export_cloud(build_semantic_clouds(scene.frames, res.initial, config.stride).full.cloud,
                 config.out / "cloud_before.fpcl");
    export_cloud(build_semantic_clouds(scene.frames, res.refined, config.stride).full.cloud,
                 config.out / "cloud_after.fpcl");
    write_text_file(config.out / "convergence.log", format_log(res.optimization.log));
    write_text_file(config.out / "metrics_before.txt", res.before.format());
    write_text_file(config.out / "metrics_after.txt", res.after.format());
    write_text_file(config.out / "alignment.txt", format_alignment(res.alignment));
    return 0;
  });
  std::cout << "steps: " << res.optimization.steps << "\n"
            << "converged: " << (res.optimization.converged ? "yes" : "no") << "\n"
            << "realignments: " << res.optimization.realignments << "\n"
            << "dropped_matches: " << res.dropped_matches << "\n"
            << "frames_without_gradient: " << res.optimization.frames_without_gradient.size()
            << "\n"
            << "-- before\n"
            << res.before.format() << "-- after\n"
            << res.after.format();
  return 0;
}

int cmd_metrics(const RunConfig& config, const fs::path& poses_file) {
  const SceneData scene = load_scene(config);
  std::vector<Pose> poses = frame_poses(scene.frames);
  if (!poses_file.empty()) {
    poses = stage("load", [&] {
      return poses_for_frames(scene.frames, read_trajectory(poses_file), "pose file");
    });
  }
  MetricsInput in;
  in.frames = scene.frames;
  in.poses = poses;
  in.stride = config.stride;
  in.reference = scene.reference ? &*scene.reference : nullptr;
  in.ground_truth = scene.ground_truth ? &*scene.ground_truth : nullptr;
  in.params = config.metrics;
  in.seed = config.seed;
  Floorplan2D placed;
  std::string align_warning;
  if (scene.floorplan) {
    SceneData posed = scene;
    for (std::size_t i = 0; i < posed.frames.size(); ++i) posed.frames[i].initial_pose = poses[i];
    try {
      const AlignmentResult a = run_align(posed, config);
      placed = a.transform.apply(*scene.floorplan);
      in.leveling = a.leveling;
      in.floorplan = &placed;
    } catch (const StageError& e) {
      align_warning = "nsd absent: alignment failed (" + e.stage() + "): " + e.what();
    }
  }
  MetricsReport rep = compute_metrics(in);
  if (!align_warning.empty()) {
    std::erase(rep.warnings, std::string("nsd absent: no floorplan"));
    rep.warnings.push_back(align_warning);
  }
  const std::string text = rep.format();
  if (!config.out.empty()) {
    stage("write", [&] {
      fs::create_directories(config.out);
      write_text_file(config.out / "metrics.txt", text);
      return 0;
    });
  }
  std::cout << text;
  return 0;
}

}  // namespace fpba
