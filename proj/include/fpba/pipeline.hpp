#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpba/alignment.hpp"
#include "fpba/ba.hpp"
#include "fpba/io.hpp"
#include "fpba/metrics.hpp"
#include "fpba/semantic_clouds.hpp"

namespace fpba {

struct MetricParams {
  double radius = 0.1;
  std::size_t max_queries = 20000;
  int mom_pixel_stride = 2;
};

struct SynthParams {
  int frames = 100;
  double drift_rot_deg = 0.1;  // per frame
  double drift_t = 0.003;      // meters per frame
  double pixel_noise = 0.0;
  double mismatch_fraction = 0.0;
  double depth_noise = 0.0;
};

struct RunConfig {
  std::filesystem::path scene;
  std::filesystem::path floorplan;  // defaults to <scene>/floorplan.txt
  std::filesystem::path out;
  std::filesystem::path reference;  // optional cloud for NND
  BAConfig ba;
  int stride = kDefaultStride;
  double floorplan_density = kDefaultFloorplanDensity;  // points per m^2
  MetricParams metrics;
  SynthParams synth;
  std::uint64_t seed = 0;
  bool realign = true;
  // Known floorplan-to-scan transform; skips gravity and yaw estimation.
  std::optional<SimilarityTransform> alignment;
};

/// Failure of a named pipeline stage.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

// Scene directory layout written by `synth` and read by the other commands.
inline constexpr const char* kMatchesFile = "matches.txt";
inline constexpr const char* kFloorplanFile = "floorplan.txt";
inline constexpr const char* kGroundTruthFile = "ground_truth.txt";
inline constexpr const char* kReferenceFile = "reference.fpcl";

struct SceneData {
  std::vector<Frame> frames;
  std::vector<KeypointMatch> matches;
  std::size_t dropped_matches = 0;
  std::optional<Floorplan2D> floorplan;
  std::optional<std::vector<Pose>> ground_truth;
  std::optional<PointCloud> reference;
};

/// Reads the sequence, matches, floorplan, and optional ground truth and
/// reference cloud. Only the sequence is mandatory.
SceneData load_scene(const RunConfig& config);

struct MetricsInput {
  std::span<const Frame> frames;
  std::span<const Pose> poses;
  int stride = kDefaultStride;
  // Scan-to-leveled rotation and the floorplan placed in that leveled frame.
  Pose leveling;
  const Floorplan2D* floorplan = nullptr;
  const PointCloud* reference = nullptr;
  const std::vector<Pose>* ground_truth = nullptr;
  MetricParams params;
  std::uint64_t seed = 0;
};

MetricsReport compute_metrics(const MetricsInput& in);

std::string format_alignment(const AlignmentResult& a);

struct RefineOutcome {
  AlignmentResult alignment;
  Floorplan2D placed_floorplan;  // floorplan in the leveled scan frame at the end
  std::vector<Pose> initial;     // input frame poses
  std::vector<Pose> refined;     // same world frame as the input
  OptimizeResult optimization;
  MetricsReport before;
  MetricsReport after;
  std::size_t dropped_matches = 0;
};

/// Alignment, cloud construction, pose optimization and metrics, in memory.
RefineOutcome run_refine(const SceneData& scene, const RunConfig& config);

AlignmentResult run_align(const SceneData& scene, const RunConfig& config);

struct SynthOutput {
  SceneData scene;  // frames carry the drifted poses
  std::size_t landmarks = 0;
  std::size_t mismatches = 0;
};

/// The three-room scene written by `synth`, kept in memory.
SynthOutput synthesize(const RunConfig& config);

/// Subcommands. They return the process exit status and throw StageError.
int cmd_synth(const RunConfig& config);
int cmd_align(const RunConfig& config);
int cmd_refine(const RunConfig& config);
int cmd_metrics(const RunConfig& config, const std::filesystem::path& poses_file = {});

}  // namespace fpba
