// fpba: floorplan-aware pose refinement for RGB-D sequences.
//
//   fpba synth   --out DIR [--seed N]
//   fpba align   --scene DIR [--floorplan FILE] [--out DIR]
//   fpba refine  --scene DIR --out DIR [optimizer flags]
//   fpba metrics --scene DIR [--poses FILE] [--reference FILE] [--out DIR]

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fpba/pipeline.hpp"

namespace {

void add_shared(CLI::App& cmd, fpba::RunConfig& cfg) {
  cmd.add_option("--scene", cfg.scene, "Scene directory (sequence.txt, matches.txt, ...)");
  cmd.add_option("--floorplan", cfg.floorplan, "Floorplan file (default: <scene>/floorplan.txt)");
  cmd.add_option("--out", cfg.out, "Output directory");
  cmd.add_option("--stride", cfg.stride, "Pixel stride for point clouds")->capture_default_str();
  cmd.add_option("--radius", cfg.metrics.radius, "Neighborhood radius for MME/MPV/MOM")
      ->capture_default_str();
  cmd.add_option("--max-queries", cfg.metrics.max_queries, "Query points per metric")
      ->capture_default_str();
  cmd.add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
}

void add_known_alignment(CLI::App& cmd, std::vector<double>& known) {
  cmd.add_option("--alignment", known,
                 "Known floorplan-to-scan transform: yaw_deg scale shift_x shift_y shift_z")
      ->expected(5);
}

void add_optimizer(CLI::App& cmd, fpba::RunConfig& cfg, std::string& strategy) {
  auto& ba = cfg.ba;
  cmd.add_option("--lambda-floor", ba.lambda_floor, "Floor term weight")->capture_default_str();
  cmd.add_option("--lambda-walls", ba.lambda_walls, "Walls term weight")->capture_default_str();
  cmd.add_option("--walls-strategy", strategy, "np | inw | fnw")
      ->capture_default_str()
      ->check(CLI::IsMember({"np", "inw", "fnw", "nearest_point", "iterative_nearest_wall",
                             "fixed_nearest_wall"}));
  cmd.add_option("--lr", ba.lr_initial, "Initial learning rate")->capture_default_str();
  cmd.add_option("--lr-reduced", ba.lr_reduced, "Learning rate after the switch")
      ->capture_default_str();
  cmd.add_option("--lr-switch-step", ba.lr_switch_step, "Step of the learning rate switch")
      ->capture_default_str();
  cmd.add_option("--momentum", ba.momentum, "Momentum")->capture_default_str();
  cmd.add_option("--convergence-eps", ba.convergence_eps, "Stop when |dL| falls below")
      ->capture_default_str();
  cmd.add_option("--max-steps", ba.max_steps, "Step limit")->capture_default_str();
  cmd.add_option("--realign-period", ba.realign_period, "Steps between floorplan re-alignments")
      ->capture_default_str();
  cmd.add_flag("!--no-realign", cfg.realign, "Keep the initial floorplan alignment");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Floorplan-aware bundle adjustment for RGB-D sequences"};
  app.set_config("--config", "", "TOML/INI file with option values (flags win)");
  app.require_subcommand(1);
  bool show_config = false;
  app.add_flag("--show-config", show_config, "Print the effective configuration and exit");

  fpba::RunConfig cfg;
  std::string strategy{fpba::to_string(cfg.ba.walls_strategy)};
  std::filesystem::path poses_file;
  std::filesystem::path reference;
  std::vector<double> known;

  auto* synth = app.add_subcommand("synth", "Write a synthetic three-room scene");
  add_shared(*synth, cfg);
  synth->add_option("--frames", cfg.synth.frames, "Frame count")->capture_default_str();
  synth->add_option("--drift-rot", cfg.synth.drift_rot_deg, "Rotation drift per frame [deg]")
      ->capture_default_str();
  synth->add_option("--drift-t", cfg.synth.drift_t, "Translation drift per frame [m]")
      ->capture_default_str();
  synth->add_option("--pixel-noise", cfg.synth.pixel_noise, "Keypoint noise [px]")
      ->capture_default_str();
  synth->add_option("--mismatch", cfg.synth.mismatch_fraction, "Fraction of wrong matches")
      ->capture_default_str();
  synth->add_option("--depth-noise", cfg.synth.depth_noise, "Depth noise sigma [m]")
      ->capture_default_str();

  auto* align = app.add_subcommand("align", "Align the floorplan to the scan");
  add_shared(*align, cfg);
  add_known_alignment(*align, known);

  auto* refine = app.add_subcommand("refine", "Refine camera poses");
  add_shared(*refine, cfg);
  add_optimizer(*refine, cfg, strategy);
  add_known_alignment(*refine, known);
  refine->add_option("--reference", reference, "Reference cloud for NND");

  auto* metrics = app.add_subcommand("metrics", "Evaluate a trajectory");
  add_shared(*metrics, cfg);
  metrics->add_option("--poses", poses_file, "Trajectory file (default: scene trajectory)");
  metrics->add_option("--reference", reference, "Reference cloud for NND");
  add_known_alignment(*metrics, known);

  CLI11_PARSE(app, argc, argv);
  cfg.ba.walls_strategy = *fpba::parse_walls_strategy(strategy);
  cfg.reference = reference;
  if (known.size() == 5) {
    fpba::SimilarityTransform t;
    t.yaw = known[0] * 3.14159265358979323846 / 180.0;
    t.scale = known[1];
    t.shift = fpba::Vec3(known[2], known[3], known[4]);
    cfg.alignment = t;
  }

  if (show_config) {
    std::cout << app.config_to_str(true, true);
    return 0;
  }

  try {
    if (*synth) return fpba::cmd_synth(cfg);
    if (*align) return fpba::cmd_align(cfg);
    if (*refine) return fpba::cmd_refine(cfg);
    if (*metrics) return fpba::cmd_metrics(cfg, poses_file);
  } catch (const fpba::StageError& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
