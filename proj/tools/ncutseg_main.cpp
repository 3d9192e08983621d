// ncutseg command-line front end: image, video, eval and inspect subcommands.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ncutseg.hpp"

namespace fs = std::filesystem;
using namespace ncutseg;

namespace {

// Every config key can also be given as --key value; flags win over --config.
const std::vector<std::string> kSettingKeys{
    "tau",         "eps",           "fusion",        "bipartition",     "refine",      "refine-soft",
    "beta-sq",     "patch-size",    "frame-gap",     "max-frames-per-graph", "corloc-mode", "jaccard-averaging",
    "solver",      "solver-tol",    "solver-max-iter", "sigma-spatial", "sigma-luma",  "sigma-chroma",
    "lambda-smooth", "cg-tol",      "cg-max-iter",   "binarize-threshold", "graph-threads"};

struct Settings {
  std::string config;
  std::map<std::string, std::string> values;
  unsigned workers = 1;
};

void add_settings(CLI::App& cmd, Settings& s) {
  cmd.add_option("--config", s.config, "key = value configuration file");
  cmd.add_option("--workers", s.workers, "items processed in parallel")->check(CLI::PositiveNumber);
  for (const auto& key : kSettingKeys) cmd.add_option("--" + key, s.values[key]);
}

PipelineConfig resolve(CLI::App& cmd, const Settings& s) {
  PipelineConfig cfg;
  if (!s.config.empty()) load_config_file(cfg, s.config);
  for (const auto& key : kSettingKeys) {
    if (cmd.count("--" + key)) apply_setting(cfg, key, s.values.at(key));
  }
  cfg.workers = s.workers;
  validate(cfg);
  return cfg;
}

int run_image_cmd(const PipelineConfig& cfg, const std::vector<std::string>& features, const fs::path& out,
                  const std::string& reference, const std::string& reference_dir) {
  if (!reference.empty() && features.size() != 1) throw ValidationError("--reference takes exactly one --features file");
  fs::create_directories(out);
  std::vector<Detection> dets(features.size());
  parallel_for(features.size(), cfg.workers, [&](std::size_t i) {
    const std::string id = id_from_path(features[i]);
    std::optional<fs::path> ref;
    if (!reference.empty()) ref = reference;
    else if (!reference_dir.empty()) ref = fs::path(reference_dir) / (id + ".ppm");
    const ImageResult res = run_image(cfg, features[i], ref, id);
    for (const auto& w : res.warnings) std::cerr << id << ": warning: " << w << "\n";
    run_stage("write", [&] { write_image_outputs(res, out); });
    dets[i] = {id, res.box, res.score};
  });
  run_stage("write", [&] { write_detections(dets, out / "detections.jsonl"); });
  return 0;
}

int run_video_cmd(const PipelineConfig& cfg, const std::string& rgb_path, const std::string& flow_path,
                  const fs::path& out, const std::string& reference_dir) {
  const std::string id = id_from_path(rgb_path);
  const FeatureGrid rgb = run_stage("read", [&] { return read_feature_tensor(rgb_path); });
  const FeatureGrid flow = run_stage("read", [&] { return read_feature_tensor(flow_path); });
  ReferenceProvider provider;
  if (!reference_dir.empty()) {
    provider = [&](std::size_t frame) {
      return run_stage("read", [&] { return read_image(fs::path(reference_dir) / (frame_id(id, frame) + ".ppm")); });
    };
  }
  const VideoResult res = run_video(cfg, rgb, flow, provider, id);
  for (const auto& w : res.warnings) std::cerr << id << ": warning: " << w << "\n";
  fs::create_directories(out);
  run_stage("write", [&] { write_video_outputs(res, out); });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised object segmentation by normalized cut on patch-feature graphs"};
  app.require_subcommand(1);

  Settings image_settings, video_settings, eval_settings, inspect_settings;

  auto* image = app.add_subcommand("image", "segment single images");
  std::vector<std::string> features;
  std::string out, reference, reference_dir;
  image->add_option("--features", features, "feature tensor files (.tcft)")->required()->expected(1, -1);
  image->add_option("--out", out, "output directory")->required();
  image->add_option("--reference", reference, "PPM reference for bilateral refinement (one image)");
  image->add_option("--reference-dir", reference_dir, "directory holding <id>.ppm references");
  add_settings(*image, image_settings);

  auto* video = app.add_subcommand("video", "segment a video from rgb and flow features");
  std::string rgb, flow;
  video->add_option("--rgb", rgb, "rgb feature tensor")->required();
  video->add_option("--flow", flow, "flow feature tensor")->required();
  video->add_option("--out", out, "output directory")->required();
  video->add_option("--reference-dir", reference_dir, "directory holding <id>_<frame>.ppm references");
  add_settings(*video, video_settings);

  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  std::string task_name, pred, gt, report_prefix;
  eval->add_option("--task", task_name, "discovery, saliency or video")
      ->required()
      ->check(CLI::IsMember({"discovery", "saliency", "video"}));
  eval->add_option("--pred", pred, "prediction directory")->required();
  eval->add_option("--gt", gt, "ground-truth directory")->required();
  eval->add_option("--report", report_prefix, "write <prefix>.json and <prefix>.txt");
  add_settings(*eval, eval_settings);

  auto* insp = app.add_subcommand("inspect", "print graph and spectrum statistics as JSON");
  std::string insp_features, insp_flow;
  insp->add_option("--features", insp_features, "feature tensor")->required();
  insp->add_option("--flow", insp_flow, "flow tensor (video graph)");
  add_settings(*insp, inspect_settings);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*image) {
      return run_image_cmd(resolve(*image, image_settings), features, out, reference, reference_dir);
    }
    if (*video) {
      return run_video_cmd(resolve(*video, video_settings), rgb, flow, out, reference_dir);
    }
    if (*eval) {
      const PipelineConfig cfg = resolve(*eval, eval_settings);
      const Task task = task_name == "discovery" ? Task::discovery
                        : task_name == "video"   ? Task::video
                                                 : Task::saliency;
      const EvalReport report = evaluate(cfg, pred, gt, task);
      std::cout << report_text(report);
      if (!report_prefix.empty()) write_report(report, report_prefix);
      return 0;
    }
    if (*insp) {
      const PipelineConfig cfg = resolve(*insp, inspect_settings);
      const FeatureGrid f = run_stage("read", [&] { return read_feature_tensor(insp_features); });
      std::optional<FeatureGrid> fl;
      if (!insp_flow.empty()) fl = run_stage("read", [&] { return read_feature_tensor(insp_flow); });
      std::cout << inspect(cfg, f, fl ? &*fl : nullptr).dump(2) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "ncutseg: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "ncutseg: " << e.what() << "\n";
    return exit_code(ErrorKind::io);
  }
  return 2;
}
