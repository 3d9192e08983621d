#pragma once

// End-to-end orchestration: features -> graph -> cut -> object -> (refinement) -> files,
// plus dataset evaluation and graph inspection.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "ncutseg/error.hpp"
#include "ncutseg/graph.hpp"
#include "ncutseg/io.hpp"
#include "ncutseg/metrics.hpp"
#include "ncutseg/partition.hpp"
#include "ncutseg/refine.hpp"
#include "ncutseg/spectral.hpp"
#include "ncutseg/types.hpp"

namespace ncutseg {

enum class RefineMode { none, bilateral };
enum class JaccardAveraging { per_frame, per_sequence };
enum class Task { discovery, saliency, video };

inline constexpr std::size_t kMaxFramesPerGraph = 90;

struct PipelineConfig {
  std::optional<double> tau;  // unset: 0.2 for images, 0.3 for videos
  double eps = kDefaultEps;
  Fusion fusion = Fusion::average;
  BipartitionStrategy bipartition = BipartitionStrategy::mean;
  RefineMode refine = RefineMode::none;
  bool refine_soft = false;  // refine the eigen attention instead of the coarse mask
  double beta_sq = kDefaultBetaSq;
  std::uint32_t patch_size = 0;  // 0: trust the feature file
  std::size_t frame_gap = 1;
  std::size_t max_frames_per_graph = kMaxFramesPerGraph;
  CorlocMode corloc_mode = CorlocMode::strict;
  JaccardAveraging jaccard_averaging = JaccardAveraging::per_frame;
  SolverKind solver = SolverKind::lanczos;
  LanczosOptions lanczos;
  BilateralParams bilateral;
  double binarize_threshold = 0.5;
  unsigned workers = 1;
  unsigned graph_threads = 0;
};

inline void validate(const PipelineConfig& cfg) {
  if (cfg.max_frames_per_graph < 1) throw ValidationError("max-frames-per-graph must be >= 1");
  if (cfg.frame_gap < 1) throw ValidationError("frame-gap must be >= 1");
  if (cfg.workers < 1) throw ValidationError("workers must be >= 1");
  if (!(cfg.beta_sq > 0)) throw ValidationError("beta-sq must be positive");
  validate(cfg.bilateral);
}

inline GraphConfig graph_config(const PipelineConfig& cfg, bool video) {
  GraphConfig g;
  g.tau = cfg.tau.value_or(video ? kVideoTau : kImageTau);
  g.eps = cfg.eps;
  g.fusion = cfg.fusion;
  g.threads = cfg.graph_threads;
  return g;
}

// ---------------------------------------------------------------------------
// key=value configuration

namespace detail {

inline double parse_double(std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ValidationError("invalid number for " + std::string(key) + ": '" + std::string(value) + "'");
  }
  return out;
}

inline std::uint64_t parse_count(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ValidationError("invalid count for " + std::string(key) + ": '" + std::string(value) + "'");
  }
  return out;
}

inline bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ValidationError("invalid boolean for " + std::string(key) + ": '" + std::string(value) + "'");
}

template <typename Enum>
void parse_enum(std::string_view key, std::string_view value, Enum& out,
                std::initializer_list<std::pair<const char*, std::type_identity_t<Enum>>> table) {
  for (const auto& [name, e] : table) {
    if (value == name) {
      out = e;
      return;
    }
  }
  std::string options;
  for (const auto& [name, e] : table) options += std::string(options.empty() ? "" : "|") + name;
  throw ValidationError("invalid value for " + std::string(key) + ": '" + std::string(value) + "' (" + options + ")");
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

/// Applies one kebab-case setting. Unknown keys are rejected.
inline void apply_setting(PipelineConfig& cfg, std::string_view key, std::string_view value) {
  using namespace detail;
  if (key == "tau") cfg.tau = parse_double(key, value);
  else if (key == "eps") cfg.eps = parse_double(key, value);
  else if (key == "fusion")
    parse_enum(key, value, cfg.fusion, {{"average", Fusion::average}, {"min", Fusion::min}, {"max", Fusion::max}});
  else if (key == "bipartition")
    parse_enum(key, value, cfg.bipartition,
                                 {{"mean", BipartitionStrategy::mean},
                                  {"kmeans", BipartitionStrategy::kmeans},
                                  {"em", BipartitionStrategy::em},
                                  {"energy", BipartitionStrategy::energy}});
  else if (key == "refine")
    parse_enum(key, value, cfg.refine, {{"none", RefineMode::none}, {"bilateral", RefineMode::bilateral}});
  else if (key == "refine-soft") cfg.refine_soft = parse_bool(key, value);
  else if (key == "beta-sq") cfg.beta_sq = parse_double(key, value);
  else if (key == "patch-size") cfg.patch_size = static_cast<std::uint32_t>(parse_count(key, value));
  else if (key == "frame-gap") cfg.frame_gap = parse_count(key, value);
  else if (key == "max-frames-per-graph") cfg.max_frames_per_graph = parse_count(key, value);
  else if (key == "corloc-mode")
    parse_enum(key, value, cfg.corloc_mode, {{"strict", CorlocMode::strict}, {"inclusive", CorlocMode::inclusive}});
  else if (key == "jaccard-averaging")
    parse_enum(key, value, cfg.jaccard_averaging, {{"per-frame", JaccardAveraging::per_frame}, {"per-sequence", JaccardAveraging::per_sequence}});
  else if (key == "solver")
    parse_enum(key, value, cfg.solver, {{"lanczos", SolverKind::lanczos}, {"dense", SolverKind::dense}});
  else if (key == "solver-tol") cfg.lanczos.tol = parse_double(key, value);
  else if (key == "solver-max-iter") cfg.lanczos.max_iter = parse_count(key, value);
  else if (key == "sigma-spatial") cfg.bilateral.sigma_spatial = parse_double(key, value);
  else if (key == "sigma-luma") cfg.bilateral.sigma_luma = parse_double(key, value);
  else if (key == "sigma-chroma") cfg.bilateral.sigma_chroma = parse_double(key, value);
  else if (key == "lambda-smooth") cfg.bilateral.lambda_smooth = parse_double(key, value);
  else if (key == "cg-tol") cfg.bilateral.cg_tol = parse_double(key, value);
  else if (key == "cg-max-iter") cfg.bilateral.cg_max_iter = static_cast<int>(parse_count(key, value));
  else if (key == "binarize-threshold") cfg.binarize_threshold = parse_double(key, value);
  else if (key == "workers") cfg.workers = static_cast<unsigned>(parse_count(key, value));
  else if (key == "graph-threads") cfg.graph_threads = static_cast<unsigned>(parse_count(key, value));
  else throw ValidationError("unknown setting '" + std::string(key) + "'");
}

/// Parses `key = value` lines; '#' starts a comment.
inline void load_config_text(PipelineConfig& cfg, std::string_view text, const std::string& source = "config") {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ValidationError(source + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      apply_setting(cfg, detail::trim(std::string_view(body).substr(0, eq)),
                    detail::trim(std::string_view(body).substr(eq + 1)));
    } catch (const ValidationError& e) {
      throw ValidationError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void load_config_file(PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  load_config_text(cfg, ss.str(), path.string());
}

// ---------------------------------------------------------------------------
// Stage tagging

class StageError : public Error {
 public:
  StageError(const std::string& stage, const Error& cause)
      : Error(cause.kind(), "[" + stage + "] " + cause.what()), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

template <typename F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  }
}

// ---------------------------------------------------------------------------
// Shared pieces

/// Min-max normalization to [0, 1]; a constant vector maps to zeros.
inline std::vector<double> normalized_attention(const Eigen::VectorXd& y) {
  std::vector<double> out(static_cast<std::size_t>(y.size()), 0.0);
  const double lo = y.minCoeff(), hi = y.maxCoeff();
  if (hi > lo) {
    for (Eigen::Index i = 0; i < y.size(); ++i) out[static_cast<std::size_t>(i)] = (y[i] - lo) / (hi - lo);
  }
  return out;
}

/// One frame of per-node values as a rows x cols mask.
inline PixelMask frame_map(std::span<const double> values, const GridGeometry& g, std::size_t frame) {
  PixelMask out(g.rows, g.cols);
  std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(frame * g.frame_size()), g.frame_size(), out.values.begin());
  return out;
}

inline PatchMask frame_patch_mask(const PatchMask& mask, std::size_t frame) {
  const auto& g = mask.geometry;
  PatchMask out(GridGeometry{1, g.rows, g.cols});
  std::copy_n(mask.values.begin() + static_cast<std::ptrdiff_t>(frame * g.frame_size()), g.frame_size(), out.values.begin());
  return out;
}

struct CutOutcome {
  CutSolution cut;
  Bipartition partition;
  ObjectSelection selection;
  std::vector<double> attention;
};

inline CutOutcome cut_graph(const PipelineConfig& cfg, const AffinityGraph& graph, SelectionMode mode,
                            std::vector<std::string>& warnings) {
  CutOutcome out;
  out.cut = run_stage("eigensolve", [&] { return solve_cut(graph, cfg.solver, cfg.lanczos); });
  if (out.cut.degenerate_gap) {
    warnings.push_back("degenerate spectral gap (" + std::to_string(out.cut.gap) + "); eigenvector is not unique");
  }
  out.partition = run_stage("bipartition", [&] { return bipartition(cfg.bipartition, graph, out.cut.eigenvector); });
  out.selection = run_stage("select", [&] {
    return extract_object(graph.geometry(), out.partition, out.cut.eigenvector, mode);
  });
  out.attention = normalized_attention(out.cut.eigenvector);
  return out;
}

inline PixelMask refine_frame(const PipelineConfig& cfg, const RgbImage& reference, const PixelMask& coarse,
                              const PixelMask& attention) {
  return run_stage("refine", [&] {
    const PixelMask& target = cfg.refine_soft ? attention : coarse;
    return bilateral_refine(reference, target, mask_confidence(coarse), cfg.bilateral);
  });
}

// ---------------------------------------------------------------------------
// Images

struct ImageResult {
  std::string id;
  DetectionBox box;
  double score = 0.0;  // mean eigen attention over the selected patches
  CutSolution cut;
  Bipartition partition;
  ObjectSelection selection;
  PixelMask heatmap;      // patch grid
  PixelMask coarse_mask;  // pixel grid
  std::optional<PixelMask> refined_soft;
  PixelMask mask;         // final binary pixel mask
  std::vector<std::string> warnings;
};

inline ImageResult run_image(const PipelineConfig& cfg, const FeatureGrid& features, const RgbImage* reference,
                             std::string id) {
  validate(cfg);
  ImageResult res;
  res.id = std::move(id);
  if (features.geometry.frames != 1) throw ValidationError("image features must have exactly one frame");
  if (cfg.patch_size != 0 && cfg.patch_size != features.patch_size) {
    throw ValidationError("feature patch size " + std::to_string(features.patch_size) + " != configured " +
                          std::to_string(cfg.patch_size));
  }
  if (features.kind != FeatureKind::rgb) res.warnings.push_back("image pipeline given flow features");
  if (cfg.refine == RefineMode::bilateral && reference == nullptr) {
    throw ValidationError("bilateral refinement needs a reference image");
  }
  const AffinityGraph graph = run_stage("graph", [&] { return build_image_graph(features, graph_config(cfg, false)); });
  CutOutcome cut = cut_graph(cfg, graph, SelectionMode::image, res.warnings);

  const auto& g = graph.geometry();
  res.box = run_stage("bbox", [&] {
    return mask_to_bbox(cut.selection.patch_mask, 0, features.patch_size, features.image_height, features.image_width);
  });
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < g.nodes(); ++i) {
    if (cut.selection.patch_mask.values[i]) {
      sum += cut.attention[i];
      ++count;
    }
  }
  res.score = count ? sum / static_cast<double>(count) : 0.0;
  res.heatmap = frame_map(cut.attention, g, 0);
  res.coarse_mask =
      upsample_patch_mask(cut.selection.patch_mask, 0, features.patch_size, features.image_height, features.image_width);
  if (cfg.refine == RefineMode::bilateral) {
    const PixelMask attention =
        upsample_patch_values(cut.attention, g, 0, features.patch_size, features.image_height, features.image_width);
    if (reference->height != features.image_height || reference->width != features.image_width) {
      throw StageError("refine", ValidationError("reference image size does not match the feature header"));
    }
    res.refined_soft = refine_frame(cfg, *reference, res.coarse_mask, attention);
    res.mask = binarize(*res.refined_soft, cfg.binarize_threshold);
  } else {
    res.mask = res.coarse_mask;
  }
  res.cut = std::move(cut.cut);
  res.partition = std::move(cut.partition);
  res.selection = std::move(cut.selection);
  return res;
}

/// File-level entry point. The reference image is only opened when refinement is on.
inline ImageResult run_image(const PipelineConfig& cfg, const std::filesystem::path& features_path,
                             const std::optional<std::filesystem::path>& reference_path, std::string id) {
  const FeatureGrid features = run_stage("read", [&] { return read_feature_tensor(features_path); });
  std::optional<RgbImage> reference;
  if (cfg.refine == RefineMode::bilateral) {
    if (!reference_path) throw ValidationError("bilateral refinement needs --reference");
    reference = run_stage("read", [&] { return read_image(*reference_path); });
  }
  return run_image(cfg, features, reference ? &*reference : nullptr, std::move(id));
}

inline void write_image_outputs(const ImageResult& res, const std::filesystem::path& out_dir) {
  write_mask(res.heatmap, out_dir / (res.id + ".heatmap.pgm"));
  const auto& g = res.selection.patch_mask.geometry;
  PixelMask patch(g.rows, g.cols);
  for (std::size_t i = 0; i < patch.size(); ++i) patch.values[i] = res.selection.patch_mask.values[i];
  write_mask(patch, out_dir / (res.id + ".patch.pgm"));
  write_mask(res.mask, out_dir / (res.id + ".mask.pgm"));
  if (res.refined_soft) write_mask(*res.refined_soft, out_dir / (res.id + ".soft.pgm"));
}

/// Strips directories and the feature-file suffixes.
inline std::string id_from_path(const std::filesystem::path& path) {
  std::string name = path.filename().string();
  for (std::string_view suffix : {".rgb.tcft", ".flow.tcft", ".tcft"}) {
    if (name.size() > suffix.size() && name.ends_with(suffix)) return name.substr(0, name.size() - suffix.size());
  }
  return path.stem().string();
}

// ---------------------------------------------------------------------------
// Videos

/// Sizes of consecutive non-overlapping chunks of at most `max_frames`.
inline std::vector<std::size_t> chunk_sizes(std::size_t frames, std::size_t max_frames) {
  if (max_frames == 0) throw ValidationError("chunk size must be positive");
  std::vector<std::size_t> out;
  for (std::size_t done = 0; done < frames; done += max_frames) out.push_back(std::min(max_frames, frames - done));
  return out;
}

struct VideoFrameResult {
  std::size_t frame = 0;  // index into the rgb sequence
  PatchMask patch_mask;
  PixelMask heatmap;
  PixelMask coarse_mask;
  std::optional<PixelMask> refined_soft;
  PixelMask mask;
};

struct VideoResult {
  std::string id;
  std::vector<std::size_t> chunks;
  std::vector<CutSolution> cuts;
  std::vector<VideoFrameResult> frames;
  std::vector<std::string> warnings;
};

using ReferenceProvider = std::function<RgbImage(std::size_t frame)>;

/// rgb may carry `frame_gap` more frames than flow; frames without a flow partner are dropped.
inline VideoResult run_video(const PipelineConfig& cfg, const FeatureGrid& rgb_in, const FeatureGrid& flow,
                             const ReferenceProvider& reference, std::string id) {
  validate(cfg);
  VideoResult res;
  res.id = std::move(id);
  const GridGeometry& fg = flow.geometry;
  const GridGeometry& rg = rgb_in.geometry;
  if (rg.rows != fg.rows || rg.cols != fg.cols) throw ValidationError("rgb and flow patch grids differ");
  if (rgb_in.patch_size != flow.patch_size || rgb_in.image_height != flow.image_height ||
      rgb_in.image_width != flow.image_width) {
    throw ValidationError("rgb and flow headers describe different images");
  }
  if (cfg.patch_size != 0 && cfg.patch_size != rgb_in.patch_size) throw ValidationError("patch size mismatch");
  FeatureGrid rgb;
  if (rg.frames == fg.frames) {
    rgb = rgb_in;
  } else if (rg.frames == fg.frames + cfg.frame_gap) {
    rgb = slice_frames(rgb_in, 0, fg.frames);
  } else {
    throw ValidationError("rgb has " + std::to_string(rg.frames) + " frames, flow has " + std::to_string(fg.frames) +
                          "; expected equal counts or a difference of frame-gap " + std::to_string(cfg.frame_gap));
  }
  if (cfg.refine == RefineMode::bilateral && !reference) throw ValidationError("bilateral refinement needs reference frames");

  res.chunks = chunk_sizes(fg.frames, cfg.max_frames_per_graph);
  std::size_t first = 0;
  for (std::size_t len : res.chunks) {
    const FeatureGrid rgb_chunk = slice_frames(rgb, first, len);
    const FeatureGrid flow_chunk = slice_frames(flow, first, len);
    const AffinityGraph graph =
        run_stage("graph", [&] { return build_video_graph(rgb_chunk, flow_chunk, graph_config(cfg, true)); });
    CutOutcome cut = cut_graph(cfg, graph, SelectionMode::video, res.warnings);
    const auto& g = graph.geometry();
    for (std::size_t f = 0; f < len; ++f) {
      VideoFrameResult fr;
      fr.frame = first + f;
      fr.patch_mask = frame_patch_mask(cut.selection.patch_mask, f);
      fr.heatmap = frame_map(cut.attention, g, f);
      fr.coarse_mask = upsample_patch_mask(cut.selection.patch_mask, f, rgb.patch_size, rgb.image_height, rgb.image_width);
      if (cfg.refine == RefineMode::bilateral) {
        const RgbImage ref = run_stage("read", [&] { return reference(fr.frame); });
        if (ref.height != rgb.image_height || ref.width != rgb.image_width) {
          throw StageError("refine", ValidationError("reference frame size does not match the feature header"));
        }
        const PixelMask attention =
            upsample_patch_values(cut.attention, g, f, rgb.patch_size, rgb.image_height, rgb.image_width);
        fr.refined_soft = refine_frame(cfg, ref, fr.coarse_mask, attention);
        fr.mask = binarize(*fr.refined_soft, cfg.binarize_threshold);
      } else {
        fr.mask = fr.coarse_mask;
      }
      res.frames.push_back(std::move(fr));
    }
    res.cuts.push_back(std::move(cut.cut));
    first += len;
  }
  return res;
}

inline std::string frame_id(const std::string& video_id, std::size_t frame) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", frame);
  return video_id + "_" + buf;
}

inline void write_video_outputs(const VideoResult& res, const std::filesystem::path& out_dir) {
  for (const auto& fr : res.frames) {
    const std::string fid = frame_id(res.id, fr.frame);
    write_mask(fr.heatmap, out_dir / (fid + ".heatmap.pgm"));
    write_mask(fr.mask, out_dir / (fid + ".mask.pgm"));
    if (fr.refined_soft) write_mask(*fr.refined_soft, out_dir / (fid + ".soft.pgm"));
  }
}

// ---------------------------------------------------------------------------
// Batches

/// Runs f(0..count) on a bounded pool; the first exception (by index) is rethrown.
template <typename F>
void parallel_for(std::size_t count, unsigned workers, F&& f) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), count));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Evaluation

inline const char* to_string(Task t) {
  switch (t) {
    case Task::discovery: return "discovery";
    case Task::saliency: return "saliency";
    case Task::video: return "video";
  }
  return "?";
}

struct EvalOptions {
  std::string pred_suffix = ".mask.pgm";
  std::string soft_suffix = ".soft.pgm";
  std::string gt_suffix = ".pgm";
};

struct EvalReport {
  Task task = Task::saliency;
  std::vector<EvalRecord> records;
  std::map<std::string, double> summary;
};

namespace detail {

inline std::map<std::string, std::filesystem::path> list_by_suffix(const std::filesystem::path& dir,
                                                                   const std::string& suffix,
                                                                   const std::vector<std::string>& exclude = {}) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::map<std::string, std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() <= suffix.size() || !name.ends_with(suffix)) continue;
    bool skip = false;
    for (const auto& ex : exclude) skip = skip || (name.size() > ex.size() && name.ends_with(ex));
    if (!skip) out.emplace(name.substr(0, name.size() - suffix.size()), entry.path());
  }
  return out;
}

template <typename A, typename B>
void require_same_ids(const std::map<std::string, A>& pred, const std::map<std::string, B>& gt) {
  std::vector<std::string> missing, extra;
  for (const auto& [id, _] : gt) {
    if (!pred.contains(id)) missing.push_back(id);
  }
  for (const auto& [id, _] : pred) {
    if (!gt.contains(id)) extra.push_back(id);
  }
  if (gt.empty() && pred.empty()) throw ValidationError("no ids to evaluate");
  if (missing.empty() && extra.empty()) return;
  std::string msg = "prediction and ground-truth ids differ;";
  auto list = [&](const char* label, const std::vector<std::string>& ids) {
    if (ids.empty()) return;
    msg += std::string(" ") + label + ":";
    for (std::size_t i = 0; i < ids.size() && i < 20; ++i) msg += " " + ids[i];
    if (ids.size() > 20) msg += " ...";
  };
  list("missing predictions", missing);
  list("unmatched predictions", extra);
  throw ValidationError(msg);
}

inline std::map<std::string, std::vector<Detection>> detections_in(const std::filesystem::path& dir) {
  std::map<std::string, std::vector<Detection>> out;
  for (const auto& [stem, path] : list_by_suffix(dir, ".jsonl")) {
    for (auto& det : read_detections(path)) out[det.id].push_back(std::move(det));
  }
  return out;
}

inline std::string sequence_of(const std::string& frame_id) {
  const auto pos = frame_id.rfind('_');
  return pos == std::string::npos ? frame_id : frame_id.substr(0, pos);
}

}  // namespace detail

inline EvalReport evaluate(const PipelineConfig& cfg, const std::filesystem::path& pred_dir,
                           const std::filesystem::path& gt_dir, Task task, const EvalOptions& opt = {}) {
  EvalReport report;
  report.task = task;
  if (task == Task::discovery) {
    const auto pred = detail::detections_in(pred_dir);
    const auto gt = detail::detections_in(gt_dir);
    detail::require_same_ids(pred, gt);
    for (const auto& [id, boxes] : gt) {
      const auto& cands = pred.at(id);
      const Detection* best = &cands.front();
      for (const auto& c : cands) {
        if (c.score > best->score) best = &c;
      }
      std::vector<DetectionBox> gt_boxes;
      for (const auto& d : boxes) gt_boxes.push_back(d.box);
      report.records.push_back({id, {{"corloc", static_cast<double>(corloc(best->box, gt_boxes, cfg.corloc_mode))}}});
    }
    report.summary["corloc"] = aggregate(report.records, "corloc");
  } else {
    const auto pred = detail::list_by_suffix(pred_dir, opt.pred_suffix);
    const auto gt = detail::list_by_suffix(gt_dir, opt.gt_suffix, {opt.pred_suffix, opt.soft_suffix, ".heatmap.pgm", ".patch.pgm"});
    detail::require_same_ids(pred, gt);
    for (const auto& [id, gt_path] : gt) {
      const PixelMask truth = binarize(read_mask(gt_path), 0.5);
      const PixelMask predicted = read_mask(pred.at(id));
      EvalRecord rec{id, {}};
      if (task == Task::saliency) {
        const auto soft_path = pred.at(id).parent_path() / (id + opt.soft_suffix);
        const PixelMask soft = std::filesystem::exists(soft_path) ? read_mask(soft_path) : predicted;
        const PixelMask binary = binarize(predicted, cfg.binarize_threshold);
        rec.metrics["max_f_beta"] = f_beta_max(soft, truth, cfg.beta_sq);
        rec.metrics["iou"] = mask_iou(binary, truth);
        rec.metrics["accuracy"] = pixel_accuracy(binary, truth);
      } else {
        rec.metrics["jaccard"] = jaccard(binarize(predicted, cfg.binarize_threshold), truth);
      }
      report.records.push_back(std::move(rec));
    }
    if (task == Task::saliency) {
      for (const char* m : {"max_f_beta", "iou", "accuracy"}) report.summary[m] = aggregate(report.records, m);
    } else if (cfg.jaccard_averaging == JaccardAveraging::per_frame) {
      report.summary["jaccard"] = aggregate(report.records, "jaccard");
    } else {
      std::map<std::string, std::vector<EvalRecord>> by_seq;
      for (const auto& r : report.records) by_seq[detail::sequence_of(r.id)].push_back(r);
      std::vector<EvalRecord> seq_means;
      for (const auto& [seq, recs] : by_seq) seq_means.push_back({seq, {{"jaccard", aggregate(recs, "jaccard")}}});
      report.summary["jaccard"] = aggregate(seq_means, "jaccard");
    }
  }
  report.summary["count"] = static_cast<double>(report.records.size());
  return report;
}

inline nlohmann::ordered_json report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["task"] = to_string(report.task);
  j["summary"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.summary) j["summary"][k] = v;
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : report.records) {
    nlohmann::ordered_json rec;
    rec["id"] = r.id;
    for (const auto& [k, v] : r.metrics) rec[k] = v;
    j["records"].push_back(rec);
  }
  return j;
}

inline std::string report_text(const EvalReport& report) {
  std::ostringstream out;
  out << "task: " << to_string(report.task) << "\n";
  for (const auto& [k, v] : report.summary) {
    if (k == "count") {
      out << "count: " << static_cast<long long>(v) << "\n";
    } else {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
      out << k << ": " << buf << "%\n";
    }
  }
  return out.str();
}

/// Writes `<prefix>.json` and `<prefix>.txt`.
inline void write_report(const EvalReport& report, const std::filesystem::path& prefix) {
  const std::string json = report_json(report).dump(2) + "\n";
  const std::string text = report_text(report);
  auto bytes = [](const std::string& s) { return std::span(reinterpret_cast<const unsigned char*>(s.data()), s.size()); };
  detail::write_file(prefix.string() + ".json", bytes(json));
  detail::write_file(prefix.string() + ".txt", bytes(text));
}

// ---------------------------------------------------------------------------
// Inspection

inline nlohmann::ordered_json inspect(const PipelineConfig& cfg, const FeatureGrid& features, const FeatureGrid* flow) {
  const bool video = flow != nullptr;
  const GraphConfig gcfg = graph_config(cfg, video);
  const AffinityGraph graph = video ? build_video_graph(features, *flow, gcfg) : build_image_graph(features, gcfg);
  const CutSolution cut = solve_cut(graph, cfg.solver, cfg.lanczos);
  const auto& d = graph.degrees();
  nlohmann::ordered_json j;
  j["nodes"] = graph.size();
  j["frames"] = graph.geometry().frames;
  j["rows"] = graph.geometry().rows;
  j["cols"] = graph.geometry().cols;
  j["tau"] = gcfg.tau;
  j["eps"] = gcfg.eps;
  j["above_tau_pairs"] = graph.nnz();
  j["density"] = static_cast<double>(graph.nnz()) / (static_cast<double>(graph.size()) * static_cast<double>(graph.size()));
  j["degree_min"] = d.minCoeff();
  j["degree_max"] = d.maxCoeff();
  j["degree_mean"] = d.mean();
  j["solver"] = to_string(cut.solver);
  j["eigenvalue"] = cut.eigenvalue;
  j["iterations"] = cut.iterations;
  j["residual"] = cut.residual;
  j["gap"] = std::isnan(cut.gap) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(cut.gap);
  j["degenerate_gap"] = cut.degenerate_gap;
  return j;
}

}  // namespace ncutseg
