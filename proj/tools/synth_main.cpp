// Writes a small synthetic corpus (features, references, ground truth) for trying the CLI.

#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ncutseg.hpp"
#include "support/fixtures.hpp"

namespace fs = std::filesystem;
using namespace ncutseg;
namespace t = ncutseg::testing;

int main(int argc, char** argv) {
  CLI::App app{"Synthetic corpus for ncutseg"};
  std::string out;
  std::uint64_t seed = 1;
  std::size_t images = 3, frames = 12;
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--seed", seed, "random seed");
  app.add_option("--images", images, "number of still images")->check(CLI::PositiveNumber);
  app.add_option("--frames", frames, "frames in the video clip")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path root(out);
    for (const char* sub : {"images", "refs", "gt_masks", "gt_boxes", "video", "video_refs", "video_gt"}) {
      fs::create_directories(root / sub);
    }
    std::mt19937_64 rng(seed);
    std::vector<Detection> boxes;
    for (std::size_t i = 0; i < images; ++i) {
      const std::string id = "img" + std::to_string(i);
      const t::Rect block = t::random_block(10, 12, rng);
      const FeatureGrid f = t::planted_grid(10, 12, block, rng);
      write_feature_tensor(f, root / "images" / (id + ".rgb.tcft"));
      write_image(t::block_image(f, block, {220, 70, 40}, {40, 90, 160}), root / "refs" / (id + ".ppm"));
      const PatchMask patches = t::rect_mask(f.geometry, 0, block);
      write_mask(upsample_patch_mask(patches, 0, f.patch_size, f.image_height, f.image_width),
                 root / "gt_masks" / (id + ".pgm"));
      boxes.push_back({id, mask_to_bbox(patches, 0, f.patch_size, f.image_height, f.image_width), 1.0});
    }
    write_detections(boxes, root / "gt_boxes" / "boxes.jsonl");

    const auto clip = t::moving_square(frames, 6, 6, 2, rng);
    write_feature_tensor(clip.rgb, root / "video" / "clip.rgb.tcft");
    write_feature_tensor(clip.flow, root / "video" / "clip.flow.tcft");
    for (std::size_t f = 0; f < frames; ++f) {
      const std::string fid = frame_id("clip", f);
      write_image(t::block_image(clip.rgb, clip.squares[f], {230, 230, 60}, {20, 40, 30}),
                  root / "video_refs" / (fid + ".ppm"));
      write_mask(upsample_patch_mask(t::rect_mask(GridGeometry{1, 6, 6}, 0, clip.squares[f]), 0, clip.rgb.patch_size,
                                     clip.rgb.image_height, clip.rgb.image_width),
                 root / "video_gt" / (fid + ".pgm"));
    }
  } catch (const Error& e) {
    std::cerr << "ncutseg-synth: " << e.what() << "\n";
    return exit_code(e.kind());
  }
  return 0;
}
