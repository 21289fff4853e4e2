#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace empaste::testing {

struct FixtureOptions {
  int num_images = 50;
  int num_classes = 4;
  int image_size = 64;
  int feature_dim = 8;
  int distractors_per_image = 3;
  int generated_groups = 2;
  int generated_per_group = 3;
  std::uint64_t seed = 1;
};

// Writes a self-contained synthetic dataset under `dir`: images, segment
// PNGs, CAM heatmaps, feature and score files, manifest.json, captions,
// generated backgrounds with ranking scores, and config.json (output "out").
void write_fixture(const std::filesystem::path& dir, const FixtureOptions& options = {});

}  // namespace empaste::testing
