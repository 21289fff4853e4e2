#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "empaste/fem.hpp"
#include "empaste/longtail.hpp"
#include "empaste/paste.hpp"

namespace empaste {

enum class PasteMode { Random, SpaceMaximize };

struct PipelineConfig {
  std::filesystem::path manifest;
  std::filesystem::path output_dir;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;

  double min_area_frac = kDefaultMinAreaFrac;
  double max_extent_frac = kDefaultMaxExtentFrac;
  int erosion_radius = kDefaultErosionRadius;
  std::uint8_t pad_value = kDefaultPadValue;

  FemParams fem;
  PasteMode paste_mode = PasteMode::Random;
  PasteParams paste;
  SelectionMode selection = SelectionMode::Uniform;
  ParetoSpec longtail;

  std::size_t top_k = 5;
  std::size_t dup_factor = 2;
  std::optional<std::filesystem::path> generated_manifest;
  std::optional<std::filesystem::path> ranking_scores;

  std::optional<std::filesystem::path> captions;
  std::filesystem::path lexicon;
  std::filesystem::path distractors;

  // Throws InvalidArgument; a missing seed is an error.
  void validate() const;
};

// Relative paths resolve against the config file's directory.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
PipelineConfig parse_pipeline_config(const std::string& json_text, const std::filesystem::path& base_dir);

// A module error tagged with the stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.code(), cause.message()), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

// extract, crops, pool, paste, longtail, rewrite-captions, validate, run.
const std::vector<std::string>& pipeline_stages();

// Every problem found in the config, the manifest and its assets. Empty
// means the inputs are usable.
std::vector<std::string> validate_inputs(const PipelineConfig& config);

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config) : config_(std::move(config)) {}

  PipelineConfig& config() noexcept { return config_; }
  const PipelineConfig& config() const noexcept { return config_; }

  // Outputs are staged and moved into output_dir only on success; on failure
  // the staged files go to output_dir/quarantine/<stage>. Throws StageError.
  void run(const std::string& stage);

  const std::string& report_json() const noexcept { return report_; }
  const std::string& failed_stage() const noexcept { return failed_stage_; }

 private:
  PipelineConfig config_;
  std::string report_;
  std::string failed_stage_;
};

}  // namespace empaste
