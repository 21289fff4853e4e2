#pragma once

#include <optional>
#include <string>
#include <vector>

#include "empaste/core.hpp"
#include "empaste/geometry.hpp"
#include "empaste/proposals.hpp"
#include "empaste/rng.hpp"

namespace empaste {

// An extracted foreground: mask and pixels share one extent.
struct ForegroundCutout {
  ClassId class_id = 0;
  BinaryMask mask;
  RasterImage pixels;
  std::string source_image_id;
  std::string source_segment_id;
};

// Pixels of a pasted cutout, positioned in scene coordinates.
struct PastedLayer {
  BinaryMask mask;  // local extent
  RasterImage pixels;
  int x0 = 0;
  int y0 = 0;
};

struct SceneInstance {
  ClassId class_id = 0;
  BinaryMask mask;  // scene extent, occlusion-resolved
  std::size_t original_area = 0;
  int paste_index = -1;  // -1 for instances the background already had
  std::string source_image_id;
  std::string source_segment_id;
  std::optional<PastedLayer> layer;
};

// Instances whose visible area drops below this fraction of their pasted
// area are removed.
inline constexpr double kMinVisibleFraction = 0.05;

class CompositeScene {
 public:
  CompositeScene() = default;
  explicit CompositeScene(RasterImage background) : background_(std::move(background)) {}

  int width() const noexcept { return background_.width(); }
  int height() const noexcept { return background_.height(); }
  const RasterImage& background() const noexcept { return background_; }
  const std::vector<SceneInstance>& instances() const noexcept { return instances_; }
  int pasted_count() const noexcept { return next_paste_index_; }

  // Registers an instance already present in the background. Overlap with
  // earlier instances is resolved in favour of the new one.
  void add_existing(ClassId class_id, BinaryMask scene_mask, std::string source_image_id = {},
                    std::string source_segment_id = {});

  // Pastes `layer` at (layer.x0, layer.y0), clipped to the scene. Returns the
  // visible pasted area (0 if nothing landed inside the scene).
  std::size_t paste(ClassId class_id, PastedLayer layer, std::string source_image_id = {},
                    std::string source_segment_id = {});

  // Scene extent minus the union of instance masks.
  BinaryMask free_mask() const;

 private:
  void insert(SceneInstance inst);

  RasterImage background_;
  std::vector<SceneInstance> instances_;
  int next_paste_index_ = 0;
};

enum class SelectionMode { Uniform, Balanced };

class SelectionDistribution {
 public:
  SelectionDistribution() = default;

  SelectionMode mode() const noexcept { return mode_; }
  const std::vector<double>& probabilities() const noexcept { return probabilities_; }
  std::size_t sample(Rng& rng) const;

  friend SelectionDistribution make_selection_distribution(const std::vector<ForegroundCutout>&, SelectionMode);
  friend SelectionDistribution make_selection_distribution(const std::vector<ClassId>&, SelectionMode);

 private:
  SelectionMode mode_ = SelectionMode::Uniform;
  std::vector<double> probabilities_;
  std::vector<double> cumulative_;
};

SelectionDistribution make_selection_distribution(const std::vector<ForegroundCutout>& pool, SelectionMode mode);
// Same, from the class label of each pool entry.
SelectionDistribution make_selection_distribution(const std::vector<ClassId>& pool_classes, SelectionMode mode);

enum class BlendMode { None, Gaussian, Poisson };

struct PasteParams {
  int n_p = 4;
  double max_rotation_deg = 30.0;
  double scale_low = 0.3;
  double scale_high = 1.0;
  BlendMode blend = BlendMode::Gaussian;
  double gaussian_sigma = 2.0;
  double min_inscribed_radius = 8.0;
  int max_rescale_retries = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

double sample_scale_random(Rng& rng, double low = 0.3, double high = 1.0);

// Per-scene record of what a paste call did.
struct PasteLog {
  std::vector<double> inscribed_radii;  // space-maximize only
  std::vector<double> scales;
  bool stopped_early = false;
  std::string warning;
};

// Scales/rotates a cutout (pixels follow the mask).
PastedLayer transform_cutout(const ForegroundCutout& cutout, const Transform2& t);

CompositeScene random_paste_scene(CompositeScene scene, const std::vector<ForegroundCutout>& pool,
                                  const SelectionDistribution& dist, const PasteParams& params, Rng& rng,
                                  PasteLog* log = nullptr);

CompositeScene space_maximize_paste_scene(CompositeScene scene, const std::vector<ForegroundCutout>& pool,
                                          const SelectionDistribution& dist, const PasteParams& params, Rng& rng,
                                          PasteLog* log = nullptr);

struct BlendStats {
  std::size_t poisson_fallbacks = 0;
};

// Renders the scene. Instance masks are never modified.
RasterImage blend_composite(const CompositeScene& scene, BlendMode mode, const PasteParams& params,
                            BlendStats* stats = nullptr);

}  // namespace empaste
