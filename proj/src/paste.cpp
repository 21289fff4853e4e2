#include "empaste/paste.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "empaste/poisson.hpp"

namespace empaste {

// ---- scene ----------------------------------------------------------------

void CompositeScene::insert(SceneInstance inst) {
  const auto fresh = inst.mask.bits();
  std::vector<SceneInstance> kept;
  kept.reserve(instances_.size() + 1);
  for (auto& prior : instances_) {
    auto bits = prior.mask.bits();
    std::size_t remaining = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (fresh[i]) bits[i] = 0;
      remaining += bits[i];
    }
    if (static_cast<double>(remaining) >= kMinVisibleFraction * static_cast<double>(prior.original_area) &&
        remaining > 0)
      kept.push_back(std::move(prior));
  }
  kept.push_back(std::move(inst));
  instances_ = std::move(kept);
}

void CompositeScene::add_existing(ClassId class_id, BinaryMask scene_mask, std::string source_image_id,
                                  std::string source_segment_id) {
  if (scene_mask.width() != width() || scene_mask.height() != height())
    throw Error(ErrorCode::DimensionMismatch, "instance mask does not match scene extent");
  SceneInstance inst;
  inst.class_id = class_id;
  inst.original_area = scene_mask.area();
  if (inst.original_area == 0) return;
  inst.mask = std::move(scene_mask);
  inst.source_image_id = std::move(source_image_id);
  inst.source_segment_id = std::move(source_segment_id);
  insert(std::move(inst));
}

std::size_t CompositeScene::paste(ClassId class_id, PastedLayer layer, std::string source_image_id,
                                  std::string source_segment_id) {
  BinaryMask scene_mask(width(), height());
  std::size_t area = 0;
  for (int y = 0; y < layer.mask.height(); ++y) {
    for (int x = 0; x < layer.mask.width(); ++x) {
      if (!layer.mask.at(x, y)) continue;
      const int sx = layer.x0 + x;
      const int sy = layer.y0 + y;
      if (sx < 0 || sy < 0 || sx >= width() || sy >= height()) continue;
      scene_mask.set(sx, sy);
      ++area;
    }
  }
  if (area == 0) return 0;
  SceneInstance inst;
  inst.class_id = class_id;
  inst.mask = std::move(scene_mask);
  inst.original_area = area;
  inst.paste_index = next_paste_index_++;
  inst.source_image_id = std::move(source_image_id);
  inst.source_segment_id = std::move(source_segment_id);
  inst.layer = std::move(layer);
  insert(std::move(inst));
  return area;
}

BinaryMask CompositeScene::free_mask() const {
  BinaryMask free(width(), height(), true);
  auto out = free.bits();
  for (const auto& inst : instances_) {
    const auto bits = inst.mask.bits();
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (bits[i]) out[i] = 0;
  }
  return free;
}

// ---- selection ------------------------------------------------------------

std::size_t SelectionDistribution::sample(Rng& rng) const {
  if (cumulative_.empty()) throw Error(ErrorCode::EmptyPool, "sampling from an empty distribution");
  const double u = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return static_cast<std::size_t>(it - cumulative_.begin());
}

SelectionDistribution make_selection_distribution(const std::vector<ClassId>& classes, SelectionMode mode) {
  if (classes.empty()) throw Error(ErrorCode::EmptyPool, "foreground pool is empty");
  SelectionDistribution d;
  d.mode_ = mode;
  const std::size_t n = classes.size();
  d.probabilities_.assign(n, 1.0 / static_cast<double>(n));
  if (mode == SelectionMode::Balanced) {
    std::map<ClassId, std::size_t> counts;
    for (ClassId c : classes) ++counts[c];
    const double per_class = 1.0 / static_cast<double>(counts.size());
    for (std::size_t i = 0; i < n; ++i) d.probabilities_[i] = per_class / static_cast<double>(counts[classes[i]]);
  }
  d.cumulative_.resize(n);
  std::partial_sum(d.probabilities_.begin(), d.probabilities_.end(), d.cumulative_.begin());
  return d;
}

SelectionDistribution make_selection_distribution(const std::vector<ForegroundCutout>& pool, SelectionMode mode) {
  std::vector<ClassId> classes;
  classes.reserve(pool.size());
  for (const auto& c : pool) classes.push_back(c.class_id);
  return make_selection_distribution(classes, mode);
}

// ---- paste strategies -----------------------------------------------------

void PasteParams::validate() const {
  if (n_p < 0) throw Error(ErrorCode::InvalidArgument, "paste.n_p must be >= 0");
  if (!(max_rotation_deg >= 0.0 && max_rotation_deg < 360.0))
    throw Error(ErrorCode::InvalidArgument, "paste.max_rotation must lie in [0, 360)");
  if (!(scale_low > 0.0 && scale_low <= scale_high))
    throw Error(ErrorCode::InvalidArgument, "paste.scale_range must satisfy 0 < low <= high");
  if (!(gaussian_sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "paste.gaussian_sigma must be > 0");
  if (!(min_inscribed_radius >= 0.0)) throw Error(ErrorCode::InvalidArgument, "paste.min_inscribed_radius must be >= 0");
  if (max_rescale_retries < 0) throw Error(ErrorCode::InvalidArgument, "paste.max_rescale_retries must be >= 0");
}

double sample_scale_random(Rng& rng, double low, double high) {
  // uniform() < 1, so the draw never exceeds `high`.
  return rng.uniform(low, high);
}

PastedLayer transform_cutout(const ForegroundCutout& cutout, const Transform2& t) {
  TransformedMask tm = transform_mask_placed(cutout.mask, t, &cutout.pixels);
  PastedLayer layer;
  layer.mask = std::move(tm.mask);
  layer.pixels = std::move(*tm.pixels);
  return layer;
}

namespace {

double sample_rotation(Rng& rng, double max_deg) { return max_deg > 0.0 ? rng.uniform(0.0, max_deg) : 0.0; }

void check_pool(const std::vector<ForegroundCutout>& pool, const SelectionDistribution& dist) {
  if (pool.empty()) throw Error(ErrorCode::EmptyPool, "foreground pool is empty");
  if (dist.probabilities().size() != pool.size())
    throw Error(ErrorCode::DimensionMismatch, "selection distribution does not match the pool");
}

}  // namespace

CompositeScene random_paste_scene(CompositeScene scene, const std::vector<ForegroundCutout>& pool,
                                  const SelectionDistribution& dist, const PasteParams& params, Rng& rng,
                                  PasteLog* log) {
  params.validate();
  if (params.n_p == 0) return scene;
  check_pool(pool, dist);
  for (int k = 0; k < params.n_p; ++k) {
    const ForegroundCutout& cut = pool[dist.sample(rng)];
    double scale = sample_scale_random(rng, params.scale_low, params.scale_high);
    const double rotation = sample_rotation(rng, params.max_rotation_deg);
    PastedLayer layer = transform_cutout(cut, {scale, rotation});
    int retries = 0;
    while (layer.mask.width() > scene.width() || layer.mask.height() > scene.height()) {
      if (retries++ >= params.max_rescale_retries)
        throw Error(ErrorCode::PlacementImpossible, "cutout from " + cut.source_image_id + " does not fit the scene");
      scale *= 0.8;
      layer = transform_cutout(cut, {scale, rotation});
    }
    layer.x0 = static_cast<int>(rng.between(0, scene.width() - layer.mask.width()));
    layer.y0 = static_cast<int>(rng.between(0, scene.height() - layer.mask.height()));
    scene.paste(cut.class_id, std::move(layer), cut.source_image_id, cut.source_segment_id);
    if (log) log->scales.push_back(scale);
  }
  return scene;
}

CompositeScene space_maximize_paste_scene(CompositeScene scene, const std::vector<ForegroundCutout>& pool,
                                          const SelectionDistribution& dist, const PasteParams& params, Rng& rng,
                                          PasteLog* log) {
  params.validate();
  if (params.n_p == 0) return scene;
  check_pool(pool, dist);
  for (int k = 0; k < params.n_p; ++k) {
    const BinaryMask free = scene.free_mask();
    Circle hole{{0, 0}, 0.0};
    if (free.area() > 0) hole = max_inscribed_circle(free);
    if (hole.radius < params.min_inscribed_radius) {
      if (k == 0) throw Error(ErrorCode::NoFreeSpace, "largest free disc is below the minimum radius");
      if (log) {
        log->stopped_early = true;
        log->warning = "stopped after " + std::to_string(k) + " pastes: inscribed radius below minimum";
      }
      break;
    }
    const ForegroundCutout& cut = pool[dist.sample(rng)];
    const double enclosing = std::max(min_enclosing_circle(cut.mask).radius, 0.5);
    double scale = hole.radius / enclosing;
    const double rotation = sample_rotation(rng, params.max_rotation_deg);
    PastedLayer layer = transform_cutout(cut, {scale, rotation});
    Circle fit = min_enclosing_circle(layer.mask);
    // Nearest-neighbor upsampling grows the shape by about scale/2 pixels;
    // shrink until the rasterized enclosing radius is within r1 + 1.
    for (int attempt = 0; attempt < 4 && fit.radius > hole.radius + 1.0; ++attempt) {
      scale *= hole.radius / fit.radius;
      layer = transform_cutout(cut, {scale, rotation});
      fit = min_enclosing_circle(layer.mask);
    }

    // Put the cutout's enclosing-circle center on the inscribed-circle center.
    layer.x0 = static_cast<int>(std::lround(hole.center.x - fit.center.x));
    layer.y0 = static_cast<int>(std::lround(hole.center.y - fit.center.y));
    // Pixels outside the free space or the disc dilated by 1 px are clipped,
    // so the paste never covers an occupied pixel.
    const double reach2 = (hole.radius + 1.0) * (hole.radius + 1.0);
    for (int y = 0; y < layer.mask.height(); ++y)
      for (int x = 0; x < layer.mask.width(); ++x) {
        if (!layer.mask.at(x, y)) continue;
        const int sx = layer.x0 + x, sy = layer.y0 + y;
        const double dx = sx - hole.center.x, dy = sy - hole.center.y;
        if (!free.get(sx, sy) || dx * dx + dy * dy > reach2) layer.mask.set(x, y, false);
      }

    scene.paste(cut.class_id, std::move(layer), cut.source_image_id, cut.source_segment_id);
    if (log) {
      log->inscribed_radii.push_back(hole.radius);
      log->scales.push_back(scale);
    }
  }
  return scene;
}

// ---- blending -------------------------------------------------------------

namespace {

double layer_sample(const PastedLayer& layer, int sx, int sy, int c) {
  const int lx = sx - layer.x0;
  const int ly = sy - layer.y0;
  const RasterImage& px = layer.pixels;
  if (px.channels() == 1) return px.at(lx, ly, 0);
  if (c >= 0) return px.at(lx, ly, c);
  return (px.at(lx, ly, 0) + px.at(lx, ly, 1) + px.at(lx, ly, 2)) / 3.0;
}

double channel_sample(const PastedLayer& layer, int sx, int sy, int c, int out_channels) {
  return layer_sample(layer, sx, sy, out_channels == 1 ? -1 : c);
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

void hard_paste(RasterImage& canvas, const SceneInstance& inst) {
  const PastedLayer& layer = *inst.layer;
  for (int y = 0; y < canvas.height(); ++y)
    for (int x = 0; x < canvas.width(); ++x)
      if (inst.mask.at(x, y))
        for (int c = 0; c < canvas.channels(); ++c)
          canvas.at(x, y, c) = to_byte(channel_sample(layer, x, y, c, canvas.channels()));
}

void gaussian_paste(RasterImage& canvas, const SceneInstance& inst, double sigma) {
  const PastedLayer& layer = *inst.layer;
  const PixelBox box = inst.mask.bounding_box();
  if (box.empty()) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  const int band = static_cast<int>(std::floor(2.0 * sigma));
  const double band2 = 4.0 * sigma * sigma;

  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    ksum += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (auto& k : kernel) k /= ksum;

  // Separable blur of the indicator over the box, clamped at the scene edge.
  const int bx0 = box.x0, by0 = box.y0, bw = box.width(), bh = box.height();
  auto indicator = [&](int x, int y) {
    x = std::clamp(x, 0, canvas.width() - 1);
    y = std::clamp(y, 0, canvas.height() - 1);
    return inst.mask.at(x, y) ? 1.0 : 0.0;
  };
  std::vector<double> tmp(static_cast<std::size_t>(bw) * static_cast<std::size_t>(bh + 2 * radius));
  for (int j = -radius; j < bh + radius; ++j) {
    for (int i = 0; i < bw; ++i) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) acc += kernel[static_cast<std::size_t>(t + radius)] * indicator(bx0 + i + t, by0 + j);
      tmp[static_cast<std::size_t>(j + radius) * bw + i] = acc;
    }
  }
  for (int j = 0; j < bh; ++j) {
    for (int i = 0; i < bw; ++i) {
      const int sx = bx0 + i, sy = by0 + j;
      if (!inst.mask.at(sx, sy)) continue;
      // Band: some in-scene non-mask pixel within 2σ.
      bool in_band = false;
      for (int dy = -band; dy <= band && !in_band; ++dy) {
        for (int dx = -band; dx <= band; ++dx) {
          if (dx * dx + dy * dy > band2) continue;
          const int qx = sx + dx, qy = sy + dy;
          if (qx < 0 || qy < 0 || qx >= canvas.width() || qy >= canvas.height()) continue;
          if (!inst.mask.at(qx, qy)) {
            in_band = true;
            break;
          }
        }
      }
      double alpha = 1.0;
      if (in_band) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t)
          acc += kernel[static_cast<std::size_t>(t + radius)] * tmp[static_cast<std::size_t>(j + t + radius) * bw + i];
        alpha = std::clamp(acc, 0.0, 1.0);
      }
      for (int c = 0; c < canvas.channels(); ++c) {
        const double fg = channel_sample(layer, sx, sy, c, canvas.channels());
        canvas.at(sx, sy, c) = to_byte(alpha * fg + (1.0 - alpha) * canvas.at(sx, sy, c));
      }
    }
  }
}

bool poisson_paste(RasterImage& canvas, const SceneInstance& inst) {
  const PastedLayer& layer = *inst.layer;
  const PixelBox box = inst.mask.bounding_box();
  if (box.empty()) return true;
  // Solve on the instance box grown by one pixel so the fringe is inside the grid.
  const int gx0 = std::max(0, box.x0 - 1), gy0 = std::max(0, box.y0 - 1);
  const int gx1 = std::min(canvas.width() - 1, box.x1 + 1), gy1 = std::min(canvas.height() - 1, box.y1 + 1);
  const int gw = gx1 - gx0 + 1, gh = gy1 - gy0 + 1;
  const std::size_t grid = static_cast<std::size_t>(gw) * static_cast<std::size_t>(gh);

  PoissonProblem prob;
  prob.region = BinaryMask(gw, gh);
  for (int y = 0; y < gh; ++y)
    for (int x = 0; x < gw; ++x) prob.region.set(x, y, inst.mask.at(gx0 + x, gy0 + y));

  auto in_layer = [&](int sx, int sy) { return layer.mask.get(sx - layer.x0, sy - layer.y0); };
  std::vector<std::vector<double>> solved(static_cast<std::size_t>(canvas.channels()));
  for (int c = 0; c < canvas.channels(); ++c) {
    prob.guidance_x.assign(grid, 0.0);
    prob.guidance_y.assign(grid, 0.0);
    prob.boundary.assign(grid, 0.0);
    std::vector<double> guess(grid, 0.0);
    for (int y = 0; y < gh; ++y) {
      for (int x = 0; x < gw; ++x) {
        const int sx = gx0 + x, sy = gy0 + y;
        const std::size_t i = static_cast<std::size_t>(y) * gw + x;
        prob.boundary[i] = canvas.at(sx, sy, c);
        const bool here = in_layer(sx, sy);
        if (here) guess[i] = channel_sample(layer, sx, sy, c, canvas.channels());
        else guess[i] = prob.boundary[i];
        // Guidance only where the cutout defines both ends of an edge.
        if (here && x + 1 < gw && in_layer(sx + 1, sy))
          prob.guidance_x[i] = channel_sample(layer, sx + 1, sy, c, canvas.channels()) -
                               channel_sample(layer, sx, sy, c, canvas.channels());
        if (here && y + 1 < gh && in_layer(sx, sy + 1))
          prob.guidance_y[i] = channel_sample(layer, sx, sy + 1, c, canvas.channels()) -
                               channel_sample(layer, sx, sy, c, canvas.channels());
      }
    }
    prob.initial_guess = std::move(guess);
    try {
      solved[static_cast<std::size_t>(c)] = poisson_solve(prob).values;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonConvergence) throw;
      return false;
    }
  }
  for (int y = 0; y < gh; ++y)
    for (int x = 0; x < gw; ++x)
      if (prob.region.at(x, y))
        for (int c = 0; c < canvas.channels(); ++c)
          canvas.at(gx0 + x, gy0 + y, c) =
              to_byte(solved[static_cast<std::size_t>(c)][static_cast<std::size_t>(y) * gw + x]);
  return true;
}

}  // namespace

RasterImage blend_composite(const CompositeScene& scene, BlendMode mode, const PasteParams& params, BlendStats* stats) {
  RasterImage canvas = scene.background();
  std::vector<const SceneInstance*> pasted;
  for (const auto& inst : scene.instances())
    if (inst.layer) pasted.push_back(&inst);
  std::sort(pasted.begin(), pasted.end(),
            [](const SceneInstance* a, const SceneInstance* b) { return a->paste_index < b->paste_index; });
  for (const SceneInstance* inst : pasted) {
    switch (mode) {
      case BlendMode::None: hard_paste(canvas, *inst); break;
      case BlendMode::Gaussian: gaussian_paste(canvas, *inst, params.gaussian_sigma); break;
      case BlendMode::Poisson:
        if (!poisson_paste(canvas, *inst)) {
          hard_paste(canvas, *inst);
          if (stats) ++stats->poisson_fallbacks;
        }
        break;
    }
  }
  return canvas;
}

}  // namespace empaste
