#include "empaste/fem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "empaste/parallel.hpp"

namespace empaste {

void FemParams::validate() const {
  if (top_n < 1) throw Error(ErrorCode::InvalidArgument, "fem.top_n must be >= 1");
  if (!(keep_percent > 0.0 && keep_percent <= 100.0))
    throw Error(ErrorCode::InvalidArgument, "fem.keep_percent must lie in (0, 100]");
  if (iterations < 0) throw Error(ErrorCode::InvalidArgument, "fem.iterations must be >= 0");
  if (!(cam_threshold > 0.0 && cam_threshold < 1.0))
    throw Error(ErrorCode::InvalidArgument, "fem.cam_threshold must lie in (0, 1)");
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "fem.score_threshold must lie in [0, 1]");
  if (!(covariance_floor > 0.0)) throw Error(ErrorCode::InvalidArgument, "fem.covariance_floor must be > 0");
  if (!(relative_ridge >= 0.0)) throw Error(ErrorCode::InvalidArgument, "fem.relative_ridge must be >= 0");
}

namespace {

Eigen::VectorXd as_vector(const LatentFeature& h) {
  return Eigen::Map<const Eigen::VectorXd>(h.values.data(), static_cast<Eigen::Index>(h.values.size()));
}

void check_uniform(const std::vector<LatentFeature>& features) {
  if (features.size() < 2) throw Error(ErrorCode::TooFewSamples, "need at least 2 features to fit a class model");
  const std::size_t d = features.front().dim();
  if (d == 0) throw Error(ErrorCode::DimensionMismatch, "zero-dimensional features");
  for (const auto& f : features)
    if (f.dim() != d) throw Error(ErrorCode::DimensionMismatch, "features of differing dimension");
}

// Sample moments with divisor N.
void moments(const std::vector<LatentFeature>& features, Eigen::VectorXd& mu, Eigen::MatrixXd& scatter) {
  const auto d = static_cast<Eigen::Index>(features.front().dim());
  const auto n = static_cast<double>(features.size());
  mu = Eigen::VectorXd::Zero(d);
  for (const auto& f : features) mu += as_vector(f);
  mu /= n;
  Eigen::MatrixXd centered(d, static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) centered.col(static_cast<Eigen::Index>(i)) = as_vector(features[i]) - mu;
  scatter = (centered * centered.transpose()) / n;
}

}  // namespace

ClassModel ClassModel::from_moments(ClassId class_id, Eigen::VectorXd mu, Eigen::MatrixXd sigma,
                                    CovarianceMode mode) {
  if (sigma.rows() != mu.size() || sigma.cols() != mu.size())
    throw Error(ErrorCode::DimensionMismatch, "covariance shape does not match mean");
  if (!mu.allFinite() || !sigma.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite class moments");
  ClassModel m;
  m.class_id_ = class_id;
  m.mode_ = mode;
  m.mu_ = std::move(mu);
  if (mode == CovarianceMode::Diagonal) {
    Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(sigma.rows(), sigma.cols());
    diag.diagonal() = sigma.diagonal();
    m.sigma_ = std::move(diag);
    if ((m.sigma_.diagonal().array() <= 0.0).any())
      throw Error(ErrorCode::InvalidArgument, "diagonal covariance must be positive");
    m.inv_sqrt_diag_ = m.sigma_.diagonal().array().rsqrt();
  } else {
    m.sigma_ = std::move(sigma);
    m.factor_.compute(m.sigma_);
    if (m.factor_.info() != Eigen::Success)
      throw Error(ErrorCode::InvalidArgument, "covariance is not positive definite");
  }
  return m;
}

double ClassModel::mahalanobis(const LatentFeature& h) const {
  if (h.dim() != dim()) throw Error(ErrorCode::DimensionMismatch, "feature dimension differs from model");
  const Eigen::VectorXd diff = as_vector(h) - mu_;
  if (mode_ == CovarianceMode::Diagonal) return diff.cwiseProduct(inv_sqrt_diag_).norm();
  // Σ = L Lᵀ, so (h-μ)ᵀ Σ⁻¹ (h-μ) = ||L⁻¹ (h-μ)||².
  const Eigen::VectorXd y = factor_.matrixL().solve(diff);
  return y.norm();
}

double ClassModel::cosine_similarity(const LatentFeature& h) const {
  if (h.dim() != dim()) throw Error(ErrorCode::DimensionMismatch, "feature dimension differs from model");
  const Eigen::VectorXd v = as_vector(h);
  const double denom = v.norm() * mu_.norm();
  if (denom == 0.0) return 0.0;
  return v.dot(mu_) / denom;
}

ClassModel estimate_class_model(const std::vector<LatentFeature>& features, double ridge, CovarianceMode mode) {
  check_uniform(features);
  if (!(ridge > 0.0)) throw Error(ErrorCode::InvalidArgument, "covariance ridge must be > 0");
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  moments(features, mu, sigma);
  sigma.diagonal().array() += ridge;
  ClassModel m = ClassModel::from_moments(0, std::move(mu), std::move(sigma), mode);
  m.ridge_ = ridge;
  return m;
}

ClassModel fit_class_model(const std::vector<LatentFeature>& features, const FemParams& params) {
  check_uniform(features);
  Eigen::VectorXd mu;
  Eigen::MatrixXd scatter;
  moments(features, mu, scatter);
  const double d = static_cast<double>(mu.size());
  const double ridge = std::max(params.covariance_floor, params.relative_ridge * scatter.trace() / d);
  return estimate_class_model(features, ridge, params.covariance);
}

double mahalanobis(const LatentFeature& feature, const ClassModel& model) { return model.mahalanobis(feature); }

bool operator==(const ForegroundSet& a, const ForegroundSet& b) {
  if (a.class_id != b.class_id || a.selections.size() != b.selections.size()) return false;
  auto it = b.selections.begin();
  for (const auto& [image, sel] : a.selections) {
    if (image != it->first || sel.segment_id != it->second.segment_id || sel.mdist != it->second.mdist ||
        sel.score != it->second.score || sel.feature.values != it->second.feature.values)
      return false;
    ++it;
  }
  return true;
}

Point2 anchor_from_cam(const CamHeatmap& heatmap, double threshold) {
  BinaryMask g(heatmap.width, heatmap.height);
  bool any = false;
  for (int y = 0; y < heatmap.height; ++y) {
    for (int x = 0; x < heatmap.width; ++x) {
      if (heatmap.at(x, y) >= threshold) {
        g.set(x, y);
        any = true;
      }
    }
  }
  if (!any) throw Error(ErrorCode::EmptyActivation, "no heatmap value reaches the threshold");
  return mask_centroid(g);
}

namespace {

double score_for(const SegmentRecord& seg, ClassId class_id) {
  auto it = seg.class_scores.find(class_id);
  return it == seg.class_scores.end() ? 0.0 : it->second;
}

}  // namespace

std::optional<SegmentRecord> initial_select(const std::vector<SegmentRecord>& segments, Point2 anchor,
                                            ClassId class_id, const FemParams& params) {
  if (segments.empty()) return std::nullopt;
  // Distances are measured in segment-local coordinates against the shifted anchor.
  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    const Point2 local{anchor.x - s.offset_x, anchor.y - s.offset_y};
    ranked.emplace_back(mean_pixel_distance(s.mask, local), i);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  const std::size_t n = std::min(params.top_n, ranked.size());
  std::size_t best = ranked[0].second;
  double best_score = score_for(segments[best], class_id);
  for (std::size_t r = 1; r < n; ++r) {
    const double sc = score_for(segments[ranked[r].second], class_id);
    if (sc > best_score) {
      best_score = sc;
      best = ranked[r].second;
    }
  }
  if (best_score < params.score_threshold) return std::nullopt;
  return segments[best];
}

ClassModel m_step_refine(const std::vector<LatentFeature>& features, const FemParams& params) {
  ClassModel initial = fit_class_model(features, params);
  if (params.keep_percent >= 100.0) return initial;
  std::vector<std::pair<double, std::size_t>> dists;
  dists.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) dists.emplace_back(initial.mahalanobis(features[i]), i);
  std::stable_sort(dists.begin(), dists.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  const double exact = params.keep_percent * static_cast<double>(features.size()) / 100.0;
  const auto keep = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  if (keep < 2) throw Error(ErrorCode::TooFewSamples, "inlier subset smaller than 2");
  std::vector<LatentFeature> kept;
  kept.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) kept.push_back(features[dists[i].second]);
  return fit_class_model(kept, params);
}

ClassModel m_step_refine(const ForegroundSet& foregrounds, const FemParams& params) {
  std::vector<LatentFeature> features;
  features.reserve(foregrounds.selections.size());
  for (const auto& [image, sel] : foregrounds.selections) features.push_back(sel.feature);
  ClassModel m = m_step_refine(features, params);
  m.set_class_id(foregrounds.class_id);
  return m;
}

namespace {

std::optional<Selection> match_one(const std::vector<SegmentRecord>& candidates, const ClassModel& model,
                                   MatchMetric metric) {
  const SegmentRecord* best = nullptr;
  double best_key = 0.0;
  double best_mdist = 0.0;
  for (const auto& c : candidates) {
    if (!c.feature) throw Error(ErrorCode::InvalidArgument, "candidate " + c.segment_id + " has no feature");
    const double md = model.mahalanobis(*c.feature);
    const double key = metric == MatchMetric::Mahalanobis ? md : -model.cosine_similarity(*c.feature);
    if (!best || key < best_key || (key == best_key && c.segment_id < best->segment_id)) {
      best = &c;
      best_key = key;
      best_mdist = md;
    }
  }
  if (!best) return std::nullopt;
  return Selection{best->segment_id, best_mdist, score_for(*best, model.class_id()), *best->feature};
}

}  // namespace

ForegroundSet e_step_match(const std::map<std::string, std::vector<SegmentRecord>>& per_image_candidates,
                           const ClassModel& model, MatchMetric metric) {
  ForegroundSet out;
  out.class_id = model.class_id();
  for (const auto& [image, candidates] : per_image_candidates) {
    if (auto sel = match_one(candidates, model, metric)) out.selections.emplace(image, std::move(*sel));
  }
  return out;
}

FemResult run_fem(const std::vector<FemImage>& images, ClassId class_id, const FemParams& params, unsigned workers) {
  params.validate();
  const std::size_t n = images.size();

  // Candidates that carry a feature; the others cannot take part in EM.
  std::vector<std::vector<SegmentRecord>> candidates(n);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& s : images[i].segments)
      if (s.feature) candidates[i].push_back(s);

  // Step 1: CAM anchor, nearest top-n, classifier argmax.
  std::vector<std::optional<Selection>> initial(n);
  std::vector<char> no_activation(n, 0);
  parallel_for(n, workers, [&](std::size_t i) {
    const auto& img = images[i];
    double peak = 0.0;
    for (double v : img.heatmap.values) peak = std::max(peak, v);
    if (!(peak > 0.0)) {
      no_activation[i] = 1;
      return;
    }
    Point2 anchor;
    try {
      anchor = anchor_from_cam(img.heatmap, params.cam_threshold * peak);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyActivation) throw;
      no_activation[i] = 1;
      return;
    }
    auto pick = initial_select(candidates[i], anchor, class_id, params);
    if (pick) initial[i] = Selection{pick->segment_id, 0.0, score_for(*pick, class_id), *pick->feature};
  });

  FemResult result;
  result.images_without_activation = static_cast<std::size_t>(std::count(no_activation.begin(), no_activation.end(), 1));
  ForegroundSet current;
  current.class_id = class_id;
  for (std::size_t i = 0; i < n; ++i)
    if (initial[i]) current.selections.emplace(images[i].image_id, std::move(*initial[i]));
  if (current.selections.size() < 2)
    throw Error(ErrorCode::TooFewSamples, "class " + std::to_string(class_id) + ": fewer than 2 initial foregrounds");
  result.history.push_back(current);

  for (int it = 0; it < params.iterations; ++it) {
    ClassModel model = m_step_refine(current, params);
    std::vector<std::optional<Selection>> matched(n);
    parallel_for(n, workers, [&](std::size_t i) {
      auto sel = match_one(candidates[i], model, params.metric);
      // Low-score winners sit out this M-step and are retried next round.
      if (sel && sel->score >= params.score_threshold) matched[i] = std::move(sel);
    });
    ForegroundSet next;
    next.class_id = class_id;
    for (std::size_t i = 0; i < n; ++i)
      if (matched[i]) next.selections.emplace(images[i].image_id, std::move(*matched[i]));
    result.model = std::move(model);
    if (next.selections.size() < 2 && it + 1 < params.iterations)
      throw Error(ErrorCode::TooFewSamples, "class " + std::to_string(class_id) + ": E-step kept fewer than 2 foregrounds");
    current = std::move(next);
    result.history.push_back(current);
  }

  if (!result.model) {
    // No iterations: report distances against a fit of the Step-1 selection.
    ClassModel model = m_step_refine(current, params);
    for (auto& [image, sel] : current.selections) sel.mdist = model.mahalanobis(sel.feature);
    result.model = std::move(model);
    result.history.back() = current;
  }
  result.foregrounds = std::move(current);
  return result;
}

}  // namespace empaste
