#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "empaste/proposals.hpp"

namespace empaste {

enum class CovarianceMode { Full, Diagonal };

// Distance used to re-match segments in the E-step. The M-step inlier filter
// always uses Mahalanobis distance.
enum class MatchMetric { Mahalanobis, Cosine };

struct FemParams {
  std::size_t top_n = 3;
  double keep_percent = 80.0;
  int iterations = 2;
  // Binarization level as a fraction of each heatmap's maximum.
  double cam_threshold = 0.5;
  double score_threshold = 0.1;
  // Ridge added to the sample covariance: max(covariance_floor, relative_ridge * trace / d).
  double covariance_floor = 1e-9;
  double relative_ridge = 1e-3;
  CovarianceMode covariance = CovarianceMode::Full;
  MatchMetric metric = MatchMetric::Mahalanobis;

  void validate() const;
};

// Gaussian model of one class in latent space. Σ is stored with its ridge
// already applied and is held together with its Cholesky factor.
class ClassModel {
 public:
  ClassModel() = default;

  // Factorizes `sigma`; throws InvalidArgument if it is not positive definite.
  static ClassModel from_moments(ClassId class_id, Eigen::VectorXd mu, Eigen::MatrixXd sigma,
                                 CovarianceMode mode = CovarianceMode::Full);

  ClassId class_id() const noexcept { return class_id_; }
  void set_class_id(ClassId id) noexcept { class_id_ = id; }
  const Eigen::VectorXd& mu() const noexcept { return mu_; }
  const Eigen::MatrixXd& sigma() const noexcept { return sigma_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(mu_.size()); }
  CovarianceMode mode() const noexcept { return mode_; }
  double ridge() const noexcept { return ridge_; }

  double mahalanobis(const LatentFeature& h) const;
  double cosine_similarity(const LatentFeature& h) const;

 private:
  friend ClassModel estimate_class_model(const std::vector<LatentFeature>&, double, CovarianceMode);

  ClassId class_id_ = 0;
  Eigen::VectorXd mu_;
  Eigen::MatrixXd sigma_;
  Eigen::LLT<Eigen::MatrixXd> factor_;
  Eigen::VectorXd inv_sqrt_diag_;  // diagonal mode only
  CovarianceMode mode_ = CovarianceMode::Full;
  double ridge_ = 0.0;
};

// Sample mean and covariance (divisor N) plus ridge·I.
ClassModel estimate_class_model(const std::vector<LatentFeature>& features, double ridge,
                                CovarianceMode mode = CovarianceMode::Full);

// Picks the ridge from the data: max(floor, relative_ridge * trace(S) / d).
ClassModel fit_class_model(const std::vector<LatentFeature>& features, const FemParams& params);

double mahalanobis(const LatentFeature& feature, const ClassModel& model);

struct Selection {
  std::string segment_id;
  double mdist = 0.0;
  double score = 0.0;
  LatentFeature feature;
};

struct ForegroundSet {
  ClassId class_id = 0;
  std::map<std::string, Selection> selections;  // image_id -> selection

  friend bool operator==(const ForegroundSet& a, const ForegroundSet& b);
};

Point2 anchor_from_cam(const CamHeatmap& heatmap, double threshold);

// Keeps the top_n segments nearest to the anchor (mean pixel distance, in
// image coordinates), then the one with the highest score for `class_id`.
// Returns nullopt when that score is below params.score_threshold.
std::optional<SegmentRecord> initial_select(const std::vector<SegmentRecord>& segments, Point2 anchor,
                                            ClassId class_id, const FemParams& params);

// Fit on all features, keep ceil(k% * N) with the smallest m-dist, refit.
ClassModel m_step_refine(const std::vector<LatentFeature>& features, const FemParams& params);
ClassModel m_step_refine(const ForegroundSet& foregrounds, const FemParams& params);

ForegroundSet e_step_match(const std::map<std::string, std::vector<SegmentRecord>>& per_image_candidates,
                           const ClassModel& model, MatchMetric metric = MatchMetric::Mahalanobis);

struct FemImage {
  std::string image_id;
  std::vector<SegmentRecord> segments;  // filtered, with features and scores
  CamHeatmap heatmap;
};

struct FemResult {
  ForegroundSet foregrounds;
  std::optional<ClassModel> model;
  // history[0] is the Step-1 selection, history[i] the output of iteration i.
  std::vector<ForegroundSet> history;
  std::size_t images_without_activation = 0;
};

FemResult run_fem(const std::vector<FemImage>& images, ClassId class_id, const FemParams& params,
                  unsigned workers = 1);

}  // namespace empaste
