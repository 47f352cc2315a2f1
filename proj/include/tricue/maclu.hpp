#pragma once

// Object-level branch: CLS-token Gaussian plus foreground/background token
// prototypes learned from normal images.

#include "tricue/feature_io.hpp"
#include "tricue/gaussian.hpp"
#include "tricue/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace tricue {

struct KMeansResult {
  RowMatrixD centers;             // 2 x D
  std::vector<int> assignments;   // one of {0, 1} per row
  std::vector<Index> counts;      // rows per cluster
  int iterations = 0;
  bool converged = false;
};

/// Two-cluster Lloyd's algorithm with k-means++ seeding. Iterates until the
/// assignment is a fixpoint or max_iters is reached; each returned center is
/// the mean of the rows assigned to it. Distance ties go to cluster 0.
KMeansResult kmeans2(const Eigen::Ref<const RowMatrixF>& tokens, std::uint64_t seed,
                     int max_iters = 300);

struct PrototypePair {
  VectorD fg;
  VectorD bg;
  Index count_fg = 0;
  Index count_bg = 0;
};

struct MacluParams {
  double tau = 1.14;
  double ratio_epsilon = 1e-8;
  double reg_scale = GaussianModel::kDefaultRegScale;
  /// Fraction of pooled training tokens clustered (1.0 = all of them).
  double subsample = 1.0;
  int max_iters = 300;
  std::uint64_t seed = 22;
};

struct MacluModel {
  GaussianModel cls_gaussian;
  PrototypePair prototypes;
  double tau = 1.14;
  double ratio_epsilon = 1e-8;
  std::uint64_t seed = 22;

  void validate() const;
  /// Directory: cls/ (Gaussian), prototypes.npy (row 0 = fg), meta.txt.
  void save(const fs::path& dir) const;
  static MacluModel load(const fs::path& dir);
};

MacluModel fit_maclu(std::span<const FeatureBundle> train, const MacluParams& params = {});

/// Mahalanobis distance of the bundle's CLS vector.
double score_image_obj(const MacluModel& model, const FeatureBundle& bundle);

struct ObjPatchScores {
  std::vector<double> ratio;     // r_i = d_bg / (d_fg + eps)
  std::vector<double> replaced;  // after mean replacement above tau
  std::vector<bool> background;  // nearest prototype is bg
  double replacement_value = 0.0;
  Index background_count = 0;
};

/// Foreground-biased ratios and mean replacement. The replacement value is the
/// mean ratio over this image's background-classified patches, or the mean
/// over all patches when none classify as background.
ObjPatchScores obj_patch_scores(const MacluModel& model, const FeatureBundle& bundle);

AnomalyMap localize_obj(const MacluModel& model, const FeatureBundle& bundle, int out_h,
                        int out_w, double sigma);

}  // namespace tricue
