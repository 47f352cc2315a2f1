#pragma once

// Semantic attribution branch: Gaussian over mean-pooled patch tokens, with
// leave-one-out attribution of the image's Mahalanobis deviation to patches.

#include "tricue/feature_io.hpp"
#include "tricue/gaussian.hpp"
#include "tricue/types.hpp"

#include <span>

namespace tricue {

VectorD mean_pool(const Eigen::Ref<const RowMatrixF>& patches);

struct Ma2PatchModel {
  GaussianModel pooled_gaussian;

  void save(const fs::path& dir) const { pooled_gaussian.save(dir); }
  static Ma2PatchModel load(const fs::path& dir) { return {GaussianModel::load(dir)}; }
};

Ma2PatchModel fit_ma2patch(std::span<const FeatureBundle> train,
                           double reg_scale = GaussianModel::kDefaultRegScale);

double score_image_attr(const Ma2PatchModel& model, const FeatureBundle& bundle);

/// All leave-one-out pooled vectors at once: row i is (N g - p_i) / (N - 1).
RowMatrixD ablated_pooled(const Eigen::Ref<const RowMatrixF>& patches, const VectorD& pooled);

struct AttributionDetail {
  double full_distance = 0.0;
  VectorD ablated_distances;
  VectorD contributions;  // |full - ablated_i|
  VectorD signed_delta;   // full - ablated_i; debug only
};

AttributionDetail attribute_detailed(const Ma2PatchModel& model, const FeatureBundle& bundle);
VectorD attribute(const Ma2PatchModel& model, const FeatureBundle& bundle);

/// Contributions rendered as a map; intentionally not min-max normalized.
AnomalyMap localize_attr(const Ma2PatchModel& model, const FeatureBundle& bundle, int out_h,
                         int out_w, double sigma);

}  // namespace tricue
