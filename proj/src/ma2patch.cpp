#include "tricue/ma2patch.hpp"

#include "tricue/errors.hpp"
#include "tricue/grid_ops.hpp"

#include <string>
#include <vector>

namespace tricue {

VectorD mean_pool(const Eigen::Ref<const RowMatrixF>& patches) {
  if (patches.rows() == 0) throw PreconditionError("mean_pool: no patches");
  return patches.cast<double>().colwise().sum().transpose() / static_cast<double>(patches.rows());
}

Ma2PatchModel fit_ma2patch(std::span<const FeatureBundle> train, double reg_scale) {
  if (train.empty()) throw FitError("fit_ma2patch: no training bundles");
  const Index d = train.front().dim();
  RowMatrixD pooled(static_cast<Index>(train.size()), d);
  for (std::size_t k = 0; k < train.size(); ++k) {
    if (train[k].dim() != d)
      throw DimensionError("fit_ma2patch: bundle '" + train[k].image_id + "' has dim " +
                           std::to_string(train[k].dim()) + ", expected " + std::to_string(d));
    pooled.row(static_cast<Index>(k)) = mean_pool(train[k].patches).transpose();
  }
  return {GaussianModel::fit(pooled, reg_scale)};
}

double score_image_attr(const Ma2PatchModel& model, const FeatureBundle& bundle) {
  return model.pooled_gaussian.mahalanobis(mean_pool(bundle.patches));
}

RowMatrixD ablated_pooled(const Eigen::Ref<const RowMatrixF>& patches, const VectorD& pooled) {
  const Index n = patches.rows();
  if (n < 2) throw PreconditionError("leave-one-out ablation needs at least 2 patches");
  if (pooled.size() != patches.cols()) throw DimensionError("ablated_pooled: pooled vector length");
  const RowMatrixD ones_g = RowMatrixD::Ones(n, 1) * pooled.transpose();
  return (static_cast<double>(n) * ones_g - patches.cast<double>()) / static_cast<double>(n - 1);
}

AttributionDetail attribute_detailed(const Ma2PatchModel& model, const FeatureBundle& bundle) {
  if (bundle.dim() != model.pooled_gaussian.dim())
    throw DimensionError("attribute: bundle '" + bundle.image_id + "' has dim " +
                         std::to_string(bundle.dim()) + ", model expects " +
                         std::to_string(model.pooled_gaussian.dim()));
  const VectorD g = mean_pool(bundle.patches);
  const RowMatrixD ablated = ablated_pooled(bundle.patches, g);

  AttributionDetail out;
  out.full_distance = model.pooled_gaussian.mahalanobis(g);
  out.ablated_distances = model.pooled_gaussian.mahalanobis_batch(ablated);
  out.signed_delta = (-out.ablated_distances).array() + out.full_distance;
  out.contributions = out.signed_delta.cwiseAbs();
  return out;
}

VectorD attribute(const Ma2PatchModel& model, const FeatureBundle& bundle) {
  return attribute_detailed(model, bundle).contributions;
}

AnomalyMap localize_attr(const Ma2PatchModel& model, const FeatureBundle& bundle, int out_h,
                         int out_w, double sigma) {
  const VectorD c = attribute(model, bundle);
  return render_map(std::span<const double>(c.data(), static_cast<std::size_t>(c.size())),
                    bundle.grid, out_h, out_w, sigma, Provenance::attr);
}

}  // namespace tricue
