#pragma once

#include "tricue/types.hpp"

#include <Eigen/Cholesky>

#include <filesystem>

namespace tricue {

/// Multivariate Gaussian reference defining a Mahalanobis metric.
///
/// The covariance is the unbiased 1/(K-1) estimator. Before factorization a
/// diagonal load eps*I is added, with eps = reg_scale * trace(cov) / D (or
/// reg_scale itself when the trace is zero), so distances stay defined when
/// D exceeds the sample count. Distances go through the Cholesky factor of
/// cov + eps*I; no explicit inverse is ever formed.
class GaussianModel {
 public:
  static constexpr double kDefaultRegScale = 1e-3;

  /// samples: K x D, K >= 2, all finite.
  static GaussianModel fit(const Eigen::Ref<const RowMatrixD>& samples,
                           double reg_scale = kDefaultRegScale);
  static GaussianModel fit(const Eigen::Ref<const RowMatrixF>& samples,
                           double reg_scale = kDefaultRegScale);

  [[nodiscard]] double mahalanobis(const Eigen::Ref<const VectorD>& x) const;
  /// Row i of the result equals mahalanobis(X.row(i)) exactly.
  [[nodiscard]] VectorD mahalanobis_batch(const Eigen::Ref<const RowMatrixD>& X) const;

  [[nodiscard]] const VectorD& mean() const { return mean_; }
  [[nodiscard]] const Eigen::MatrixXd& covariance() const { return covariance_; }
  /// Lower-triangular L with L * L^T = covariance + eps * I.
  [[nodiscard]] Eigen::MatrixXd factor() const { return llt_.matrixL(); }
  [[nodiscard]] Index sample_count() const { return sample_count_; }
  [[nodiscard]] double reg_epsilon() const { return reg_epsilon_; }
  [[nodiscard]] Index dim() const { return mean_.size(); }

  /// Directory with mean.npy, cov.npy and meta.txt.
  void save(const std::filesystem::path& dir) const;
  static GaussianModel load(const std::filesystem::path& dir);

 private:
  GaussianModel(VectorD mean, Eigen::MatrixXd covariance, Index sample_count, double reg_epsilon);

  VectorD mean_;
  Eigen::MatrixXd covariance_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Index sample_count_ = 0;
  double reg_epsilon_ = 0.0;
};

}  // namespace tricue
