#include "tricue/gaussian.hpp"

#include "text_util.hpp"
#include "tricue/errors.hpp"
#include "tricue/feature_io.hpp"
#include "tricue/npy.hpp"

#include <cmath>
#include <string>

namespace tricue {

GaussianModel::GaussianModel(VectorD mean, Eigen::MatrixXd covariance, Index sample_count,
                             double reg_epsilon)
    : mean_(std::move(mean)),
      covariance_(std::move(covariance)),
      sample_count_(sample_count),
      reg_epsilon_(reg_epsilon) {
  Eigen::MatrixXd regularized = covariance_;
  regularized.diagonal().array() += reg_epsilon_;
  llt_.compute(regularized);
  if (llt_.info() != Eigen::Success)
    throw FitError("covariance factorization failed (dimension " + std::to_string(mean_.size()) +
                   ", K = " + std::to_string(sample_count_) +
                   ", regularization eps = " + detail::format_double(reg_epsilon_) + ")");
}

GaussianModel GaussianModel::fit(const Eigen::Ref<const RowMatrixD>& samples, double reg_scale) {
  const Index k = samples.rows();
  const Index d = samples.cols();
  if (k < 2) throw FitError("fit_gaussian needs at least 2 samples, got " + std::to_string(k));
  if (d < 1) throw FitError("fit_gaussian: zero-dimensional samples");
  if (!samples.allFinite()) throw FitError("fit_gaussian: samples contain non-finite values");
  if (!(reg_scale >= 0.0) || !std::isfinite(reg_scale))
    throw PreconditionError("fit_gaussian: reg_scale must be finite and >= 0");

  VectorD mean = samples.colwise().mean().transpose();
  const RowMatrixD centered = samples.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(k - 1);
  cov = 0.5 * (cov + cov.transpose()).eval();

  const double avg_var = cov.trace() / static_cast<double>(d);
  const double eps = avg_var > 0.0 ? reg_scale * avg_var : reg_scale;
  return GaussianModel(std::move(mean), std::move(cov), k, eps);
}

GaussianModel GaussianModel::fit(const Eigen::Ref<const RowMatrixF>& samples, double reg_scale) {
  const RowMatrixD d = samples.cast<double>();
  return fit(d, reg_scale);
}

double GaussianModel::mahalanobis(const Eigen::Ref<const VectorD>& x) const {
  if (x.size() != mean_.size())
    throw DimensionError("mahalanobis: vector of length " + std::to_string(x.size()) +
                         " against a " + std::to_string(mean_.size()) + "-d model");
  VectorD y = x - mean_;
  llt_.matrixL().solveInPlace(y);
  return y.norm();
}

VectorD GaussianModel::mahalanobis_batch(const Eigen::Ref<const RowMatrixD>& X) const {
  if (X.cols() != mean_.size())
    throw DimensionError("mahalanobis_batch: rows of length " + std::to_string(X.cols()) +
                         " against a " + std::to_string(mean_.size()) + "-d model");
  VectorD out(X.rows());
  for (Index i = 0; i < X.rows(); ++i) out(i) = mahalanobis(X.row(i).transpose());
  return out;
}

void GaussianModel::save(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  npy::save<double>(dir / "mean.npy", std::span<const double>(mean_.data(), mean_.size()),
                    {static_cast<std::size_t>(mean_.size())});
  const RowMatrixD cov = covariance_;
  npy::save_matrix(dir / "cov.npy", cov);
  write_key_values(dir / "meta.txt", {{"sample_count", std::to_string(sample_count_)},
                                      {"reg_epsilon", detail::format_double(reg_epsilon_)},
                                      {"dim", std::to_string(mean_.size())}});
}

GaussianModel GaussianModel::load(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.txt";
  const auto kv = read_key_values(meta_path);
  const auto k = detail::parse_number<long long>(require_key(kv, "sample_count", meta_path),
                                                 "sample_count");
  const auto eps = detail::parse_number<double>(require_key(kv, "reg_epsilon", meta_path),
                                                "reg_epsilon");
  auto m = npy::load<double>(dir / "mean.npy");
  if (m.shape.size() != 1) throw FormatError("mean.npy must be 1-D in " + dir.string());
  const RowMatrixD cov = npy::load_matrix_d(dir / "cov.npy");
  const auto d = static_cast<Index>(m.data.size());
  if (cov.rows() != d || cov.cols() != d)
    throw FormatError("cov.npy shape does not match mean.npy in " + dir.string());
  if (k < 2) throw FormatError("sample_count < 2 in " + meta_path.string());
  VectorD mean = Eigen::Map<const VectorD>(m.data.data(), d);
  return GaussianModel(std::move(mean), Eigen::MatrixXd(cov), static_cast<Index>(k), eps);
}

}  // namespace tricue
