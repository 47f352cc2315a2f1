#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string_view>

namespace tricue {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorF = Eigen::VectorXf;
using VectorD = Eigen::VectorXd;
using Index = Eigen::Index;

struct GridShape {
  int height = 0;
  int width = 0;

  [[nodiscard]] Index cells() const { return Index{height} * Index{width}; }
  friend bool operator==(const GridShape&, const GridShape&) = default;
};

enum class Provenance { obj, attr, pc, fused };

std::string_view to_string(Provenance p);

/// Single-channel score map. Higher values are more anomalous.
struct AnomalyMap {
  RowMatrixD values;
  Provenance provenance = Provenance::fused;
  bool normalized = false;

  [[nodiscard]] int height() const { return static_cast<int>(values.rows()); }
  [[nodiscard]] int width() const { return static_cast<int>(values.cols()); }
  [[nodiscard]] double max() const { return values.maxCoeff(); }

  /// Throws InvariantError on non-finite values or an out-of-range normalized map.
  void validate() const;
};

}  // namespace tricue
