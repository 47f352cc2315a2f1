#pragma once

#include "tricue/feature_io.hpp"
#include "tricue/types.hpp"

#include <span>
#include <vector>

namespace tricue {

struct RocPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> points;  // one per distinct score, thresholds descending
};

/// Exact ROC-AUC (Mann-Whitney with half credit for ties). Labels are 0/1 and
/// both classes must be present.
RocResult roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Pools every pixel of every map; mask value 1 is positive.
RocResult pixel_roc_auc(std::span<const AnomalyMap> maps, std::span<const BinaryMask> masks);

enum class Connectivity { four, eight };

/// Connected components of the positive pixels; each component lists linear
/// indices (r * width + c) in scan order, components ordered by first pixel.
std::vector<std::vector<int>> connected_components(const BinaryMask& mask,
                                                   Connectivity connectivity = Connectivity::eight);

struct ProPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double pro = 0.0;
};

struct ProResult {
  double pro_auc = 0.0;
  std::vector<ProPoint> curve;  // sorted by fpr, clipped at fpr_limit
  double fpr_limit = 0.3;
};

struct ProOptions {
  double fpr_limit = 0.3;
  int n_thresholds = 200;
  Connectivity connectivity = Connectivity::eight;
};

/// Per-region overlap AUC: thresholds are equally spaced quantiles of the
/// pooled map values (plus one above the maximum); a pixel is predicted
/// anomalous when its value is >= the threshold. The curve is clipped at the
/// FPR limit with linear interpolation, integrated by trapezoid and divided
/// by the limit.
ProResult pro_auc(std::span<const AnomalyMap> maps, std::span<const BinaryMask> masks,
                  const ProOptions& options = {});

/// Trapezoid area of (fpr, pro) points under x <= limit, divided by limit.
/// Points must be sorted by fpr.
double normalized_partial_area(std::span<const ProPoint> curve, double limit,
                               std::vector<ProPoint>* clipped = nullptr);

}  // namespace tricue
