#include "tricue/metrics.hpp"

#include "tricue/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace tricue {

RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw DimensionError("roc_auc: scores and labels differ in length");
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw PreconditionError("roc_auc: labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw PreconditionError("roc_auc: non-finite score");
    n_pos += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw PreconditionError("roc_auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // Sweep tie groups from the highest score down. Each tie group contributes
  // pos_in_group * (negatives strictly below + neg_in_group / 2).
  RocResult res;
  res.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  double tp = 0.0;
  double fp = 0.0;
  double area2 = 0.0;  // twice the Mann-Whitney count
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    double gp = 0.0;
    double gn = 0.0;
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]] == 1) {
        gp += 1.0;
      } else {
        gn += 1.0;
      }
      ++i;
    }
    const double neg_below = static_cast<double>(n_neg) - fp - gn;
    area2 += gp * (2.0 * neg_below + gn);
    tp += gp;
    fp += gn;
    res.points.push_back({s, tp / static_cast<double>(n_pos), fp / static_cast<double>(n_neg)});
  }
  res.auc = area2 / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return res;
}

namespace {

void check_pairs(std::span<const AnomalyMap> maps, std::span<const BinaryMask> masks) {
  if (maps.size() != masks.size()) throw DimensionError("pixel metrics: map and mask counts differ");
  if (maps.empty()) throw PreconditionError("pixel metrics: no images");
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].height() != masks[i].height || maps[i].width() != masks[i].width)
      throw DimensionError("pixel metrics: image " + std::to_string(i) + " map is " +
                           std::to_string(maps[i].height()) + "x" + std::to_string(maps[i].width()) +
                           " but mask is " + std::to_string(masks[i].height) + "x" +
                           std::to_string(masks[i].width));
  }
}

}  // namespace

RocResult pixel_roc_auc(std::span<const AnomalyMap> maps, std::span<const BinaryMask> masks) {
  check_pairs(maps, masks);
  std::size_t total = 0;
  for (const auto& m : masks) total += m.values.size();
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(total);
  labels.reserve(total);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto& v = maps[i].values;
    scores.insert(scores.end(), v.data(), v.data() + v.size());
    for (auto b : masks[i].values) labels.push_back(b);
  }
  return roc_auc(scores, labels);
}

std::vector<std::vector<int>> connected_components(const BinaryMask& mask,
                                                   Connectivity connectivity) {
  const int h = mask.height;
  const int w = mask.width;
  std::vector<int> label(mask.values.size(), -1);
  std::vector<std::vector<int>> comps;
  std::vector<int> stack;
  for (int start = 0; start < h * w; ++start) {
    if (!mask.values[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0)
      continue;
    const int id = static_cast<int>(comps.size());
    comps.emplace_back();
    label[static_cast<std::size_t>(start)] = id;
    stack.assign(1, start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      comps.back().push_back(p);
      const int r = p / w;
      const int c = p % w;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (connectivity == Connectivity::four && dr != 0 && dc != 0) continue;
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          const int q = rr * w + cc;
          if (mask.values[static_cast<std::size_t>(q)] && label[static_cast<std::size_t>(q)] < 0) {
            label[static_cast<std::size_t>(q)] = id;
            stack.push_back(q);
          }
        }
      }
    }
    std::sort(comps.back().begin(), comps.back().end());
  }
  return comps;
}

double normalized_partial_area(std::span<const ProPoint> curve, double limit,
                               std::vector<ProPoint>* clipped) {
  if (!(limit > 0.0)) throw PreconditionError("fpr limit must be positive");
  std::vector<ProPoint> pts;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve[i].fpr <= limit) {
      pts.push_back(curve[i]);
      continue;
    }
    if (i > 0 && curve[i - 1].fpr < limit) {
      const auto& a = curve[i - 1];
      const auto& b = curve[i];
      const double t = (limit - a.fpr) / (b.fpr - a.fpr);
      pts.push_back({b.threshold, limit, a.pro + t * (b.pro - a.pro)});
    }
    break;
  }
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].pro + pts[i - 1].pro) / 2.0;
  if (clipped) *clipped = std::move(pts);
  return area / limit;
}

ProResult pro_auc(std::span<const AnomalyMap> maps, std::span<const BinaryMask> masks,
                  const ProOptions& options) {
  check_pairs(maps, masks);
  if (options.n_thresholds < 2) throw PreconditionError("pro_auc: need at least 2 thresholds");
  if (!(options.fpr_limit > 0.0 && options.fpr_limit <= 1.0))
    throw PreconditionError("pro_auc: fpr_limit must lie in (0, 1]");

  // Pool pixels with their global component id (-1 for negatives).
  std::vector<double> values;
  std::vector<int> comp_of;
  std::vector<double> comp_size;
  std::size_t negatives = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto& v = maps[i].values;
    if (!v.allFinite()) throw PreconditionError("pro_auc: non-finite map values");
    const std::size_t base = values.size();
    values.insert(values.end(), v.data(), v.data() + v.size());
    comp_of.resize(values.size(), -1);
    for (const auto& comp : connected_components(masks[i], options.connectivity)) {
      const int id = static_cast<int>(comp_size.size());
      comp_size.push_back(static_cast<double>(comp.size()));
      for (int p : comp) comp_of[base + static_cast<std::size_t>(p)] = id;
    }
    negatives += masks[i].values.size() - masks[i].positives();
  }
  if (comp_size.empty()) throw PreconditionError("pro_auc: ground truth has no anomalous regions");
  if (negatives == 0) throw PreconditionError("pro_auc: ground truth has no negative pixels");

  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });

  // Quantile thresholds, descending, without duplicates.
  const std::size_t n = values.size();
  std::vector<double> thresholds;
  const auto nt = static_cast<std::size_t>(options.n_thresholds);
  for (std::size_t j = nt; j-- > 0;) {
    const std::size_t idx = j * (n - 1) / (nt - 1);  // ascending rank
    const double t = values[order[n - 1 - idx]];
    if (thresholds.empty() || t < thresholds.back()) thresholds.push_back(t);
  }

  const double n_comp = static_cast<double>(comp_size.size());
  std::vector<ProPoint> curve;
  curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  double fp = 0.0;
  std::vector<double> covered(comp_size.size(), 0.0);
  std::size_t k = 0;
  for (double t : thresholds) {
    while (k < n && values[order[k]] >= t) {
      const int c = comp_of[order[k]];
      if (c < 0) {
        fp += 1.0;
      } else {
        covered[static_cast<std::size_t>(c)] += 1.0;
      }
      ++k;
    }
    double overlap = 0.0;
    for (std::size_t c = 0; c < covered.size(); ++c) overlap += covered[c] / comp_size[c];
    curve.push_back({t, fp / static_cast<double>(negatives), overlap / n_comp});
  }

  ProResult res;
  res.fpr_limit = options.fpr_limit;
  res.pro_auc = normalized_partial_area(curve, options.fpr_limit, &res.curve);
  return res;
}

}  // namespace tricue
