#include "tricue/maclu.hpp"

#include "text_util.hpp"
#include "tricue/errors.hpp"
#include "tricue/grid_ops.hpp"
#include "tricue/npy.hpp"
#include "tricue/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace tricue {
namespace {

double squared_distance(const Eigen::Ref<const RowMatrixF>& tokens, Index row,
                        const Eigen::Ref<const VectorD>& center) {
  double s = 0.0;
  for (Index j = 0; j < tokens.cols(); ++j) {
    const double diff = static_cast<double>(tokens(row, j)) - center(j);
    s += diff * diff;
  }
  return s;
}

void check_dim(const FeatureBundle& bundle, Index expected, const char* what) {
  if (bundle.dim() != expected)
    throw DimensionError(std::string(what) + ": bundle '" + bundle.image_id + "' has dim " +
                         std::to_string(bundle.dim()) + ", model expects " +
                         std::to_string(expected));
}

}  // namespace

KMeansResult kmeans2(const Eigen::Ref<const RowMatrixF>& tokens, std::uint64_t seed,
                     int max_iters) {
  const Index p = tokens.rows();
  const Index d = tokens.cols();
  if (p < 2) throw PreconditionError("kmeans2 needs at least 2 rows");
  if (max_iters < 1) throw PreconditionError("kmeans2: max_iters must be >= 1");

  Rng rng(seed);
  KMeansResult res;
  res.centers.resize(2, d);

  // k-means++: first center uniform, second proportional to squared distance.
  const Index first = static_cast<Index>(rng.index(static_cast<std::uint64_t>(p)));
  res.centers.row(0) = tokens.row(first).cast<double>();
  std::vector<double> d2(static_cast<std::size_t>(p));
  double total = 0.0;
  for (Index i = 0; i < p; ++i) {
    d2[static_cast<std::size_t>(i)] = squared_distance(tokens, i, res.centers.row(0).transpose());
    total += d2[static_cast<std::size_t>(i)];
  }
  if (!(total > 0.0))
    throw FitError("kmeans2: all rows are identical, no two-cluster structure");
  const double target = rng.uniform() * total;
  Index second = -1;
  double acc = 0.0;
  for (Index i = 0; i < p; ++i) {
    acc += d2[static_cast<std::size_t>(i)];
    if (d2[static_cast<std::size_t>(i)] > 0.0 && acc > target) {
      second = i;
      break;
    }
  }
  if (second < 0) {
    // Round-off pushed target past the accumulated mass; take the last non-zero row.
    for (Index i = p - 1; i >= 0; --i) {
      if (d2[static_cast<std::size_t>(i)] > 0.0) {
        second = i;
        break;
      }
    }
  }
  res.centers.row(1) = tokens.row(second).cast<double>();

  res.assignments.assign(static_cast<std::size_t>(p), -1);
  res.counts.assign(2, 0);
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (Index i = 0; i < p; ++i) {
      const double a = squared_distance(tokens, i, res.centers.row(0).transpose());
      const double b = squared_distance(tokens, i, res.centers.row(1).transpose());
      const int label = b < a ? 1 : 0;
      if (res.assignments[static_cast<std::size_t>(i)] != label) {
        res.assignments[static_cast<std::size_t>(i)] = label;
        changed = true;
      }
    }
    res.iterations = it + 1;

    RowMatrixD sums = RowMatrixD::Zero(2, d);
    res.counts.assign(2, 0);
    for (Index i = 0; i < p; ++i) {
      const int c = res.assignments[static_cast<std::size_t>(i)];
      sums.row(c) += tokens.row(i).cast<double>();
      ++res.counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < 2; ++c) {
      if (res.counts[static_cast<std::size_t>(c)] == 0) {
        // Empty cluster: re-seed at the row farthest from the other center.
        const int other = 1 - c;
        Index far = 0;
        double best = -1.0;
        for (Index i = 0; i < p; ++i) {
          const double v = squared_distance(tokens, i, res.centers.row(other).transpose());
          if (v > best) {
            best = v;
            far = i;
          }
        }
        res.centers.row(c) = tokens.row(far).cast<double>();
        changed = true;
      } else {
        res.centers.row(c) = sums.row(c) / static_cast<double>(res.counts[static_cast<std::size_t>(c)]);
      }
    }
    if (!changed) {
      res.converged = true;
      break;
    }
  }
  if (res.counts[0] == 0 || res.counts[1] == 0)
    throw FitError("kmeans2: a cluster is still empty after " + std::to_string(max_iters) +
                   " iterations");
  return res;
}

void MacluModel::validate() const {
  if (!(tau > 1.0)) throw InvariantError("MACLU tau must exceed 1, got " + detail::format_double(tau));
  if (!(ratio_epsilon > 0.0)) throw InvariantError("MACLU ratio epsilon must be positive");
  if (prototypes.fg.size() != prototypes.bg.size() ||
      prototypes.fg.size() != cls_gaussian.dim())
    throw InvariantError("MACLU prototypes and CLS model disagree in dimension");
  if (prototypes.fg == prototypes.bg) throw InvariantError("MACLU prototypes coincide");
  if (prototypes.count_fg > prototypes.count_bg)
    throw InvariantError("MACLU foreground cluster is larger than background cluster");
}

MacluModel fit_maclu(std::span<const FeatureBundle> train, const MacluParams& params) {
  if (train.empty()) throw FitError("fit_maclu: no training bundles");
  if (!(params.subsample > 0.0 && params.subsample <= 1.0))
    throw PreconditionError("fit_maclu: subsample must be in (0, 1]");
  const Index d = train.front().dim();
  RowMatrixD cls(static_cast<Index>(train.size()), d);
  Index total_tokens = 0;
  for (std::size_t k = 0; k < train.size(); ++k) {
    const auto& b = train[k];
    check_dim(b, d, "fit_maclu");
    if (!b.global_vec)
      throw PreconditionError("fit_maclu: bundle '" + b.image_id + "' has no global (CLS) vector");
    cls.row(static_cast<Index>(k)) = b.global_vec->cast<double>().transpose();
    total_tokens += b.num_patches();
  }
  GaussianModel cls_gaussian = GaussianModel::fit(cls, params.reg_scale);

  RowMatrixF pooled(total_tokens, d);
  Index row = 0;
  for (const auto& b : train) {
    pooled.middleRows(row, b.num_patches()) = b.patches;
    row += b.num_patches();
  }
  if (params.subsample < 1.0) {
    // Deterministic uniform subsample without replacement (partial Fisher-Yates).
    const auto keep = std::max<Index>(2, static_cast<Index>(std::floor(params.subsample * total_tokens)));
    std::vector<Index> order(static_cast<std::size_t>(total_tokens));
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng(params.seed ^ 0x9e3779b97f4a7c15ULL);
    for (Index i = 0; i < keep; ++i) {
      const auto j = i + static_cast<Index>(rng.index(static_cast<std::uint64_t>(total_tokens - i)));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    std::sort(order.begin(), order.begin() + keep);
    RowMatrixF sub(keep, d);
    for (Index i = 0; i < keep; ++i) sub.row(i) = pooled.row(order[static_cast<std::size_t>(i)]);
    pooled = std::move(sub);
  }

  const KMeansResult km = kmeans2(pooled, params.seed, params.max_iters);
  PrototypePair protos;
  if (km.counts[0] < km.counts[1]) {
    protos.fg = km.centers.row(0).transpose();
    protos.bg = km.centers.row(1).transpose();
    protos.count_fg = km.counts[0];
    protos.count_bg = km.counts[1];
  } else {
    protos.fg = km.centers.row(1).transpose();
    protos.bg = km.centers.row(0).transpose();
    protos.count_fg = km.counts[1];
    protos.count_bg = km.counts[0];
  }

  MacluModel model{std::move(cls_gaussian), std::move(protos), params.tau, params.ratio_epsilon,
                   params.seed};
  model.validate();
  return model;
}

double score_image_obj(const MacluModel& model, const FeatureBundle& bundle) {
  if (!bundle.global_vec)
    throw PreconditionError("score_image_obj: bundle '" + bundle.image_id + "' has no CLS vector");
  if (bundle.global_vec->size() != model.cls_gaussian.dim())
    throw DimensionError("score_image_obj: CLS length " + std::to_string(bundle.global_vec->size()) +
                         " against a " + std::to_string(model.cls_gaussian.dim()) + "-d model");
  return model.cls_gaussian.mahalanobis(bundle.global_vec->cast<double>());
}

ObjPatchScores obj_patch_scores(const MacluModel& model, const FeatureBundle& bundle) {
  check_dim(bundle, model.prototypes.fg.size(), "localize_obj");
  const Index n = bundle.num_patches();
  ObjPatchScores s;
  s.ratio.resize(static_cast<std::size_t>(n));
  s.background.resize(static_cast<std::size_t>(n));
  double bg_sum = 0.0;
  double all_sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double dfg = std::sqrt(squared_distance(bundle.patches, i, model.prototypes.fg));
    const double dbg = std::sqrt(squared_distance(bundle.patches, i, model.prototypes.bg));
    const double r = dbg / (dfg + model.ratio_epsilon);
    s.ratio[static_cast<std::size_t>(i)] = r;
    all_sum += r;
    const bool is_bg = dbg <= dfg;
    s.background[static_cast<std::size_t>(i)] = is_bg;
    if (is_bg) {
      bg_sum += r;
      ++s.background_count;
    }
  }
  s.replacement_value = s.background_count > 0 ? bg_sum / static_cast<double>(s.background_count)
                                               : all_sum / static_cast<double>(n);
  s.replaced = s.ratio;
  for (auto& r : s.replaced) {
    if (r > model.tau) r = s.replacement_value;
  }
  return s;
}

AnomalyMap localize_obj(const MacluModel& model, const FeatureBundle& bundle, int out_h,
                        int out_w, double sigma) {
  const auto s = obj_patch_scores(model, bundle);
  return render_map(s.replaced, bundle.grid, out_h, out_w, sigma, Provenance::obj);
}

void MacluModel::save(const fs::path& dir) const {
  validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  cls_gaussian.save(dir / "cls");
  RowMatrixD protos(2, prototypes.fg.size());
  protos.row(0) = prototypes.fg.transpose();
  protos.row(1) = prototypes.bg.transpose();
  npy::save_matrix(dir / "prototypes.npy", protos);
  write_key_values(dir / "meta.txt", {{"tau", detail::format_double(tau)},
                                      {"ratio_epsilon", detail::format_double(ratio_epsilon)},
                                      {"count_fg", std::to_string(prototypes.count_fg)},
                                      {"count_bg", std::to_string(prototypes.count_bg)},
                                      {"seed", std::to_string(seed)}});
}

MacluModel MacluModel::load(const fs::path& dir) {
  const auto meta_path = dir / "meta.txt";
  const auto kv = read_key_values(meta_path);
  auto cls = GaussianModel::load(dir / "cls");
  const RowMatrixD protos = npy::load_matrix_d(dir / "prototypes.npy");
  if (protos.rows() != 2) throw FormatError("prototypes.npy must have 2 rows in " + dir.string());
  PrototypePair p;
  p.fg = protos.row(0).transpose();
  p.bg = protos.row(1).transpose();
  p.count_fg = detail::parse_number<long long>(require_key(kv, "count_fg", meta_path), "count_fg");
  p.count_bg = detail::parse_number<long long>(require_key(kv, "count_bg", meta_path), "count_bg");
  MacluModel m{std::move(cls), std::move(p),
               detail::parse_number<double>(require_key(kv, "tau", meta_path), "tau"),
               detail::parse_number<double>(require_key(kv, "ratio_epsilon", meta_path), "ratio_epsilon"),
               detail::parse_number<std::uint64_t>(require_key(kv, "seed", meta_path), "seed")};
  m.validate();
  return m;
}

}  // namespace tricue
