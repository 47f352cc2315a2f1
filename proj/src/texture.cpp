#include "tricue/texture.hpp"

#include "text_util.hpp"
#include "tricue/errors.hpp"
#include "tricue/grid_ops.hpp"
#include "tricue/npy.hpp"
#include "tricue/parallel.hpp"
#include "tricue/random.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

namespace tricue {
namespace {

// Mean over the in-bounds 3x3 neighbourhood of every cell, one channel.
RowMatrixD local_average(const FeatureLayer& layer, int ch) {
  RowMatrixD out(layer.height, layer.width);
  for (int r = 0; r < layer.height; ++r) {
    for (int c = 0; c < layer.width; ++c) {
      double s = 0.0;
      int n = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        const int rr = r + dr;
        if (rr < 0 || rr >= layer.height) continue;
        for (int dc = -1; dc <= 1; ++dc) {
          const int cc = c + dc;
          if (cc < 0 || cc >= layer.width) continue;
          s += layer.at(rr, cc, ch);
          ++n;
        }
      }
      out(r, c) = s / n;
    }
  }
  return out;
}

double squared_distance(const float* a, const float* b, Index d) {
  double s = 0.0;
  for (Index j = 0; j < d; ++j) {
    const double diff = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    s += diff * diff;
  }
  return s;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) {
    if (!out.empty()) out += ',';
    out += s;
  }
  return out;
}

}  // namespace

PatchFeatures build_patch_features(const MultiScaleFeatures& ms, std::optional<GridShape> target) {
  ms.validate();
  GridShape grid;
  if (target) {
    grid = *target;
    if (grid.height <= 0 || grid.width <= 0)
      throw PreconditionError("build_patch_features: empty target grid");
  } else {
    for (const auto& l : ms.layers) {
      if (Index{l.height} * l.width > grid.cells()) grid = {l.height, l.width};
    }
  }
  Index dim = 0;
  for (const auto& l : ms.layers) dim += l.channels;

  PatchFeatures out;
  out.grid = grid;
  out.features.resize(grid.cells(), dim);
  Index offset = 0;
  for (const auto& l : ms.layers) {
    for (int ch = 0; ch < l.channels; ++ch) {
      const RowMatrixD resized = resize_bilinear(local_average(l, ch), grid.height, grid.width);
      for (int r = 0; r < grid.height; ++r)
        for (int c = 0; c < grid.width; ++c)
          out.features(Index{r} * grid.width + c, offset + ch) = static_cast<float>(resized(r, c));
    }
    offset += l.channels;
  }
  return out;
}

int jl_min_dim(Index n_samples, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw PreconditionError("jl_min_dim: eps must lie in (0, 1)");
  if (n_samples < 1) throw PreconditionError("jl_min_dim: n_samples must be positive");
  const double denom = eps * eps / 2.0 - eps * eps * eps / 3.0;
  return static_cast<int>(4.0 * std::log(static_cast<double>(n_samples)) / denom);
}

RowMatrixD sparse_random_projection(int k, Index d, std::uint64_t seed) {
  if (k < 1 || d < 1) throw PreconditionError("sparse_random_projection: empty shape");
  const double density = 1.0 / std::sqrt(static_cast<double>(d));
  const double value = std::sqrt(1.0 / density) / std::sqrt(static_cast<double>(k));
  Rng rng(seed);
  RowMatrixD r = RowMatrixD::Zero(k, d);
  for (int i = 0; i < k; ++i) {
    for (Index j = 0; j < d; ++j) {
      const double u = rng.uniform();
      if (u < density / 2.0) {
        r(i, j) = -value;
      } else if (u < density) {
        r(i, j) = value;
      }
    }
  }
  return r;
}

Index coreset_start_index(Index n_rows, std::uint64_t seed) {
  if (n_rows < 1) throw PreconditionError("coreset_start_index: no rows");
  Rng rng(seed);
  return static_cast<Index>(rng.index(static_cast<std::uint64_t>(n_rows)));
}

MemoryBank coreset_subsample(const Eigen::Ref<const RowMatrixF>& features,
                             const CoresetParams& params) {
  const Index p = features.rows();
  const Index d = features.cols();
  if (!(params.fraction > 0.0 && params.fraction <= 1.0))
    throw PreconditionError("coreset_subsample: fraction must lie in (0, 1], got " +
                            detail::format_double(params.fraction));
  if (p < 1 || d < 1) throw PreconditionError("coreset_subsample: empty feature set");

  MemoryBank bank;
  bank.fraction = params.fraction;
  bank.projection_eps = params.projection_eps;
  bank.seed = params.seed;
  bank.source_count = p;

  const Index target =
      std::max<Index>(1, static_cast<Index>(std::floor(params.fraction * static_cast<double>(p))));
  if (target >= p) {
    bank.entries = features;
    bank.selected.resize(static_cast<std::size_t>(p));
    std::iota(bank.selected.begin(), bank.selected.end(), std::int64_t{0});
    return bank;
  }

  // Selection space: projected when the JL dimension is below D'.
  RowMatrixF space;
  const int k = jl_min_dim(p, params.projection_eps);
  if (k < d) {
    bank.projection_dim = k;
    const RowMatrixD proj = sparse_random_projection(k, d, params.seed);
    space = (features.cast<double>() * proj.transpose()).cast<float>();
  } else {
    space = features;
  }
  const RowMatrixF& sel = space;
  const Index sd = sel.cols();

  std::vector<double> min_d(static_cast<std::size_t>(p));
  Index current = coreset_start_index(p, params.seed);
  bank.selected.reserve(static_cast<std::size_t>(target));
  bank.selected.push_back(current);
  for (Index i = 0; i < p; ++i)
    min_d[static_cast<std::size_t>(i)] = squared_distance(sel.row(i).data(), sel.row(current).data(), sd);

  for (Index t = 1; t < target; ++t) {
    Index next = 0;
    double best = -1.0;
    for (Index i = 0; i < p; ++i) {
      if (min_d[static_cast<std::size_t>(i)] > best) {
        best = min_d[static_cast<std::size_t>(i)];
        next = i;
      }
    }
    current = next;
    bank.selected.push_back(current);
    const float* c = sel.row(current).data();
    for (Index i = 0; i < p; ++i) {
      const double v = squared_distance(sel.row(i).data(), c, sd);
      if (v < min_d[static_cast<std::size_t>(i)]) min_d[static_cast<std::size_t>(i)] = v;
    }
  }

  bank.entries.resize(target, d);
  for (Index t = 0; t < target; ++t)
    bank.entries.row(t) = features.row(bank.selected[static_cast<std::size_t>(t)]);
  return bank;
}

MemoryBank build_memory_bank(std::span<const MultiScaleFeatures> train,
                             const CoresetParams& params) {
  if (train.empty()) throw FitError("build_memory_bank: no training features");
  std::vector<PatchFeatures> per_image;
  per_image.reserve(train.size());
  Index rows = 0;
  for (const auto& ms : train) {
    per_image.push_back(build_patch_features(ms));
    const auto& pf = per_image.back();
    if (pf.features.cols() != per_image.front().features.cols())
      throw DimensionError("build_memory_bank: image '" + ms.image_id +
                           "' yields a different patch feature dimension");
    rows += pf.features.rows();
  }
  RowMatrixF pooled(rows, per_image.front().features.cols());
  Index r = 0;
  for (const auto& pf : per_image) {
    pooled.middleRows(r, pf.features.rows()) = pf.features;
    r += pf.features.rows();
  }
  MemoryBank bank = coreset_subsample(pooled, params);
  for (const auto& l : train.front().layers) bank.layer_tags.push_back(l.tag);
  return bank;
}

std::vector<Neighbor> nn_search(const MemoryBank& bank,
                                const Eigen::Ref<const RowMatrixF>& test_features,
                                unsigned threads) {
  if (bank.size() == 0) throw PreconditionError("nn_search: empty memory bank");
  if (test_features.cols() != bank.dim())
    throw DimensionError("nn_search: test features have dim " +
                         std::to_string(test_features.cols()) + ", bank has " +
                         std::to_string(bank.dim()));
  const Index d = bank.dim();
  const RowMatrixF test = test_features;
  std::vector<Neighbor> out(static_cast<std::size_t>(test.rows()));
  parallel_for(out.size(), threads, [&](std::size_t i) {
    const float* q = test.row(static_cast<Index>(i)).data();
    double best = std::numeric_limits<double>::infinity();
    Index best_idx = 0;
    for (Index m = 0; m < bank.size(); ++m) {
      const float* e = bank.entries.row(m).data();
      double s = 0.0;
      Index j = 0;
      // Partial sums only grow, so abandoning once s >= best keeps the result exact.
      for (; j < d && s < best; ++j) {
        const double diff = static_cast<double>(q[j]) - static_cast<double>(e[j]);
        s += diff * diff;
      }
      if (j == d && s < best) {
        best = s;
        best_idx = m;
      }
    }
    out[i] = {std::sqrt(best), best_idx};
  });
  return out;
}

std::vector<double> nn_distances(const MemoryBank& bank,
                                 const Eigen::Ref<const RowMatrixF>& test_features,
                                 unsigned threads) {
  const auto nn = nn_search(bank, test_features, threads);
  std::vector<double> d(nn.size());
  std::transform(nn.begin(), nn.end(), d.begin(), [](const Neighbor& n) { return n.distance; });
  return d;
}

AnomalyMap localize_pc(const MemoryBank& bank, const Eigen::Ref<const RowMatrixF>& test_features,
                       GridShape grid, int out_h, int out_w, double sigma) {
  if (grid.cells() != test_features.rows())
    throw DimensionError("localize_pc: grid does not match the number of test features");
  const auto d = nn_distances(bank, test_features);
  return render_map(d, grid, out_h, out_w, sigma, Provenance::pc);
}

double image_score_pc(const MemoryBank& bank, const Eigen::Ref<const RowMatrixF>& test_features,
                      std::span<const Neighbor> neighbors, int k) {
  if (bank.size() == 0) throw PreconditionError("image_score_pc: empty memory bank");
  if (k < 1) throw PreconditionError("image_score_pc: k must be >= 1");
  if (neighbors.empty() || static_cast<Index>(neighbors.size()) != test_features.rows())
    throw DimensionError("image_score_pc: neighbour list does not match test features");
  if (k > bank.size()) {
    std::clog << "tricue: image_score_pc: k=" << k << " exceeds bank size " << bank.size()
              << ", clamping\n";
    k = static_cast<int>(bank.size());
  }

  std::size_t star = 0;
  for (std::size_t i = 1; i < neighbors.size(); ++i)
    if (neighbors[i].distance > neighbors[star].distance) star = i;
  const double d_star = neighbors[star].distance;
  const Index m_star = neighbors[star].index;
  const Index d = bank.dim();

  // k entries nearest to m*, with m* itself forced first.
  std::vector<std::pair<double, Index>> around(static_cast<std::size_t>(bank.size()));
  const float* ms = bank.entries.row(m_star).data();
  for (Index m = 0; m < bank.size(); ++m) {
    const double v = m == m_star ? -1.0 : squared_distance(bank.entries.row(m).data(), ms, d);
    around[static_cast<std::size_t>(m)] = {v, m};
  }
  std::partial_sort(around.begin(), around.begin() + k, around.end());

  const float* p = test_features.row(static_cast<Index>(star)).data();
  std::vector<double> dist(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j)
    dist[static_cast<std::size_t>(j)] =
        std::sqrt(squared_distance(p, bank.entries.row(around[static_cast<std::size_t>(j)].second).data(), d));
  // exp(d*) / sum exp(d_j), evaluated in log space.
  const double top = *std::max_element(dist.begin(), dist.end());
  double sum = 0.0;
  for (double v : dist) sum += std::exp(v - top);
  const double w = 1.0 - std::exp(dist[0] - top) / sum;
  return w * d_star;
}

double image_score_pc(const MemoryBank& bank, const Eigen::Ref<const RowMatrixF>& test_features,
                      int k) {
  const auto nn = nn_search(bank, test_features);
  return image_score_pc(bank, test_features, nn, k);
}

void MemoryBank::save(const fs::path& dir) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  npy::save_matrix(dir / "bank.npy", entries);
  npy::save<std::int64_t>(dir / "indices.npy", std::span<const std::int64_t>(selected),
                          {selected.size()});
  write_key_values(dir / "meta.txt",
                   {{"coreset_fraction", detail::format_double(fraction)},
                    {"projection_eps", detail::format_double(projection_eps)},
                    {"seed", std::to_string(seed)},
                    {"source_count", std::to_string(source_count)},
                    {"projection_dim", std::to_string(projection_dim)},
                    {"layer_tags", join(layer_tags)}});
}

MemoryBank MemoryBank::load(const fs::path& dir) {
  const auto meta_path = dir / "meta.txt";
  const auto kv = read_key_values(meta_path);
  MemoryBank bank;
  bank.entries = npy::load_matrix_f(dir / "bank.npy");
  bank.selected = npy::load<std::int64_t>(dir / "indices.npy").data;
  if (static_cast<Index>(bank.selected.size()) != bank.entries.rows())
    throw FormatError("indices.npy length does not match bank.npy in " + dir.string());
  if (bank.entries.rows() < 1) throw FormatError("empty memory bank in " + dir.string());
  if (!bank.entries.allFinite()) throw InvariantError("memory bank contains non-finite values");
  bank.fraction = detail::parse_number<double>(require_key(kv, "coreset_fraction", meta_path), "coreset_fraction");
  bank.projection_eps = detail::parse_number<double>(require_key(kv, "projection_eps", meta_path), "projection_eps");
  bank.seed = detail::parse_number<std::uint64_t>(require_key(kv, "seed", meta_path), "seed");
  bank.source_count = detail::parse_number<long long>(require_key(kv, "source_count", meta_path), "source_count");
  bank.projection_dim = detail::parse_number<int>(require_key(kv, "projection_dim", meta_path), "projection_dim");
  std::stringstream ss(require_key(kv, "layer_tags", meta_path));
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) bank.layer_tags.push_back(tok);
  return bank;
}

}  // namespace tricue
