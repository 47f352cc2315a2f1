#pragma once

// Texture branch: coreset memory bank of normal CNN patch features scored by
// exact nearest-neighbour distance.

#include "tricue/feature_io.hpp"
#include "tricue/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tricue {

struct PatchFeatures {
  RowMatrixF features;  // N' x D', row-major over the grid
  GridShape grid;
};

/// 3x3 local averaging per layer (mean over in-bounds neighbours), bilinear
/// resize to the target grid, channel concatenation in layer order. The
/// default target is the layer with the most cells.
PatchFeatures build_patch_features(const MultiScaleFeatures& ms,
                                   std::optional<GridShape> target = std::nullopt);

struct CoresetParams {
  double fraction = 0.01;
  double projection_eps = 0.90;
  std::uint64_t seed = 22;
};

struct MemoryBank {
  RowMatrixF entries;                  // M x D', original feature space
  std::vector<std::int64_t> selected;  // source row of each entry, in selection order
  double fraction = 0.01;
  double projection_eps = 0.90;
  std::uint64_t seed = 22;
  Index source_count = 0;
  int projection_dim = 0;  // 0: selection ran in the original space
  std::vector<std::string> layer_tags;

  [[nodiscard]] Index size() const { return entries.rows(); }
  [[nodiscard]] Index dim() const { return entries.cols(); }

  /// Directory: bank.npy, indices.npy, meta.txt.
  void save(const fs::path& dir) const;
  static MemoryBank load(const fs::path& dir);
};

/// Johnson-Lindenstrauss target dimension 4 ln(n) / (eps^2/2 - eps^3/3).
int jl_min_dim(Index n_samples, double eps);

/// Sparse random projection matrix (k x d) with density 1/sqrt(d).
RowMatrixD sparse_random_projection(int k, Index d, std::uint64_t seed);

/// Seed-determined starting row of the greedy selection.
Index coreset_start_index(Index n_rows, std::uint64_t seed);

/// Greedy k-center (farthest-point) selection of max(1, floor(f * P')) rows.
/// Distances are computed in a sparse JL projection when D' exceeds the
/// projection dimension; the bank stores original-space rows.
MemoryBank coreset_subsample(const Eigen::Ref<const RowMatrixF>& features,
                             const CoresetParams& params = {});

/// Builds per-image patch features and subsamples the pooled set.
MemoryBank build_memory_bank(std::span<const MultiScaleFeatures> train,
                             const CoresetParams& params = {});

struct Neighbor {
  double distance = 0.0;
  Index index = -1;
};

/// Exact Euclidean 1-NN of every test row against the bank.
std::vector<Neighbor> nn_search(const MemoryBank& bank,
                                const Eigen::Ref<const RowMatrixF>& test_features,
                                unsigned threads = 1);
std::vector<double> nn_distances(const MemoryBank& bank,
                                 const Eigen::Ref<const RowMatrixF>& test_features,
                                 unsigned threads = 1);

AnomalyMap localize_pc(const MemoryBank& bank, const Eigen::Ref<const RowMatrixF>& test_features,
                       GridShape grid, int out_h, int out_w, double sigma);

/// Re-weighted maximum patch distance, w * max_i d_i, where
/// w = 1 - exp(|p* - m*|) / sum_{m in N_k(m*)} exp(|p* - m|) and N_k(m*) are the
/// k bank entries closest to m* (m* included). k is clamped to the bank size.
double image_score_pc(const MemoryBank& bank, const Eigen::Ref<const RowMatrixF>& test_features,
                      int k);

/// Same score from precomputed neighbours (avoids a second NN pass).
double image_score_pc(const MemoryBank& bank, const Eigen::Ref<const RowMatrixF>& test_features,
                      std::span<const Neighbor> neighbors, int k);

}  // namespace tricue
