#pragma once

#include "tricue/types.hpp"

#include <span>

namespace tricue {

/// Reshapes per-cell scores (row-major) into a grid.
RowMatrixD reshape_grid(std::span<const double> cells, GridShape grid);

/// Bilinear resize with half-pixel centres (align_corners = false). Used for
/// both up- and down-sampling.
RowMatrixD resize_bilinear(const RowMatrixD& src, int out_h, int out_w);

/// Separable Gaussian filter, kernel truncated at 4 sigma, symmetric
/// ("reflect") borders. sigma <= 0 returns the input unchanged.
RowMatrixD gaussian_smooth(const RowMatrixD& src, double sigma);

/// Normalized 1-D Gaussian kernel of radius ceil(4 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Grid -> bilinear upsample -> Gaussian smoothing: the map generator shared
/// by every branch.
AnomalyMap render_map(std::span<const double> cells, GridShape grid, int out_h, int out_w,
                      double sigma, Provenance provenance);

}  // namespace tricue
