#include "tricue/grid_ops.hpp"

#include "tricue/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace tricue {

RowMatrixD reshape_grid(std::span<const double> cells, GridShape grid) {
  if (grid.height <= 0 || grid.width <= 0) throw PreconditionError("reshape_grid: empty grid");
  if (static_cast<Index>(cells.size()) != grid.cells())
    throw DimensionError("reshape_grid: " + std::to_string(cells.size()) +
                         " cells do not fill a " + std::to_string(grid.height) + "x" +
                         std::to_string(grid.width) + " grid");
  RowMatrixD m(grid.height, grid.width);
  std::copy(cells.begin(), cells.end(), m.data());
  return m;
}

namespace {

struct Tap {
  int lo;
  int hi;
  double frac;  // weight of hi
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const int hi = std::min(lo + 1, in - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, src - lo};
  }
  return taps;
}

// Symmetric reflection: (d c b a | a b c d | d c b a).
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace

RowMatrixD resize_bilinear(const RowMatrixD& src, int out_h, int out_w) {
  if (src.rows() == 0 || src.cols() == 0) throw PreconditionError("resize_bilinear: empty input");
  if (out_h <= 0 || out_w <= 0) throw PreconditionError("resize_bilinear: empty output size");
  if (src.rows() == out_h && src.cols() == out_w) return src;
  const auto ty = bilinear_taps(static_cast<int>(src.rows()), out_h);
  const auto tx = bilinear_taps(static_cast<int>(src.cols()), out_w);
  RowMatrixD out(out_h, out_w);
  for (int r = 0; r < out_h; ++r) {
    const Tap& y = ty[static_cast<std::size_t>(r)];
    for (int c = 0; c < out_w; ++c) {
      const Tap& x = tx[static_cast<std::size_t>(c)];
      const double top = src(y.lo, x.lo) * (1.0 - x.frac) + src(y.lo, x.hi) * x.frac;
      const double bottom = src(y.hi, x.lo) * (1.0 - x.frac) + src(y.hi, x.hi) * x.frac;
      out(r, c) = top * (1.0 - y.frac) + bottom * y.frac;
    }
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) return {1.0};
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

RowMatrixD gaussian_smooth(const RowMatrixD& src, double sigma) {
  if (!(sigma > 0.0) || src.size() == 0) return src;
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int h = static_cast<int>(src.rows());
  const int w = static_cast<int>(src.cols());

  RowMatrixD tmp(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j)
        acc += k[static_cast<std::size_t>(j + radius)] * src(r, reflect_index(c + j, w));
      tmp(r, c) = acc;
    }
  }
  RowMatrixD out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j)
        acc += k[static_cast<std::size_t>(j + radius)] * tmp(reflect_index(r + j, h), c);
      out(r, c) = acc;
    }
  }
  return out;
}

AnomalyMap render_map(std::span<const double> cells, GridShape grid, int out_h, int out_w,
                      double sigma, Provenance provenance) {
  AnomalyMap map;
  map.values = gaussian_smooth(resize_bilinear(reshape_grid(cells, grid), out_h, out_w), sigma);
  map.provenance = provenance;
  map.normalized = false;
  return map;
}

}  // namespace tricue
