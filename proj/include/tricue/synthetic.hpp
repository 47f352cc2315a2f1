#pragma once

// Synthetic feature datasets with known ground truth, written in the same
// on-disk layout the extractor produces.

#include "tricue/feature_io.hpp"

#include <cstdint>
#include <string>

namespace tricue {

struct SyntheticViewSpec {
  std::string tag;
  int grid = 16;
  int dim = 16;
  int input_resolution = 64;
};

struct SyntheticSpec {
  int n_train = 200;
  int n_test_normal = 100;
  int n_test_anomalous = 100;
  int image_size = 64;
  /// Per-dimension noise standard deviation of every token.
  double noise = 1.0;
  /// Distance between the foreground and background means, in noise units.
  double fg_separation = 6.0;
  /// Shift of injected anomaly tokens from the background mean, in noise units.
  double anomaly_shift = 6.0;
  /// Fraction of the image area covered by the injected square.
  double anomaly_area = 0.10;
  double cls_noise = 0.1;
  std::uint64_t seed = 22;

  SyntheticViewSpec obj_view{"vit_s", 14, 12, 56};
  SyntheticViewSpec attr_view{"vit_b", 16, 16, 64};
  std::string cnn_tag = "cnn";
  int cnn_fine_grid = 16;
  int cnn_coarse_grid = 8;
  int cnn_channels = 8;
  int cnn_input_resolution = 64;
};

/// Writes bundles, masks and `dataset.json` under root; returns the manifest.
DatasetManifest generate_synthetic_dataset(const fs::path& root, const SyntheticSpec& spec = {});

}  // namespace tricue
