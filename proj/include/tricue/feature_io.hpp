#pragma once

#include "tricue/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tricue {

namespace fs = std::filesystem;

/// Per-image ViT record: optional global (CLS) vector plus an N x D patch-token
/// matrix whose row i is grid cell i in row-major order.
struct FeatureBundle {
  std::string image_id;
  std::optional<VectorF> global_vec;
  RowMatrixF patches;
  GridShape grid;
  std::string backbone_tag;
  int input_resolution = 0;

  [[nodiscard]] Index num_patches() const { return patches.rows(); }
  [[nodiscard]] Index dim() const { return patches.cols(); }

  void validate() const;
};

void save_bundle(const FeatureBundle& bundle, const fs::path& dir);
FeatureBundle load_bundle(const fs::path& dir);

/// One tapped CNN stage, stored height x width x channels, row-major.
struct FeatureLayer {
  std::string tag;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> values;

  [[nodiscard]] float at(int r, int c, int ch) const {
    return values[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
};

/// Per-image multi-layer CNN record consumed by the texture branch.
struct MultiScaleFeatures {
  std::string image_id;
  std::string backbone_tag;
  int input_resolution = 0;
  std::vector<FeatureLayer> layers;

  void validate() const;
};

void save_multiscale(const MultiScaleFeatures& features, const fs::path& dir);
MultiScaleFeatures load_multiscale(const fs::path& dir);

/// Binary ground-truth mask; 1 marks a foreign-object pixel.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), values(static_cast<std::size_t>(h) * w, 0) {}

  [[nodiscard]] std::uint8_t at(int r, int c) const {
    return values[static_cast<std::size_t>(r) * width + c];
  }
  std::uint8_t& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
  [[nodiscard]] std::size_t positives() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Loads an 8-bit PNG; pixels > 0 become 1. A native size different from the
/// target is nearest-neighbour resized.
BinaryMask load_mask(const fs::path& path, int target_h, int target_w);
/// Writes a mask as an 8-bit grayscale PNG with values {0, 255}.
void save_mask(const BinaryMask& mask, const fs::path& path);
BinaryMask resize_nearest(const BinaryMask& mask, int target_h, int target_w);

struct DatasetEntry {
  std::string image_id;
  std::map<std::string, fs::path> bundles;  // backbone_tag -> path relative to root
  std::optional<fs::path> mask;             // relative to root
};

enum class Split { train_normal, test_normal, test_anomalous };

std::string_view to_string(Split split);

struct DatasetManifest {
  fs::path root;
  int image_height = 0;
  int image_width = 0;
  std::vector<DatasetEntry> train_normal;
  std::vector<DatasetEntry> test_normal;
  std::vector<DatasetEntry> test_anomalous;

  [[nodiscard]] const std::vector<DatasetEntry>& split(Split s) const;
  [[nodiscard]] fs::path resolve(const fs::path& relative) const { return root / relative; }
  /// Absolute bundle path for a backbone tag; throws PreconditionError if absent.
  [[nodiscard]] fs::path bundle_path(const DatasetEntry& entry, const std::string& tag) const;

  void validate() const;
};

/// Loads `dataset.json`. Relative paths resolve against the manifest's
/// directory, or against `root_override` when given.
DatasetManifest load_dataset(const fs::path& manifest_path,
                             const std::optional<fs::path>& root_override = std::nullopt);
void save_dataset(const DatasetManifest& manifest, const fs::path& manifest_path);

// key=value text records used by every persisted artifact.
using KeyValues = std::vector<std::pair<std::string, std::string>>;
void write_key_values(const fs::path& path, const KeyValues& kv);
std::map<std::string, std::string> read_key_values(const fs::path& path);
const std::string& require_key(const std::map<std::string, std::string>& kv,
                               const std::string& key, const fs::path& source);

}  // namespace tricue
