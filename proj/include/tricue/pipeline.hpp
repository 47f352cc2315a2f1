#pragma once

// Run orchestration shared by the CLI, the Python module and the acceptance
// suite: fit references, score a test split, evaluate, run the ablation grid.

#include "tricue/feature_io.hpp"
#include "tricue/fusion.hpp"
#include "tricue/gaussian.hpp"
#include "tricue/ma2patch.hpp"
#include "tricue/maclu.hpp"
#include "tricue/metrics.hpp"
#include "tricue/texture.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tricue {

struct Backbones {
  std::string obj = "vit_s";
  std::string attr = "vit_b";
  std::string texture = "cnn";
};

struct RunConfig {
  fs::path dataset;                      // dataset.json
  std::optional<fs::path> dataset_root;  // overrides the manifest directory
  fs::path output_dir;
  std::optional<fs::path> model_dir;     // defaults to output_dir/models
  std::uint64_t seed = 22;
  unsigned threads = 0;
  Backbones backbones;

  double reg_scale = GaussianModel::kDefaultRegScale;

  double tau = 1.14;
  double ratio_epsilon = 1e-8;
  double obj_sigma = 4.0;
  double kmeans_subsample = 1.0;
  int kmeans_max_iters = 300;

  double attr_sigma = 4.0;

  double coreset_fraction = 0.01;
  double projection_eps = 0.90;
  int k = 3;
  double pc_sigma = 4.0;

  FusionConfig fusion;  // out_h/out_w of 0 mean "dataset image resolution"
  int calibration_max_images = 0;  // 0 = all training images

  PixelMode pixel_mode = PixelMode::full;
  ImageMode image_mode = ImageMode::full;

  ProOptions pro;
  bool write_curves = true;

  [[nodiscard]] fs::path models() const { return model_dir ? *model_dir : output_dir / "models"; }
  void validate() const;
};

/// JSON schema documented in README.md. Relative paths are resolved against
/// `base_dir`.
RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir = {});
RunConfig load_run_config(const fs::path& path);
/// Echo of every setting that influences results (output location excluded).
nlohmann::json to_json(const RunConfig& cfg);

/// Applies TRICUE_DATASET_ROOT when set.
DatasetManifest load_run_dataset(const RunConfig& cfg);

struct Models {
  MacluModel maclu;
  Ma2PatchModel ma2patch;
  MemoryBank bank;
  double lambda_obj = 1.0;
  double lambda_map = 1.0;
};

Models load_models(const fs::path& dir);

/// Scores of one image under all three branches plus the requested ablation.
struct ImageResult {
  std::string image_id;
  Split split = Split::test_normal;
  int label = 0;
  double s_obj = 0.0;
  double s_attr = 0.0;
  double s_pc = 0.0;
  double s_map_peak = 0.0;  // max of the full fused map
  double s_fused = 0.0;
  double score = 0.0;       // image score under the configured image mode
  AnomalyMap map;           // map under the configured pixel mode
};

ImageResult score_image(const Models& models, const RunConfig& cfg, const DatasetManifest& ds,
                        const DatasetEntry& entry, Split split);

struct FitSummary {
  Index n_train = 0;
  Index cls_dim = 0;
  Index pooled_dim = 0;
  Index bank_size = 0;
  Index bank_dim = 0;
  Index count_fg = 0;
  Index count_bg = 0;
  double lambda_obj = 1.0;
  double lambda_map = 1.0;
};

/// Fits all three references from train_normal and persists them (plus the
/// calibrated fusion weights) under cfg.models(). Writes fit_report.json and
/// fit_timings.json to the output directory.
FitSummary cmd_fit(const RunConfig& cfg);

/// Scores test_normal then test_anomalous in manifest order. Writes
/// run_report.json and maps/<image_id>.npy under the output directory and
/// returns the report path.
fs::path cmd_score(const RunConfig& cfg);

struct MetricsSummary {
  double image_auc = 0.0;
  double pixel_auc = 0.0;
  double pro_auc = 0.0;
  std::size_t n_images = 0;
  std::size_t n_anomalous = 0;
};

/// Evaluates a run report; writes metrics.json (and CSV curves) next to it.
MetricsSummary cmd_eval(const RunConfig& cfg, const fs::path& run_report);

struct AblationRow {
  PixelMode pixel_mode;
  ImageMode image_mode;
  MetricsSummary metrics;
};

/// Runs the seven pixel and seven image configurations (paired by position),
/// fitting first when no models exist. Writes ablation.json and ablation.txt.
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg);

std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace tricue
