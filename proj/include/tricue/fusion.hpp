#pragma once

#include "tricue/types.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace tricue {

enum class CalibrationMode { fixed, train_scale };

struct FusionConfig {
  double lambda_obj = 1.0;
  double lambda_map = 1.0;
  int out_h = 0;
  int out_w = 0;
  double norm_epsilon = 1e-8;
  double final_sigma = 4.0;
  CalibrationMode calibration = CalibrationMode::train_scale;

  void validate() const;
};

/// Which branch maps enter the Hadamard product.
enum class PixelMode { obj, attr, pc, obj_attr, obj_pc, attr_pc, full };
/// Which scalar cues enter the image score.
enum class ImageMode { obj, pc, map, obj_pc, obj_map, pc_map, full };

inline constexpr PixelMode kAllPixelModes[] = {PixelMode::obj,     PixelMode::attr,
                                               PixelMode::pc,      PixelMode::obj_attr,
                                               PixelMode::obj_pc,  PixelMode::attr_pc,
                                               PixelMode::full};
inline constexpr ImageMode kAllImageModes[] = {ImageMode::obj,    ImageMode::pc,
                                               ImageMode::map,    ImageMode::obj_pc,
                                               ImageMode::obj_map, ImageMode::pc_map,
                                               ImageMode::full};

std::string_view to_string(PixelMode m);
std::string_view to_string(ImageMode m);
std::string_view to_string(CalibrationMode m);
PixelMode parse_pixel_mode(std::string_view s);
ImageMode parse_image_mode(std::string_view s);
CalibrationMode parse_calibration_mode(std::string_view s);

bool uses_obj(PixelMode m);
bool uses_attr(PixelMode m);
bool uses_pc(PixelMode m);
bool uses_map(ImageMode m);

/// (M - min) / (max - min + eps). A constant map becomes all zeros.
AnomalyMap minmax_normalize(const AnomalyMap& map, double eps = 1e-8);

/// Consensus gating: normalize the participating obj/pc maps, keep attr raw,
/// resize all to (out_h, out_w), multiply elementwise, smooth with final_sigma.
/// Maps not named by `mode` may be null.
AnomalyMap fuse_maps(PixelMode mode, const AnomalyMap* m_obj, const AnomalyMap* m_attr,
                     const AnomalyMap* m_pc, const FusionConfig& cfg);

AnomalyMap fuse_pixel(const AnomalyMap& m_obj, const AnomalyMap& m_attr, const AnomalyMap& m_pc,
                      const FusionConfig& cfg);

struct FusedResult {
  AnomalyMap map;
  double s_obj = 0.0;
  double s_pc = 0.0;
  double s_map_peak = 0.0;
  double s_base = 0.0;
  double s_fused = 0.0;
};

/// s_base = s_pc + lambda_obj * s_obj; s_fused = s_base + lambda_map * max(map).
FusedResult fuse_image(double s_pc, double s_obj, const AnomalyMap& fused, const FusionConfig& cfg);

/// Image score of an ablation configuration; pairwise modes use the same
/// weights as the full formula restricted to the participating cues.
double image_mode_score(ImageMode mode, double s_obj, double s_pc, double map_peak,
                        const FusionConfig& cfg);

/// train_scale: lambda_obj = median(s_pc) / median(s_obj) and
/// lambda_map = median(s_base) / median(peak), each falling back to 1.0 on a
/// zero denominator. fixed: returns the configured pair.
std::pair<double, double> calibrate_lambdas(std::span<const double> train_scores_pc,
                                            std::span<const double> train_scores_obj,
                                            std::span<const double> train_peaks,
                                            const FusionConfig& cfg);

double median(std::span<const double> values);

}  // namespace tricue
