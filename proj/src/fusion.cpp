#include "tricue/fusion.hpp"

#include "tricue/errors.hpp"
#include "tricue/grid_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace tricue {

void FusionConfig::validate() const {
  if (out_h <= 0 || out_w <= 0) throw ConfigError("fusion output size must be positive");
  if (!(norm_epsilon > 0.0)) throw ConfigError("fusion norm_epsilon must be positive");
  if (!(lambda_obj >= 0.0) || !(lambda_map >= 0.0))
    throw ConfigError("fusion weights must be non-negative");
  if (!(final_sigma >= 0.0)) throw ConfigError("fusion final_sigma must be non-negative");
}

std::string_view to_string(PixelMode m) {
  switch (m) {
    case PixelMode::obj: return "obj";
    case PixelMode::attr: return "attr";
    case PixelMode::pc: return "pc";
    case PixelMode::obj_attr: return "obj*attr";
    case PixelMode::obj_pc: return "obj*pc";
    case PixelMode::attr_pc: return "attr*pc";
    case PixelMode::full: return "full";
  }
  return "unknown";
}

std::string_view to_string(ImageMode m) {
  switch (m) {
    case ImageMode::obj: return "obj";
    case ImageMode::pc: return "pc";
    case ImageMode::map: return "map";
    case ImageMode::obj_pc: return "obj+pc";
    case ImageMode::obj_map: return "obj+map";
    case ImageMode::pc_map: return "pc+map";
    case ImageMode::full: return "full";
  }
  return "unknown";
}

std::string_view to_string(CalibrationMode m) {
  return m == CalibrationMode::fixed ? "fixed" : "train_scale";
}

PixelMode parse_pixel_mode(std::string_view s) {
  for (PixelMode m : kAllPixelModes)
    if (to_string(m) == s) return m;
  throw ConfigError("unknown pixel mode '" + std::string(s) +
                    "' (expected obj, attr, pc, obj*attr, obj*pc, attr*pc, full)");
}

ImageMode parse_image_mode(std::string_view s) {
  for (ImageMode m : kAllImageModes)
    if (to_string(m) == s) return m;
  throw ConfigError("unknown image mode '" + std::string(s) +
                    "' (expected obj, pc, map, obj+pc, obj+map, pc+map, full)");
}

CalibrationMode parse_calibration_mode(std::string_view s) {
  if (s == "fixed") return CalibrationMode::fixed;
  if (s == "train_scale") return CalibrationMode::train_scale;
  throw ConfigError("unknown calibration mode '" + std::string(s) + "'");
}

bool uses_obj(PixelMode m) {
  return m == PixelMode::obj || m == PixelMode::obj_attr || m == PixelMode::obj_pc ||
         m == PixelMode::full;
}
bool uses_attr(PixelMode m) {
  return m == PixelMode::attr || m == PixelMode::obj_attr || m == PixelMode::attr_pc ||
         m == PixelMode::full;
}
bool uses_pc(PixelMode m) {
  return m == PixelMode::pc || m == PixelMode::obj_pc || m == PixelMode::attr_pc ||
         m == PixelMode::full;
}
bool uses_map(ImageMode m) {
  return m == ImageMode::map || m == ImageMode::obj_map || m == ImageMode::pc_map ||
         m == ImageMode::full;
}

AnomalyMap minmax_normalize(const AnomalyMap& map, double eps) {
  if (map.values.size() == 0) throw PreconditionError("minmax_normalize: empty map");
  if (!map.values.allFinite()) throw InvariantError("minmax_normalize: non-finite map values");
  const double lo = map.values.minCoeff();
  const double hi = map.values.maxCoeff();
  AnomalyMap out;
  out.values = (map.values.array() - lo) / (hi - lo + eps);
  out.provenance = map.provenance;
  out.normalized = true;
  return out;
}

AnomalyMap fuse_maps(PixelMode mode, const AnomalyMap* m_obj, const AnomalyMap* m_attr,
                     const AnomalyMap* m_pc, const FusionConfig& cfg) {
  if (cfg.out_h <= 0 || cfg.out_w <= 0) throw PreconditionError("fuse: output size not set");
  std::vector<RowMatrixD> factors;
  auto take = [&](const AnomalyMap* m, bool normalize, const char* name) {
    if (m == nullptr || m->values.size() == 0)
      throw PreconditionError(std::string("fuse: missing or empty ") + name + " map");
    const AnomalyMap& src = *m;
    RowMatrixD v = normalize ? minmax_normalize(src, cfg.norm_epsilon).values : src.values;
    factors.push_back(resize_bilinear(v, cfg.out_h, cfg.out_w));
  };
  if (uses_obj(mode)) take(m_obj, true, "obj");
  if (uses_pc(mode)) take(m_pc, true, "pc");
  if (uses_attr(mode)) take(m_attr, false, "attr");

  RowMatrixD product = factors.front();
  for (std::size_t i = 1; i < factors.size(); ++i)
    product = product.cwiseProduct(factors[i]);

  AnomalyMap out;
  out.values = gaussian_smooth(product, cfg.final_sigma);
  out.normalized = false;
  if (mode == PixelMode::obj) {
    out.provenance = Provenance::obj;
  } else if (mode == PixelMode::attr) {
    out.provenance = Provenance::attr;
  } else if (mode == PixelMode::pc) {
    out.provenance = Provenance::pc;
  } else {
    out.provenance = Provenance::fused;
  }
  return out;
}

AnomalyMap fuse_pixel(const AnomalyMap& m_obj, const AnomalyMap& m_attr, const AnomalyMap& m_pc,
                      const FusionConfig& cfg) {
  return fuse_maps(PixelMode::full, &m_obj, &m_attr, &m_pc, cfg);
}

FusedResult fuse_image(double s_pc, double s_obj, const AnomalyMap& fused,
                       const FusionConfig& cfg) {
  if (fused.values.size() == 0) throw PreconditionError("fuse_image: empty fused map");
  FusedResult r;
  r.map = fused;
  r.s_obj = s_obj;
  r.s_pc = s_pc;
  r.s_map_peak = fused.values.maxCoeff();
  r.s_base = s_pc + cfg.lambda_obj * s_obj;
  r.s_fused = r.s_base + cfg.lambda_map * r.s_map_peak;
  return r;
}

double image_mode_score(ImageMode mode, double s_obj, double s_pc, double map_peak,
                        const FusionConfig& cfg) {
  switch (mode) {
    case ImageMode::obj: return s_obj;
    case ImageMode::pc: return s_pc;
    case ImageMode::map: return map_peak;
    case ImageMode::obj_pc: return s_pc + cfg.lambda_obj * s_obj;
    case ImageMode::obj_map: return cfg.lambda_obj * s_obj + cfg.lambda_map * map_peak;
    case ImageMode::pc_map: return s_pc + cfg.lambda_map * map_peak;
    case ImageMode::full: return (s_pc + cfg.lambda_obj * s_obj) + cfg.lambda_map * map_peak;
  }
  return 0.0;
}

double median(std::span<const double> values) {
  if (values.empty()) throw PreconditionError("median of an empty list");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::pair<double, double> calibrate_lambdas(std::span<const double> train_scores_pc,
                                            std::span<const double> train_scores_obj,
                                            std::span<const double> train_peaks,
                                            const FusionConfig& cfg) {
  if (cfg.calibration == CalibrationMode::fixed) return {cfg.lambda_obj, cfg.lambda_map};
  if (train_scores_pc.empty() || train_scores_obj.empty() || train_peaks.empty())
    throw PreconditionError("calibrate_lambdas: empty training score lists");
  if (train_scores_pc.size() != train_scores_obj.size())
    throw DimensionError("calibrate_lambdas: s_pc and s_obj lists differ in length");

  const double med_pc = median(train_scores_pc);
  const double med_obj = median(train_scores_obj);
  const double lambda_obj = med_obj != 0.0 ? med_pc / med_obj : 1.0;

  std::vector<double> base(train_scores_pc.size());
  for (std::size_t i = 0; i < base.size(); ++i)
    base[i] = train_scores_pc[i] + lambda_obj * train_scores_obj[i];
  const double med_peak = median(train_peaks);
  const double lambda_map = med_peak != 0.0 ? median(base) / med_peak : 1.0;
  return {lambda_obj, lambda_map};
}

}  // namespace tricue
