#include "tricue/pipeline.hpp"

#include "text_util.hpp"
#include "tricue/errors.hpp"
#include "tricue/grid_ops.hpp"
#include "tricue/npy.hpp"
#include "tricue/parallel.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace tricue {

using json = nlohmann::json;

namespace {

fs::path resolve_path(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

int out_h(const RunConfig& cfg, const DatasetManifest& ds) {
  return cfg.fusion.out_h > 0 ? cfg.fusion.out_h : ds.image_height;
}
int out_w(const RunConfig& cfg, const DatasetManifest& ds) {
  return cfg.fusion.out_w > 0 ? cfg.fusion.out_w : ds.image_width;
}

FusionConfig effective_fusion(const RunConfig& cfg, const DatasetManifest& ds, double lambda_obj,
                              double lambda_map) {
  FusionConfig f = cfg.fusion;
  f.out_h = out_h(cfg, ds);
  f.out_w = out_w(cfg, ds);
  f.lambda_obj = lambda_obj;
  f.lambda_map = lambda_map;
  return f;
}

struct BranchOutputs {
  double s_obj = 0.0, s_attr = 0.0, s_pc = 0.0;
  AnomalyMap m_obj, m_attr, m_pc;
};

BranchOutputs run_branches(const MacluModel& maclu, const Ma2PatchModel& ma2patch,
                           const MemoryBank& bank, const RunConfig& cfg,
                           const DatasetManifest& ds, const DatasetEntry& entry) {
  const FeatureBundle obj = load_bundle(ds.bundle_path(entry, cfg.backbones.obj));
  const FeatureBundle attr = load_bundle(ds.bundle_path(entry, cfg.backbones.attr));
  const MultiScaleFeatures cnn = load_multiscale(ds.bundle_path(entry, cfg.backbones.texture));

  BranchOutputs out;
  out.s_obj = score_image_obj(maclu, obj);
  out.m_obj = localize_obj(maclu, obj, obj.input_resolution, obj.input_resolution, cfg.obj_sigma);

  out.s_attr = score_image_attr(ma2patch, attr);
  out.m_attr =
      localize_attr(ma2patch, attr, attr.input_resolution, attr.input_resolution, cfg.attr_sigma);

  const PatchFeatures pf = build_patch_features(cnn);
  const auto nn = nn_search(bank, pf.features);
  out.s_pc = image_score_pc(bank, pf.features, nn, cfg.k);
  std::vector<double> d(nn.size());
  for (std::size_t i = 0; i < nn.size(); ++i) d[i] = nn[i].distance;
  out.m_pc = render_map(d, pf.grid, cnn.input_resolution, cnn.input_resolution, cfg.pc_sigma,
                        Provenance::pc);
  return out;
}

std::string sanitize(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '*') {
      out += "x";
    } else if (c == '+') {
      out += "p";
    } else {
      out += c;
    }
  }
  return out;
}

template <class F>
double timed(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void RunConfig::validate() const {
  if (dataset.empty()) throw ConfigError("config: dataset manifest path is required");
  if (!fs::exists(dataset)) throw ConfigError("config: dataset manifest not found: " + dataset.string());
  if (dataset_root && !fs::is_directory(*dataset_root))
    throw ConfigError("config: dataset root is not a directory: " + dataset_root->string());
  if (output_dir.empty()) throw ConfigError("config: output directory is required");
  if (!(tau > 1.0)) throw ConfigError("config: obj.tau must exceed 1");
  if (!(ratio_epsilon > 0.0)) throw ConfigError("config: obj.ratio_epsilon must be positive");
  if (!(kmeans_subsample > 0.0 && kmeans_subsample <= 1.0))
    throw ConfigError("config: obj.kmeans_subsample must lie in (0, 1]");
  if (kmeans_max_iters < 1) throw ConfigError("config: obj.kmeans_max_iters must be >= 1");
  if (!(coreset_fraction > 0.0 && coreset_fraction <= 1.0))
    throw ConfigError("config: texture.coreset_fraction must lie in (0, 1]");
  if (!(projection_eps > 0.0 && projection_eps < 1.0))
    throw ConfigError("config: texture.projection_eps must lie in (0, 1)");
  if (k < 1) throw ConfigError("config: texture.k must be >= 1");
  if (obj_sigma < 0 || attr_sigma < 0 || pc_sigma < 0)
    throw ConfigError("config: smoothing sigmas must be non-negative");
  if (!(reg_scale >= 0.0)) throw ConfigError("config: gaussian.reg_scale must be >= 0");
  if (fusion.out_h < 0 || fusion.out_w < 0) throw ConfigError("config: fusion output size must be >= 0");
  if (!(fusion.norm_epsilon > 0.0)) throw ConfigError("config: fusion.norm_epsilon must be positive");
  if (!(fusion.final_sigma >= 0.0)) throw ConfigError("config: fusion.final_sigma must be >= 0");
  if (!(pro.fpr_limit > 0.0 && pro.fpr_limit <= 1.0))
    throw ConfigError("config: eval.fpr_limit must lie in (0, 1]");
  if (pro.n_thresholds < 2) throw ConfigError("config: eval.n_thresholds must be >= 2");
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  RunConfig c;
  try {
    if (j.contains("dataset")) c.dataset = resolve_path(j["dataset"].get<std::string>(), base_dir);
    if (j.contains("dataset_root") && !j["dataset_root"].is_null())
      c.dataset_root = resolve_path(j["dataset_root"].get<std::string>(), base_dir);
    if (j.contains("output_dir")) c.output_dir = resolve_path(j["output_dir"].get<std::string>(), base_dir);
    if (j.contains("model_dir") && !j["model_dir"].is_null())
      c.model_dir = resolve_path(j["model_dir"].get<std::string>(), base_dir);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    if (j.contains("backbones")) {
      const auto& b = j["backbones"];
      c.backbones.obj = b.value("obj", c.backbones.obj);
      c.backbones.attr = b.value("attr", c.backbones.attr);
      c.backbones.texture = b.value("texture", c.backbones.texture);
    }
    if (j.contains("gaussian")) c.reg_scale = j["gaussian"].value("reg_scale", c.reg_scale);
    if (j.contains("obj")) {
      const auto& o = j["obj"];
      c.tau = o.value("tau", c.tau);
      c.ratio_epsilon = o.value("ratio_epsilon", c.ratio_epsilon);
      c.obj_sigma = o.value("sigma", c.obj_sigma);
      c.kmeans_subsample = o.value("kmeans_subsample", c.kmeans_subsample);
      c.kmeans_max_iters = o.value("kmeans_max_iters", c.kmeans_max_iters);
    }
    if (j.contains("attr")) c.attr_sigma = j["attr"].value("sigma", c.attr_sigma);
    if (j.contains("texture")) {
      const auto& t = j["texture"];
      c.coreset_fraction = t.value("coreset_fraction", c.coreset_fraction);
      c.projection_eps = t.value("projection_eps", c.projection_eps);
      c.k = t.value("k", c.k);
      c.pc_sigma = t.value("sigma", c.pc_sigma);
    }
    if (j.contains("fusion")) {
      const auto& f = j["fusion"];
      c.fusion.lambda_obj = f.value("lambda_obj", c.fusion.lambda_obj);
      c.fusion.lambda_map = f.value("lambda_map", c.fusion.lambda_map);
      c.fusion.out_h = f.value("out_h", c.fusion.out_h);
      c.fusion.out_w = f.value("out_w", c.fusion.out_w);
      c.fusion.norm_epsilon = f.value("norm_epsilon", c.fusion.norm_epsilon);
      c.fusion.final_sigma = f.value("final_sigma", c.fusion.final_sigma);
      if (f.contains("calibration"))
        c.fusion.calibration = parse_calibration_mode(f["calibration"].get<std::string>());
      c.calibration_max_images = f.value("calibration_max_images", c.calibration_max_images);
    }
    if (j.contains("ablation")) {
      const auto& a = j["ablation"];
      if (a.contains("pixel_mode")) c.pixel_mode = parse_pixel_mode(a["pixel_mode"].get<std::string>());
      if (a.contains("image_mode")) c.image_mode = parse_image_mode(a["image_mode"].get<std::string>());
    }
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      c.pro.fpr_limit = e.value("fpr_limit", c.pro.fpr_limit);
      c.pro.n_thresholds = e.value("n_thresholds", c.pro.n_thresholds);
      const int conn = e.value("connectivity", 8);
      if (conn != 4 && conn != 8) throw ConfigError("config: eval.connectivity must be 4 or 8");
      c.pro.connectivity = conn == 4 ? Connectivity::four : Connectivity::eight;
      c.write_curves = e.value("write_curves", c.write_curves);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

json to_json(const RunConfig& c) {
  json j;
  j["dataset"] = c.dataset.generic_string();
  j["dataset_root"] = c.dataset_root ? json(c.dataset_root->generic_string()) : json(nullptr);
  j["seed"] = c.seed;
  j["backbones"] = {{"obj", c.backbones.obj}, {"attr", c.backbones.attr}, {"texture", c.backbones.texture}};
  j["gaussian"] = {{"reg_scale", c.reg_scale}};
  j["obj"] = {{"tau", c.tau},
              {"ratio_epsilon", c.ratio_epsilon},
              {"sigma", c.obj_sigma},
              {"kmeans_subsample", c.kmeans_subsample},
              {"kmeans_max_iters", c.kmeans_max_iters}};
  j["attr"] = {{"sigma", c.attr_sigma}};
  j["texture"] = {{"coreset_fraction", c.coreset_fraction},
                  {"projection_eps", c.projection_eps},
                  {"k", c.k},
                  {"sigma", c.pc_sigma}};
  j["fusion"] = {{"lambda_obj", c.fusion.lambda_obj},
                 {"lambda_map", c.fusion.lambda_map},
                 {"out_h", c.fusion.out_h},
                 {"out_w", c.fusion.out_w},
                 {"norm_epsilon", c.fusion.norm_epsilon},
                 {"final_sigma", c.fusion.final_sigma},
                 {"calibration", std::string(to_string(c.fusion.calibration))},
                 {"calibration_max_images", c.calibration_max_images}};
  j["ablation"] = {{"pixel_mode", std::string(to_string(c.pixel_mode))},
                   {"image_mode", std::string(to_string(c.image_mode))}};
  j["eval"] = {{"fpr_limit", c.pro.fpr_limit},
               {"n_thresholds", c.pro.n_thresholds},
               {"connectivity", c.pro.connectivity == Connectivity::four ? 4 : 8},
               {"write_curves", c.write_curves}};
  return j;
}

DatasetManifest load_run_dataset(const RunConfig& cfg) {
  std::optional<fs::path> root = cfg.dataset_root;
  if (const char* env = std::getenv("TRICUE_DATASET_ROOT"); env != nullptr && *env != '\0')
    root = fs::path(env);
  try {
    return load_dataset(cfg.dataset, root);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  } catch (const InvariantError& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Models

Models load_models(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("model directory not found: " + dir.string() + " (run fit first)");
  for (const char* sub : {"maclu", "ma2patch", "texture"})
    if (!fs::is_directory(dir / sub))
      throw ConfigError("missing model artifact " + (dir / sub).string() + " (run fit first)");
  Models m{MacluModel::load(dir / "maclu"), Ma2PatchModel::load(dir / "ma2patch"),
           MemoryBank::load(dir / "texture")};
  const auto calib_path = dir / "calibration.json";
  if (!fs::exists(calib_path)) throw ConfigError("missing " + calib_path.string() + " (run fit first)");
  const json c = read_json(calib_path);
  m.lambda_obj = c.at("lambda_obj").get<double>();
  m.lambda_map = c.at("lambda_map").get<double>();
  return m;
}

ImageResult score_image(const Models& models, const RunConfig& cfg, const DatasetManifest& ds,
                        const DatasetEntry& entry, Split split) {
  const BranchOutputs b = run_branches(models.maclu, models.ma2patch, models.bank, cfg, ds, entry);
  const FusionConfig f = effective_fusion(cfg, ds, models.lambda_obj, models.lambda_map);

  ImageResult r;
  r.image_id = entry.image_id;
  r.split = split;
  r.label = split == Split::test_anomalous ? 1 : 0;
  r.s_obj = b.s_obj;
  r.s_attr = b.s_attr;
  r.s_pc = b.s_pc;

  AnomalyMap full = fuse_pixel(b.m_obj, b.m_attr, b.m_pc, f);
  const FusedResult fused = fuse_image(b.s_pc, b.s_obj, full, f);
  r.s_map_peak = fused.s_map_peak;
  r.s_fused = fused.s_fused;
  r.score = image_mode_score(cfg.image_mode, r.s_obj, r.s_pc, r.s_map_peak, f);
  r.map = cfg.pixel_mode == PixelMode::full
              ? std::move(full)
              : fuse_maps(cfg.pixel_mode, &b.m_obj, &b.m_attr, &b.m_pc, f);
  return r;
}

// ---------------------------------------------------------------------------
// fit

FitSummary cmd_fit(const RunConfig& cfg) {
  cfg.validate();
  const DatasetManifest ds = load_run_dataset(cfg);
  if (ds.train_normal.size() < 2)
    throw ConfigError("fit: need at least 2 train_normal images, manifest has " +
                      std::to_string(ds.train_normal.size()));
  const struct {
    const char* branch;
    const std::string& tag;
  } branches[] = {{"object-level (MACLU)", cfg.backbones.obj},
                  {"attribution (MA2Patch)", cfg.backbones.attr},
                  {"texture", cfg.backbones.texture}};
  for (const auto& br : branches) {
    for (const auto& e : ds.train_normal) {
      if (!e.bundles.contains(br.tag))
        throw ConfigError(std::string(br.branch) + " branch: training image '" + e.image_id +
                          "' has no bundle for backbone '" + br.tag + "'");
      if (!fs::exists(ds.bundle_path(e, br.tag)))
        throw ConfigError(std::string(br.branch) + " branch: bundle not found: " +
                          ds.bundle_path(e, br.tag).string());
    }
  }

  const fs::path models_dir = cfg.models();
  ensure_dir(models_dir);
  json timings;

  auto branch_error = [](const char* branch, const std::exception& e) {
    return Error(std::string(branch) + " branch fit failed: " + e.what());
  };

  std::optional<MacluModel> maclu;
  timings["maclu_seconds"] = timed([&] {
    try {
      std::vector<FeatureBundle> train;
      for (const auto& e : ds.train_normal) train.push_back(load_bundle(ds.bundle_path(e, cfg.backbones.obj)));
      MacluParams p;
      p.tau = cfg.tau;
      p.ratio_epsilon = cfg.ratio_epsilon;
      p.reg_scale = cfg.reg_scale;
      p.subsample = cfg.kmeans_subsample;
      p.max_iters = cfg.kmeans_max_iters;
      p.seed = cfg.seed;
      maclu = fit_maclu(train, p);
      maclu->save(models_dir / "maclu");
    } catch (const std::exception& e) {
      throw branch_error("object-level (MACLU)", e);
    }
  });

  std::optional<Ma2PatchModel> ma2patch;
  timings["ma2patch_seconds"] = timed([&] {
    try {
      std::vector<FeatureBundle> train;
      for (const auto& e : ds.train_normal) train.push_back(load_bundle(ds.bundle_path(e, cfg.backbones.attr)));
      ma2patch = fit_ma2patch(train, cfg.reg_scale);
      ma2patch->save(models_dir / "ma2patch");
    } catch (const std::exception& e) {
      throw branch_error("attribution (MA2Patch)", e);
    }
  });

  std::optional<MemoryBank> bank;
  timings["texture_seconds"] = timed([&] {
    try {
      std::vector<MultiScaleFeatures> train;
      for (const auto& e : ds.train_normal)
        train.push_back(load_multiscale(ds.bundle_path(e, cfg.backbones.texture)));
      bank = build_memory_bank(train, {cfg.coreset_fraction, cfg.projection_eps, cfg.seed});
      bank->save(models_dir / "texture");
    } catch (const std::exception& e) {
      throw branch_error("texture", e);
    }
  });

  // Fusion weights from in-sample scores of the normal training images.
  double lambda_obj = cfg.fusion.lambda_obj;
  double lambda_map = cfg.fusion.lambda_map;
  json calib_stats = json::object();
  timings["calibration_seconds"] = timed([&] {
    if (cfg.fusion.calibration != CalibrationMode::train_scale) return;
    std::size_t n = ds.train_normal.size();
    if (cfg.calibration_max_images > 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(cfg.calibration_max_images));
    std::vector<double> s_pc(n), s_obj(n), peaks(n);
    const FusionConfig f = effective_fusion(cfg, ds, 1.0, 1.0);
    parallel_for(n, cfg.threads, [&](std::size_t i) {
      const auto b = run_branches(*maclu, *ma2patch, *bank, cfg, ds, ds.train_normal[i]);
      s_pc[i] = b.s_pc;
      s_obj[i] = b.s_obj;
      peaks[i] = fuse_pixel(b.m_obj, b.m_attr, b.m_pc, f).max();
    });
    std::tie(lambda_obj, lambda_map) = calibrate_lambdas(s_pc, s_obj, peaks, cfg.fusion);
    calib_stats = {{"images", n},
                   {"median_s_pc", median(s_pc)},
                   {"median_s_obj", median(s_obj)},
                   {"median_peak", median(peaks)}};
  });
  write_json(models_dir / "calibration.json",
             {{"calibration", std::string(to_string(cfg.fusion.calibration))},
              {"lambda_obj", lambda_obj},
              {"lambda_map", lambda_map},
              {"train_statistics", calib_stats}});

  FitSummary s;
  s.n_train = static_cast<Index>(ds.train_normal.size());
  s.cls_dim = maclu->cls_gaussian.dim();
  s.pooled_dim = ma2patch->pooled_gaussian.dim();
  s.bank_size = bank->size();
  s.bank_dim = bank->dim();
  s.count_fg = maclu->prototypes.count_fg;
  s.count_bg = maclu->prototypes.count_bg;
  s.lambda_obj = lambda_obj;
  s.lambda_map = lambda_map;

  ensure_dir(cfg.output_dir);
  write_json(cfg.output_dir / "fit_report.json",
             {{"config", to_json(cfg)},
              {"n_train", s.n_train},
              {"maclu", {{"cls_dim", s.cls_dim},
                         {"cls_reg_epsilon", maclu->cls_gaussian.reg_epsilon()},
                         {"count_fg", s.count_fg},
                         {"count_bg", s.count_bg}}},
              {"ma2patch", {{"dim", s.pooled_dim}, {"reg_epsilon", ma2patch->pooled_gaussian.reg_epsilon()}}},
              {"texture", {{"bank_size", s.bank_size},
                           {"bank_dim", s.bank_dim},
                           {"source_count", bank->source_count},
                           {"projection_dim", bank->projection_dim}}},
              {"lambda_obj", lambda_obj},
              {"lambda_map", lambda_map}});
  write_json(cfg.output_dir / "fit_timings.json", timings);
  return s;
}

// ---------------------------------------------------------------------------
// score

fs::path cmd_score(const RunConfig& cfg) {
  cfg.validate();
  const DatasetManifest ds = load_run_dataset(cfg);
  const Models models = load_models(cfg.models());

  std::vector<std::pair<const DatasetEntry*, Split>> items;
  for (const auto& e : ds.test_normal) items.emplace_back(&e, Split::test_normal);
  for (const auto& e : ds.test_anomalous) items.emplace_back(&e, Split::test_anomalous);
  if (items.empty()) throw ConfigError("score: manifest has no test images");

  ensure_dir(cfg.output_dir / "maps");
  std::vector<json> rows(items.size());
  parallel_for(items.size(), cfg.threads, [&](std::size_t i) {
    const auto [entry, split] = items[i];
    ImageResult r = score_image(models, cfg, ds, *entry, split);
    const fs::path map_rel = fs::path("maps") / (r.image_id + ".npy");
    npy::save_matrix(cfg.output_dir / map_rel, r.map.values);

    json row;
    row["image_id"] = r.image_id;
    row["split"] = std::string(to_string(r.split));
    row["label"] = r.label;
    row["s_obj"] = r.s_obj;
    row["s_attr"] = r.s_attr;
    row["s_pc"] = r.s_pc;
    if (uses_map(cfg.image_mode)) row["s_map_peak"] = r.s_map_peak;
    if (cfg.image_mode == ImageMode::full) row["s_fused"] = r.s_fused;
    row["score"] = r.score;
    row["map"] = map_rel.generic_string();
    rows[i] = std::move(row);
  });

  json report;
  report["config"] = to_json(cfg);
  report["lambdas"] = {{"lambda_obj", models.lambda_obj}, {"lambda_map", models.lambda_map}};
  report["pixel_mode"] = std::string(to_string(cfg.pixel_mode));
  report["image_mode"] = std::string(to_string(cfg.image_mode));
  report["map_height"] = out_h(cfg, ds);
  report["map_width"] = out_w(cfg, ds);
  report["images"] = rows;
  const fs::path path = cfg.output_dir / "run_report.json";
  write_json(path, report);
  return path;
}

// ---------------------------------------------------------------------------
// eval

MetricsSummary cmd_eval(const RunConfig& cfg, const fs::path& run_report) {
  cfg.validate();
  const DatasetManifest ds = load_run_dataset(cfg);
  const json report = read_json(run_report);
  const fs::path base = run_report.parent_path();

  std::map<std::string, const DatasetEntry*> anomalous;
  for (const auto& e : ds.test_anomalous) anomalous[e.image_id] = &e;

  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<AnomalyMap> maps;
  std::vector<BinaryMask> masks;
  try {
    for (const auto& row : report.at("images")) {
      const std::string id = row.at("image_id").get<std::string>();
      const int label = row.at("label").get<int>();
      scores.push_back(row.at("score").get<double>());
      labels.push_back(label);

      AnomalyMap m;
      m.values = npy::load_matrix_d(base / row.at("map").get<std::string>());
      if (m.height() != ds.image_height || m.width() != ds.image_width)
        m.values = resize_bilinear(m.values, ds.image_height, ds.image_width);
      maps.push_back(std::move(m));

      if (label == 1) {
        auto it = anomalous.find(id);
        if (it == anomalous.end() || !it->second->mask)
          throw ConfigError("eval: no mask for anomalous image '" + id + "'");
        const fs::path mask_path = ds.resolve(*it->second->mask);
        if (!fs::exists(mask_path)) throw ConfigError("eval: mask not found: " + mask_path.string());
        masks.push_back(load_mask(mask_path, ds.image_height, ds.image_width));
      } else {
        masks.emplace_back(ds.image_height, ds.image_width);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed run report " + run_report.string() + ": " + e.what());
  }

  const RocResult image_roc = roc_auc(scores, labels);
  const RocResult pixel_roc = pixel_roc_auc(maps, masks);
  const ProResult pro = pro_auc(maps, masks, cfg.pro);

  MetricsSummary s;
  s.image_auc = image_roc.auc;
  s.pixel_auc = pixel_roc.auc;
  s.pro_auc = pro.pro_auc;
  s.n_images = scores.size();
  s.n_anomalous = masks.size() - static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 0));

  write_json(base / "metrics.json",
             {{"image_auc", s.image_auc},
              {"pixel_auc", s.pixel_auc},
              {"pro_auc", s.pro_auc},
              {"n_images", s.n_images},
              {"n_anomalous", s.n_anomalous},
              {"pixel_mode", report.value("pixel_mode", "full")},
              {"image_mode", report.value("image_mode", "full")},
              {"config", to_json(cfg)}});

  if (cfg.write_curves) {
    auto write_roc = [](const fs::path& path, const RocResult& r, std::size_t max_points) {
      std::ofstream out(path, std::ios::trunc);
      if (!out) throw IoError("cannot write " + path.string());
      out << "threshold,tpr,fpr\n" << std::setprecision(17);
      const std::size_t step = std::max<std::size_t>(1, r.points.size() / max_points);
      for (std::size_t i = 0; i < r.points.size(); i += step)
        out << r.points[i].threshold << ',' << r.points[i].tpr << ',' << r.points[i].fpr << '\n';
      if ((r.points.size() - 1) % step != 0) {
        const auto& p = r.points.back();
        out << p.threshold << ',' << p.tpr << ',' << p.fpr << '\n';
      }
    };
    write_roc(base / "roc_image.csv", image_roc, image_roc.points.size());
    write_roc(base / "roc_pixel.csv", pixel_roc, 2000);
    std::ofstream out(base / "pro_curve.csv", std::ios::trunc);
    if (!out) throw IoError("cannot write pro_curve.csv");
    out << "threshold,fpr,pro\n" << std::setprecision(17);
    for (const auto& p : pro.curve) out << p.threshold << ',' << p.fpr << ',' << p.pro << '\n';
  }
  return s;
}

// ---------------------------------------------------------------------------
// ablate

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg) {
  cfg.validate();
  const fs::path models_dir = cfg.models();
  if (!fs::exists(models_dir / "calibration.json")) cmd_fit(cfg);

  std::vector<AblationRow> rows;
  json table = json::array();
  for (std::size_t i = 0; i < std::size(kAllPixelModes); ++i) {
    RunConfig run = cfg;
    run.pixel_mode = kAllPixelModes[i];
    run.image_mode = kAllImageModes[i];
    run.model_dir = models_dir;
    run.output_dir = cfg.output_dir / "ablation" /
                     (std::to_string(i) + "_" + sanitize(to_string(run.pixel_mode)) + "__" +
                      sanitize(to_string(run.image_mode)));
    const fs::path report = cmd_score(run);
    const MetricsSummary m = cmd_eval(run, report);
    rows.push_back({run.pixel_mode, run.image_mode, m});
    table.push_back({{"pixel_mode", std::string(to_string(run.pixel_mode))},
                     {"image_mode", std::string(to_string(run.image_mode))},
                     {"image_auc", m.image_auc},
                     {"pixel_auc", m.pixel_auc},
                     {"pro_auc", m.pro_auc}});
  }
  ensure_dir(cfg.output_dir);
  write_json(cfg.output_dir / "ablation.json", {{"config", to_json(cfg)}, {"rows", table}});
  std::ofstream out(cfg.output_dir / "ablation.txt", std::ios::trunc);
  out << format_ablation_table(rows);
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "image mode" << std::right << std::setw(12) << "Image-AUC"
     << "    " << std::left << std::setw(12) << "pixel mode" << std::right << std::setw(12)
     << "Pixel-AUC" << std::setw(12) << "PRO-AUC" << '\n';
  os << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    os << std::left << std::setw(12) << to_string(r.image_mode) << std::right << std::setw(12)
       << 100.0 * r.metrics.image_auc << "    " << std::left << std::setw(12)
       << to_string(r.pixel_mode) << std::right << std::setw(12) << 100.0 * r.metrics.pixel_auc
       << std::setw(12) << 100.0 * r.metrics.pro_auc << '\n';
  }
  return os.str();
}

}  // namespace tricue
