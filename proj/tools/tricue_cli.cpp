// tricue command-line tool.
//
//   tricue fit    --config run.json
//   tricue score  --config run.json
//   tricue eval   --config run.json [--report out/run_report.json]
//   tricue ablate --config run.json
//   tricue synth  --out data/ [--train 200 ...]
//
// Exit codes: 0 success, 1 configuration or validation error, 2 runtime failure.

#include "tricue/errors.hpp"
#include "tricue/pipeline.hpp"
#include "tricue/synthetic.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>

namespace {

using namespace tricue;

struct Overrides {
  std::string config;
  std::string dataset, dataset_root, output_dir, model_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<double> tau, coreset_fraction, projection_eps, reg_scale;
  std::optional<double> lambda_obj, lambda_map;
  std::optional<int> k, out_size;
  std::string calibration, pixel_mode, image_mode;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config, "Run configuration (JSON)");
  app->add_option("--dataset", o.dataset, "Dataset manifest (dataset.json)");
  app->add_option("--dataset-root", o.dataset_root, "Root for relative bundle paths");
  app->add_option("-o,--output", o.output_dir, "Output directory");
  app->add_option("--models", o.model_dir, "Model directory (default <output>/models)");
  app->add_option("--seed", o.seed);
  app->add_option("--threads", o.threads, "Worker threads (0 = hardware concurrency)");
  app->add_option("--tau", o.tau, "Object-branch ratio cap");
  app->add_option("--coreset-fraction", o.coreset_fraction);
  app->add_option("--projection-eps", o.projection_eps);
  app->add_option("--reg-scale", o.reg_scale, "Covariance shrinkage scale");
  app->add_option("--k", o.k, "Reweighting neighbourhood size");
  app->add_option("--lambda-obj", o.lambda_obj);
  app->add_option("--lambda-map", o.lambda_map);
  app->add_option("--calibration", o.calibration, "train_scale | fixed");
  app->add_option("--out-size", o.out_size, "Square output map size (0 = dataset size)");
  app->add_option("--pixel-mode", o.pixel_mode, "obj, attr, pc, obj*attr, obj*pc, attr*pc, full");
  app->add_option("--image-mode", o.image_mode, "obj, pc, map, obj+pc, obj+map, pc+map, full");
}

RunConfig build_config(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (!o.dataset.empty()) c.dataset = o.dataset;
  if (!o.dataset_root.empty()) c.dataset_root = fs::path(o.dataset_root);
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  if (!o.model_dir.empty()) c.model_dir = fs::path(o.model_dir);
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (o.tau) c.tau = *o.tau;
  if (o.coreset_fraction) c.coreset_fraction = *o.coreset_fraction;
  if (o.projection_eps) c.projection_eps = *o.projection_eps;
  if (o.reg_scale) c.reg_scale = *o.reg_scale;
  if (o.k) c.k = *o.k;
  if (o.lambda_obj) c.fusion.lambda_obj = *o.lambda_obj;
  if (o.lambda_map) c.fusion.lambda_map = *o.lambda_map;
  if (o.out_size) c.fusion.out_h = c.fusion.out_w = *o.out_size;
  if (!o.calibration.empty()) c.fusion.calibration = parse_calibration_mode(o.calibration);
  if (!o.pixel_mode.empty()) c.pixel_mode = parse_pixel_mode(o.pixel_mode);
  if (!o.image_mode.empty()) c.image_mode = parse_image_mode(o.image_mode);
  c.validate();
  return c;
}

void print_metrics(const MetricsSummary& m) {
  std::cout << std::fixed << std::setprecision(4) << "image_auc " << m.image_auc << '\n'
            << "pixel_auc " << m.pixel_auc << '\n'
            << "pro_auc   " << m.pro_auc << '\n'
            << "images    " << m.n_images << " (" << m.n_anomalous << " anomalous)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free anomaly detection over precomputed backbone features"};
  app.require_subcommand(1);

  Overrides fit_o, score_o, eval_o, ablate_o;
  auto* fit = app.add_subcommand("fit", "Fit the three reference models from train_normal");
  add_common(fit, fit_o);
  auto* score = app.add_subcommand("score", "Score test images and write maps and run_report.json");
  add_common(score, score_o);
  auto* eval = app.add_subcommand("eval", "Compute Image-AUC, Pixel-AUC and PRO-AUC");
  add_common(eval, eval_o);
  std::string report;
  eval->add_option("--report", report, "Run report (default <output>/run_report.json)");
  auto* ablate = app.add_subcommand("ablate", "Run the seven pixel and image configurations");
  add_common(ablate, ablate_o);

  auto* synth = app.add_subcommand("synth", "Write a synthetic feature dataset");
  std::string synth_out;
  SyntheticSpec spec;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--train", spec.n_train);
  synth->add_option("--test-normal", spec.n_test_normal);
  synth->add_option("--test-anomalous", spec.n_test_anomalous);
  synth->add_option("--image-size", spec.image_size);
  synth->add_option("--seed", spec.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*fit) {
      const FitSummary s = cmd_fit(build_config(fit_o));
      std::cout << "fitted " << s.n_train << " training images: cls dim " << s.cls_dim
                << ", pooled dim " << s.pooled_dim << ", bank " << s.bank_size << "x" << s.bank_dim
                << ", lambda_obj " << s.lambda_obj << ", lambda_map " << s.lambda_map << '\n';
    } else if (*score) {
      std::cout << "wrote " << cmd_score(build_config(score_o)).string() << '\n';
    } else if (*eval) {
      const RunConfig c = build_config(eval_o);
      const fs::path rp = report.empty() ? c.output_dir / "run_report.json" : fs::path(report);
      if (!fs::exists(rp)) throw ConfigError("run report not found: " + rp.string());
      print_metrics(cmd_eval(c, rp));
    } else if (*ablate) {
      std::cout << format_ablation_table(cmd_ablate(build_config(ablate_o)));
    } else if (*synth) {
      const auto ds = generate_synthetic_dataset(synth_out, spec);
      std::cout << "wrote " << (fs::path(synth_out) / "dataset.json").string() << " ("
                << ds.train_normal.size() << " train, " << ds.test_normal.size() << " normal, "
                << ds.test_anomalous.size() << " anomalous)\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
