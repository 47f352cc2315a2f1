#include "tricue/errors.hpp"
#include "tricue/fusion.hpp"
#include "tricue/gaussian.hpp"
#include "tricue/ma2patch.hpp"
#include "tricue/maclu.hpp"
#include "tricue/metrics.hpp"
#include "tricue/pipeline.hpp"
#include "tricue/synthetic.hpp"
#include "tricue/texture.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace tricue;

namespace {

// Config dicts go through the JSON loader so Python and the CLI share one schema.
nlohmann::json to_json_value(const py::handle& h) {
  if (h.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(h)) return h.cast<bool>();
  if (py::isinstance<py::int_>(h)) return h.cast<std::int64_t>();
  if (py::isinstance<py::float_>(h)) return h.cast<double>();
  if (py::isinstance<py::str>(h)) return h.cast<std::string>();
  if (py::hasattr(h, "__fspath__")) return py::str(h.attr("__fspath__")()).cast<std::string>();
  if (py::isinstance<py::dict>(h)) {
    nlohmann::json j = nlohmann::json::object();
    for (auto item : h.cast<py::dict>()) j[py::str(item.first).cast<std::string>()] = to_json_value(item.second);
    return j;
  }
  if (py::isinstance<py::list>(h) || py::isinstance<py::tuple>(h)) {
    nlohmann::json j = nlohmann::json::array();
    for (auto item : h) j.push_back(to_json_value(item));
    return j;
  }
  throw ConfigError("unsupported config value of type " + py::str(py::type::of(h)).cast<std::string>());
}

RunConfig config_from(const py::dict& d) {
  RunConfig c = run_config_from_json(to_json_value(d));
  c.validate();
  return c;
}

py::dict metrics_dict(const MetricsSummary& m) {
  py::dict d;
  d["image_auc"] = m.image_auc;
  d["pixel_auc"] = m.pixel_auc;
  d["pro_auc"] = m.pro_auc;
  d["n_images"] = m.n_images;
  d["n_anomalous"] = m.n_anomalous;
  return d;
}

AnomalyMap as_map(const RowMatrixD& values, Provenance p) {
  AnomalyMap m;
  m.values = values;
  m.provenance = p;
  return m;
}

FeatureBundle bundle_from(const RowMatrixF& patches) {
  FeatureBundle b;
  b.patches = patches;
  b.grid = {1, static_cast<int>(patches.rows())};
  return b;
}

}  // namespace

PYBIND11_MODULE(_tricue, m) {
  m.doc() = "tricue core bindings";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  static py::exception<ConfigError> config(m, "ConfigError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config, e.what());
    } catch (const PreconditionError& e) {
      py::set_error(PyExc_ValueError, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  py::class_<GaussianModel>(m, "GaussianModel")
      .def_static(
          "fit",
          [](const RowMatrixD& samples, double reg_scale) { return GaussianModel::fit(samples, reg_scale); },
          py::arg("samples"), py::arg("reg_scale") = GaussianModel::kDefaultRegScale)
      .def("mahalanobis", &GaussianModel::mahalanobis, py::arg("x"))
      .def("mahalanobis_batch", &GaussianModel::mahalanobis_batch, py::arg("X"))
      .def_property_readonly("mean", &GaussianModel::mean)
      .def_property_readonly("covariance", &GaussianModel::covariance)
      .def_property_readonly("reg_epsilon", &GaussianModel::reg_epsilon)
      .def_property_readonly("sample_count", &GaussianModel::sample_count)
      .def("save", &GaussianModel::save)
      .def_static("load", &GaussianModel::load);

  m.def(
      "kmeans2",
      [](const RowMatrixF& tokens, std::uint64_t seed, int max_iters) {
        const KMeansResult r = kmeans2(tokens, seed, max_iters);
        return py::make_tuple(r.centers, r.assignments, r.converged);
      },
      py::arg("tokens"), py::arg("seed") = 22, py::arg("max_iters") = 300,
      "Two-cluster k-means; returns (centers, assignments, converged).");

  m.def(
      "ablated_pooled",
      [](const RowMatrixF& patches) { return ablated_pooled(patches, mean_pool(patches)); },
      py::arg("patches"), "Leave-one-out mean pools, one row per removed patch.");

  m.def(
      "attribute",
      [](const GaussianModel& pooled, const RowMatrixF& patches) {
        return attribute(Ma2PatchModel{pooled}, bundle_from(patches));
      },
      py::arg("pooled_model"), py::arg("patches"),
      "Per-patch contribution max(0, d_full - d_ablated).");

  m.def(
      "coreset_subsample",
      [](const RowMatrixF& features, double fraction, double projection_eps, std::uint64_t seed) {
        const MemoryBank b = coreset_subsample(features, {fraction, projection_eps, seed});
        return py::make_tuple(b.entries, b.selected);
      },
      py::arg("features"), py::arg("fraction") = 0.01, py::arg("projection_eps") = 0.90,
      py::arg("seed") = 22, "Greedy farthest-point subsample; returns (bank, selected rows).");

  m.def(
      "nn_search",
      [](const RowMatrixF& bank, const RowMatrixF& queries, unsigned threads) {
        MemoryBank mb;
        mb.entries = bank;
        const auto nn = nn_search(mb, queries, threads);
        VectorD d(static_cast<Index>(nn.size()));
        std::vector<Index> idx(nn.size());
        for (std::size_t i = 0; i < nn.size(); ++i) {
          d[static_cast<Index>(i)] = nn[i].distance;
          idx[i] = nn[i].index;
        }
        return py::make_tuple(d, idx);
      },
      py::arg("bank"), py::arg("queries"), py::arg("threads") = 1,
      "Exact Euclidean 1-NN; returns (distances, indices).");

  m.def(
      "image_score_pc",
      [](const RowMatrixF& bank, const RowMatrixF& test, int k) {
        MemoryBank mb;
        mb.entries = bank;
        return image_score_pc(mb, test, k);
      },
      py::arg("bank"), py::arg("test_features"), py::arg("k") = 3);

  m.def(
      "minmax_normalize",
      [](const RowMatrixD& values, double eps) { return minmax_normalize(as_map(values, Provenance::obj), eps).values; },
      py::arg("values"), py::arg("eps") = 1e-8);

  m.def(
      "fuse_maps",
      [](const RowMatrixD& obj, const RowMatrixD& attr, const RowMatrixD& pc, const std::string& mode,
         int out_h, int out_w, double final_sigma) {
        FusionConfig cfg;
        cfg.out_h = out_h > 0 ? out_h : static_cast<int>(obj.rows());
        cfg.out_w = out_w > 0 ? out_w : static_cast<int>(obj.cols());
        cfg.final_sigma = final_sigma;
        const AnomalyMap a = as_map(obj, Provenance::obj);
        const AnomalyMap b = as_map(attr, Provenance::attr);
        const AnomalyMap c = as_map(pc, Provenance::pc);
        return fuse_maps(parse_pixel_mode(mode), &a, &b, &c, cfg).values;
      },
      py::arg("obj"), py::arg("attr"), py::arg("pc"), py::arg("mode") = "full", py::arg("out_h") = 0,
      py::arg("out_w") = 0, py::arg("final_sigma") = 4.0);

  m.def(
      "roc_auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) { return roc_auc(scores, labels).auc; },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "pro_auc",
      [](const std::vector<RowMatrixD>& maps, const std::vector<py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>>& masks,
         double fpr_limit, int n_thresholds) {
        if (maps.size() != masks.size()) throw PreconditionError("pro_auc: maps and masks differ in count");
        std::vector<AnomalyMap> ms;
        std::vector<BinaryMask> bs;
        for (std::size_t i = 0; i < maps.size(); ++i) {
          ms.push_back(as_map(maps[i], Provenance::fused));
          const auto& a = masks[i];
          if (a.ndim() != 2) throw PreconditionError("pro_auc: masks must be 2-D");
          BinaryMask b(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
          for (std::size_t j = 0; j < b.values.size(); ++j) b.values[j] = a.data()[j] != 0;
          bs.push_back(std::move(b));
        }
        return pro_auc(ms, bs, {fpr_limit, n_thresholds, Connectivity::eight}).pro_auc;
      },
      py::arg("maps"), py::arg("masks"), py::arg("fpr_limit") = 0.3, py::arg("n_thresholds") = 200);

  m.def(
      "generate_synthetic",
      [](const fs::path& root, int n_train, int n_test_normal, int n_test_anomalous, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.n_train = n_train;
        spec.n_test_normal = n_test_normal;
        spec.n_test_anomalous = n_test_anomalous;
        spec.seed = seed;
        generate_synthetic_dataset(root, spec);
        return root / "dataset.json";
      },
      py::arg("root"), py::arg("n_train") = 200, py::arg("n_test_normal") = 100,
      py::arg("n_test_anomalous") = 100, py::arg("seed") = 22,
      "Writes a synthetic feature dataset; returns the manifest path.");

  m.def(
      "fit",
      [](const py::dict& config) {
        const FitSummary s = cmd_fit(config_from(config));
        py::dict d;
        d["n_train"] = s.n_train;
        d["bank_size"] = s.bank_size;
        d["lambda_obj"] = s.lambda_obj;
        d["lambda_map"] = s.lambda_map;
        return d;
      },
      py::arg("config"), "Fits the three references; config uses the run-config JSON schema.");
  m.def(
      "score", [](const py::dict& config) { return cmd_score(config_from(config)); }, py::arg("config"),
      "Scores the test splits; returns the run report path.");
  m.def(
      "evaluate",
      [](const py::dict& config, const fs::path& report) { return metrics_dict(cmd_eval(config_from(config), report)); },
      py::arg("config"), py::arg("report"));
  m.def(
      "ablate",
      [](const py::dict& config) {
        py::list out;
        for (const auto& r : cmd_ablate(config_from(config))) {
          py::dict d = metrics_dict(r.metrics);
          d["pixel_mode"] = std::string(to_string(r.pixel_mode));
          d["image_mode"] = std::string(to_string(r.image_mode));
          out.append(d);
        }
        return out;
      },
      py::arg("config"));
}
