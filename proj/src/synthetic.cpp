#include "tricue/synthetic.hpp"

#include "tricue/errors.hpp"
#include "tricue/random.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <vector>

namespace tricue {
namespace {

struct Blob {
  double cy, cx, radius;
};

// Scene layout in normalized [0,1)^2 image coordinates.
struct Scene {
  std::vector<Blob> foreground;
  bool anomalous = false;
  double ay0 = 0, ax0 = 0, side = 0;  // anomaly square

  [[nodiscard]] bool is_fg(double y, double x) const {
    for (const auto& b : foreground)
      if ((y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx) <= b.radius * b.radius) return true;
    return false;
  }
  [[nodiscard]] bool is_anomaly(double y, double x) const {
    return anomalous && y >= ay0 && y < ay0 + side && x >= ax0 && x < ax0 + side;
  }
};

Scene make_scene(Rng& rng, bool anomalous, double area) {
  Scene s;
  const int blobs = 3 + static_cast<int>(rng.index(4));
  for (int i = 0; i < blobs; ++i)
    s.foreground.push_back({rng.uniform(), rng.uniform(), 0.08 + 0.12 * rng.uniform()});
  if (anomalous) {
    s.anomalous = true;
    s.side = std::sqrt(area);
    s.ay0 = rng.uniform() * (1.0 - s.side);
    s.ax0 = rng.uniform() * (1.0 - s.side);
  }
  return s;
}

// Fixed directions per feature space: e0 separates fg from bg, e1 is the
// anomaly direction.
std::vector<float> token(Rng& rng, int dim, const Scene& scene, double y, double x,
                         const SyntheticSpec& spec) {
  std::vector<float> t(static_cast<std::size_t>(dim));
  for (int j = 0; j < dim; ++j) t[static_cast<std::size_t>(j)] = static_cast<float>(spec.noise * rng.normal());
  if (scene.is_anomaly(y, x)) {
    t[1] += static_cast<float>(spec.anomaly_shift * spec.noise);
  } else if (scene.is_fg(y, x)) {
    t[0] += static_cast<float>(spec.fg_separation * spec.noise);
  }
  return t;
}

FeatureBundle make_vit_bundle(Rng& rng, const std::string& id, const Scene& scene,
                              const SyntheticViewSpec& view, const SyntheticSpec& spec) {
  FeatureBundle b;
  b.image_id = id;
  b.backbone_tag = view.tag;
  b.grid = {view.grid, view.grid};
  b.input_resolution = view.input_resolution;
  b.patches.resize(b.grid.cells(), view.dim);
  for (int r = 0; r < view.grid; ++r) {
    for (int c = 0; c < view.grid; ++c) {
      const auto t = token(rng, view.dim, scene, (r + 0.5) / view.grid, (c + 0.5) / view.grid, spec);
      for (int j = 0; j < view.dim; ++j)
        b.patches(Index{r} * view.grid + c, j) = t[static_cast<std::size_t>(j)];
    }
  }
  VectorF cls = b.patches.cast<double>().colwise().mean().transpose().cast<float>();
  for (int j = 0; j < view.dim; ++j) cls(j) += static_cast<float>(spec.cls_noise * rng.normal());
  b.global_vec = cls;
  return b;
}

FeatureLayer make_layer(Rng& rng, const std::string& tag, int grid, const Scene& scene,
                        const SyntheticSpec& spec) {
  FeatureLayer l;
  l.tag = tag;
  l.height = grid;
  l.width = grid;
  l.channels = spec.cnn_channels;
  l.values.reserve(static_cast<std::size_t>(grid) * grid * spec.cnn_channels);
  for (int r = 0; r < grid; ++r) {
    for (int c = 0; c < grid; ++c) {
      const auto t = token(rng, spec.cnn_channels, scene, (r + 0.5) / grid, (c + 0.5) / grid, spec);
      l.values.insert(l.values.end(), t.begin(), t.end());
    }
  }
  return l;
}

BinaryMask make_mask(const Scene& scene, int size) {
  BinaryMask m(size, size);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      m.at(r, c) = scene.is_anomaly((r + 0.5) / size, (c + 0.5) / size) ? 1 : 0;
  return m;
}

}  // namespace

DatasetManifest generate_synthetic_dataset(const fs::path& root, const SyntheticSpec& spec) {
  if (spec.n_train < 2) throw PreconditionError("synthetic dataset needs at least 2 training images");
  if (spec.obj_view.dim < 2 || spec.attr_view.dim < 2 || spec.cnn_channels < 2)
    throw PreconditionError("synthetic feature dimensions must be at least 2");
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.root = root;
  manifest.image_height = spec.image_size;
  manifest.image_width = spec.image_size;

  auto emit = [&](Split split, int count, const char* prefix, bool anomalous) {
    auto& entries = split == Split::train_normal  ? manifest.train_normal
                    : split == Split::test_normal ? manifest.test_normal
                                                  : manifest.test_anomalous;
    for (int i = 0; i < count; ++i) {
      std::ostringstream id;
      id << prefix << '_' << std::setw(4) << std::setfill('0') << i;
      // Per-image stream so images are independent of generation order.
      Rng rng(spec.seed * 1000003ULL + static_cast<std::uint64_t>(split) * 7919ULL +
              static_cast<std::uint64_t>(i));
      const Scene scene = make_scene(rng, anomalous, spec.anomaly_area);

      DatasetEntry e;
      e.image_id = id.str();
      const fs::path rel = fs::path(to_string(split)) / e.image_id;

      const auto obj = make_vit_bundle(rng, e.image_id, scene, spec.obj_view, spec);
      save_bundle(obj, root / rel / spec.obj_view.tag);
      e.bundles[spec.obj_view.tag] = rel / spec.obj_view.tag;

      const auto attr = make_vit_bundle(rng, e.image_id, scene, spec.attr_view, spec);
      save_bundle(attr, root / rel / spec.attr_view.tag);
      e.bundles[spec.attr_view.tag] = rel / spec.attr_view.tag;

      MultiScaleFeatures ms;
      ms.image_id = e.image_id;
      ms.backbone_tag = spec.cnn_tag;
      ms.input_resolution = spec.cnn_input_resolution;
      ms.layers.push_back(make_layer(rng, "layer2", spec.cnn_fine_grid, scene, spec));
      ms.layers.push_back(make_layer(rng, "layer3", spec.cnn_coarse_grid, scene, spec));
      save_multiscale(ms, root / rel / spec.cnn_tag);
      e.bundles[spec.cnn_tag] = rel / spec.cnn_tag;

      if (anomalous) {
        const fs::path mask_rel = fs::path("masks") / (e.image_id + ".png");
        fs::create_directories(root / "masks");
        save_mask(make_mask(scene, spec.image_size), root / mask_rel);
        e.mask = mask_rel;
      }
      entries.push_back(std::move(e));
    }
  };
  emit(Split::train_normal, spec.n_train, "train", false);
  emit(Split::test_normal, spec.n_test_normal, "good", false);
  emit(Split::test_anomalous, spec.n_test_anomalous, "anom", true);

  save_dataset(manifest, root / "dataset.json");
  return manifest;
}

}  // namespace tricue
