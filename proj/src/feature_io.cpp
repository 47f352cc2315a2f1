#include "tricue/feature_io.hpp"

#include "text_util.hpp"
#include "tricue/errors.hpp"
#include "tricue/npy.hpp"

#include <png.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace tricue {

using detail::format_double;
using detail::parse_number;

namespace {

template <class Range>
bool all_finite(const Range& r) {
  return std::all_of(std::begin(r), std::end(r), [](float v) { return std::isfinite(v); });
}

bool all_finite(const RowMatrixF& m) { return m.allFinite(); }

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::obj: return "obj";
    case Provenance::attr: return "attr";
    case Provenance::pc: return "pc";
    case Provenance::fused: return "fused";
  }
  return "unknown";
}

void AnomalyMap::validate() const {
  if (!values.allFinite()) throw InvariantError("anomaly map contains non-finite values");
  if (normalized && values.size() > 0 &&
      (values.minCoeff() < 0.0 || values.maxCoeff() > 1.0))
    throw InvariantError("normalized anomaly map outside [0, 1]");
}

// ---------------------------------------------------------------------------
// key=value records

void write_key_values(const fs::path& path, const KeyValues& kv) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed line '" + line + "' in " + path.string());
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& require_key(const std::map<std::string, std::string>& kv,
                               const std::string& key, const fs::path& source) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("missing key '" + key + "' in " + source.string());
  return it->second;
}

// ---------------------------------------------------------------------------
// FeatureBundle

void FeatureBundle::validate() const {
  if (grid.height <= 0 || grid.width <= 0)
    throw InvariantError("bundle '" + image_id + "': grid dimensions must be positive");
  if (grid.cells() != patches.rows())
    throw InvariantError("bundle '" + image_id + "': grid " + std::to_string(grid.height) + "x" +
                         std::to_string(grid.width) + " does not match " +
                         std::to_string(patches.rows()) + " patches");
  if (patches.cols() <= 0) throw InvariantError("bundle '" + image_id + "': zero feature dimension");
  if (!all_finite(patches))
    throw InvariantError("bundle '" + image_id + "': patches contain non-finite values");
  if (global_vec) {
    if (global_vec->size() != patches.cols())
      throw InvariantError("bundle '" + image_id + "': global vector length differs from patch dim");
    if (!global_vec->allFinite())
      throw InvariantError("bundle '" + image_id + "': global vector contains non-finite values");
  }
  if (input_resolution <= 0)
    throw InvariantError("bundle '" + image_id + "': input_resolution must be positive");
}

void save_bundle(const FeatureBundle& bundle, const fs::path& dir) {
  bundle.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  write_key_values(dir / "manifest.txt",
                   {{"image_id", bundle.image_id},
                    {"backbone_tag", bundle.backbone_tag},
                    {"grid_h", std::to_string(bundle.grid.height)},
                    {"grid_w", std::to_string(bundle.grid.width)},
                    {"dim", std::to_string(bundle.dim())},
                    {"input_resolution", std::to_string(bundle.input_resolution)},
                    {"has_global", bundle.global_vec ? "1" : "0"}});
  npy::save_matrix(dir / "patches.npy", bundle.patches);
  if (bundle.global_vec) {
    const auto& g = *bundle.global_vec;
    npy::save<float>(dir / "global.npy", std::span<const float>(g.data(), g.size()),
                     {static_cast<std::size_t>(g.size())});
  } else {
    fs::remove(dir / "global.npy", ec);
  }
}

FeatureBundle load_bundle(const fs::path& dir) {
  const auto meta_path = dir / "manifest.txt";
  const auto kv = read_key_values(meta_path);
  FeatureBundle b;
  b.image_id = require_key(kv, "image_id", meta_path);
  b.backbone_tag = require_key(kv, "backbone_tag", meta_path);
  b.grid.height = parse_number<int>(require_key(kv, "grid_h", meta_path), "grid_h");
  b.grid.width = parse_number<int>(require_key(kv, "grid_w", meta_path), "grid_w");
  const auto dim = parse_number<long>(require_key(kv, "dim", meta_path), "dim");
  b.input_resolution =
      parse_number<int>(require_key(kv, "input_resolution", meta_path), "input_resolution");
  const bool has_global = require_key(kv, "has_global", meta_path) == "1";

  b.patches = npy::load_matrix_f(dir / "patches.npy");
  if (b.patches.cols() != dim)
    throw InvariantError("bundle '" + b.image_id + "': patches.npy has dim " +
                         std::to_string(b.patches.cols()) + ", manifest says " +
                         std::to_string(dim));
  if (has_global) {
    auto g = npy::load<float>(dir / "global.npy");
    if (g.shape.size() != 1)
      throw FormatError("global.npy must be 1-D in " + dir.string());
    b.global_vec = Eigen::Map<const VectorF>(g.data.data(), static_cast<Index>(g.data.size()));
  }
  b.validate();
  return b;
}

// ---------------------------------------------------------------------------
// MultiScaleFeatures

void MultiScaleFeatures::validate() const {
  if (layers.empty()) throw InvariantError("multiscale '" + image_id + "': no layers");
  for (const auto& l : layers) {
    if (l.height <= 0 || l.width <= 0 || l.channels <= 0)
      throw InvariantError("multiscale '" + image_id + "': layer '" + l.tag + "' has an empty grid");
    if (l.values.size() != static_cast<std::size_t>(l.height) * l.width * l.channels)
      throw InvariantError("multiscale '" + image_id + "': layer '" + l.tag +
                           "' value count does not match its shape");
    if (!all_finite(l.values))
      throw InvariantError("multiscale '" + image_id + "': layer '" + l.tag +
                           "' contains non-finite values");
    if (l.tag.empty() || l.tag.find_first_of(",/\\=") != std::string::npos)
      throw InvariantError("multiscale '" + image_id + "': invalid layer tag '" + l.tag + "'");
  }
  if (input_resolution <= 0)
    throw InvariantError("multiscale '" + image_id + "': input_resolution must be positive");
}

void save_multiscale(const MultiScaleFeatures& f, const fs::path& dir) {
  f.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::string tags;
  for (const auto& l : f.layers) {
    if (!tags.empty()) tags += ',';
    tags += l.tag;
    npy::save<float>(dir / ("layer_" + l.tag + ".npy"), std::span<const float>(l.values),
                     {static_cast<std::size_t>(l.height), static_cast<std::size_t>(l.width),
                      static_cast<std::size_t>(l.channels)});
  }
  write_key_values(dir / "manifest.txt", {{"image_id", f.image_id},
                                          {"backbone_tag", f.backbone_tag},
                                          {"kind", "multiscale"},
                                          {"layers", tags},
                                          {"input_resolution", std::to_string(f.input_resolution)}});
}

MultiScaleFeatures load_multiscale(const fs::path& dir) {
  const auto meta_path = dir / "manifest.txt";
  const auto kv = read_key_values(meta_path);
  if (require_key(kv, "kind", meta_path) != "multiscale")
    throw FormatError("not a multiscale feature directory: " + dir.string());
  MultiScaleFeatures f;
  f.image_id = require_key(kv, "image_id", meta_path);
  f.backbone_tag = require_key(kv, "backbone_tag", meta_path);
  f.input_resolution =
      parse_number<int>(require_key(kv, "input_resolution", meta_path), "input_resolution");
  for (const auto& tag : split_csv(require_key(kv, "layers", meta_path))) {
    auto arr = npy::load<float>(dir / ("layer_" + tag + ".npy"));
    if (arr.shape.size() != 3)
      throw FormatError("layer '" + tag + "' must be a 3-D (h, w, c) array in " + dir.string());
    FeatureLayer l;
    l.tag = tag;
    l.height = static_cast<int>(arr.shape[0]);
    l.width = static_cast<int>(arr.shape[1]);
    l.channels = static_cast<int>(arr.shape[2]);
    l.values = std::move(arr.data);
    f.layers.push_back(std::move(l));
  }
  f.validate();
  return f;
}

// ---------------------------------------------------------------------------
// Masks

std::size_t BinaryMask::positives() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

BinaryMask resize_nearest(const BinaryMask& mask, int target_h, int target_w) {
  if (target_h <= 0 || target_w <= 0) throw PreconditionError("resize_nearest: empty target");
  if (mask.height == target_h && mask.width == target_w) return mask;
  BinaryMask out(target_h, target_w);
  for (int r = 0; r < target_h; ++r) {
    const int sr = static_cast<int>(static_cast<long long>(r) * mask.height / target_h);
    for (int c = 0; c < target_w; ++c) {
      const int sc = static_cast<int>(static_cast<long long>(c) * mask.width / target_w);
      out.at(r, c) = mask.at(sr, sc);
    }
  }
  return out;
}

BinaryMask load_mask(const fs::path& path, int target_h, int target_w) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw FormatError("unreadable PNG " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_GRAY;
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw FormatError("zero-sized PNG: " + path.string());
  }
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("unreadable PNG " + path.string() + ": " + msg);
  }
  BinaryMask mask(static_cast<int>(image.height), static_cast<int>(image.width));
  for (std::size_t i = 0; i < buffer.size(); ++i) mask.values[i] = buffer[i] > 0 ? 1 : 0;
  if (target_h <= 0 || target_w <= 0) return mask;
  return resize_nearest(mask, target_h, target_w);
}

void save_mask(const BinaryMask& mask, const fs::path& path) {
  if (mask.height <= 0 || mask.width <= 0) throw PreconditionError("save_mask: empty mask");
  std::vector<std::uint8_t> buffer(mask.values.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i] = mask.values[i] ? 255 : 0;
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(mask.width);
  image.height = static_cast<png_uint_32>(mask.height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write PNG " + path.string() + ": " + msg);
  }
}

// ---------------------------------------------------------------------------
// Dataset manifest

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train_normal: return "train_normal";
    case Split::test_normal: return "test_normal";
    case Split::test_anomalous: return "test_anomalous";
  }
  return "unknown";
}

const std::vector<DatasetEntry>& DatasetManifest::split(Split s) const {
  switch (s) {
    case Split::train_normal: return train_normal;
    case Split::test_normal: return test_normal;
    case Split::test_anomalous: return test_anomalous;
  }
  throw PreconditionError("unknown split");
}

fs::path DatasetManifest::bundle_path(const DatasetEntry& entry, const std::string& tag) const {
  auto it = entry.bundles.find(tag);
  if (it == entry.bundles.end())
    throw PreconditionError("image '" + entry.image_id + "' has no bundle for backbone '" + tag + "'");
  return resolve(it->second);
}

void DatasetManifest::validate() const {
  if (image_height <= 0 || image_width <= 0)
    throw InvariantError("dataset manifest: image resolution must be positive");
  std::set<std::string> seen;
  for (Split s : {Split::train_normal, Split::test_normal, Split::test_anomalous}) {
    for (const auto& e : split(s)) {
      if (!seen.insert(e.image_id).second)
        throw InvariantError("dataset manifest: image_id '" + e.image_id +
                             "' appears more than once");
      if (s == Split::test_anomalous && !e.mask)
        throw InvariantError("dataset manifest: anomalous image '" + e.image_id + "' has no mask");
      if (s == Split::train_normal && e.mask)
        throw InvariantError("dataset manifest: training image '" + e.image_id + "' has a mask");
    }
  }
}

namespace {

std::vector<DatasetEntry> parse_entries(const nlohmann::json& j, const fs::path& source) {
  std::vector<DatasetEntry> out;
  if (j.is_null()) return out;
  if (!j.is_array()) throw FormatError("split entries must be an array in " + source.string());
  for (const auto& item : j) {
    DatasetEntry e;
    e.image_id = item.at("image_id").get<std::string>();
    for (const auto& [tag, p] : item.at("bundles").items()) e.bundles[tag] = p.get<std::string>();
    if (item.contains("mask") && !item["mask"].is_null()) e.mask = item["mask"].get<std::string>();
    out.push_back(std::move(e));
  }
  return out;
}

nlohmann::json entries_json(const std::vector<DatasetEntry>& entries) {
  auto arr = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json item;
    item["image_id"] = e.image_id;
    nlohmann::json bundles = nlohmann::json::object();
    for (const auto& [tag, p] : e.bundles) bundles[tag] = p.generic_string();
    item["bundles"] = bundles;
    if (e.mask) item["mask"] = e.mask->generic_string();
    arr.push_back(std::move(item));
  }
  return arr;
}

}  // namespace

DatasetManifest load_dataset(const fs::path& manifest_path,
                             const std::optional<fs::path>& root_override) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open dataset manifest: " + manifest_path.string());
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.image_height = j.at("image_height").get<int>();
    m.image_width = j.at("image_width").get<int>();
    const auto& splits = j.at("splits");
    m.train_normal = parse_entries(splits.value("train_normal", nlohmann::json()), manifest_path);
    m.test_normal = parse_entries(splits.value("test_normal", nlohmann::json()), manifest_path);
    m.test_anomalous = parse_entries(splits.value("test_anomalous", nlohmann::json()), manifest_path);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed dataset manifest " + manifest_path.string() + ": " + e.what());
  }
  m.root = root_override ? *root_override : manifest_path.parent_path();
  m.validate();
  return m;
}

void save_dataset(const DatasetManifest& m, const fs::path& manifest_path) {
  m.validate();
  nlohmann::json j;
  j["image_height"] = m.image_height;
  j["image_width"] = m.image_width;
  j["splits"]["train_normal"] = entries_json(m.train_normal);
  j["splits"]["test_normal"] = entries_json(m.test_normal);
  j["splits"]["test_anomalous"] = entries_json(m.test_anomalous);
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw IoError("cannot write dataset manifest: " + manifest_path.string());
  out << j.dump(2) << '\n';
}

}  // namespace tricue
