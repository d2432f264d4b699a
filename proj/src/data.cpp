/*
Copyright 2026 The makd Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#include "makd/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "binio.hpp"
#include "makd/error.hpp"
#include "makd/util.hpp"

namespace makd::data {

using nlohmann::json;
using numerics::Rng;
using numerics::Tensor;

std::string split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  throw DomainError("unknown split '" + name + "'");
}

std::string latent_mode_name(LatentMode m) { return m == LatentMode::kClass ? "class" : "evidence"; }

LatentMode parse_latent_mode(const std::string& name) {
  if (name == "class") return LatentMode::kClass;
  if (name == "evidence") return LatentMode::kEvidence;
  throw DomainError("unknown latent mode '" + name + "'");
}

void SyntheticConfig::validate() const {
  if (num_classes == 0) throw DomainError("synthetic: num_classes must be positive");
  if (num_attributes == 0) throw DomainError("synthetic: num_attributes must be positive");
  if (feature_dim < num_attributes)
    throw DomainError(fmt::format("synthetic: feature_dim {} < attributes {}", feature_dim,
                                  num_attributes));
  if (num_attributes < 63 && (std::uint64_t{1} << num_attributes) < num_classes)
    throw DomainError("synthetic: too few attributes for distinct class codes");
  if (train_per_class == 0 || test_per_class == 0)
    throw DomainError("synthetic: per-class sample counts must be positive");
  if (!(noise_sigma >= 0.0)) throw DomainError("synthetic: noise sigma must be non-negative");
  if (!(prototype_scale > 0.0)) throw DomainError("synthetic: prototype scale must be positive");
}

void DatasetManifest::validate() const {
  if (class_names.empty()) throw DomainError("manifest has no classes");
  std::set<std::string> ids;
  for (const auto& im : images) {
    if (!ids.insert(im.id).second) throw DomainError("duplicate image id " + im.id);
    if (im.label >= class_names.size())
      throw DomainError(fmt::format("image {} label {} out of range", im.id, im.label));
  }
  if (latents && latents->rows() != images.size())
    throw ShapeError("latent matrix rows != image count");
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.images.size(); ++i)
    if (manifest.images[i].split == split) out.push_back(i);
  return out;
}

Tensor Dataset::gather_features(std::span<const std::size_t> rows) const {
  if (rows.empty()) throw ShapeError("gather_features: no rows requested");
  const auto f = feature_dim();
  Tensor out = Tensor::matrix(rows.size(), f);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = features.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

std::vector<std::size_t> Dataset::gather_labels(std::span<const std::size_t> rows) const {
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(manifest.images[r].label);
  return out;
}

std::vector<std::string> Dataset::gather_ids(std::span<const std::size_t> rows) const {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(manifest.images[r].id);
  return out;
}

Dataset generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  const std::size_t c = config.num_classes, k = config.num_attributes, f = config.feature_dim;

  Rng rng(config.seed);
  // attribute directions
  Tensor directions = Tensor::matrix(k, f);
  for (std::size_t a = 0; a < k; ++a) {
    double norm = 0.0;
    for (std::size_t d = 0; d < f; ++d) {
      directions.at(a, d) = rng.normal();
      norm += directions.at(a, d) * directions.at(a, d);
    }
    norm = std::sqrt(norm);
    for (std::size_t d = 0; d < f; ++d) directions.at(a, d) /= norm;
  }

  // distinct class codes
  Tensor codes = Tensor::matrix(c, k);
  std::set<std::vector<double>> used;
  for (std::size_t cls = 0; cls < c; ++cls) {
    std::vector<double> bits(k);
    do {
      for (auto& b : bits) b = rng.bernoulli(0.5) ? 1.0 : 0.0;
    } while (!used.insert(bits).second);
    std::copy(bits.begin(), bits.end(), codes.row(cls).begin());
  }

  Tensor prototypes = Tensor::matrix(c, f);
  for (std::size_t cls = 0; cls < c; ++cls)
    for (std::size_t a = 0; a < k; ++a)
      if (codes.at(cls, a) > 0.5)
        for (std::size_t d = 0; d < f; ++d)
          prototypes.at(cls, d) += config.prototype_scale * directions.at(a, d);

  Dataset ds;
  auto& m = ds.manifest;
  // every generator parameter feeds the id, so stores never outlive a changed config
  const auto key = fmt::format("{} {} {} {} {} {} {} {} {}", c, k, f, config.train_per_class,
                               config.test_per_class, util::format_double(config.prototype_scale),
                               util::format_double(config.noise_sigma),
                               latent_mode_name(config.latent_mode), config.seed);
  m.dataset_id = fmt::format("synthetic-c{}-k{}-s{}-{}", c, k, config.seed,
                             util::sha256_hex(key).substr(0, 12));
  for (std::size_t cls = 0; cls < c; ++cls) m.class_names.push_back(fmt::format("species_{:02}", cls));

  const std::size_t total = c * (config.train_per_class + config.test_per_class);
  std::vector<double> feats;
  feats.reserve(total * f);
  Tensor latents = Tensor::matrix(total, k);
  std::size_t row = 0;
  for (Split split : {Split::kTrain, Split::kTest}) {
    const std::size_t per = split == Split::kTrain ? config.train_per_class : config.test_per_class;
    for (std::size_t cls = 0; cls < c; ++cls) {
      // one noise stream per (split, class)
      Rng noise(numerics::derive_seed(config.seed, 1 + 2 * cls + (split == Split::kTest ? 1 : 0)));
      for (std::size_t s = 0; s < per; ++s, ++row) {
        m.images.push_back(ImageRecord{fmt::format("img_{:06}", row), split, cls, {}});
        std::vector<double> eps(f);
        for (auto& e : eps) e = config.noise_sigma * noise.normal();
        for (std::size_t d = 0; d < f; ++d) feats.push_back(prototypes.at(cls, d) + eps[d]);
        for (std::size_t a = 0; a < k; ++a) {
          double v = codes.at(cls, a);
          if (config.latent_mode == LatentMode::kEvidence) {
            double proj = 0.0;
            for (std::size_t d = 0; d < f; ++d) proj += eps[d] * directions.at(a, d);
            v += proj / config.prototype_scale;
          }
          latents.at(row, a) = v;
        }
      }
    }
  }
  ds.features = Tensor({total, f}, std::move(feats));
  m.latents = std::move(latents);
  m.class_attributes = std::move(codes);
  return ds;
}

Dataset subsample_train(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw DomainError("subsample fraction must be in (0, 1]");
  const std::size_t c = dataset.num_classes();
  std::vector<std::vector<std::size_t>> per_class(c);
  for (auto i : dataset.indices(Split::kTrain)) per_class[dataset.manifest.images[i].label].push_back(i);

  std::vector<bool> keep(dataset.num_images(), false);
  for (auto i : dataset.indices(Split::kTest)) keep[i] = true;
  for (std::size_t cls = 0; cls < c; ++cls) {
    const auto& members = per_class[cls];
    if (members.empty()) continue;
    const auto n = static_cast<std::size_t>(
        std::floor(fraction * static_cast<double>(members.size()) + 1e-9));
    if (n == 0)
      throw DomainError(fmt::format("subsample: class {} has no training images at fraction {}",
                                    dataset.manifest.class_names[cls], fraction));
    Rng rng(numerics::derive_seed(seed, cls));
    const auto order = rng.permutation(members.size());
    for (std::size_t j = 0; j < n; ++j) keep[members[order[j]]] = true;
  }

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) rows.push_back(i);
  if (rows.size() == dataset.num_images()) return dataset;

  Dataset out;
  out.manifest = dataset.manifest;
  out.manifest.images.clear();
  for (auto r : rows) out.manifest.images.push_back(dataset.manifest.images[r]);
  if (dataset.manifest.latents) {
    const auto k = dataset.manifest.latents->cols();
    Tensor lat = Tensor::matrix(rows.size(), k);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto src = dataset.manifest.latents->row(rows[i]);
      std::copy(src.begin(), src.end(), lat.row(i).begin());
    }
    out.manifest.latents = std::move(lat);
  }
  out.features = dataset.gather_features(rows);
  return out;
}

namespace {

constexpr std::string_view kMatrixMagic = "MAKDMATX";
constexpr std::uint32_t kMatrixVersion = 1;
constexpr std::string_view kManifestFormat = "makd.manifest";
constexpr int kManifestVersion = 1;

json matrix_to_json(const Tensor& t) {
  json rows = json::array();
  for (std::size_t r = 0; r < t.rows(); ++r)
    rows.push_back(std::vector<double>(t.row(r).begin(), t.row(r).end()));
  return rows;
}

Tensor matrix_from_json(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty() || rows.front().empty()) throw FormatError("empty matrix in manifest");
  std::vector<double> flat;
  for (const auto& r : rows) {
    if (r.size() != rows.front().size()) throw FormatError("ragged matrix in manifest");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), rows.front().size()}, std::move(flat));
}

}  // namespace

void save_matrix(const Tensor& m, const std::filesystem::path& path) {
  detail::BinaryWriter w;
  w.magic(kMatrixMagic);
  w.u32(kMatrixVersion);
  w.u64(m.rows());
  w.u64(m.cols());
  w.f64s(m.values());
  w.commit(path);
}

Tensor load_matrix(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic(kMatrixMagic);
  if (r.u32() != kMatrixVersion) throw FormatError(r.path() + ": unsupported matrix version");
  const auto rows = r.u64();
  const auto cols = r.u64();
  if (rows == 0 || cols == 0) throw FormatError(r.path() + ": empty matrix");
  auto values = r.f64s(rows * cols);
  r.expect_end();
  return Tensor({rows, cols}, std::move(values));
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  const auto& m = dataset.manifest;
  m.validate();
  std::filesystem::create_directories(dir);
  json j;
  j["format"] = kManifestFormat;
  j["version"] = kManifestVersion;
  j["dataset_id"] = m.dataset_id;
  j["class_names"] = m.class_names;
  j["features_file"] = m.features_file;
  j["feature_dim"] = dataset.feature_dim();
  j["images"] = json::array();
  for (const auto& im : m.images) {
    json e{{"id", im.id}, {"split", split_name(im.split)}, {"label", im.label}};
    if (!im.path.empty()) e["path"] = im.path;
    j["images"].push_back(std::move(e));
  }
  if (m.latents) j["latents"] = matrix_to_json(*m.latents);
  if (m.class_attributes) j["class_attributes"] = matrix_to_json(*m.class_attributes);
  util::write_text_file(dir / "manifest.json", j.dump(1) + "\n");
  save_matrix(dataset.features, dir / m.features_file);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  json j;
  try {
    j = json::parse(util::read_text_file(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kManifestFormat) throw FormatError(path.string() + ": not a manifest");
  if (j.value("version", 0) != kManifestVersion)
    throw FormatError(path.string() + ": unsupported manifest version");
  Dataset ds;
  auto& m = ds.manifest;
  try {
    m.dataset_id = j.at("dataset_id").get<std::string>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.features_file = j.at("features_file").get<std::string>();
    for (const auto& e : j.at("images")) {
      ImageRecord im;
      im.id = e.at("id").get<std::string>();
      im.split = parse_split(e.at("split").get<std::string>());
      im.label = e.at("label").get<std::size_t>();
      im.path = e.value("path", "");
      m.images.push_back(std::move(im));
    }
    if (j.contains("latents")) m.latents = matrix_from_json(j.at("latents"));
    if (j.contains("class_attributes")) m.class_attributes = matrix_from_json(j.at("class_attributes"));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  m.validate();
  ds.features = load_matrix(dir / m.features_file);
  if (ds.features.rows() != m.images.size())
    throw FormatError(path.string() + ": feature rows do not match image count");
  if (j.contains("feature_dim") && j["feature_dim"].get<std::size_t>() != ds.features.cols())
    throw FormatError(path.string() + ": feature_dim does not match the feature file");
  return ds;
}

}  // namespace makd::data
