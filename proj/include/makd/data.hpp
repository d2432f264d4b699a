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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "makd/tensor.hpp"

namespace makd::data {

enum class Split { kTrain, kTest };

// What the per-image latent attributes record. kClass: the class's bit vector.
// kEvidence: that bit vector plus the sample's noise projected on each
// attribute direction (divided by the prototype scale), i.e. how strongly the
// attribute shows in this particular image. Identical when sigma = 0.
enum class LatentMode { kClass, kEvidence };

std::string latent_mode_name(LatentMode m);
LatentMode parse_latent_mode(const std::string& name);

std::string split_name(Split s);
Split parse_split(const std::string& name);

// Desk-scale fine-grained benchmark. Each class owns a distinct K-bit
// attribute vector; each attribute is a fixed random unit direction in feature
// space; a sample is prototype_scale * (sum of its class's active directions)
// plus isotropic Gaussian noise.
struct SyntheticConfig {
  std::size_t num_classes = 20;
  std::size_t num_attributes = 12;
  std::size_t feature_dim = 32;
  std::size_t train_per_class = 40;
  std::size_t test_per_class = 50;
  double prototype_scale = 1.5;
  double noise_sigma = 0.8;
  LatentMode latent_mode = LatentMode::kEvidence;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ImageRecord {
  std::string id;
  Split split = Split::kTrain;
  std::size_t label = 0;  // 0-based class index
  std::string path;       // optional image file for endpoint annotation
  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct DatasetManifest {
  std::string dataset_id;
  std::vector<std::string> class_names;
  std::vector<ImageRecord> images;
  std::string features_file = "features.bin";
  // Synthetic only: per-image latent attribute bits (M x K) and the per-class
  // attribute table (C x K). Never part of the model input.
  std::optional<numerics::Tensor> latents;
  std::optional<numerics::Tensor> class_attributes;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  void validate() const;
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct Dataset {
  DatasetManifest manifest;
  numerics::Tensor features;  // M x feature_dim, row i belongs to manifest.images[i]

  std::size_t num_images() const noexcept { return manifest.images.size(); }
  std::size_t feature_dim() const { return features.cols(); }
  std::size_t num_classes() const noexcept { return manifest.num_classes(); }

  std::vector<std::size_t> indices(Split split) const;
  numerics::Tensor gather_features(std::span<const std::size_t> rows) const;
  std::vector<std::size_t> gather_labels(std::span<const std::size_t> rows) const;
  std::vector<std::string> gather_ids(std::span<const std::size_t> rows) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

Dataset generate_synthetic(const SyntheticConfig& config);

// Stratified per-class subsample of the train split; the test split is kept.
// Each class keeps floor(fraction * n_c) of its train images (a 1e-9 guard
// absorbs binary rounding, so 0.6 * 40 keeps 24). For a fixed seed the kept
// sets are nested across fractions.
Dataset subsample_train(const Dataset& dataset, double fraction, std::uint64_t seed);

// Directory layout: manifest.json + the features file named in the manifest.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Flat binary matrix with a shape header.
void save_matrix(const numerics::Tensor& m, const std::filesystem::path& path);
numerics::Tensor load_matrix(const std::filesystem::path& path);

}  // namespace makd::data
