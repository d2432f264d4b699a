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

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "makd/data.hpp"
#include "makd/error.hpp"
#include "makd/model.hpp"
#include "makd/train.hpp"
#include "makd/util.hpp"

using namespace makd;
using namespace makd::data;
using numerics::Tensor;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("makd_test_data_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::map<std::size_t, std::size_t> train_counts(const Dataset& d) {
  std::map<std::size_t, std::size_t> n;
  for (auto i : d.indices(Split::kTrain)) ++n[d.manifest.images[i].label];
  return n;
}

std::set<std::string> train_ids(const Dataset& d) {
  std::set<std::string> ids;
  for (auto i : d.indices(Split::kTrain)) ids.insert(d.manifest.images[i].id);
  return ids;
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
  SyntheticConfig c;
  c.seed = 12;
  CHECK(generate_synthetic(c) == generate_synthetic(c));
  auto other = c;
  other.seed = 13;
  CHECK_FALSE(generate_synthetic(c).features == generate_synthetic(other).features);
  CHECK(generate_synthetic(c).manifest.dataset_id != generate_synthetic(other).manifest.dataset_id);
  auto noisier = c;
  noisier.noise_sigma = 0.9;
  CHECK(generate_synthetic(c).manifest.dataset_id !=
        generate_synthetic(noisier).manifest.dataset_id);
}

TEST_CASE("default benchmark shape") {
  const auto d = generate_synthetic(SyntheticConfig{});
  CHECK(d.num_classes() == 20);
  CHECK(d.feature_dim() == 32);
  CHECK(d.indices(Split::kTrain).size() == 20 * 40);
  CHECK(d.indices(Split::kTest).size() == 20 * 50);
  REQUIRE(d.manifest.class_attributes.has_value());
  REQUIRE(d.manifest.latents.has_value());
  CHECK(d.manifest.latents->shape() == numerics::Shape{d.num_images(), 12});
  CHECK(d.features.all_finite());
  std::set<std::vector<double>> codes;
  for (std::size_t c = 0; c < 20; ++c) {
    const auto row = d.manifest.class_attributes->row(c);
    codes.emplace(row.begin(), row.end());
  }
  CHECK(codes.size() == 20);
}

TEST_CASE("noiseless classes are separable by their prototypes") {
  SyntheticConfig c;
  c.noise_sigma = 0.0;
  c.seed = 3;
  const auto d = generate_synthetic(c);
  std::vector<std::vector<double>> proto(c.num_classes);
  for (auto i : d.indices(Split::kTrain)) {
    const auto label = d.manifest.images[i].label;
    if (proto[label].empty()) proto[label].assign(d.features.row(i).begin(), d.features.row(i).end());
  }
  std::size_t correct = 0;
  const auto test = d.indices(Split::kTest);
  for (auto i : test) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < proto.size(); ++k) {
      double dist = 0.0;
      for (std::size_t f = 0; f < d.feature_dim(); ++f) {
        const double diff = d.features.at(i, f) - proto[k][f];
        dist += diff * diff;
      }
      if (dist < best_d) {
        best_d = dist;
        best = k;
      }
    }
    correct += best == d.manifest.images[i].label;
  }
  CHECK(correct == test.size());
  // With no noise the evidence latents are the class bits.
  for (std::size_t i = 0; i < d.num_images(); ++i)
    for (std::size_t k = 0; k < c.num_attributes; ++k)
      CHECK(d.manifest.latents->at(i, k) ==
            d.manifest.class_attributes->at(d.manifest.images[i].label, k));
}

TEST_CASE("two complementary classes are learned almost perfectly") {
  SyntheticConfig c;
  c.num_classes = 2;
  c.num_attributes = 1;
  c.feature_dim = 8;
  c.train_per_class = 100;
  c.test_per_class = 200;
  c.noise_sigma = 0.2;
  c.seed = 5;
  const auto d = generate_synthetic(c);
  model::ModelConfig mc;
  mc.input_dim = 8;
  mc.hidden_dims = {16};
  mc.num_classes = 2;
  train::TrainConfig tc;
  tc.epochs = 30;
  tc.lr_milestones = train::scaled_milestones(30);
  tc.evaluate_each_epoch = false;
  tc.alpha = 0.0;
  const auto result = train::train(model::Model::build(mc), d, nullptr, tc);
  const auto test = d.indices(Split::kTest);
  const auto pred = result.model.predict_classes(d.gather_features(test));
  const auto labels = d.gather_labels(test);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  CHECK(100.0 * static_cast<double>(correct) / static_cast<double>(pred.size()) >= 99.0);
}

TEST_CASE("latent modes") {
  SyntheticConfig c;
  c.seed = 8;
  c.latent_mode = LatentMode::kClass;
  const auto cls = generate_synthetic(c);
  for (std::size_t i = 0; i < cls.num_images(); ++i)
    for (std::size_t k = 0; k < c.num_attributes; ++k) {
      const double v = cls.manifest.latents->at(i, k);
      CHECK((v == 0.0 || v == 1.0));
    }
  c.latent_mode = LatentMode::kEvidence;
  const auto ev = generate_synthetic(c);
  CHECK(ev.features == cls.features);
  CHECK_FALSE(*ev.manifest.latents == *cls.manifest.latents);
  CHECK(parse_latent_mode(latent_mode_name(LatentMode::kClass)) == LatentMode::kClass);
  CHECK_THROWS_AS(parse_latent_mode("fuzzy"), DomainError);
}

TEST_CASE("invalid configurations are rejected") {
  SyntheticConfig c;
  c.feature_dim = 8;
  c.num_attributes = 12;
  CHECK_THROWS_AS(generate_synthetic(c), DomainError);
  c = SyntheticConfig{};
  c.num_attributes = 3;  // 8 codes for 20 classes
  CHECK_THROWS_AS(generate_synthetic(c), DomainError);
  c = SyntheticConfig{};
  c.noise_sigma = -1.0;
  CHECK_THROWS_AS(generate_synthetic(c), DomainError);
}

TEST_CASE("subsampling counts and identity") {
  SyntheticConfig c;
  c.train_per_class = 100;
  c.test_per_class = 5;
  const auto d = generate_synthetic(c);
  CHECK(subsample_train(d, 1.0, 3) == d);
  const auto sub = subsample_train(d, 0.4, 3);
  for (const auto& [label, n] : train_counts(sub)) CHECK(n == 40);
  CHECK(sub.indices(Split::kTest).size() == d.indices(Split::kTest).size());
  SyntheticConfig small;
  const auto d40 = generate_synthetic(small);
  for (const auto& [label, n] : train_counts(subsample_train(d40, 0.6, 1))) CHECK(n == 24);
  CHECK_THROWS_AS(subsample_train(d, 0.0, 1), DomainError);
  CHECK_THROWS_AS(subsample_train(d, 1.5, 1), DomainError);
  CHECK_THROWS_AS(subsample_train(d, 0.001, 1), DomainError);
}

TEST_CASE("subsamples are nested across fractions") {
  const auto d = generate_synthetic(SyntheticConfig{});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s40 = train_ids(subsample_train(d, 0.4, seed));
    const auto s60 = train_ids(subsample_train(d, 0.6, seed));
    const auto s80 = train_ids(subsample_train(d, 0.8, seed));
    const auto s100 = train_ids(subsample_train(d, 1.0, seed));
    CHECK(std::includes(s60.begin(), s60.end(), s40.begin(), s40.end()));
    CHECK(std::includes(s80.begin(), s80.end(), s60.begin(), s60.end()));
    CHECK(std::includes(s100.begin(), s100.end(), s80.begin(), s80.end()));
  }
}

TEST_CASE("features never include the latent attributes") {
  const auto d = generate_synthetic(SyntheticConfig{});
  CHECK(d.features.cols() == 32);
  CHECK(d.manifest.latents->cols() == 12);
  const auto dir = temp_dir("leak");
  save_dataset(d, dir);
  CHECK(load_matrix(dir / d.manifest.features_file) == d.features);
  std::filesystem::remove_all(dir);
}

TEST_CASE("datasets round-trip through disk") {
  const auto dir = temp_dir("roundtrip");
  SyntheticConfig c;
  c.seed = 21;
  const auto d = generate_synthetic(c);
  save_dataset(d, dir);
  CHECK(load_dataset(dir) == d);

  Tensor m({3, 2}, std::vector<double>{1.5, -0.0, 1e-300, 7, 8, 9});
  save_matrix(m, dir / "m.bin");
  CHECK(load_matrix(dir / "m.bin") == m);

  util::write_text_file(dir / "manifest.json", "{\"format\": \"nope\"}");
  CHECK_THROWS_AS(load_dataset(dir), FormatError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("split names") {
  CHECK(parse_split("train") == Split::kTrain);
  CHECK(split_name(Split::kTest) == "test");
  CHECK_THROWS_AS(parse_split("val"), DomainError);
}
