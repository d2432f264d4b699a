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

#include "makd/model.hpp"

#include <cmath>

#include "binio.hpp"
#include "makd/error.hpp"
#include "makd/util.hpp"

namespace makd::model {

using numerics::ComputationRecord;
using numerics::Node;
using numerics::Rng;
using numerics::Tensor;

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw DomainError("unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "sigmoid";
}

namespace {

void validate(const ModelConfig& c) {
  if (c.input_dim == 0) throw DomainError("model input_dim must be positive");
  if (c.num_classes == 0) throw DomainError("model needs at least one class");
  for (auto h : c.hidden_dims)
    if (h == 0) throw DomainError("zero-width hidden layer");
}

// Units are initialized one output column at a time so that appending aspect
// units to the final layer leaves the class units' draws untouched.
Layer init_layer(std::size_t fan_in, std::size_t fan_out, double gain, std::uint64_t seed) {
  Layer layer{Tensor::matrix(fan_in, fan_out), Tensor::matrix(1, fan_out)};
  Rng rng(seed);
  const double bound = std::sqrt(gain / static_cast<double>(fan_in));
  for (std::size_t j = 0; j < fan_out; ++j)
    for (std::size_t k = 0; k < fan_in; ++k) layer.weight.at(k, j) = rng.uniform(-bound, bound);
  return layer;
}

}  // namespace

Model Model::build(const ModelConfig& config) {
  validate(config);
  std::vector<Layer> layers;
  std::size_t fan_in = config.input_dim;
  std::uint64_t index = 0;
  for (auto h : config.hidden_dims) {
    layers.push_back(init_layer(fan_in, h, 6.0, numerics::derive_seed(config.init_seed, index++)));
    fan_in = h;
  }
  layers.push_back(
      init_layer(fan_in, config.output_dim(), 3.0, numerics::derive_seed(config.init_seed, index)));
  return Model(config, std::move(layers));
}

ComputationRecord Model::make_record() const {
  ComputationRecord rec;
  Node h = rec.input("batch");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto tag = std::to_string(l);
    Node w = rec.input("weight" + tag);
    Node b = rec.input("bias" + tag);
    h = rec.add(rec.matmul(h, w), b);
    if (l + 1 < layers_.size())
      h = config_.activation == Activation::kRelu ? rec.relu(h) : rec.sigmoid(h);
  }
  rec.set_output(h);
  return rec;
}

std::vector<Tensor> Model::record_inputs(const Tensor& batch) const {
  std::vector<Tensor> in;
  in.reserve(1 + 2 * layers_.size());
  in.push_back(batch);
  for (const auto& l : layers_) {
    in.push_back(l.weight);
    in.push_back(l.bias);
  }
  return in;
}

Tensor Model::predict(const Tensor& batch) const {
  if (batch.rank() != 2 || batch.cols() != config_.input_dim)
    throw ShapeError("predict: batch shape " + numerics::shape_string(batch.shape()) +
                     " does not match input_dim " + std::to_string(config_.input_dim));
  auto rec = make_record();
  const auto inputs = record_inputs(batch);
  return rec.forward(inputs);
}

std::vector<std::size_t> Model::predict_classes(const Tensor& batch) const {
  const auto logits = predict(batch);
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = logits.row(i).first(config_.num_classes);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out[i] = best;
  }
  return out;
}

bool Model::all_finite() const {
  for (const auto& l : layers_)
    if (!l.weight.all_finite() || !l.bias.all_finite()) return false;
  return true;
}

namespace {
constexpr std::string_view kCheckpointMagic = "MAKDCKPT";
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

namespace {

detail::BinaryWriter serialize(const Model& model) {
  detail::BinaryWriter w;
  const auto& c = model.config();
  w.magic(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u64(c.input_dim);
  w.u64(c.hidden_dims.size());
  for (auto h : c.hidden_dims) w.u64(h);
  w.u64(c.num_classes);
  w.u64(c.num_aspects);
  w.str(activation_name(c.activation));
  w.u64(c.init_seed);
  for (const auto& l : model.layers()) {
    w.f64s(l.weight.values());
    w.f64s(l.bias.values());
  }
  return w;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  serialize(model).commit(path);
}

std::string checkpoint_digest(const Model& model) {
  const auto w = serialize(model);
  return util::sha256_hex(std::string_view(w.buffer().data(), w.buffer().size()));
}

Model load_checkpoint(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic(kCheckpointMagic);
  if (const auto v = r.u32(); v != kCheckpointVersion)
    throw FormatError(r.path() + ": unsupported checkpoint version " + std::to_string(v));
  ModelConfig c;
  c.input_dim = r.u64();
  const auto nh = r.u64();
  if (nh > 1024) throw FormatError(r.path() + ": implausible layer count");
  c.hidden_dims.clear();
  for (std::uint64_t i = 0; i < nh; ++i) c.hidden_dims.push_back(r.u64());
  c.num_classes = r.u64();
  c.num_aspects = r.u64();
  c.activation = parse_activation(r.str());
  c.init_seed = r.u64();
  validate(c);
  std::vector<Layer> layers;
  std::size_t fan_in = c.input_dim;
  auto dims = c.hidden_dims;
  dims.push_back(c.output_dim());
  for (auto fan_out : dims) {
    Layer l{Tensor({fan_in, fan_out}, r.f64s(fan_in * fan_out)),
            Tensor({1, fan_out}, r.f64s(fan_out))};
    layers.push_back(std::move(l));
    fan_in = fan_out;
  }
  r.expect_end();
  return Model(std::move(c), std::move(layers));
}

}  // namespace makd::model
