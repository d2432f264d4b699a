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

#include "makd/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "makd/error.hpp"
#include "makd/util.hpp"

namespace makd::config {

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "data.num_classes",        "data.num_attributes",     "data.feature_dim",
      "data.train_per_class",    "data.test_per_class",     "data.prototype_scale",
      "data.noise_sigma",        "data.seed",   "data.latent_mode",               "model.hidden_dims",
      "model.activation",        "model.init_seed",         "train.epochs",
      "train.batch_size",        "train.base_lr",           "train.lr_milestones",
      "train.lr_decay",          "train.momentum",          "train.weight_decay",
      "train.alpha",             "train.seed",              "train.loss_variant",
      "train.target_source",     "train.kd_temperature",    "train.kd_weight",
      "train.evaluate_each_epoch", "oracle.scale",          "oracle.noise",
      "oracle.seed",             "endpoint.base_url",       "endpoint.model",
      "endpoint.api_key_env",    "endpoint.max_concurrent", "endpoint.max_attempts",
      "endpoint.initial_backoff_ms", "endpoint.top_logprobs", "endpoint.timeout_s",
      "questions.num_candidates", "questions.num_questions", "plan.benchmark_id",
      "plan.seeds",              "plan.jobs",               "plan.teacher_hidden_dims",
      "train.fraction",
  };
  return keys;
}

namespace {

void check_key(const std::string& key) {
  const auto& k = known_keys();
  if (std::find(k.begin(), k.end(), key) == k.end())
    throw DomainError("unknown configuration key '" + key + "'");
}

}  // namespace

Config Config::parse(std::string_view text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(fmt::format("config line {}: {}", e.line(), e.message()), std::string(text));
  }
  Config c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ParseError("config key '" + section + "' is outside any [section]", std::string(text));
    for (const auto& [key, value] : body) c.set(section + "." + key, value.data());
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  return parse(util::read_text_file(path));
}

void Config::set(const std::string& key, const std::string& value) {
  check_key(key);
  entries_[key] = util::trim(value);
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw DomainError("override must look like section.key=value: '" + assignment + "'");
  set(util::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

std::optional<std::string> Config::get(const std::string& key) const {
  check_key(key);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    return util::parse_double(*v);
  } catch (const Error&) {
    throw DomainError(fmt::format("{}: '{}' is not a number", key, *v));
  }
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  const auto* end = v->data() + v->size();
  const auto r = std::from_chars(v->data(), end, out);
  if (r.ec != std::errc{} || r.ptr != end || v->empty())
    throw DomainError(fmt::format("{}: '{}' is not a non-negative integer", key, *v));
  return out;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  const auto s = util::to_lower(*v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw DomainError(fmt::format("{}: '{}' is not a boolean", key, *v));
}

std::vector<std::size_t> Config::get_sizes(const std::string& key,
                                           const std::vector<std::size_t>& fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::vector<std::size_t> out;
  for (const auto& part : util::split(*v, ',')) {
    const auto t = util::trim(part);
    if (t.empty()) continue;
    Config one;
    one.entries_[key] = t;
    out.push_back(one.get_size(key, 0));
  }
  return out;
}

std::string Config::canonical() const {
  std::string s;
  for (const auto& [k, v] : entries_) s += k + "=" + v + "\n";
  return s;
}

std::string Config::digest() const { return util::sha256_hex(canonical()); }

data::SyntheticConfig synthetic_config(const Config& c) {
  data::SyntheticConfig d;
  d.num_classes = c.get_size("data.num_classes", d.num_classes);
  d.num_attributes = c.get_size("data.num_attributes", d.num_attributes);
  d.feature_dim = c.get_size("data.feature_dim", d.feature_dim);
  d.train_per_class = c.get_size("data.train_per_class", d.train_per_class);
  d.test_per_class = c.get_size("data.test_per_class", d.test_per_class);
  d.prototype_scale = c.get_double("data.prototype_scale", d.prototype_scale);
  d.noise_sigma = c.get_double("data.noise_sigma", d.noise_sigma);
  d.latent_mode = data::parse_latent_mode(c.get_string("data.latent_mode", "evidence"));
  d.seed = c.get_u64("data.seed", d.seed);
  d.validate();
  return d;
}

train::TrainConfig train_config(const Config& c) {
  train::TrainConfig t;
  t.epochs = c.get_size("train.epochs", t.epochs);
  t.batch_size = c.get_size("train.batch_size", t.batch_size);
  t.base_lr = c.get_double("train.base_lr", t.base_lr);
  t.lr_milestones = c.get_sizes("train.lr_milestones", train::scaled_milestones(t.epochs));
  t.lr_decay = c.get_double("train.lr_decay", t.lr_decay);
  t.momentum = c.get_double("train.momentum", t.momentum);
  t.weight_decay = c.get_double("train.weight_decay", t.weight_decay);
  t.alpha = c.get_double("train.alpha", t.alpha);
  t.seed = c.get_u64("train.seed", t.seed);
  t.loss_variant = train::parse_loss_variant(c.get_string("train.loss_variant", "bce"));
  t.aspect_target_source = train::parse_target_source(c.get_string("train.target_source", "oracle"));
  t.evaluate_each_epoch = c.get_bool("train.evaluate_each_epoch", t.evaluate_each_epoch);
  t.validate();
  return t;
}

annotate::EndpointConfig endpoint_config(const Config& c) {
  annotate::EndpointConfig e;
  e.base_url = c.get_string("endpoint.base_url", e.base_url);
  e.model = c.get_string("endpoint.model", e.model);
  e.api_key_env = c.get_string("endpoint.api_key_env", e.api_key_env);
  e.max_concurrent = c.get_size("endpoint.max_concurrent", e.max_concurrent);
  e.retry.max_attempts = c.get_size("endpoint.max_attempts", e.retry.max_attempts);
  e.retry.initial_backoff = std::chrono::milliseconds(
      c.get_u64("endpoint.initial_backoff_ms",
                static_cast<std::uint64_t>(e.retry.initial_backoff.count())));
  e.top_logprobs = c.get_size("endpoint.top_logprobs", e.top_logprobs);
  e.timeout = std::chrono::seconds(
      c.get_u64("endpoint.timeout_s", static_cast<std::uint64_t>(e.timeout.count())));
  return e;
}

report::BenchmarkSpec benchmark_spec(const Config& c) {
  auto t = train_config(c);
  report::BenchmarkSpec b = report::default_benchmark(t.epochs);
  b.train = t;
  b.train.evaluate_each_epoch = false;
  b.data = synthetic_config(c);
  b.hidden_dims = c.get_sizes("model.hidden_dims", b.hidden_dims);
  b.activation = model::parse_activation(c.get_string("model.activation", "relu"));
  b.num_questions = c.get_size("questions.num_questions", b.num_questions);
  b.num_candidates = c.get_size("questions.num_candidates", b.num_candidates);
  b.oracle_scale = c.get_double("oracle.scale", b.oracle_scale);
  b.oracle_noise = c.get_double("oracle.noise", b.oracle_noise);
  b.teacher_hidden = c.get_sizes("plan.teacher_hidden_dims", b.teacher_hidden);
  b.kd_temperature = c.get_double("train.kd_temperature", b.kd_temperature);
  b.kd_weight = c.get_double("train.kd_weight", b.kd_weight);
  return b;
}

void write_digest(const Config& c, const std::filesystem::path& dir) {
  util::write_text_file(dir / "config.digest", c.digest() + "\n" + c.canonical());
}

}  // namespace makd::config
