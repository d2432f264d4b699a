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

#include "makd/annotate.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "binio.hpp"
#include "makd/losses.hpp"
#include "makd/util.hpp"

namespace makd::annotate {

using numerics::Tensor;

// ---------------------------------------------------------------------------
// AnnotationStore

AnnotationStore::AnnotationStore(std::string dataset_id, std::string question_digest,
                                 std::vector<std::string> image_ids,
                                 std::vector<std::uint64_t> question_ids)
    : dataset_id_(std::move(dataset_id)),
      question_digest_(std::move(question_digest)),
      image_ids_(std::move(image_ids)),
      question_ids_(std::move(question_ids)) {
  const auto n = image_ids_.size() * question_ids_.size();
  q_.assign(n, 0.0);
  z_yes_.assign(n, std::numeric_limits<double>::quiet_NaN());
  z_no_.assign(n, std::numeric_limits<double>::quiet_NaN());
  done_.assign(n, 0);
  imputed_.assign(n, 0);
}

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) {
           return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
         });
}

}  // namespace

bool operator==(const AnnotationStore& a, const AnnotationStore& b) {
  return a.dataset_id_ == b.dataset_id_ && a.question_digest_ == b.question_digest_ &&
         a.image_ids_ == b.image_ids_ && a.question_ids_ == b.question_ids_ &&
         same_bits(a.q_, b.q_) && same_bits(a.z_yes_, b.z_yes_) &&
         same_bits(a.z_no_, b.z_no_) && a.done_ == b.done_ && a.imputed_ == b.imputed_;
}

std::size_t AnnotationStore::flat(std::size_t image, std::size_t question) const {
  if (image >= image_ids_.size() || question >= question_ids_.size())
    throw DomainError(fmt::format("annotation index ({}, {}) out of range", image, question));
  return image * question_ids_.size() + question;
}

void AnnotationStore::set_logits(std::size_t image, std::size_t question, double z_yes,
                                 double z_no, bool imputed) {
  const auto i = flat(image, question);
  q_[i] = losses::yes_no_probability(z_yes, z_no);
  z_yes_[i] = z_yes;
  z_no_[i] = z_no;
  done_[i] = 1;
  imputed_[i] = imputed ? 1 : 0;
}

void AnnotationStore::set(const AspectAnnotation& a) {
  const auto img = image_index(a.image_id);
  if (!img) throw DomainError("unknown image id " + a.image_id);
  const auto it = std::find(question_ids_.begin(), question_ids_.end(), a.question_id);
  if (it == question_ids_.end()) throw DomainError(fmt::format("unknown question id {}", a.question_id));
  set_logits(*img, static_cast<std::size_t>(it - question_ids_.begin()), a.z_yes, a.z_no, a.imputed);
}

double AnnotationStore::q(std::size_t image, std::size_t question) const {
  return q_[flat(image, question)];
}

bool AnnotationStore::done(std::size_t image, std::size_t question) const {
  return done_[flat(image, question)] != 0;
}

bool AnnotationStore::imputed(std::size_t image, std::size_t question) const {
  return imputed_[flat(image, question)] != 0;
}

AspectAnnotation AnnotationStore::annotation(std::size_t image, std::size_t question) const {
  const auto i = flat(image, question);
  return AspectAnnotation{image_ids_[image], question_ids_[question], z_yes_[i], z_no_[i], q_[i],
                          imputed_[i] != 0};
}

std::size_t AnnotationStore::completed() const noexcept {
  return static_cast<std::size_t>(std::count(done_.begin(), done_.end(), std::uint8_t{1}));
}

std::optional<std::size_t> AnnotationStore::image_index(const std::string& id) const {
  // Stores are written in manifest order, which keeps ids sorted for the
  // synthetic generator; fall back to a scan otherwise.
  auto it = std::lower_bound(image_ids_.begin(), image_ids_.end(), id);
  if (it != image_ids_.end() && *it == id) return static_cast<std::size_t>(it - image_ids_.begin());
  it = std::find(image_ids_.begin(), image_ids_.end(), id);
  if (it == image_ids_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - image_ids_.begin());
}

Tensor AnnotationStore::targets_for(std::span<const std::string> ids) const {
  if (ids.empty() || question_ids_.empty())
    throw ShapeError("targets_for: empty image or question list");
  Tensor out = Tensor::matrix(ids.size(), question_ids_.size());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto img = image_index(ids[r]);
    if (!img) throw DomainError("annotation store has no image " + ids[r]);
    for (std::size_t j = 0; j < question_ids_.size(); ++j) {
      if (!done(*img, j))
        throw DomainError(fmt::format("annotation for image {} question {} is missing", ids[r],
                                      question_ids_[j]));
      out.at(r, j) = q(*img, j);
    }
  }
  return out;
}

void AnnotationStore::check_matches(const aspects::QuestionSet& questions,
                                    const std::string& dataset_id) const {
  if (dataset_id != dataset_id_)
    throw StaleStoreError("annotation store belongs to dataset '" + dataset_id_ + "', not '" +
                          dataset_id + "'");
  if (questions.digest() != question_digest_ || questions.selected != question_ids_)
    throw StaleStoreError("annotation store was built for a different question selection");
}

namespace {
constexpr std::string_view kStoreMagic = "MAKDANNS";
constexpr std::uint32_t kStoreVersion = 1;

std::vector<std::uint8_t> pack_bits(const std::vector<std::uint8_t>& flags) {
  std::vector<std::uint8_t> out((flags.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (flags[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  return out;
}

std::vector<std::uint8_t> unpack_bits(const std::vector<std::uint8_t>& bits, std::size_t n) {
  std::vector<std::uint8_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (bits[i / 8] >> (i % 8)) & 1u;
  return out;
}
}  // namespace

void AnnotationStore::save(const std::filesystem::path& path) const {
  detail::BinaryWriter w;
  w.magic(kStoreMagic);
  w.u32(kStoreVersion);
  w.str(dataset_id_);
  w.str(question_digest_);
  w.u64(image_ids_.size());
  w.u64(question_ids_.size());
  for (const auto& id : image_ids_) w.str(id);
  for (auto id : question_ids_) w.u64(id);
  w.f64s(q_);
  w.f64s(z_yes_);
  w.f64s(z_no_);
  const auto done_bits = pack_bits(done_);
  const auto imputed_bits = pack_bits(imputed_);
  w.bytes(done_bits.data(), done_bits.size());
  w.bytes(imputed_bits.data(), imputed_bits.size());
  w.commit(path);
}

AnnotationStore AnnotationStore::load(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic(kStoreMagic);
  if (const auto v = r.u32(); v != kStoreVersion)
    throw FormatError(r.path() + ": unsupported annotation store version " + std::to_string(v));
  AnnotationStore s;
  s.dataset_id_ = r.str();
  s.question_digest_ = r.str();
  const auto m = r.u64();
  const auto q = r.u64();
  if (m > (1ull << 32) || q > (1ull << 20)) throw FormatError(r.path() + ": implausible header");
  for (std::uint64_t i = 0; i < m; ++i) s.image_ids_.push_back(r.str());
  for (std::uint64_t j = 0; j < q; ++j) s.question_ids_.push_back(r.u64());
  const auto n = static_cast<std::size_t>(m * q);
  s.q_ = r.f64s(n);
  s.z_yes_ = r.f64s(n);
  s.z_no_ = r.f64s(n);
  std::vector<std::uint8_t> bits((n + 7) / 8);
  r.bytes(bits.data(), bits.size());
  s.done_ = unpack_bits(bits, n);
  r.bytes(bits.data(), bits.size());
  s.imputed_ = unpack_bits(bits, n);
  r.expect_end();
  for (std::size_t i = 0; i < n; ++i)
    if (s.done_[i] && !(s.q_[i] >= 0.0 && s.q_[i] <= 1.0))
      throw FormatError(r.path() + ": stored aspect target outside [0,1]");
  return s;
}

// ---------------------------------------------------------------------------
// Endpoint

void EndpointConfig::validate() const {
  if (max_concurrent < 1) throw DomainError("endpoint max_concurrent must be >= 1");
  if (retry.max_attempts < 1) throw DomainError("endpoint retry max_attempts must be >= 1");
  if (top_logprobs < 5) throw DomainError("endpoint top_logprobs must be >= 5");
}

HttpChatEndpoint::HttpChatEndpoint(EndpointConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.base_url.empty()) throw DomainError("endpoint base_url is empty");
}

Json HttpChatEndpoint::complete(const Json& request) {
  // split "scheme://host[:port]" from the path prefix
  const auto scheme_end = config_.base_url.find("://");
  if (scheme_end == std::string::npos) throw DomainError("endpoint base_url needs a scheme");
  const auto path_start = config_.base_url.find('/', scheme_end + 3);
  const std::string origin = config_.base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client client(origin);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = client.Post(prefix + "/chat/completions", headers, request.dump(), "application/json");
  if (!res) throw EndpointError("request failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw EndpointError(fmt::format("endpoint returned HTTP {}", res->status));
  try {
    return Json::parse(res->body);
  } catch (const Json::exception& e) {
    throw EndpointError(std::string("malformed endpoint response: ") + e.what());
  }
}

std::string encode_image(const ImageRef& image) {
  std::vector<unsigned char> bytes = image.bytes;
  std::string mime = image.mime;
  if (bytes.empty()) {
    if (image.path.empty()) throw DomainError("image " + image.id + " has no file or payload");
    std::ifstream is(image.path, std::ios::binary);
    if (!is) throw DomainError("cannot read image " + image.path.string());
    bytes.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    if (bytes.empty()) throw DomainError("image file is empty: " + image.path.string());
  }
  if (mime.empty()) {
    const auto ext = util::to_lower(image.path.extension().string());
    if (ext == ".png") mime = "image/png";
    else if (ext == ".jpg" || ext == ".jpeg") mime = "image/jpeg";
    else if (ext == ".webp") mime = "image/webp";
    else if (ext == ".gif") mime = "image/gif";
    else throw DomainError("unsupported image type for " + image.id);
  }
  return "data:" + mime + ";base64," + util::base64_encode(bytes);
}

namespace {

Json user_turn(const ImageRef& image, const std::string& text) {
  return Json{{"role", "user"},
              {"content", Json::array({Json{{"type", "image_url"},
                                            {"image_url", Json{{"url", encode_image(image)}}}},
                                       Json{{"type", "text"}, {"text", text}}})}};
}

Json single_token_request(const EndpointConfig& config, Json messages) {
  return Json{{"model", config.model},
              {"messages", std::move(messages)},
              {"max_tokens", 1},
              {"temperature", 0},
              {"logprobs", true},
              {"top_logprobs", config.top_logprobs}};
}

std::string response_digest(const Json& response) {
  return util::sha256_hex(response.dump()).substr(0, 16);
}

double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

Json build_aspect_query(const ImageRef& image, const aspects::AspectQuestion& question,
                        const EndpointConfig& config) {
  const auto text = util::trim(question.text);
  if (text.empty()) throw DomainError("aspect query needs a non-empty question");
  return single_token_request(
      config, Json::array({user_turn(image, text + " " + std::string(kAnswerInstruction))}));
}

std::vector<std::pair<std::string, double>> first_token_candidates(const Json& response) {
  std::vector<std::pair<std::string, double>> out;
  try {
    const auto& logprobs = response.at("choices").at(0).at("logprobs");
    if (logprobs.contains("content")) {
      const auto& first = logprobs.at("content").at(0);
      if (first.contains("token") && first.contains("logprob"))
        out.emplace_back(first.at("token").get<std::string>(), first.at("logprob").get<double>());
      for (const auto& c : first.value("top_logprobs", Json::array()))
        out.emplace_back(c.at("token").get<std::string>(), c.at("logprob").get<double>());
    } else {
      // legacy completions shape: top_logprobs[0] is a token -> logprob object
      for (const auto& [tok, lp] : logprobs.at("top_logprobs").at(0).items())
        out.emplace_back(tok, lp.get<double>());
    }
  } catch (const Json::exception& e) {
    throw ExtractionError(std::string("response carries no token log-probabilities: ") + e.what(),
                          response_digest(response));
  }
  return out;
}

namespace {

// Pools every candidate whose normalized form equals `word`, skipping exact
// duplicates of a (token, logprob) pair.
std::optional<double> pooled(const std::vector<std::pair<std::string, double>>& cands,
                             std::string_view word, bool case_insensitive) {
  std::optional<double> acc;
  std::vector<std::string> seen;
  for (const auto& [tok, lp] : cands) {
    const auto norm = case_insensitive ? util::to_lower(util::trim(tok)) : util::trim(tok);
    if (norm != word) continue;
    if (std::find(seen.begin(), seen.end(), tok) != seen.end()) continue;
    seen.push_back(tok);
    acc = acc ? log_sum_exp(*acc, lp) : lp;
  }
  return acc;
}

double min_logprob(const std::vector<std::pair<std::string, double>>& cands) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& c : cands) m = std::min(m, c.second);
  return m;
}

}  // namespace

YesNoLogits extract_yes_no_logits(const Json& response) {
  const auto cands = first_token_candidates(response);
  auto yes = pooled(cands, "yes", true);
  auto no = pooled(cands, "no", true);
  if (!yes && !no)
    throw ExtractionError("neither 'yes' nor 'no' among the answer candidates",
                          response_digest(response));
  YesNoLogits r;
  const double floor = min_logprob(cands) - 10.0;
  r.imputed = !yes || !no;
  r.z_yes = yes.value_or(floor);
  r.z_no = no.value_or(floor);
  return r;
}

std::string choice_label(std::size_t index) {
  std::string s;
  ++index;
  while (index > 0) {
    --index;
    s.insert(s.begin(), static_cast<char>('A' + index % 26));
    index /= 26;
  }
  return s;
}

Json build_class_query(const ImageRef& image, std::span<const std::string> classes,
                       const EndpointConfig& config) {
  if (classes.empty()) throw DomainError("class query needs a non-empty class list");
  std::string text = "Which of the following classes best describes the image?\n";
  for (std::size_t i = 0; i < classes.size(); ++i)
    text += fmt::format("{}. {}\n", choice_label(i), classes[i]);
  text += "Answer with exactly one letter.";
  return single_token_request(config, Json::array({user_turn(image, text)}));
}

ClassLogits extract_class_logits_from_response(const Json& response, std::size_t num_classes) {
  if (num_classes == 0) throw DomainError("class logit extraction needs at least one class");
  const auto cands = first_token_candidates(response);
  ClassLogits out;
  out.logits.assign(num_classes, 0.0);
  std::vector<std::optional<double>> found(num_classes);
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto label = util::to_lower(choice_label(c));
    found[c] = pooled(cands, label, true);
    if (found[c]) ++present;
  }
  if (present == 0)
    throw ExtractionError("no class label among the answer candidates", response_digest(response));
  const double floor = min_logprob(cands) - 10.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    out.logits[c] = found[c].value_or(floor);
    if (!found[c]) ++out.imputed;
  }
  return out;
}

ClassLogits extract_class_logits(const ImageRef& image, std::span<const std::string> classes,
                                 ChatEndpoint& endpoint, const EndpointConfig& config) {
  const auto request = build_class_query(image, classes, config);
  return extract_class_logits_from_response(endpoint.complete(request), classes.size());
}

// ---------------------------------------------------------------------------
// annotate_dataset

std::vector<ImageRef> image_refs(const data::Dataset& dataset, const std::filesystem::path& root) {
  std::vector<ImageRef> out;
  for (const auto& im : dataset.manifest.images) {
    ImageRef ref;
    ref.id = im.id;
    if (!im.path.empty()) {
      std::filesystem::path p(im.path);
      ref.path = p.is_absolute() ? p : root / p;
    }
    out.push_back(std::move(ref));
  }
  return out;
}

AnnotateReport annotate_dataset(const std::string& dataset_id, std::span<const ImageRef> images,
                                const aspects::QuestionSet& questions, ChatEndpoint& endpoint,
                                const EndpointConfig& config,
                                const std::filesystem::path& store_path,
                                const AnnotateOptions& options) {
  config.validate();
  questions.validate();
  const auto selected = questions.selected_questions();

  AnnotateReport report;
  if (std::filesystem::exists(store_path)) {
    report.store = AnnotationStore::load(store_path);
    report.store.check_matches(questions, dataset_id);
    if (report.store.num_images() != images.size())
      throw StaleStoreError("annotation store image list differs from the dataset");
    for (std::size_t i = 0; i < images.size(); ++i)
      if (report.store.image_ids()[i] != images[i].id)
        throw StaleStoreError("annotation store image list differs from the dataset");
  } else {
    std::vector<std::string> ids;
    for (const auto& im : images) ids.push_back(im.id);
    report.store = AnnotationStore(dataset_id, questions.digest(), std::move(ids), questions.selected);
  }

  std::vector<std::pair<std::size_t, std::size_t>> pending;
  for (std::size_t i = 0; i < images.size(); ++i)
    for (std::size_t j = 0; j < selected.size(); ++j)
      if (!report.store.done(i, j)) pending.emplace_back(i, j);

  std::mutex mu;  // guards store, counters, failures and file writes
  std::atomic<std::size_t> next{0};
  std::atomic<bool> halt{false};
  std::size_t since_flush = 0;

  auto worker = [&] {
    while (!halt.load()) {
      const auto k = next.fetch_add(1);
      if (k >= pending.size()) return;
      const auto [img, qn] = pending[k];
      std::string last_error;
      std::optional<YesNoLogits> result;
      for (std::size_t attempt = 0; attempt < config.retry.max_attempts && !result; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(config.retry.initial_backoff * (1 << (attempt - 1)));
        try {
          const auto request = build_aspect_query(images[img], selected[qn], config);
          {
            std::lock_guard lock(mu);
            ++report.endpoint_calls;
          }
          result = extract_yes_no_logits(endpoint.complete(request));
        } catch (const DomainError& e) {
          last_error = e.what();  // not retryable
          break;
        } catch (const std::exception& e) {
          last_error = e.what();
        }
      }
      std::lock_guard lock(mu);
      if (result) {
        report.store.set_logits(img, qn, result->z_yes, result->z_no, result->imputed);
        ++report.annotated;
        if (++since_flush >= options.flush_every) {
          report.store.save(store_path);
          since_flush = 0;
        }
      } else {
        report.failed.push_back(FailedPair{images[img].id, selected[qn].id, last_error});
        halt.store(true);
      }
    }
  };

  const auto n_workers = std::min(config.max_concurrent, pending.size());
  if (n_workers <= 1) {
    if (!pending.empty()) worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  report.store.save(store_path);
  return report;
}

// ---------------------------------------------------------------------------
// Oracle

void OracleSpec::validate(std::size_t num_attributes) const {
  if (!(logit_scale > 0.0)) throw DomainError("oracle logit scale must be positive");
  if (!(noise_rate >= 0.0 && noise_rate < 0.5 + 1e-12))
    throw DomainError("oracle noise rate must lie in [0, 0.5]");
  for (const auto& p : probes)
    if (p.weights.size() != num_attributes)
      throw DomainError(fmt::format("oracle probe has {} weights for {} attributes",
                                    p.weights.size(), num_attributes));
}

OracleSpec default_oracle(std::size_t num_attributes, std::size_t num_questions,
                          double logit_scale, double noise_rate, std::uint64_t seed) {
  if (num_attributes == 0) throw DomainError("oracle needs at least one latent attribute");
  OracleSpec spec;
  spec.logit_scale = logit_scale;
  spec.noise_rate = noise_rate;
  spec.noise_seed = numerics::derive_seed(seed, 0x6e6f697365);
  numerics::Rng rng(numerics::derive_seed(seed, 0x70726f6265));
  for (std::size_t r = 0; r < num_questions; ++r) {
    LinearProbe p{std::vector<double>(num_attributes, 0.0), -0.5};
    if (r < num_attributes) {
      p.weights[r] = 1.0;
    } else {
      const auto a = static_cast<std::size_t>(rng.below(num_attributes));
      auto b = static_cast<std::size_t>(rng.below(num_attributes));
      if (num_attributes > 1)
        while (b == a) b = static_cast<std::size_t>(rng.below(num_attributes));
      p.weights[a] += 1.0;
      p.weights[b] += 1.0;
      p.bias = -1.5;
    }
    spec.probes.push_back(std::move(p));
  }
  return spec;
}

AnnotationStore oracle_annotate(const data::Dataset& dataset,
                                const aspects::QuestionSet& questions, const OracleSpec& spec) {
  const auto& latents = dataset.manifest.latents;
  if (!latents) throw DomainError("oracle annotation needs a dataset with latent attributes");
  spec.validate(latents->cols());
  if (spec.probes.size() != questions.num_selected())
    throw DomainError(fmt::format("oracle has {} probes for {} selected questions",
                                  spec.probes.size(), questions.num_selected()));
  std::vector<std::string> ids;
  for (const auto& im : dataset.manifest.images) ids.push_back(im.id);
  AnnotationStore store(dataset.manifest.dataset_id, questions.digest(), ids, questions.selected);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    // the noise stream is keyed by image id so subsampling does not reshuffle it
    const auto key = std::stoull(util::sha256_hex(ids[i]).substr(0, 15), nullptr, 16);
    numerics::Rng noise(numerics::derive_seed(spec.noise_seed, key));
    const auto a = latents->row(i);
    for (std::size_t j = 0; j < spec.probes.size(); ++j) {
      const auto& p = spec.probes[j];
      double s = p.bias;
      for (std::size_t k = 0; k < a.size(); ++k) s += p.weights[k] * a[k];
      double z = spec.logit_scale * s;
      const bool flip = noise.uniform() < spec.noise_rate;
      if (flip) z = -z;
      store.set_logits(i, j, z, 0.0);
    }
  }
  return store;
}

}  // namespace makd::annotate
