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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "makd/aspects.hpp"
#include "makd/data.hpp"
#include "makd/error.hpp"
#include "makd/tensor.hpp"

namespace makd::annotate {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Store

struct AspectAnnotation {
  std::string image_id;
  std::uint64_t question_id = 0;
  double z_yes = 0.0;
  double z_no = 0.0;
  double q = 0.5;
  bool imputed = false;
};

class StaleStoreError : public Error {
 public:
  using Error::Error;
};

// Dense M x Q matrix of aspect targets for one (dataset, question selection)
// pair, with the raw yes/no logits and a completion bitmap so that partially
// annotated stores can be resumed.
class AnnotationStore {
 public:
  AnnotationStore() = default;
  AnnotationStore(std::string dataset_id, std::string question_digest,
                  std::vector<std::string> image_ids, std::vector<std::uint64_t> question_ids);

  const std::string& dataset_id() const noexcept { return dataset_id_; }
  const std::string& question_digest() const noexcept { return question_digest_; }
  const std::vector<std::string>& image_ids() const noexcept { return image_ids_; }
  const std::vector<std::uint64_t>& question_ids() const noexcept { return question_ids_; }
  std::size_t num_images() const noexcept { return image_ids_.size(); }
  std::size_t num_questions() const noexcept { return question_ids_.size(); }

  // Records an annotation from a yes/no logit pair; q is derived from them.
  void set_logits(std::size_t image, std::size_t question, double z_yes, double z_no,
                  bool imputed = false);
  void set(const AspectAnnotation& a);

  double q(std::size_t image, std::size_t question) const;
  bool done(std::size_t image, std::size_t question) const;
  bool imputed(std::size_t image, std::size_t question) const;
  AspectAnnotation annotation(std::size_t image, std::size_t question) const;
  std::size_t completed() const noexcept;
  bool complete() const noexcept { return completed() == image_ids_.size() * question_ids_.size(); }

  std::optional<std::size_t> image_index(const std::string& id) const;
  // Rows of q for the given image ids, in that order. Throws when an image is
  // unknown or not fully annotated.
  numerics::Tensor targets_for(std::span<const std::string> ids) const;

  // Throws StaleStoreError unless the store was built for this selection.
  void check_matches(const aspects::QuestionSet& questions, const std::string& dataset_id) const;

  void save(const std::filesystem::path& path) const;
  static AnnotationStore load(const std::filesystem::path& path);

  // Bitwise on the stored doubles so unfilled (NaN) entries compare equal.
  friend bool operator==(const AnnotationStore& a, const AnnotationStore& b);

 private:
  std::size_t flat(std::size_t image, std::size_t question) const;

  std::string dataset_id_;
  std::string question_digest_;
  std::vector<std::string> image_ids_;
  std::vector<std::uint64_t> question_ids_;
  std::vector<double> q_;
  std::vector<double> z_yes_;
  std::vector<double> z_no_;
  std::vector<std::uint8_t> done_;
  std::vector<std::uint8_t> imputed_;
};

// ---------------------------------------------------------------------------
// Endpoint protocol (chat completions with per-token log-probabilities)

struct RetryPolicy {
  std::size_t max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
};

struct EndpointConfig {
  std::string base_url;  // e.g. https://host/v1
  std::string model;
  std::string api_key_env = "MAKD_API_KEY";
  std::size_t max_concurrent = 4;
  RetryPolicy retry;
  std::size_t top_logprobs = 5;
  std::chrono::seconds timeout{120};

  void validate() const;
};

class EndpointError : public Error {
 public:
  using Error::Error;
};

class ExtractionError : public Error {
 public:
  ExtractionError(const std::string& what, std::string response_digest)
      : Error(what + " (response " + response_digest + ")"), digest_(std::move(response_digest)) {}
  const std::string& response_digest() const noexcept { return digest_; }

 private:
  std::string digest_;
};

// Anything that turns a chat-completion request into a response. Must be
// safe to call from several threads at once.
class ChatEndpoint {
 public:
  virtual ~ChatEndpoint() = default;
  virtual Json complete(const Json& request) = 0;
};

// OpenAI-compatible HTTP endpoint; POSTs to <base_url>/chat/completions with a
// bearer token read from the configured environment variable.
class HttpChatEndpoint final : public ChatEndpoint {
 public:
  explicit HttpChatEndpoint(EndpointConfig config);
  Json complete(const Json& request) override;

 private:
  EndpointConfig config_;
};

// Image bytes plus MIME type; either loaded from a file or given in memory.
struct ImageRef {
  std::string id;
  std::filesystem::path path;
  std::vector<unsigned char> bytes;
  std::string mime;
};

inline constexpr std::string_view kAnswerInstruction = "Answer with exactly one word: yes or no.";

// data:<mime>;base64,... URI; throws DomainError when the image cannot be read
// or its type is not a supported raster format.
std::string encode_image(const ImageRef& image);

Json build_aspect_query(const ImageRef& image, const aspects::AspectQuestion& question,
                        const EndpointConfig& config);

struct YesNoLogits {
  double z_yes = 0.0;
  double z_no = 0.0;
  bool imputed = false;
};

// Reads the first answer token's candidate log-probabilities. Surface forms
// match case-insensitively after trimming; several variants of the same word
// are pooled with log-sum-exp. A missing word is imputed as
// (smallest candidate log-probability - 10).
YesNoLogits extract_yes_no_logits(const Json& response);

// Candidate (token, logprob) list of the first generated token.
std::vector<std::pair<std::string, double>> first_token_candidates(const Json& response);

// Letter labels A, B, ..., Z, AA, AB, ... for a multiple-choice class query.
std::string choice_label(std::size_t index);
Json build_class_query(const ImageRef& image, std::span<const std::string> classes,
                       const EndpointConfig& config);
struct ClassLogits {
  std::vector<double> logits;
  std::size_t imputed = 0;
};
ClassLogits extract_class_logits_from_response(const Json& response, std::size_t num_classes);
ClassLogits extract_class_logits(const ImageRef& image, std::span<const std::string> classes,
                                 ChatEndpoint& endpoint, const EndpointConfig& config);

// ---------------------------------------------------------------------------
// Dataset annotation

struct FailedPair {
  std::string image_id;
  std::uint64_t question_id = 0;
  std::string error;
};

struct AnnotateReport {
  AnnotationStore store;
  std::size_t endpoint_calls = 0;
  std::size_t annotated = 0;  // pairs written during this run
  std::vector<FailedPair> failed;
  bool complete() const noexcept { return failed.empty() && store.complete(); }
};

struct AnnotateOptions {
  std::size_t flush_every = 64;  // completions between store checkpoints
};

std::vector<ImageRef> image_refs(const data::Dataset& dataset, const std::filesystem::path& root);

// Annotates every (image, selected question) pair that the store at
// `store_path` does not already hold. The store is re-written periodically and
// at exit, so an interrupted or failed run can be resumed. After a pair
// exhausts its retries no new pairs are dispatched.
AnnotateReport annotate_dataset(const std::string& dataset_id, std::span<const ImageRef> images,
                                const aspects::QuestionSet& questions, ChatEndpoint& endpoint,
                                const EndpointConfig& config,
                                const std::filesystem::path& store_path,
                                const AnnotateOptions& options = {});

// ---------------------------------------------------------------------------
// Synthetic oracle

struct LinearProbe {
  std::vector<double> weights;  // one per latent attribute
  double bias = 0.0;
};

struct OracleSpec {
  std::vector<LinearProbe> probes;  // one per selected question, in rank order
  double logit_scale = 3.0;
  double noise_rate = 0.0;  // probability of replacing q by 1 - q
  std::uint64_t noise_seed = 0;

  void validate(std::size_t num_attributes) const;
};

// Question r probes attribute r (weight 1, bias -1/2) while r < K; later
// questions probe the conjunction of two seeded attributes.
OracleSpec default_oracle(std::size_t num_attributes, std::size_t num_questions,
                          double logit_scale, double noise_rate, std::uint64_t seed);

// q = sigmoid(s * (w . latents + b)); a noisy answer flips the sign of the
// yes-logit. Deterministic given the spec.
AnnotationStore oracle_annotate(const data::Dataset& dataset,
                                const aspects::QuestionSet& questions, const OracleSpec& spec);

}  // namespace makd::annotate
