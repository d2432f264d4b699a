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

namespace makd::aspects {

struct Provenance {
  std::string generator;      // e.g. "offline-template" or the LLM model name
  std::string prompt_digest;  // sha256 of the prompt that produced the question
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

// One yes/no question about a visual, categorical or environmental aspect.
struct AspectQuestion {
  std::uint64_t id = 0;
  std::string text;
  std::optional<std::uint32_t> rank;  // 1 = most relevant
  Provenance provenance;
  friend bool operator==(const AspectQuestion&, const AspectQuestion&) = default;
};

// N candidate questions plus the ranked selection of Q of them. The order of
// `selected` is the rank order; prefixes of it give the top-k subsets.
struct QuestionSet {
  std::string dataset_id;
  std::vector<std::string> classes;
  std::vector<AspectQuestion> all_questions;
  std::vector<std::uint64_t> selected;

  std::size_t num_selected() const noexcept { return selected.size(); }
  const AspectQuestion& question(std::uint64_t id) const;
  std::vector<AspectQuestion> selected_questions() const;
  // Identity of the selection (ids and texts in rank order). Annotation stores
  // record it so targets built for one selection are never reused for another.
  std::string digest() const;
  void validate() const;

  friend bool operator==(const QuestionSet&, const QuestionSet&) = default;
};

struct Prompt {
  std::string system;
  std::string instruction;
};

Prompt build_generation_prompt(std::span<const std::string> classes, std::size_t num_images,
                               std::size_t num_questions);
std::string build_selection_prompt(std::span<const AspectQuestion> questions, std::size_t count);

// Parses a numbered or bulleted list of questions. Lines that are not
// questions are dropped, duplicates (case/whitespace-insensitive) keep the
// first occurrence, and ids are assigned 0.. in order.
std::vector<AspectQuestion> parse_question_list(std::string_view raw_text,
                                                const Provenance& provenance = {});
// "1. text" per line; the inverse of parse_question_list.
std::string serialize_question_list(std::span<const AspectQuestion> questions);

// Keeps the first k selected questions in rank order.
QuestionSet select_top(const QuestionSet& set, std::size_t k);

// Ranks `set.all_questions` by the order in which they appear in an LLM's
// selection response and keeps the first `count` matches. Response lines that
// match no candidate are ignored.
QuestionSet apply_selection(const QuestionSet& set, std::string_view response_text,
                            std::size_t count);

// Selection without an LLM: the first `count` candidates in generation order.
QuestionSet select_in_order(const QuestionSet& set, std::size_t count);

// Deterministic template generator used for tests and air-gapped runs.
std::vector<AspectQuestion> offline_generate(std::span<const std::string> classes,
                                             std::size_t num_questions);

void save_question_set(const QuestionSet& set, const std::filesystem::path& path);
QuestionSet load_question_set(const std::filesystem::path& path);

}  // namespace makd::aspects
