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

#include "makd/aspects.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "makd/error.hpp"
#include "makd/util.hpp"

namespace makd::aspects {

using nlohmann::json;

namespace {

constexpr std::string_view kFormat = "makd.questions";
constexpr int kVersion = 1;

// whitespace-collapsed, lowercase; used for duplicate detection and matching
std::string normalize(std::string_view text) {
  std::string out;
  bool space = false;
  for (char ch : util::trim(text)) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  return out;
}

bool is_question(std::string_view text) { return !text.empty() && text.back() == '?'; }

}  // namespace

const AspectQuestion& QuestionSet::question(std::uint64_t id) const {
  for (const auto& q : all_questions)
    if (q.id == id) return q;
  throw DomainError("no question with id " + std::to_string(id));
}

std::vector<AspectQuestion> QuestionSet::selected_questions() const {
  std::vector<AspectQuestion> out;
  out.reserve(selected.size());
  for (auto id : selected) out.push_back(question(id));
  return out;
}

std::string QuestionSet::digest() const {
  std::string canon;
  for (auto id : selected) canon += fmt::format("{}\t{}\n", id, question(id).text);
  return util::sha256_hex(canon);
}

void QuestionSet::validate() const {
  std::unordered_set<std::uint64_t> ids;
  for (const auto& q : all_questions) {
    if (!ids.insert(q.id).second) throw DomainError("duplicate question id " + std::to_string(q.id));
    if (!is_question(util::trim(q.text)))
      throw DomainError("question " + std::to_string(q.id) + " is not a yes/no question: '" +
                        q.text + "'");
  }
  std::unordered_set<std::uint64_t> seen;
  for (auto id : selected) {
    if (!ids.count(id)) throw DomainError("selected id " + std::to_string(id) + " not in set");
    if (!seen.insert(id).second) throw DomainError("id " + std::to_string(id) + " selected twice");
  }
}

Prompt build_generation_prompt(std::span<const std::string> classes, std::size_t num_images,
                               std::size_t num_questions) {
  if (classes.empty()) throw DomainError("generation prompt needs a non-empty class list");
  if (num_questions == 0) throw DomainError("generation prompt needs N >= 1");
  std::string list = "[";
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (i) list += ", ";
    list += classes[i];
  }
  list += "]";
  return Prompt{
      "You are a good question maker.",
      fmt::format("The dataset consists of {} classes and {} images. The class list is as "
                  "follows: {}, Generate {} feature-specific Yes or No questions, focusing on "
                  "clear and distinct aspects of the objects in the images in the dataset.",
                  classes.size(), num_images, list, num_questions)};
}

std::string build_selection_prompt(std::span<const AspectQuestion> questions, std::size_t count) {
  if (count > questions.size())
    throw DomainError(fmt::format("cannot select {} of {} questions", count, questions.size()));
  return fmt::format(
      "Select {} of the most relevant and distinct questions from the list, focusing on various "
      "key features that distinguish different class in the dataset.\n\n{}",
      count, serialize_question_list(questions));
}

std::vector<AspectQuestion> parse_question_list(std::string_view raw_text,
                                                const Provenance& provenance) {
  // "1.", "1)", "(1)", "Q1:", "-", "*", "•" markers, optionally wrapped in **bold**
  static const std::regex marker(R"(^\s*(?:[-*+]|\xE2\x80\xA2|\(?[Qq]?\d+[.):]|[Qq]\d+\s*-)?\s*)");
  std::vector<AspectQuestion> out;
  std::unordered_set<std::string> seen;
  for (const auto& line : util::split(raw_text, '\n')) {
    std::string text = std::regex_replace(line, marker, "", std::regex_constants::format_first_only);
    text = util::trim(text);
    while (text.size() >= 2 && (text.front() == '*' || text.front() == '"'))
      text = util::trim(text.substr(1));
    while (!text.empty() && (text.back() == '*' || text.back() == '"'))
      text = util::trim(text.substr(0, text.size() - 1));
    if (!is_question(text)) continue;
    if (!seen.insert(normalize(text)).second) continue;
    out.push_back(AspectQuestion{out.size(), text, std::nullopt, provenance});
  }
  if (out.empty()) throw ParseError("no questions could be parsed from the response", std::string(raw_text));
  return out;
}

std::string serialize_question_list(std::span<const AspectQuestion> questions) {
  std::string out;
  for (std::size_t i = 0; i < questions.size(); ++i)
    out += fmt::format("{}. {}\n", i + 1, questions[i].text);
  return out;
}

QuestionSet select_top(const QuestionSet& set, std::size_t k) {
  if (k > set.selected.size())
    throw DomainError(fmt::format("select_top: k={} exceeds {} selected questions", k,
                                  set.selected.size()));
  QuestionSet out = set;
  out.selected.resize(k);
  return out;
}

namespace {

QuestionSet rank_by_ids(const QuestionSet& set, const std::vector<std::uint64_t>& ranked) {
  QuestionSet out = set;
  for (auto& q : out.all_questions) q.rank.reset();
  out.selected = ranked;
  for (std::size_t r = 0; r < ranked.size(); ++r)
    for (auto& q : out.all_questions)
      if (q.id == ranked[r]) q.rank = static_cast<std::uint32_t>(r + 1);
  return out;
}

}  // namespace

QuestionSet apply_selection(const QuestionSet& set, std::string_view response_text,
                            std::size_t count) {
  if (count > set.all_questions.size())
    throw DomainError(fmt::format("cannot select {} of {} questions", count,
                                  set.all_questions.size()));
  std::unordered_map<std::string, std::uint64_t> by_text;
  for (const auto& q : set.all_questions) by_text.emplace(normalize(q.text), q.id);
  std::vector<std::uint64_t> ranked;
  for (const auto& q : parse_question_list(response_text)) {
    auto it = by_text.find(normalize(q.text));
    if (it == by_text.end()) continue;
    if (std::find(ranked.begin(), ranked.end(), it->second) != ranked.end()) continue;
    ranked.push_back(it->second);
    if (ranked.size() == count) break;
  }
  if (ranked.size() < count)
    throw ParseError(fmt::format("selection response matched only {} of {} requested questions",
                                 ranked.size(), count),
                     std::string(response_text));
  return rank_by_ids(set, ranked);
}

QuestionSet select_in_order(const QuestionSet& set, std::size_t count) {
  if (count > set.all_questions.size())
    throw DomainError(fmt::format("cannot select {} of {} questions", count,
                                  set.all_questions.size()));
  std::vector<std::uint64_t> ids;
  for (std::size_t i = 0; i < count; ++i) ids.push_back(set.all_questions[i].id);
  return rank_by_ids(set, ids);
}

std::vector<AspectQuestion> offline_generate(std::span<const std::string> classes,
                                             std::size_t num_questions) {
  if (classes.empty()) throw DomainError("offline generator needs a non-empty class list");
  static constexpr std::string_view kTokenTemplates[] = {
      "Does the {} in the image have a distinctive color pattern?",
      "Is the {} shown in its natural surroundings?",
      "Does the image show the typical silhouette of a {}?",
      "Is the {} larger than the other objects in the image?",
      "Does the {} have a textured surface?",
  };
  static constexpr std::string_view kGeneric[] = {
      "Is the main object mostly a single color?",
      "Does the object have visible stripes?",
      "Does the object have visible spots?",
      "Is the background of the image plain?",
      "Is the image taken outdoors?",
      "Does the object appear symmetric?",
      "Does the object have a pointed part?",
      "Is the object photographed from the side?",
      "Is there more than one object in the image?",
      "Is the object partly occluded?",
      "Does the object have a glossy surface?",
      "Is the object in motion?",
  };

  std::vector<std::string> tokens;
  std::set<std::string> seen_tokens;
  for (const auto& name : classes) {
    std::string word;
    auto flush = [&] {
      const bool digits = std::all_of(word.begin(), word.end(),
                                      [](unsigned char c) { return std::isdigit(c); });
      if (word.size() >= 3 && !digits && seen_tokens.insert(word).second) tokens.push_back(word);
      word.clear();
    };
    for (char ch : name) {
      if (std::isalnum(static_cast<unsigned char>(ch)))
        word += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      else
        flush();
    }
    flush();
  }

  std::vector<std::string> texts;
  for (auto g : kGeneric) texts.emplace_back(g);
  for (auto tpl : kTokenTemplates)
    for (const auto& t : tokens) texts.push_back(fmt::format(fmt::runtime(tpl), t));
  for (std::size_t k = 1; texts.size() < num_questions; ++k)
    texts.push_back(fmt::format("Does the object show distinguishing detail number {}?", k));

  std::string canon = "offline-template\n";
  for (const auto& c : classes) canon += c + "\n";
  const Provenance prov{"offline-template", util::sha256_hex(canon)};
  std::vector<AspectQuestion> out;
  for (std::size_t i = 0; i < num_questions; ++i)
    out.push_back(AspectQuestion{i, texts[i], std::nullopt, prov});
  return out;
}

void save_question_set(const QuestionSet& set, const std::filesystem::path& path) {
  set.validate();
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["dataset_id"] = set.dataset_id;
  j["classes"] = set.classes;
  j["questions"] = json::array();
  for (const auto& q : set.all_questions) {
    json e;
    e["id"] = q.id;
    e["rank"] = q.rank ? json(*q.rank) : json(nullptr);
    e["text"] = q.text;
    e["generator"] = q.provenance.generator;
    e["prompt_digest"] = q.provenance.prompt_digest;
    j["questions"].push_back(std::move(e));
  }
  j["selected"] = set.selected;
  util::write_text_file(path, j.dump(2) + "\n");
}

QuestionSet load_question_set(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(util::read_text_file(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kFormat) throw FormatError(path.string() + ": not a question set");
  if (j.value("version", 0) != kVersion)
    throw FormatError(path.string() + ": unsupported question set version");
  QuestionSet set;
  try {
    set.dataset_id = j.at("dataset_id").get<std::string>();
    set.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& e : j.at("questions")) {
      AspectQuestion q;
      q.id = e.at("id").get<std::uint64_t>();
      if (!e.at("rank").is_null()) q.rank = e.at("rank").get<std::uint32_t>();
      q.text = e.at("text").get<std::string>();
      q.provenance.generator = e.at("generator").get<std::string>();
      q.provenance.prompt_digest = e.at("prompt_digest").get<std::string>();
      set.all_questions.push_back(std::move(q));
    }
    set.selected = j.at("selected").get<std::vector<std::uint64_t>>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  set.validate();
  return set;
}

}  // namespace makd::aspects
