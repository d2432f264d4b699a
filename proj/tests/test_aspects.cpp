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

#include <filesystem>

#include "makd/aspects.hpp"
#include "makd/error.hpp"
#include "makd/util.hpp"

using namespace makd;
using namespace makd::aspects;

namespace {

QuestionSet ranked_set(std::size_t n, std::size_t q) {
  const std::vector<std::string> classes{"sedan", "roadster", "pickup"};
  QuestionSet s;
  s.dataset_id = "unit";
  s.classes = classes;
  s.all_questions = offline_generate(classes, n);
  return select_in_order(s, q);
}

}  // namespace

TEST_CASE("generation prompt follows the template") {
  const std::vector<std::string> classes{"cat", "dog"};
  const auto p = build_generation_prompt(classes, 100, 100);
  CHECK(p.system == "You are a good question maker.");
  CHECK(p.instruction.find("consists of 2 classes and 100 images") != std::string::npos);
  CHECK(p.instruction.find("[cat, dog]") != std::string::npos);
  CHECK(p.instruction.find("Generate 100 feature-specific Yes or No questions") !=
        std::string::npos);
  const auto one = build_generation_prompt(classes, 100, 1);
  CHECK(one.instruction.find("Generate 1 feature-specific") != std::string::npos);
  const auto again = build_generation_prompt(classes, 100, 100);
  CHECK(again.system == p.system);
  CHECK(again.instruction == p.instruction);
  const std::vector<std::string> none;
  CHECK_THROWS_AS(build_generation_prompt(none, 1, 1), DomainError);
  CHECK_THROWS_AS(build_generation_prompt(classes, 1, 0), DomainError);
}

TEST_CASE("selection prompt follows the template") {
  const auto qs = ranked_set(100, 50).all_questions;
  const auto p = build_selection_prompt(qs, 50);
  CHECK(p.rfind("Select 50 of the most relevant and distinct questions", 0) == 0);
  CHECK(p.find("100. ") != std::string::npos);
  CHECK(build_selection_prompt(qs, 10).find("Select 10") != std::string::npos);
  CHECK_NOTHROW(build_selection_prompt(qs, qs.size()));
  CHECK_THROWS_AS(build_selection_prompt(qs, qs.size() + 1), DomainError);
  CHECK(build_selection_prompt(qs, 10) == build_selection_prompt(qs, 10));
}

TEST_CASE("question lists parse from numbered and bulleted text") {
  const auto two = parse_question_list(
      "1. Does the car have a convertible roof?\n2. Is the car a roadster model?");
  REQUIRE(two.size() == 2);
  CHECK(two[0].text == "Does the car have a convertible roof?");
  CHECK(two[1].text == "Is the car a roadster model?");
  CHECK(two[0].id == 0);
  CHECK(two[1].id == 1);

  const auto bullet = parse_question_list("- Does the animal have floppy ears?");
  REQUIRE(bullet.size() == 1);
  CHECK(bullet[0].text == "Does the animal have floppy ears?");

  const auto mixed = parse_question_list(
      "Here are the questions:\n\n1) Is it red?\n* **Is it large?**\nQ3: is it red?\n"
      "Thanks!\n");
  REQUIRE(mixed.size() == 2);
  CHECK(mixed[1].text == "Is it large?");

  CHECK_THROWS_AS(parse_question_list(""), ParseError);
  try {
    parse_question_list("no questions here");
    FAIL("expected a parse failure");
  } catch (const ParseError& e) {
    CHECK(e.raw() == "no questions here");
  }
}

TEST_CASE("parse and serialize round-trip") {
  const auto qs = offline_generate(std::vector<std::string>{"owl", "hawk"}, 30);
  const auto text = serialize_question_list(qs);
  const auto back = parse_question_list(text);
  REQUIRE(back.size() == qs.size());
  for (std::size_t i = 0; i < qs.size(); ++i) {
    CHECK(back[i].id == qs[i].id);
    CHECK(back[i].text == qs[i].text);
  }
  CHECK(serialize_question_list(back) == text);
}

TEST_CASE("offline generation is deterministic and yields distinct questions") {
  const std::vector<std::string> classes{"owl", "hawk", "crow"};
  const auto a = offline_generate(classes, 100);
  CHECK(a == offline_generate(classes, 100));
  CHECK(a.size() == 100);
  QuestionSet s;
  s.classes = classes;
  s.all_questions = a;
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("top-k selection keeps the rank prefix") {
  const auto s = ranked_set(100, 50);
  const auto top = select_top(s, 10);
  REQUIRE(top.selected.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(top.selected[i] == s.selected[i]);
    CHECK(top.question(top.selected[i]).rank == i + 1);
  }
  CHECK(select_top(s, 50) == s);
  CHECK(select_top(select_top(s, 30), 10) == select_top(s, 10));
  CHECK(select_top(top, 10) == top);
  CHECK_THROWS_AS(select_top(s, 51), DomainError);
}

TEST_CASE("selection responses define the rank order") {
  auto s = ranked_set(20, 0);
  const auto& qs = s.all_questions;
  const std::string response = "1. " + qs[7].text + "\n2. Is this unrelated?\n3. " + qs[2].text +
                               "\n4. " + qs[7].text + "\n5. " + qs[11].text + "\n";
  const auto picked = apply_selection(s, response, 3);
  CHECK(picked.selected == std::vector<std::uint64_t>{7, 2, 11});
  CHECK(picked.question(7).rank == 1u);
  CHECK(picked.question(11).rank == 3u);
  CHECK_FALSE(picked.question(0).rank.has_value());
  CHECK_THROWS_AS(apply_selection(s, response, 4), ParseError);
}

TEST_CASE("selection digests identify the selection") {
  const auto s = ranked_set(40, 20);
  CHECK(s.digest() == ranked_set(40, 20).digest());
  CHECK(s.digest() != select_top(s, 10).digest());
  auto edited = s;
  edited.all_questions[0].text = "Is this different?";
  CHECK(s.digest() != edited.digest());
}

TEST_CASE("question sets validate their invariants") {
  auto s = ranked_set(10, 5);
  CHECK_NOTHROW(s.validate());
  auto dup = s;
  dup.selected.push_back(dup.selected[0]);
  CHECK_THROWS_AS(dup.validate(), DomainError);
  auto missing = s;
  missing.selected.push_back(999);
  CHECK_THROWS_AS(missing.validate(), DomainError);
  auto notq = s;
  notq.all_questions[3].text = "A statement.";
  CHECK_THROWS_AS(notq.validate(), DomainError);
  CHECK_THROWS_AS(s.question(12345), DomainError);
}

TEST_CASE("question sets persist and reload") {
  const auto dir = std::filesystem::temp_directory_path() / "makd_test_aspects";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  auto s = ranked_set(25, 10);
  s.all_questions[4].provenance = {"some-model", "abc123"};
  save_question_set(s, dir / "q.json");
  CHECK(load_question_set(dir / "q.json") == s);
  util::write_text_file(dir / "bad.json", "{\"format\": \"other\"}");
  CHECK_THROWS_AS(load_question_set(dir / "bad.json"), FormatError);
  util::write_text_file(dir / "junk.json", "not json");
  CHECK_THROWS_AS(load_question_set(dir / "junk.json"), FormatError);
  std::filesystem::remove_all(dir);
}
