#pragma once

#include <optional>
#include <string>
#include <vector>

#include "idiolens/labeler.hpp"

namespace idiolens::testkit {

struct LabelerCase {
  std::string name;
  PieSentence sentence;
  LiteralLexicon lexicon;
  TranslationRecord translation;
  Label3 expected = Label3::paraphrase;
  std::optional<std::string> keyword, target;
};

/// fixtures/labeler_cases.jsonl
std::vector<LabelerCase> load_labeler_cases();

/// Empty when the labeler reproduces the case, else a description of the miss.
std::string check_labeler_case(const LabelerCase& c);

}  // namespace idiolens::testkit
