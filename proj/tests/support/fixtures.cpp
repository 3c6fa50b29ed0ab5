#include "fixtures.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "idiolens/error.hpp"
#include "idiolens/text.hpp"
#include "synthetic.hpp"

namespace idiolens::testkit {

using nlohmann::json;

std::vector<LabelerCase> load_labeler_cases() {
  const auto path = fixture_dir() / "labeler_cases.jsonl";
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::vector<LabelerCase> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    LabelerCase c;
    c.name = j["name"];
    c.sentence.id = c.name;
    c.sentence.idiom_id = c.name;
    c.sentence.tokens = j["tokens"].get<std::vector<std::string>>();
    c.sentence.pie_word_indices = j["pie_word_indices"].get<std::vector<int>>();
    c.sentence.keyword_indices = j["keyword_indices"].get<std::vector<int>>();
    for (const auto& [kw, lits] : j["lexicon"].items())
      for (const auto& l : lits) c.lexicon.add(kw, l.get<std::string>());
    c.translation.sentence_id = c.name;
    c.translation.target_tokens = split_whitespace(j["translation"].get<std::string>());
    c.expected = parse_label3(j["label3"].get<std::string>());
    if (j.contains("matched_keyword")) c.keyword = j["matched_keyword"].get<std::string>();
    if (j.contains("matched_target")) c.target = j["matched_target"].get<std::string>();
    out.push_back(std::move(c));
  }
  return out;
}

std::string check_labeler_case(const LabelerCase& c) {
  const TranslationLabel got = label_translation(c.sentence, c.translation, c.lexicon);
  std::string miss;
  if (got.label3 != c.expected)
    miss += "label " + std::string(to_string(got.label3)) + " != " + std::string(to_string(c.expected)) + "; ";
  if (got.label2 != merge(c.expected)) miss += "two-way label; ";
  if (c.keyword && got.matched_keyword != c.keyword) miss += "matched keyword; ";
  if (c.target && got.matched_target != c.target) miss += "matched target; ";
  return miss;
}

}  // namespace idiolens::testkit
