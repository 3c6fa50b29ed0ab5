#include "idiolens/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "idiolens/error.hpp"

namespace idiolens {

using nlohmann::json;

std::string_view to_string(GoldLabel label) noexcept {
  return label == GoldLabel::figurative ? "figurative" : "literal";
}

std::string_view to_string(Label3 label) noexcept {
  switch (label) {
    case Label3::copy: return "copy";
    case Label3::word_for_word: return "word_for_word";
    case Label3::paraphrase: return "paraphrase";
  }
  return "paraphrase";
}

std::string_view to_string(Label2 label) noexcept {
  return label == Label2::word_for_word ? "word_for_word" : "paraphrase";
}

Label3 parse_label3(std::string_view text) {
  if (text == "copy") return Label3::copy;
  if (text == "word_for_word") return Label3::word_for_word;
  if (text == "paraphrase") return Label3::paraphrase;
  fail(ErrorKind::parse, fmt::format("unknown three-way label '{}'", text));
}

Label2 parse_label2(std::string_view text) {
  if (text == "word_for_word") return Label2::word_for_word;
  if (text == "paraphrase") return Label2::paraphrase;
  fail(ErrorKind::parse, fmt::format("unknown two-way label '{}'", text));
}

bool PieSentence::in_pie(int word) const {
  return std::binary_search(pie_word_indices.begin(), pie_word_indices.end(), word);
}

void validate(const PieSentence& s) {
  auto bad = [&](std::string_view field, std::string_view why) {
    fail(ErrorKind::validation, fmt::format("sentence '{}': field {} {}", s.id, field, why));
  };
  if (s.id.empty()) bad("id", "is empty");
  if (s.tokens.empty()) bad("tokens", "is empty");
  const int n = static_cast<int>(s.tokens.size());
  if (s.pie_word_indices.empty()) bad("pie_word_indices", "is empty");
  for (std::size_t i = 0; i < s.pie_word_indices.size(); ++i) {
    const int w = s.pie_word_indices[i];
    if (w < 0 || w >= n) bad("pie_word_indices", fmt::format("has index {} outside [0, {})", w, n));
    if (i > 0 && w <= s.pie_word_indices[i - 1]) bad("pie_word_indices", "is not strictly increasing");
  }
  std::set<int> seen;
  for (int k : s.keyword_indices) {
    if (!s.in_pie(k)) bad("keyword_indices", fmt::format("has index {} outside the PIE", k));
    if (!seen.insert(k).second) bad("keyword_indices", fmt::format("repeats index {}", k));
  }
  seen.clear();
  for (int c : s.context_noun_indices) {
    if (c < 0 || c >= n) bad("context_noun_indices", fmt::format("has index {} outside [0, {})", c, n));
    if (s.in_pie(c)) bad("context_noun_indices", fmt::format("has index {} inside the PIE", c));
    if (!seen.insert(c).second) bad("context_noun_indices", fmt::format("repeats index {}", c));
  }
  if (s.idiom_id.empty()) bad("idiom_id", "is empty");
}

namespace {

const json& require(const json& rec, const char* field) {
  auto it = rec.find(field);
  if (it == rec.end()) fail(ErrorKind::parse, fmt::format("missing field '{}'", field));
  return *it;
}

std::vector<int> int_list(const json& rec, const char* field, bool required) {
  auto it = rec.find(field);
  if (it == rec.end()) {
    if (required) fail(ErrorKind::parse, fmt::format("missing field '{}'", field));
    return {};
  }
  if (!it->is_array()) fail(ErrorKind::parse, fmt::format("field '{}' must be an array", field));
  std::vector<int> out;
  out.reserve(it->size());
  for (const auto& v : *it) {
    if (!v.is_number_integer())
      fail(ErrorKind::parse, fmt::format("field '{}' must hold integers", field));
    out.push_back(v.get<int>());
  }
  return out;
}

std::string string_field(const json& rec, const char* field) {
  const json& v = require(rec, field);
  if (!v.is_string()) fail(ErrorKind::parse, fmt::format("field '{}' must be a string", field));
  return v.get<std::string>();
}

}  // namespace

PieSentence sentence_from_json(const json& rec) {
  if (!rec.is_object()) fail(ErrorKind::parse, "record is not a JSON object");
  PieSentence s;
  s.id = string_field(rec, "id");
  const json& toks = require(rec, "tokens");
  if (!toks.is_array()) fail(ErrorKind::parse, "field 'tokens' must be an array");
  for (const auto& t : toks) {
    if (!t.is_string()) fail(ErrorKind::parse, "field 'tokens' must hold strings");
    s.tokens.push_back(t.get<std::string>());
  }
  s.pie_word_indices = int_list(rec, "pie_word_indices", true);
  s.keyword_indices = int_list(rec, "keyword_indices", true);
  s.context_noun_indices = int_list(rec, "context_noun_indices", false);
  const std::string gold = string_field(rec, "gold_label");
  if (gold == "figurative")
    s.gold_label = GoldLabel::figurative;
  else if (gold == "literal")
    s.gold_label = GoldLabel::literal;
  else
    fail(ErrorKind::parse, fmt::format("field 'gold_label' has unknown value '{}'", gold));
  s.idiom_id = string_field(rec, "idiom_id");
  if (auto it = rec.find("identical_match"); it != rec.end()) {
    if (!it->is_boolean()) fail(ErrorKind::parse, "field 'identical_match' must be a boolean");
    s.identical_match = it->get<bool>();
  }
  return s;
}

json to_json(const PieSentence& s) {
  return json{{"id", s.id},
              {"tokens", s.tokens},
              {"pie_word_indices", s.pie_word_indices},
              {"keyword_indices", s.keyword_indices},
              {"context_noun_indices", s.context_noun_indices},
              {"gold_label", std::string(to_string(s.gold_label))},
              {"idiom_id", s.idiom_id},
              {"identical_match", s.identical_match}};
}

CorpusSet::CorpusSet(std::vector<PieSentence> sentences) : sentences_(std::move(sentences)) {
  for (std::size_t i = 0; i < sentences_.size(); ++i) {
    validate(sentences_[i]);
    if (!index_.emplace(sentences_[i].id, i).second)
      fail(ErrorKind::validation, fmt::format("duplicate sentence id '{}'", sentences_[i].id));
  }
}

const PieSentence* CorpusSet::find(std::string_view id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &sentences_[it->second];
}

std::optional<std::size_t> CorpusSet::index_of(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

CorpusSet parse_corpus(std::istream& in, std::string_view source) {
  std::vector<PieSentence> out;
  std::set<std::string, std::less<>> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    PieSentence s;
    try {
      s = sentence_from_json(json::parse(line));
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, fmt::format("{}:{}: {}", source, lineno, e.what()));
    } catch (const Error& e) {
      fail(e.kind(), fmt::format("{}:{}: {}", source, lineno, e.what()));
    }
    try {
      validate(s);
    } catch (const Error& e) {
      fail(ErrorKind::validation, fmt::format("{}:{}: {}", source, lineno, e.what()));
    }
    if (!ids.insert(s.id).second)
      fail(ErrorKind::validation, fmt::format("{}:{}: duplicate sentence id '{}'", source, lineno, s.id));
    out.push_back(std::move(s));
  }
  return CorpusSet(std::move(out));
}

CorpusSet load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open corpus " + path.string());
  return parse_corpus(in, path.string());
}

std::string corpus_to_jsonl(const CorpusSet& corpus) {
  std::string out;
  for (const auto& s : corpus) {
    out += to_json(s).dump();
    out.push_back('\n');
  }
  return out;
}

std::string_view to_string(SubsetKind kind) noexcept {
  switch (kind) {
    case SubsetKind::all: return "all";
    case SubsetKind::identical: return "identical";
    case SubsetKind::intersection: return "intersection";
    case SubsetKind::length_controlled: return "length_controlled";
  }
  return "all";
}

std::string_view to_string(Category c) noexcept {
  switch (c) {
    case Category::fig: return "fig";
    case Category::lit: return "lit";
    case Category::fig_par: return "fig-par";
    case Category::fig_wfw: return "fig-wfw";
    case Category::lit_par: return "lit-par";
    case Category::lit_wfw: return "lit-wfw";
  }
  return "fig";
}

SubsetKind parse_subset_kind(std::string_view text) {
  if (text == "all") return SubsetKind::all;
  if (text == "identical") return SubsetKind::identical;
  if (text == "intersection") return SubsetKind::intersection;
  if (text == "length_controlled" || text == "length-controlled") return SubsetKind::length_controlled;
  fail(ErrorKind::input, fmt::format("unknown subset filter '{}'", text));
}

Category parse_category(std::string_view text) {
  for (Category c : {Category::fig, Category::lit, Category::fig_par, Category::fig_wfw,
                     Category::lit_par, Category::lit_wfw})
    if (text == to_string(c)) return c;
  fail(ErrorKind::input, fmt::format("unknown category '{}'", text));
}

bool needs_labels(Category c) noexcept { return c != Category::fig && c != Category::lit; }

bool in_category(const PieSentence& s, Category c, const LabelMap* labels) {
  const bool fig = s.gold_label == GoldLabel::figurative;
  if (c == Category::fig) return fig;
  if (c == Category::lit) return !fig;
  if (!labels) fail(ErrorKind::missing_input, fmt::format("category {} requires labels", to_string(c)));
  auto it = labels->find(s.id);
  if (it == labels->end()) return false;
  const bool par = it->second.label2 == Label2::paraphrase;
  switch (c) {
    case Category::fig_par: return fig && par;
    case Category::fig_wfw: return fig && !par;
    case Category::lit_par: return !fig && par;
    case Category::lit_wfw: return !fig && !par;
    default: return false;
  }
}

bool is_length_controlled(const PieSentence& s) {
  return s.pie_word_indices.size() == 3 && s.last_pie() - s.first_pie() == 3;
}

CorpusSet filter_subset(const CorpusSet& corpus, SubsetKind kind, const LabelMap* labels) {
  std::vector<PieSentence> kept;
  switch (kind) {
    case SubsetKind::all:
      kept = corpus.sentences();
      break;
    case SubsetKind::identical:
      for (const auto& s : corpus)
        if (s.identical_match) kept.push_back(s);
      break;
    case SubsetKind::length_controlled:
      for (const auto& s : corpus)
        if (is_length_controlled(s)) kept.push_back(s);
      break;
    case SubsetKind::intersection: {
      if (!labels) fail(ErrorKind::missing_input, "intersection filter requires translation labels");
      // bit per category: fig-par, fig-wfw, lit-par, lit-wfw
      std::map<std::string, unsigned> seen;
      for (const auto& s : corpus) {
        auto it = labels->find(s.id);
        if (it == labels->end()) continue;
        const unsigned bit = (s.gold_label == GoldLabel::figurative ? 0u : 2u) +
                             (it->second.label2 == Label2::paraphrase ? 0u : 1u);
        seen[s.idiom_id] |= 1u << bit;
      }
      for (const auto& s : corpus) {
        if (!labels->count(s.id)) continue;
        if (seen[s.idiom_id] == 0xFu) kept.push_back(s);
      }
      break;
    }
  }
  return CorpusSet(std::move(kept));
}

CorpusSet select_category(const CorpusSet& corpus, Category category, const LabelMap* labels) {
  std::vector<PieSentence> kept;
  for (const auto& s : corpus)
    if (in_category(s, category, labels)) kept.push_back(s);
  return CorpusSet(std::move(kept));
}

LengthStats length_stats(const std::vector<PieSentence>& sentences) {
  if (sentences.empty()) fail(ErrorKind::empty_set, "length statistics over an empty selection");
  LengthStats st;
  for (const auto& s : sentences) {
    const int n = static_cast<int>(s.tokens.size());
    double pos_sum = 0;
    for (int w : s.pie_word_indices) pos_sum += w;
    st.avg_pie_tokens += static_cast<double>(s.pie_word_indices.size());
    st.avg_span_distance += s.last_pie() - s.first_pie();
    st.avg_relative_position += pos_sum / static_cast<double>(s.pie_word_indices.size()) / n;
    const int lo = std::max(0, s.first_pie() - kContextWindow);
    const int hi = std::min(n - 1, s.last_pie() + kContextWindow);
    st.avg_context_length += hi - lo;
  }
  const double n = static_cast<double>(sentences.size());
  st.avg_pie_tokens /= n;
  st.avg_span_distance /= n;
  st.avg_relative_position /= n;
  st.avg_context_length /= n;
  st.n = sentences.size();
  return st;
}

LengthStats length_stats(const CorpusSet& corpus, Category category, const LabelMap* labels) {
  std::vector<PieSentence> sel;
  for (const auto& s : corpus)
    if (in_category(s, category, labels)) sel.push_back(s);
  if (sel.empty())
    fail(ErrorKind::empty_set, fmt::format("no sentences in category {}", to_string(category)));
  return length_stats(sel);
}

}  // namespace idiolens
