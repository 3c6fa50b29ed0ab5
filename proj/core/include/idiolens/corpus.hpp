#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "idiolens/labels.hpp"

namespace idiolens {

enum class GoldLabel { figurative, literal };

std::string_view to_string(GoldLabel label) noexcept;

/// A tokenized sentence containing one potentially idiomatic expression (PIE).
/// All index lists hold word positions into `tokens`.
struct PieSentence {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<int> pie_word_indices;      // strictly increasing, may be discontinuous
  std::vector<int> keyword_indices;       // subset of pie_word_indices
  std::vector<int> context_noun_indices;  // nouns outside the PIE
  GoldLabel gold_label = GoldLabel::figurative;
  std::string idiom_id;
  bool identical_match = false;

  int first_pie() const { return pie_word_indices.front(); }
  int last_pie() const { return pie_word_indices.back(); }
  bool in_pie(int word) const;

  friend bool operator==(const PieSentence&, const PieSentence&) = default;
};

/// Throws Error{validation} naming the offending field.
void validate(const PieSentence& sentence);

/// Throws Error{parse} for missing fields, wrong types or unknown enum values.
PieSentence sentence_from_json(const nlohmann::json& record);
nlohmann::json to_json(const PieSentence& sentence);

/// Validated, id-unique, order-preserving collection of sentences.
class CorpusSet {
 public:
  CorpusSet() = default;
  explicit CorpusSet(std::vector<PieSentence> sentences);

  std::size_t size() const { return sentences_.size(); }
  bool empty() const { return sentences_.empty(); }
  const std::vector<PieSentence>& sentences() const { return sentences_; }
  auto begin() const { return sentences_.begin(); }
  auto end() const { return sentences_.end(); }
  const PieSentence& operator[](std::size_t i) const { return sentences_[i]; }

  const PieSentence* find(std::string_view id) const;
  std::optional<std::size_t> index_of(std::string_view id) const;

 private:
  std::vector<PieSentence> sentences_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Newline-delimited JSON, one PieSentence per line. Blank lines are skipped.
/// Errors name the 1-based line number.
CorpusSet parse_corpus(std::istream& in, std::string_view source = "<stream>");
CorpusSet load_corpus(const std::filesystem::path& path);
std::string corpus_to_jsonl(const CorpusSet& corpus);

enum class SubsetKind { all, identical, intersection, length_controlled };

/// Data subsets defined by gold label and (optionally) the heuristic label.
enum class Category { fig, lit, fig_par, fig_wfw, lit_par, lit_wfw };

std::string_view to_string(SubsetKind kind) noexcept;
std::string_view to_string(Category category) noexcept;
SubsetKind parse_subset_kind(std::string_view text);
Category parse_category(std::string_view text);

/// True when the category is defined by gold label alone.
bool needs_labels(Category category) noexcept;

/// Whether `sentence` belongs to `category`. Sentences without a label never
/// belong to a label-dependent category.
bool in_category(const PieSentence& sentence, Category category, const LabelMap* labels);

/// PIE with exactly three tokens whose first and last positions are three apart.
bool is_length_controlled(const PieSentence& sentence);

CorpusSet filter_subset(const CorpusSet& corpus, SubsetKind kind, const LabelMap* labels = nullptr);
CorpusSet select_category(const CorpusSet& corpus, Category category, const LabelMap* labels);

struct LengthStats {
  double avg_pie_tokens = 0;
  double avg_span_distance = 0;
  double avg_relative_position = 0;
  double avg_context_length = 0;
  std::size_t n = 0;
};

/// Context extent used by length statistics and attention windows.
inline constexpr int kContextWindow = 10;

/// Averages over the sentences of `category`. Throws Error{empty_set} when the
/// selection is empty.
LengthStats length_stats(const CorpusSet& corpus, Category category, const LabelMap* labels);
LengthStats length_stats(const std::vector<PieSentence>& sentences);

}  // namespace idiolens
