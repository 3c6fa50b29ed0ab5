#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "idiolens/corpus.hpp"
#include "idiolens/labels.hpp"

namespace idiolens {

/// Keyword -> literal target-language translations, all casefolded.
class LiteralLexicon {
 public:
  void add(std::string_view keyword, std::string_view translation);
  const std::set<std::string>* find(std::string_view keyword) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, std::set<std::string>, std::less<>> entries_;
};

/// TSV: keyword, then one or more literal translations. Lines starting with
/// '#' are comments.
LiteralLexicon parse_lexicon(std::istream& in, std::string_view source = "<stream>");
LiteralLexicon load_lexicon(const std::filesystem::path& path);

enum class Provenance { model, reference_corpus };

struct TranslationRecord {
  std::string sentence_id;
  std::vector<std::string> target_tokens;
  Provenance provenance = Provenance::model;
};

using TranslationMap = std::map<std::string, TranslationRecord>;

/// JSON-lines with `sentence_id` and either `target_tokens` (array) or
/// `translation` (whitespace-tokenized string); optional `provenance`.
TranslationMap parse_translations(std::istream& in, std::string_view source = "<stream>");
TranslationMap load_translations(const std::filesystem::path& path);

/// Casefolded, punctuation-stripped match: equal, or `entry` is a substring of
/// `token` and at least four code points long.
bool lexical_match(std::string_view entry, std::string_view token);

/// Word-for-word if any literal translation of any keyword occurs in the
/// target, otherwise copy if a keyword itself occurs, otherwise paraphrase.
/// The recorded match is the earliest matching target token, normalized.
TranslationLabel label_translation(const PieSentence& sentence, const TranslationRecord& translation,
                                   const LiteralLexicon& lexicon);

LabelMap label_corpus(const CorpusSet& corpus, const TranslationMap& translations,
                      const LiteralLexicon& lexicon);

std::string labels_to_jsonl(const LabelMap& labels);
LabelMap parse_labels(std::istream& in, std::string_view source = "<stream>");
LabelMap load_labels(const std::filesystem::path& path);

struct CategoryShare {
  double paraphrase_pct = 0;
  double word_for_word_pct = 0;
  double copy_pct = 0;  // part of word_for_word_pct
  std::size_t n = 0;
};

struct LabelDistribution {
  CategoryShare figurative;
  CategoryShare literal;
};

/// Percentages within each gold-label category. Throws Error{consistency}
/// for a label whose sentence is not in the corpus.
LabelDistribution label_distribution(const LabelMap& labels, const CorpusSet& corpus);

/// Symmetric language-pair similarity in [0, 1].
class GeneticSimilarity {
 public:
  void set(const std::string& a, const std::string& b, double similarity);
  std::optional<double> get(const std::string& a, const std::string& b) const;

 private:
  std::map<std::pair<std::string, std::string>, double> values_;
};

GeneticSimilarity parse_genetic_similarity(std::istream& in, std::string_view source = "<stream>");
GeneticSimilarity load_genetic_similarity(const std::filesystem::path& path);

struct AgreementResult {
  std::vector<std::string> languages;
  /// f1(a, b): language a's labels as gold, b's as prediction.
  Eigen::MatrixXd f1;
  std::optional<double> pearson;  // absent without similarities or with zero variance
  std::size_t pairs = 0;
};

/// Cross-language agreement on figurative instances only.
AgreementResult agreement_matrix(const std::map<std::string, LabelMap>& labels_by_language,
                                 const CorpusSet& corpus, const GeneticSimilarity* similarity);

struct CrosstabCell {
  std::size_t n = 0;
  double row_pct = 0;
  std::optional<double> bleu;
};

/// Rows: reference label, columns: model label (index 0 paraphrase, 1 word-for-word).
struct Crosstab {
  CrosstabCell cells[2][2];
  double row_share_pct[2] = {0, 0};
  std::size_t row_n[2] = {0, 0};
};

inline int crosstab_index(Label2 label) { return label == Label2::paraphrase ? 0 : 1; }

Crosstab crosstab_with_reference(const LabelMap& model_labels, const LabelMap& reference_labels,
                                 const TranslationMap& model_translations,
                                 const TranslationMap& reference_translations);

}  // namespace idiolens
