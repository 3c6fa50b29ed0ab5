#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace idiolens {

enum class Label3 { copy, word_for_word, paraphrase };
enum class Label2 { word_for_word, paraphrase };

/// Copies are merged into word-for-word for every two-way analysis.
constexpr Label2 merge(Label3 label) noexcept {
  return label == Label3::paraphrase ? Label2::paraphrase : Label2::word_for_word;
}

struct TranslationLabel {
  std::string sentence_id;
  Label3 label3 = Label3::paraphrase;
  Label2 label2 = Label2::paraphrase;
  std::optional<std::string> matched_keyword;
  std::optional<std::string> matched_target;

  friend bool operator==(const TranslationLabel&, const TranslationLabel&) = default;
};

/// Keyed by sentence id; ordered so every report iterates deterministically.
using LabelMap = std::map<std::string, TranslationLabel>;

std::string_view to_string(Label3 label) noexcept;
std::string_view to_string(Label2 label) noexcept;
Label3 parse_label3(std::string_view text);
Label2 parse_label2(std::string_view text);

}  // namespace idiolens
