#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "idiolens/corpus.hpp"

namespace idiolens {

/// (source word, target word) pairs for one sentence, sorted and unique.
using AlignmentPairs = std::vector<std::pair<int, int>>;

/// Pharaoh "i-j" alignments, one line per sentence in corpus order.
class AlignmentSet {
 public:
  AlignmentSet() = default;
  explicit AlignmentSet(std::vector<AlignmentPairs> lines);

  std::size_t size() const { return lines_.size(); }
  const AlignmentPairs& operator[](std::size_t i) const { return lines_[i]; }
  const std::vector<AlignmentPairs>& lines() const { return lines_; }

 private:
  std::vector<AlignmentPairs> lines_;
};

AlignmentPairs parse_alignment_line(std::string_view line, std::size_t lineno = 1);
AlignmentSet parse_alignments(std::istream& in);
AlignmentSet load_alignments(const std::filesystem::path& path);

/// Checks line count and source indices against the corpus, and target
/// indices against `target_lengths` when given (one entry per line).
void validate_alignments(const AlignmentSet& alignments, const CorpusSet& corpus,
                         const std::vector<int>* target_lengths = nullptr);

/// Leftmost target word aligned to `source_word`, if any.
std::optional<int> aligned_target_token(const AlignmentPairs& pairs, int source_word);

}  // namespace idiolens
