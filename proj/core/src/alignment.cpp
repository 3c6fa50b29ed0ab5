#include "idiolens/alignment.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include <fmt/format.h>

#include "idiolens/error.hpp"
#include "idiolens/text.hpp"

namespace idiolens {

AlignmentSet::AlignmentSet(std::vector<AlignmentPairs> lines) : lines_(std::move(lines)) {
  for (auto& l : lines_) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
}

namespace {

bool parse_index(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && out >= 0;
}

}  // namespace

AlignmentPairs parse_alignment_line(std::string_view line, std::size_t lineno) {
  AlignmentPairs pairs;
  for (const auto& tok : split_whitespace(line)) {
    const auto dash = tok.find('-');
    int i = 0, j = 0;
    if (dash == std::string::npos || !parse_index(std::string_view(tok).substr(0, dash), i) ||
        !parse_index(std::string_view(tok).substr(dash + 1), j))
      fail(ErrorKind::parse, fmt::format("line {}: malformed alignment pair '{}'", lineno, tok));
    pairs.emplace_back(i, j);
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

AlignmentSet parse_alignments(std::istream& in) {
  std::vector<AlignmentPairs> lines;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    lines.push_back(parse_alignment_line(line, lineno));
  }
  return AlignmentSet(std::move(lines));
}

AlignmentSet load_alignments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open alignments " + path.string());
  return parse_alignments(in);
}

void validate_alignments(const AlignmentSet& alignments, const CorpusSet& corpus,
                         const std::vector<int>* target_lengths) {
  if (alignments.size() != corpus.size())
    fail(ErrorKind::consistency,
         fmt::format("{} alignment lines for {} sentences", alignments.size(), corpus.size()));
  if (target_lengths && target_lengths->size() != alignments.size())
    fail(ErrorKind::consistency, "target lengths do not cover every alignment line");
  for (std::size_t s = 0; s < alignments.size(); ++s) {
    const int n = static_cast<int>(corpus[s].tokens.size());
    for (auto [i, j] : alignments[s]) {
      if (i >= n)
        fail(ErrorKind::validation,
             fmt::format("line {}: source index {} outside sentence of {} words", s + 1, i, n));
      if (target_lengths && j >= (*target_lengths)[s])
        fail(ErrorKind::validation, fmt::format("line {}: target index {} outside translation of {} words",
                                                s + 1, j, (*target_lengths)[s]));
    }
  }
}

std::optional<int> aligned_target_token(const AlignmentPairs& pairs, int source_word) {
  std::optional<int> best;
  for (auto [i, j] : pairs)
    if (i == source_word && (!best || j < *best)) best = j;
  return best;
}

}  // namespace idiolens
