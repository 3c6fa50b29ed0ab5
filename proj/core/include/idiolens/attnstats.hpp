#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "idiolens/alignment.hpp"
#include "idiolens/corpus.hpp"
#include "idiolens/dumpio.hpp"

namespace idiolens {

enum class Analysis { pie2noun, pie2ctx, ctx2pie, xattn_noun, xattn_pie_other, xattn_eos };

std::string_view to_string(Analysis analysis) noexcept;
Analysis parse_analysis(std::string_view text);
bool is_encoder_analysis(Analysis analysis) noexcept;

struct ProfileOptions {
  int context_window = kContextWindow;
  /// ctx2pie/pie2ctx over every non-PIE word in the window instead of nouns only.
  bool ctx_all_tokens = false;
  /// Single head instead of the head mean.
  std::optional<int> head;
  unsigned jobs = 1;
};

/// Context nouns (or all non-PIE words) within the window around the PIE span.
std::vector<int> context_words(const PieSentence& sentence, const ProfileOptions& options = {});

/// Encoder self-attention statistic for one sentence and layer (0-based).
/// Absent when the sentence lacks what the analysis needs (a second PIE word
/// for pie2noun, context nouns for pie2ctx/ctx2pie). Multiple keywords are
/// averaged.
std::optional<double> encoder_profile(const ActivationDump& dump, const PieSentence& sentence, int layer,
                                      Analysis analysis, const ProfileOptions& options = {});

struct CrossProfile {
  double to_noun = 0;
  double to_pie_other = 0;
  double to_eos = 0;
};

/// Cross-attention mass from the target word aligned to each keyword. Absent
/// when no keyword has an aligned target word.
std::optional<CrossProfile> cross_profile(const ActivationDump& dump, const AlignmentPairs& alignment,
                                          const PieSentence& sentence, int layer,
                                          const ProfileOptions& options = {});

/// Per-layer, per-sentence values of one analysis over one data subset.
struct AttnProfile {
  Analysis analysis = Analysis::pie2noun;
  Category subset = Category::fig;
  std::vector<std::vector<double>> per_layer;
  std::size_t sentences = 0;  // sentences considered
  std::size_t skipped = 0;    // sentences without a value
};

using DumpIndex = std::map<std::string, const ActivationDump*, std::less<>>;

DumpIndex index_dumps(const std::vector<ActivationDump>& dumps);

AttnProfile encoder_profiles(const DumpIndex& dumps, const std::vector<PieSentence>& sentences,
                             Analysis analysis, Category subset, const ProfileOptions& options = {});

struct CrossProfiles {
  AttnProfile noun, pie_other, eos;
  std::size_t considered = 0;
  std::size_t absent_alignment = 0;
  double absent_fraction() const {
    return considered ? static_cast<double>(absent_alignment) / static_cast<double>(considered) : 0.0;
  }
};

/// Above this fraction of fig-par sentences without an aligned keyword the
/// alignments are suspect.
inline constexpr double kMaxAbsentAlignmentFraction = 0.34;

/// `alignment_of` maps sentence id to its alignment pairs.
CrossProfiles cross_profiles(const DumpIndex& dumps, const std::vector<PieSentence>& sentences,
                             const std::map<std::string, AlignmentPairs, std::less<>>& alignment_of,
                             Category subset, const ProfileOptions& options = {});

struct BoxStats {
  double mean = 0, q1 = 0, median = 0, q3 = 0, lo_whisker = 0, hi_whisker = 0;
  std::size_t n = 0;
};

/// Linear-interpolated quartiles; whiskers are the most extreme values within
/// 1.5 IQR of the box.
BoxStats box_stats(std::vector<double> values);

struct LayerDifference {
  int layer = 0;
  double difference = 0;  // mean(minuend) - mean(subtrahend)
  BoxStats minuend, subtrahend;
};

/// Layers where either subset is empty are omitted and reported in `warnings`.
std::vector<LayerDifference> subset_difference(const AttnProfile& minuend, const AttnProfile& subtrahend,
                                               std::vector<std::string>* warnings = nullptr);

struct AttentionDelta {
  Analysis analysis = Analysis::pie2noun;
  int layer = 0;
  double normal_mean = 0;
  double projected_mean = 0;
  double delta = 0;  // projected - normal
  std::size_t n = 0;
};

/// Change in every encoder analysis between normal and projected dumps of the
/// same sentences. Throws Error{consistency} on missing or mislabelled variants.
std::vector<AttentionDelta> inlp_attention_delta(const std::vector<ActivationDump>& normal,
                                                 const std::vector<ActivationDump>& projected,
                                                 const std::vector<PieSentence>& sentences,
                                                 const ProfileOptions& options = {});

}  // namespace idiolens
