#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "idiolens/attnstats.hpp"
#include "idiolens/corpus.hpp"
#include "idiolens/dumpio.hpp"
#include "idiolens/labeler.hpp"

namespace idiolens::cli {

namespace fs = std::filesystem;

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::uint64_t seed_flag = 0;
  unsigned jobs = 1;
  std::string language = "xx";

  /// IDIOLENS_SEED wins over --seed.
  std::uint64_t seed() const;
  void warn(const std::string& message) const;
};

// Each subcommand has an argument struct, a registration function and an
// executor; `report` drives the executors directly.

struct ConvertArgs {
  fs::path magpie, pos, out;
};
struct LabelArgs {
  fs::path corpus, translations, lexicon, out;
};
struct DistributionArgs {
  fs::path corpus, out;
  std::vector<std::string> labels;  // lang=path
};
struct AgreementArgs {
  fs::path corpus, similarity, out, summary;
  std::vector<std::string> labels;
};
struct CrosstabArgs {
  fs::path model_labels, reference_labels, model_translations, reference_translations, out;
};
struct LengthsArgs {
  fs::path corpus, labels, out;
  std::string filter = "all";
  std::vector<std::string> categories;
};
struct AttnArgs {
  fs::path dump, corpus, labels, out, diff_out, projected, delta_out;
  std::string filter = "all";
  std::vector<std::string> analyses;
  std::vector<std::string> subsets;
  bool ctx_all_tokens = false;
  std::optional<int> head;
};
struct XattnArgs {
  fs::path dump, corpus, labels, alignments, out, diff_out;
  std::string filter = "all";
  std::vector<std::string> subsets;
  std::optional<int> head;
};
struct CcaFitArgs {
  fs::path pool, normal, masked, out;
  std::string role = "layer_pair";
  std::size_t pool_size = 60000;
  double ridge = 1e-5;
};
struct CcaLayersArgs {
  fs::path dump, corpus, labels, bank, out;
  std::string filter = "all";
  std::vector<std::string> subsets;
  std::vector<std::string> token_classes;
  std::size_t min_tokens = 20;
  bool refit = false;
  double ridge = 1e-5;
};
struct CcaMaskArgs {
  fs::path normal, masked, corpus, labels, bank, out;
  std::string subset;
  std::vector<std::string> affected;
  std::string masked_class;
  std::size_t min_tokens = 20;
  bool refit = false;
  double ridge = 1e-5;
};
struct ProbeArgs {
  fs::path dump, corpus, frequency, out;
  std::string filter = "all";
  std::string task = "figurative";
  std::string layers;
  int folds = 5;
  double l2 = 1.0;
  int max_iterations = 1000;
  bool mean_pool = false;
};
struct InlpTrainArgs {
  fs::path dump, corpus, labels, frequency, out_dir;
  std::string task = "paraphrase";
  std::string layers = "0,1,2,3,4";
  int iterations = 50;
  int folds = 5;
  int estimation_fold = 4;
  double l2 = 1.0;
  int max_iterations = 1000;
  bool mean_pool = false;
};
struct InlpEvalArgs {
  fs::path corpus, pre_labels, post_labels, pre_translations, post_translations, ids, out, summary;
};
struct InlpSweepArgs {
  fs::path corpus, pre_labels, pre_translations, ids, out;
  std::vector<std::string> runs;  // LAYERS=labels.jsonl,translations.jsonl
};

void run_convert(const ConvertArgs& a, const Context& ctx);
void run_label(const LabelArgs& a, const Context& ctx);
void run_distribution(const DistributionArgs& a, const Context& ctx);
void run_agreement(const AgreementArgs& a, const Context& ctx);
void run_crosstab(const CrosstabArgs& a, const Context& ctx);
void run_lengths(const LengthsArgs& a, const Context& ctx);
void run_attn(const AttnArgs& a, const Context& ctx);
void run_xattn(const XattnArgs& a, const Context& ctx);
void run_cca_fit(const CcaFitArgs& a, const Context& ctx);
void run_cca_layers(const CcaLayersArgs& a, const Context& ctx);
void run_cca_mask(const CcaMaskArgs& a, const Context& ctx);
void run_probe(const ProbeArgs& a, const Context& ctx);
void run_inlp_train(const InlpTrainArgs& a, const Context& ctx);
void run_inlp_eval(const InlpEvalArgs& a, const Context& ctx);
void run_inlp_sweep(const InlpSweepArgs& a, const Context& ctx);

void add_corpus_commands(CLI::App& app, Context& ctx);
void add_attention_commands(CLI::App& app, Context& ctx);
void add_repr_commands(CLI::App& app, Context& ctx);
void add_probe_commands(CLI::App& app, Context& ctx);
void add_report_command(CLI::App& app, Context& ctx);

// Shared helpers.

/// "lang=path" or a bare path (language taken from --language).
std::pair<std::string, fs::path> language_path(const std::string& spec, const Context& ctx);

std::vector<int> parse_int_list(const std::string& text);
std::string join_ints(const std::vector<int>& values, char sep);

std::vector<Category> parse_categories(const std::vector<std::string>& names);

std::optional<LabelMap> maybe_labels(const fs::path& path);

/// Sentences of `category` after `filter`. With `dumps`, sentences lacking a
/// dump are dropped and counted in a warning.
std::vector<PieSentence> sentences_for(const CorpusSet& corpus, SubsetKind filter, Category category,
                                       const LabelMap* labels, const DumpIndex* dumps, const Context& ctx);

/// Dumps of one variant; others in the same source are ignored.
std::vector<ActivationDump> load_variant(const fs::path& path, DumpVariant::Kind kind);

void write_output(const fs::path& path, const std::string& contents);

}  // namespace idiolens::cli
