#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "idiolens/attnstats.hpp"
#include "idiolens/corpus.hpp"
#include "idiolens/dumpio.hpp"
#include "idiolens/labeler.hpp"
#include "idiolens/metrics.hpp"

namespace idiolens {

struct ProbeOptions {
  double l2 = 1.0;  // bias is not penalized
  int max_iterations = 1000;
  double tolerance = 1e-6;  // gradient norm
  std::uint64_t seed = 0;
};

/// Binary logistic regression. Samples are the rows of X.
struct Probe {
  Eigen::VectorXd weights;
  double bias = 0;
  int iterations = 0;
  bool converged = false;
  double l2 = 1.0;
  std::uint64_t seed = 0;

  Eigen::VectorXd decision(const Eigen::MatrixXd& x) const;
  std::vector<int> predict(const Eigen::MatrixXd& x) const;
};

/// Full-batch Newton iterations with backtracking; labels are 0/1. Throws
/// Error{input} when only one class is present.
Probe train_probe(const Eigen::MatrixXd& x, const std::vector<int>& y, const ProbeOptions& options = {});

double accuracy(const std::vector<int>& pred, const std::vector<int>& gold);

/// Fold index per sample. Groups are visited in seeded random order and each
/// goes to the fold holding the fewest samples so far.
std::vector<int> grouped_folds(const std::vector<std::string>& groups, int folds, std::uint64_t seed);

struct CvResult {
  double mean_f1 = 0;
  double std_f1 = 0;  // population standard deviation over folds
  std::vector<double> fold_f1;
};

CvResult grouped_cv_f1(const Eigen::MatrixXd& x, const std::vector<int>& y, const std::vector<std::string>& groups,
                       int folds = 5, const ProbeOptions& options = {}, unsigned jobs = 1);

/// Casefolded token -> zipf frequency.
class FrequencyTable {
 public:
  void set(std::string_view token, double zipf);
  std::optional<double> find(std::string_view token) const;
  std::size_t size() const { return values_.size(); }

 private:
  std::map<std::string, double, std::less<>> values_;
};

/// TSV: token, zipf frequency.
FrequencyTable parse_frequency_table(std::istream& in, std::string_view source = "<stream>");
FrequencyTable load_frequency_table(const std::filesystem::path& path);

inline constexpr double kDefaultMissingZipf = 1.0;

/// Half the harmonic mean of the tokens' zipf frequencies.
double frequency_feature(const std::vector<std::string>& pie_tokens, const FrequencyTable& table,
                         double missing_zipf = kDefaultMissingZipf);

/// 1 when a sentence's feature is at least the corpus mean.
std::vector<int> frequency_baseline_labels(const std::vector<PieSentence>& sentences, const FrequencyTable& table,
                                           double missing_zipf = kDefaultMissingZipf);

/// Probing samples: one row per PIE subtoken (or one mean-pooled row per
/// sentence) carrying its sentence's label and idiom.
struct ProbeSamples {
  Eigen::MatrixXd x;
  std::vector<int> y;
  std::vector<std::string> groups;
  std::vector<std::string> sentence_ids;
};

using SentenceLabeler = std::function<std::optional<int>(const PieSentence&)>;

/// Sentences for which `label_of` returns nothing are left out.
ProbeSamples collect_pie_samples(const DumpIndex& dumps, const std::vector<PieSentence>& sentences,
                                 const SentenceLabeler& label_of, int layer, bool mean_pool = false);

ProbeSamples select_rows(const ProbeSamples& samples, const std::vector<std::size_t>& rows);

/// Orthogonal projection removing every direction found by the INLP probes.
struct NullspaceProjector {
  Eigen::MatrixXd P;           // D x D, equals I - Q Q^T
  Eigen::MatrixXd directions;  // rows: orthonormal removed directions (Q^T)
  std::vector<Eigen::VectorXd> probe_weights;  // raw weights of the probes that contributed a direction
  std::vector<double> dev_accuracy;            // probe i on held-out data projected by the first i-1 directions
  std::optional<double> final_dev_accuracy;    // probe trained and evaluated after the last projection
  int iterations = 0;

  int dim() const { return static_cast<int>(P.rows()); }
  int removed() const { return static_cast<int>(directions.rows()); }
};

struct InlpOptions {
  int iterations = 50;
  ProbeOptions probe;
  double drop_tolerance = 1e-8;
};

/// Samples are rows of X. The development split is optional; without it the
/// accuracies are left empty.
NullspaceProjector inlp_train(const Eigen::MatrixXd& x, const std::vector<int>& y, const Eigen::MatrixXd* x_dev,
                              const std::vector<int>* y_dev, const InlpOptions& options = {});

/// H' = P H with vectors as the columns of H.
Eigen::MatrixXd apply_projection(const NullspaceProjector& projector, const Eigen::MatrixXd& h);

Record to_record(const NullspaceProjector& projector);
NullspaceProjector projector_from_record(const Record& record);

/// Hidden-state index -> projector, one record each.
void save_projectors(const std::filesystem::path& file, const std::map<int, NullspaceProjector>& by_layer,
                     const nlohmann::json& extra_meta = nlohmann::json::object());
std::map<int, NullspaceProjector> load_projectors(const std::filesystem::path& file);

/// Roles of the five folds in one amnesic-probing round.
struct FoldRoles {
  int success = 0;
  int dev = 0;
  std::vector<int> train;
};

/// One round per fold other than `estimation_fold`, plus the estimation round
/// last. The development fold is the next one cyclically.
std::vector<FoldRoles> amnesic_fold_plan(int folds = 5, int estimation_fold = 4);

struct AmnesicResult {
  std::map<std::string, double> success_by_idiom;  // percent
  double mean_success = 0;
  std::optional<double> bleu;  // over flipped sentences, absent without flips
  std::size_t considered = 0;
  std::size_t flipped = 0;
};

/// `pre` holds the intervention set (all paraphrases); `post` the labels after
/// projected inference. Ids outside the corpus are ignored.
AmnesicResult amnesic_success(const LabelMap& pre, const LabelMap& post, const CorpusSet& corpus,
                              const TranslationMap& pre_translations, const TranslationMap& post_translations,
                              const BleuConfig& bleu_config = {});

struct PostIntervention {
  LabelMap labels;
  TranslationMap translations;
};

struct SweepRow {
  std::vector<int> layers;
  AmnesicResult result;
};

/// `relabel` produces post-intervention labels for a layer subset. An empty
/// subset is the no-intervention run and never calls `relabel`.
std::vector<SweepRow> layer_selection_sweep(
    const std::vector<std::vector<int>>& layer_subsets,
    const std::function<PostIntervention(const std::vector<int>&)>& relabel, const LabelMap& pre,
    const CorpusSet& corpus, const TranslationMap& pre_translations, const BleuConfig& bleu_config = {});

}  // namespace idiolens
