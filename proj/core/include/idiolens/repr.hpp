#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "idiolens/attnstats.hpp"
#include "idiolens/corpus.hpp"
#include "idiolens/dumpio.hpp"

namespace idiolens {

/// Relative ridge: the regularizer added to each covariance is ridge * trace / d.
inline constexpr double kDefaultRidge = 1e-5;

/// Fitted canonical correlation analysis between two views. Projected
/// coordinates are W (a - mean_a) and V (b - mean_b); every direction is kept.
struct CcaProjection {
  Eigen::MatrixXd W;             // r x d_A
  Eigen::MatrixXd V;             // r x d_B
  Eigen::VectorXd mean_a;        // d_A
  Eigen::VectorXd mean_b;        // d_B
  Eigen::VectorXd correlations;  // r, non-increasing, in [0, 1]
  double ridge = kDefaultRidge;

  Eigen::Index rank() const { return correlations.size(); }
};

/// Columns of `a` (d_A x N) and `b` (d_B x N) are paired observations.
/// Requires N > max(d_A, d_B) and finite inputs.
CcaProjection fit_cca(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double ridge = kDefaultRidge);

/// Mean over directions of the Pearson correlation between paired projected
/// coordinates. Directions with zero variance count as 0.
double cca_similarity(const CcaProjection& projection, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

Record to_record(const CcaProjection& projection);
CcaProjection cca_from_record(const Record& record);

enum class TokenClass {
  pie_noun,      // keyword subtokens
  non_pie_noun,  // context-noun subtokens anywhere in the sentence
  pie_token,     // every PIE word's subtokens
  context_token, // non-PIE words within the context window
};

std::string_view to_string(TokenClass token_class) noexcept;
TokenClass parse_token_class(std::string_view text);

std::vector<int> select_subtokens(const ActivationDump& dump, const PieSentence& sentence, TokenClass token_class,
                                  int context_window = kContextWindow);

/// Columns are the hidden states of `subtokens` at hidden-state index `layer`
/// (0 = embeddings).
Eigen::MatrixXd gather_hidden(const ActivationDump& dump, int layer, const std::vector<int>& subtokens);

enum class BankRole { layer_pair, mask };

/// layer_pair: key l compares hidden states l and l+1.
/// mask: key l compares normal and masked hidden states at layer l.
struct ProjectionBank {
  BankRole role = BankRole::layer_pair;
  std::map<int, CcaProjection> by_layer;
};

void save_bank(const std::filesystem::path& file, const ProjectionBank& bank);
ProjectionBank load_bank(const std::filesystem::path& file);

struct PoolOptions {
  std::size_t pool_size = 60000;
  double ridge = kDefaultRidge;
  std::uint64_t seed = 0;
};

/// Fits one projection per adjacent layer pair on every word subtoken of the
/// held-out dumps, subsampled to `pool_size` vectors.
ProjectionBank fit_layer_bank(const std::vector<ActivationDump>& pool, const PoolOptions& options = {});

/// Fits one projection per masked layer between normal and masked states of
/// every word subtoken except the masked one.
ProjectionBank fit_mask_bank(const std::vector<ActivationDump>& normal, const std::vector<ActivationDump>& masked,
                             const PoolOptions& options = {});

struct SimilarityOptions {
  std::size_t min_tokens = 20;
  /// Refit CCA on the evaluated data instead of using the bank.
  bool refit = false;
  double ridge = kDefaultRidge;
  /// mask_influence only: the class every masked token must belong to.
  std::optional<TokenClass> masked_class;
};

struct LayerSimilarity {
  int layer = 0;
  double similarity = 0;
  std::size_t n = 0;
};

std::vector<LayerSimilarity> layer_similarity(const DumpIndex& dumps, const std::vector<PieSentence>& sentences,
                                              TokenClass token_class, const ProjectionBank& bank,
                                              const SimilarityOptions& options = {},
                                              std::vector<std::string>* warnings = nullptr);

/// Similarity between normal and masked hidden states of the affected tokens
/// at the masked layer, grouped by masked layer. The masked subtoken is never
/// part of the affected set.
std::vector<LayerSimilarity> mask_influence(const DumpIndex& normal, const std::vector<ActivationDump>& masked,
                                            const CorpusSet& corpus, TokenClass affected,
                                            const ProjectionBank& bank, const SimilarityOptions& options = {},
                                            std::vector<std::string>* warnings = nullptr);

}  // namespace idiolens
