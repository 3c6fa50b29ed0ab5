#pragma once

// Random corpora and activation dumps for tests and benchmarks.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "idiolens/corpus.hpp"
#include "idiolens/dumpio.hpp"

namespace idiolens::testkit {

struct DumpShape {
  int layers = 6;
  int heads = 8;
  int hidden = 0;  // 0: no hidden states
  int max_subtokens = 12;  // including the end-of-sequence token
  int target_words = 4;    // 0: no cross-attention
};

/// 3..words-1 tokens with a 1-3 word PIE, 1-2 keywords and a few context nouns.
PieSentence random_sentence(std::mt19937_64& rng, const std::string& id, int words, const std::string& idiom);

/// Every word gets one or two subtokens while the budget allows; the last
/// source subtoken is the end-of-sequence marker.
ActivationDump random_dump(std::mt19937_64& rng, const PieSentence& sentence, const DumpShape& shape);

/// Similarities on vocabulary-skewed subsets of one synthetic population.
/// Paired views are a = mu_v + e and b = G mu_v + nu_v + e' for token type v,
/// where nu_v is type-specific and unrelated to mu_v. Projections fitted once
/// on a held-out pool ignore nu; refitting on a subset with few types
/// overfits it.
struct TwoStepContrast {
  std::vector<double> two_step;  // one per subset, fixed pool projections
  std::vector<double> refit;     // one per subset, projections refitted on it
  double two_step_spread = 0;
  double refit_spread = 0;
};

TwoStepContrast two_step_contrast(std::uint64_t seed);

double uniform01(std::mt19937_64& rng);
Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::filesystem::path fixture_dir();

}  // namespace idiolens::testkit
