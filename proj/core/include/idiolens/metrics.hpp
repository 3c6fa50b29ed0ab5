#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "idiolens/error.hpp"

namespace idiolens {

/// Unweighted mean of per-class F1 over the classes occurring in `pred` or
/// `gold`. A class with no true positives scores 0.
template <class Label>
double macro_f1(std::span<const Label> pred, std::span<const Label> gold) {
  if (pred.size() != gold.size()) fail(ErrorKind::input, "macro_f1: prediction and gold lengths differ");
  if (pred.empty()) fail(ErrorKind::input, "macro_f1: empty input");
  struct Counts {
    double tp = 0, fp = 0, fn = 0;
  };
  std::map<Label, Counts> classes;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == gold[i]) {
      classes[pred[i]].tp += 1;
    } else {
      classes[pred[i]].fp += 1;
      classes[gold[i]].fn += 1;
    }
  }
  double total = 0;
  for (const auto& [label, c] : classes) {
    const double denom = 2 * c.tp + c.fp + c.fn;
    total += denom > 0 ? 2 * c.tp / denom : 0.0;
  }
  return total / static_cast<double>(classes.size());
}

template <class Label>
double macro_f1(const std::vector<Label>& pred, const std::vector<Label>& gold) {
  return macro_f1(std::span<const Label>(pred), std::span<const Label>(gold));
}

/// Product-moment correlation. Throws Error{numerical} when either side has
/// zero variance.
double pearson_r(std::span<const double> x, std::span<const double> y);

enum class BleuSmoothing { none, add_one_on_zero };

struct BleuConfig {
  int max_order = 4;
  BleuSmoothing smoothing = BleuSmoothing::none;
};

using TokenizedCorpus = std::vector<std::vector<std::string>>;

/// Corpus-level BLEU in [0, 100] against a single reference per candidate.
/// With add_one_on_zero, an order with no matches scores 1 / (total + 1).
/// Orders longer than every candidate are skipped, so bleu(c, c) == 100.
double bleu(const TokenizedCorpus& candidates, const TokenizedCorpus& references,
            const BleuConfig& config = {});

/// Splits each string on whitespace and scores with bleu().
double bleu_strings(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
                    const BleuConfig& config = {});

}  // namespace idiolens
