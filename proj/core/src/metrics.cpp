#include "idiolens/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "idiolens/text.hpp"

namespace idiolens {

double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::input, "pearson_r: lengths differ");
  if (x.size() < 2) fail(ErrorKind::input, "pearson_r: needs at least two samples");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0 || syy <= 0) fail(ErrorKind::numerical, "pearson_r: zero variance, correlation undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const std::vector<std::string>& toks, int order) {
  NgramCounts out;
  if (static_cast<int>(toks.size()) < order) return out;
  for (std::size_t i = 0; i + order <= toks.size(); ++i)
    ++out[std::vector<std::string>(toks.begin() + i, toks.begin() + i + order)];
  return out;
}

}  // namespace

double bleu(const TokenizedCorpus& candidates, const TokenizedCorpus& references, const BleuConfig& config) {
  if (config.max_order < 1) fail(ErrorKind::input, "bleu: max order must be at least 1");
  if (candidates.size() != references.size())
    fail(ErrorKind::input, fmt::format("bleu: {} candidates but {} references", candidates.size(),
                                       references.size()));
  if (candidates.empty()) fail(ErrorKind::input, "bleu: empty corpus");

  std::vector<double> matches(config.max_order, 0), totals(config.max_order, 0);
  double cand_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    cand_len += static_cast<double>(candidates[s].size());
    ref_len += static_cast<double>(references[s].size());
    for (int n = 1; n <= config.max_order; ++n) {
      const NgramCounts c = ngrams(candidates[s], n);
      const NgramCounts r = ngrams(references[s], n);
      for (const auto& [gram, count] : c) {
        totals[n - 1] += count;
        auto it = r.find(gram);
        if (it != r.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  if (cand_len == 0) return 0.0;

  // Orders with no candidate n-grams at all (every candidate shorter than n)
  // are left out of the geometric mean.
  double log_sum = 0;
  int orders = 0;
  for (int n = 0; n < config.max_order; ++n) {
    if (totals[n] == 0) continue;
    double p;
    if (matches[n] > 0) {
      p = matches[n] / totals[n];
    } else if (config.smoothing == BleuSmoothing::add_one_on_zero) {
      p = 1.0 / (totals[n] + 1.0);
    } else {
      return 0.0;
    }
    log_sum += std::log(p);
    ++orders;
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return 100.0 * bp * std::exp(log_sum / orders);
}

double bleu_strings(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
                    const BleuConfig& config) {
  TokenizedCorpus c, r;
  c.reserve(candidates.size());
  r.reserve(references.size());
  for (const auto& s : candidates) c.push_back(split_whitespace(s));
  for (const auto& s : references) r.push_back(split_whitespace(s));
  return bleu(c, r, config);
}

}  // namespace idiolens
