#include "idiolens/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "idiolens/io.hpp"
#include "idiolens/parallel.hpp"
#include "idiolens/repr.hpp"
#include "idiolens/text.hpp"

namespace idiolens {

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_labels(const Eigen::MatrixXd& x, const std::vector<int>& y) {
  if (static_cast<std::size_t>(x.rows()) != y.size())
    fail(ErrorKind::input, fmt::format("{} samples but {} labels", x.rows(), y.size()));
  if (y.size() < 2) fail(ErrorKind::input, "probe training needs at least two samples");
  if (!x.allFinite()) fail(ErrorKind::input, "probe input contains non-finite values");
  bool zero = false, one = false;
  for (int v : y) {
    if (v == 0)
      zero = true;
    else if (v == 1)
      one = true;
    else
      fail(ErrorKind::input, fmt::format("probe labels must be 0 or 1, got {}", v));
  }
  if (!zero || !one) fail(ErrorKind::input, "degenerate labels: only one class present");
}

}  // namespace

Eigen::VectorXd Probe::decision(const Eigen::MatrixXd& x) const {
  if (x.cols() != weights.size())
    fail(ErrorKind::input, fmt::format("probe expects {} features, got {}", weights.size(), x.cols()));
  return (x * weights).array() + bias;
}

std::vector<int> Probe::predict(const Eigen::MatrixXd& x) const {
  const Eigen::VectorXd z = decision(x);
  std::vector<int> out(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) out[static_cast<std::size_t>(i)] = z(i) >= 0 ? 1 : 0;
  return out;
}

Probe train_probe(const Eigen::MatrixXd& x, const std::vector<int>& y, const ProbeOptions& opt) {
  check_labels(x, y);
  if (opt.l2 < 0 || opt.max_iterations < 0) fail(ErrorKind::input, "probe options must be non-negative");
  const Eigen::Index n = x.rows(), d = x.cols();
  Eigen::MatrixXd xa(n, d + 1);
  xa.leftCols(d) = x;
  xa.col(d).setOnes();
  Eigen::VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv(i) = y[static_cast<std::size_t>(i)];

  Eigen::VectorXd reg = Eigen::VectorXd::Constant(d + 1, opt.l2);
  reg(d) = 0;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);
  const double prior = yv.mean();
  theta(d) = std::log(prior / (1 - prior));

  auto objective = [&](const Eigen::VectorXd& t) {
    const Eigen::VectorXd z = xa * t;
    double f = 0;
    for (Eigen::Index i = 0; i < n; ++i) f += softplus(z(i)) - yv(i) * z(i);
    return f + 0.5 * (reg.array() * t.array().square()).sum();
  };

  Probe p;
  p.l2 = opt.l2;
  p.seed = opt.seed;
  double f = objective(theta);
  for (int it = 0; it <= opt.max_iterations; ++it) {
    const Eigen::VectorXd z = xa * theta;
    Eigen::VectorXd prob(n), s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob(i) = sigmoid(z(i));
      s(i) = prob(i) * (1 - prob(i));
    }
    const Eigen::VectorXd grad = xa.transpose() * (prob - yv) + reg.cwiseProduct(theta);
    p.iterations = it;
    if (grad.norm() <= opt.tolerance) {
      p.converged = true;
      break;
    }
    if (it == opt.max_iterations) break;
    Eigen::MatrixXd hess = xa.transpose() * s.asDiagonal() * xa;
    hess.diagonal() += reg;
    hess.diagonal().array() += 1e-12;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    const double slope = grad.dot(step);
    if (slope <= 1e-12 * std::max(1.0, std::abs(f))) {
      // Predicted decrease is below rounding in f, so a line search cannot
      // tell steps apart; this close to the optimum the full step is safe.
      theta -= step;
      f = objective(theta);
      continue;
    }
    double t = 1.0;
    Eigen::VectorXd next = theta - step;
    double fn = objective(next);
    for (int k = 0; k < 60 && !(fn <= f - 1e-4 * t * slope); ++k) {
      t *= 0.5;
      next = theta - t * step;
      fn = objective(next);
    }
    if (!(fn <= f)) break;  // no further progress at machine precision
    theta = std::move(next);
    f = fn;
  }
  if (!theta.allFinite()) fail(ErrorKind::numerical, "probe weights diverged");
  p.weights = theta.head(d);
  p.bias = theta(d);
  return p;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& gold) {
  if (pred.size() != gold.size() || pred.empty()) fail(ErrorKind::input, "accuracy needs equal, non-empty inputs");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == gold[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

std::vector<int> grouped_folds(const std::vector<std::string>& groups, int folds, std::uint64_t seed) {
  if (folds < 2) fail(ErrorKind::input, "need at least two folds");
  std::map<std::string, std::size_t> sizes;
  for (const auto& g : groups) ++sizes[g];
  if (sizes.size() < static_cast<std::size_t>(folds))
    fail(ErrorKind::input, fmt::format("{} groups cannot fill {} folds", sizes.size(), folds));
  std::vector<std::string> order;
  for (const auto& [g, n] : sizes) order.push_back(g);
  std::mt19937_64 rng(seed);
  deterministic_shuffle(order, rng);
  std::vector<std::size_t> load(static_cast<std::size_t>(folds), 0);
  std::map<std::string, int> fold_of;
  for (const auto& g : order) {
    const auto f = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
    fold_of[g] = static_cast<int>(f);
    load[f] += sizes[g];
  }
  std::vector<int> out;
  out.reserve(groups.size());
  for (const auto& g : groups) out.push_back(fold_of[g]);
  return out;
}

namespace {

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& x, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

template <class T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

}  // namespace

CvResult grouped_cv_f1(const Eigen::MatrixXd& x, const std::vector<int>& y, const std::vector<std::string>& groups,
                       int folds, const ProbeOptions& opt, unsigned jobs) {
  if (groups.size() != y.size() || static_cast<std::size_t>(x.rows()) != y.size())
    fail(ErrorKind::input, "samples, labels and groups differ in length");
  const std::vector<int> fold = grouped_folds(groups, folds, opt.seed);
  CvResult r;
  r.fold_f1.assign(static_cast<std::size_t>(folds), 0.0);
  parallel_for(static_cast<std::size_t>(folds), jobs, [&](std::size_t f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < y.size(); ++i) (fold[i] == static_cast<int>(f) ? test : train).push_back(i);
    const Probe p = train_probe(rows_of(x, train), pick(y, train), opt);
    r.fold_f1[f] = macro_f1(p.predict(rows_of(x, test)), pick(y, test));
  });
  r.mean_f1 = std::accumulate(r.fold_f1.begin(), r.fold_f1.end(), 0.0) / folds;
  double ss = 0;
  for (double v : r.fold_f1) ss += (v - r.mean_f1) * (v - r.mean_f1);
  r.std_f1 = std::sqrt(ss / folds);
  return r;
}

void FrequencyTable::set(std::string_view token, double zipf) {
  if (!(zipf > 0) || !std::isfinite(zipf))
    fail(ErrorKind::validation, fmt::format("zipf frequency of '{}' must be positive", token));
  values_[casefold(token)] = zipf;
}

std::optional<double> FrequencyTable::find(std::string_view token) const {
  auto it = values_.find(casefold(token));
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

FrequencyTable parse_frequency_table(std::istream& in, std::string_view source) {
  FrequencyTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) fail(ErrorKind::parse, fmt::format("{}:{}: expected token<TAB>zipf", source, lineno));
    const std::string value = line.substr(tab + 1);
    std::size_t used = 0;
    double z = 0;
    try {
      z = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size())
      fail(ErrorKind::parse, fmt::format("{}:{}: bad zipf frequency '{}'", source, lineno, value));
    try {
      t.set(line.substr(0, tab), z);
    } catch (const Error& e) {
      fail(ErrorKind::validation, fmt::format("{}:{}: {}", source, lineno, e.what()));
    }
  }
  return t;
}

FrequencyTable load_frequency_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, fmt::format("cannot open frequency table {}", path.string()));
  return parse_frequency_table(in, path.string());
}

double frequency_feature(const std::vector<std::string>& pie_tokens, const FrequencyTable& table,
                         double missing_zipf) {
  if (pie_tokens.empty()) fail(ErrorKind::input, "frequency feature of an empty PIE");
  if (!(missing_zipf > 0)) fail(ErrorKind::input, "default zipf frequency must be positive");
  double inv = 0;
  for (const auto& t : pie_tokens) inv += 1.0 / table.find(t).value_or(missing_zipf);
  return 0.5 * static_cast<double>(pie_tokens.size()) / inv;
}

std::vector<int> frequency_baseline_labels(const std::vector<PieSentence>& sentences, const FrequencyTable& table,
                                           double missing_zipf) {
  if (sentences.empty()) fail(ErrorKind::empty_set, "frequency baseline over no sentences");
  std::vector<double> h;
  h.reserve(sentences.size());
  for (const auto& s : sentences) {
    std::vector<std::string> toks;
    for (int w : s.pie_word_indices) toks.push_back(s.tokens[static_cast<std::size_t>(w)]);
    h.push_back(frequency_feature(toks, table, missing_zipf));
  }
  const double mean = std::accumulate(h.begin(), h.end(), 0.0) / static_cast<double>(h.size());
  std::vector<int> out;
  out.reserve(h.size());
  for (double v : h) out.push_back(v >= mean ? 1 : 0);
  return out;
}

ProbeSamples collect_pie_samples(const DumpIndex& dumps, const std::vector<PieSentence>& sentences,
                                 const SentenceLabeler& label_of, int layer, bool mean_pool) {
  std::vector<Eigen::MatrixXd> blocks;
  ProbeSamples out;
  Eigen::Index dim = -1, rows = 0;
  for (const auto& s : sentences) {
    const auto label = label_of(s);
    if (!label) continue;
    auto it = dumps.find(s.id);
    if (it == dumps.end()) fail(ErrorKind::consistency, fmt::format("no dump for sentence '{}'", s.id));
    const auto toks = select_subtokens(*it->second, s, TokenClass::pie_token);
    if (toks.empty()) continue;
    Eigen::MatrixXd h = gather_hidden(*it->second, layer, toks).transpose();
    if (dim < 0) dim = h.cols();
    if (h.cols() != dim) fail(ErrorKind::consistency, fmt::format("dump '{}' has a different hidden size", s.id));
    if (mean_pool) h = h.colwise().mean().eval();
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
      out.y.push_back(*label);
      out.groups.push_back(s.idiom_id);
      out.sentence_ids.push_back(s.id);
    }
    rows += h.rows();
    blocks.push_back(std::move(h));
  }
  out.x.resize(rows, std::max<Eigen::Index>(dim, 0));
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    out.x.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  return out;
}

ProbeSamples select_rows(const ProbeSamples& s, const std::vector<std::size_t>& rows) {
  ProbeSamples out;
  out.x = rows_of(s.x, rows);
  out.y = pick(s.y, rows);
  out.groups = pick(s.groups, rows);
  out.sentence_ids = pick(s.sentence_ids, rows);
  return out;
}

AmnesicResult amnesic_success(const LabelMap& pre, const LabelMap& post, const CorpusSet& corpus,
                              const TranslationMap& pre_tr, const TranslationMap& post_tr, const BleuConfig& cfg) {
  for (const auto& [id, l] : post)
    if (corpus.find(id) && !pre.count(id))
      fail(ErrorKind::consistency, fmt::format("post-intervention label for '{}' has no pre-intervention label", id));
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // idiom -> (flipped, total)
  TokenizedCorpus cand, ref;
  AmnesicResult r;
  for (const auto& [id, before] : pre) {
    const PieSentence* s = corpus.find(id);
    if (!s) continue;
    if (before.label2 != Label2::paraphrase)
      fail(ErrorKind::input, fmt::format("sentence '{}' is not a paraphrase before the intervention", id));
    auto after = post.find(id);
    if (after == post.end()) fail(ErrorKind::consistency, fmt::format("no post-intervention label for '{}'", id));
    auto& c = counts[s->idiom_id];
    ++c.second;
    ++r.considered;
    if (after->second.label2 != Label2::word_for_word) continue;
    ++c.first;
    ++r.flipped;
    auto a = pre_tr.find(id);
    auto b = post_tr.find(id);
    if (a == pre_tr.end() || b == post_tr.end())
      fail(ErrorKind::consistency, fmt::format("missing translation for flipped sentence '{}'", id));
    ref.push_back(a->second.target_tokens);
    cand.push_back(b->second.target_tokens);
  }
  if (counts.empty()) fail(ErrorKind::empty_set, "no intervention sentences in the corpus");
  double total = 0;
  for (const auto& [idiom, c] : counts) {
    const double pct = 100.0 * static_cast<double>(c.first) / static_cast<double>(c.second);
    r.success_by_idiom[idiom] = pct;
    total += pct;
  }
  r.mean_success = total / static_cast<double>(counts.size());
  if (!cand.empty()) r.bleu = bleu(cand, ref, cfg);
  return r;
}

std::vector<SweepRow> layer_selection_sweep(const std::vector<std::vector<int>>& subsets,
                                            const std::function<PostIntervention(const std::vector<int>&)>& relabel,
                                            const LabelMap& pre, const CorpusSet& corpus,
                                            const TranslationMap& pre_tr, const BleuConfig& cfg) {
  std::vector<SweepRow> out;
  for (const auto& layers : subsets) {
    SweepRow row;
    row.layers = layers;
    std::sort(row.layers.begin(), row.layers.end());
    if (std::adjacent_find(row.layers.begin(), row.layers.end()) != row.layers.end())
      fail(ErrorKind::input, "layer subset lists a layer twice");
    if (row.layers.empty()) {
      row.result = amnesic_success(pre, pre, corpus, pre_tr, pre_tr, cfg);
    } else {
      const PostIntervention post = relabel(row.layers);
      row.result = amnesic_success(pre, post.labels, corpus, pre_tr, post.translations, cfg);
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace idiolens
