#include "idiolens/attnstats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "idiolens/parallel.hpp"

namespace idiolens {

std::string_view to_string(Analysis a) noexcept {
  switch (a) {
    case Analysis::pie2noun: return "pie2noun";
    case Analysis::pie2ctx: return "pie2ctx";
    case Analysis::ctx2pie: return "ctx2pie";
    case Analysis::xattn_noun: return "xattn_noun";
    case Analysis::xattn_pie_other: return "xattn_pie_other";
    case Analysis::xattn_eos: return "xattn_eos";
  }
  return "pie2noun";
}

Analysis parse_analysis(std::string_view text) {
  for (Analysis a : {Analysis::pie2noun, Analysis::pie2ctx, Analysis::ctx2pie, Analysis::xattn_noun,
                     Analysis::xattn_pie_other, Analysis::xattn_eos})
    if (text == to_string(a)) return a;
  fail(ErrorKind::input, fmt::format("unknown analysis '{}'", text));
}

bool is_encoder_analysis(Analysis a) noexcept {
  return a == Analysis::pie2noun || a == Analysis::pie2ctx || a == Analysis::ctx2pie;
}

std::vector<int> context_words(const PieSentence& s, const ProfileOptions& opt) {
  const int n = static_cast<int>(s.tokens.size());
  const int lo = std::max(0, s.first_pie() - opt.context_window);
  const int hi = std::min(n - 1, s.last_pie() + opt.context_window);
  std::vector<int> out;
  if (opt.ctx_all_tokens) {
    for (int w = lo; w <= hi; ++w)
      if (!s.in_pie(w)) out.push_back(w);
  } else {
    for (int w : s.context_noun_indices)
      if (w >= lo && w <= hi) out.push_back(w);
    std::sort(out.begin(), out.end());
  }
  return out;
}

namespace {

void check_sentence(const ActivationDump& dump, const PieSentence& s) {
  if (dump.sentence_id != s.id)
    fail(ErrorKind::consistency, fmt::format("dump '{}' paired with sentence '{}'", dump.sentence_id, s.id));
  if (dump.src_words() != static_cast<int>(s.tokens.size()))
    fail(ErrorKind::consistency, fmt::format("dump '{}' maps {} source words, sentence has {}", s.id,
                                             dump.src_words(), s.tokens.size()));
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::optional<double> encoder_profile(const ActivationDump& dump, const PieSentence& s, int layer,
                                      Analysis analysis, const ProfileOptions& opt) {
  if (!is_encoder_analysis(analysis))
    fail(ErrorKind::input, fmt::format("{} is not an encoder analysis", to_string(analysis)));
  if (s.keyword_indices.empty()) fail(ErrorKind::input, fmt::format("sentence '{}' has no keywords", s.id));
  check_sentence(dump, s);
  const int words = static_cast<int>(s.tokens.size());
  const Eigen::MatrixXd m = word_attention(layer_attention(dump.enc_self_attn, layer, opt.head),
                                           dump.subword_to_word_src, words, dump.subword_to_word_src, words);

  if (analysis == Analysis::pie2noun) {
    std::vector<double> per_keyword;
    for (int k : s.keyword_indices) {
      double sum = 0;
      int n = 0;
      for (int q : s.pie_word_indices) {
        if (q == k) continue;
        sum += m(q, k);
        ++n;
      }
      if (n > 0) per_keyword.push_back(sum / n);
    }
    if (per_keyword.empty()) return std::nullopt;
    return mean_of(per_keyword);
  }

  const std::vector<int> ctx = context_words(s, opt);
  if (ctx.empty()) return std::nullopt;
  if (analysis == Analysis::pie2ctx) {
    double sum = 0;
    for (int q : s.pie_word_indices)
      for (int c : ctx) sum += m(q, c);
    return sum / static_cast<double>(s.pie_word_indices.size() * ctx.size());
  }
  std::vector<double> per_keyword;
  for (int k : s.keyword_indices) {
    double sum = 0;
    for (int c : ctx) sum += m(c, k);
    per_keyword.push_back(sum / static_cast<double>(ctx.size()));
  }
  return mean_of(per_keyword);
}

std::optional<CrossProfile> cross_profile(const ActivationDump& dump, const AlignmentPairs& alignment,
                                          const PieSentence& s, int layer, const ProfileOptions& opt) {
  if (s.keyword_indices.empty()) fail(ErrorKind::input, fmt::format("sentence '{}' has no keywords", s.id));
  check_sentence(dump, s);
  if (dump.cross_attn.rank() != 4) fail(ErrorKind::consistency, fmt::format("dump '{}' has no cross-attention", s.id));
  const Eigen::MatrixXd x = layer_attention(dump.cross_attn, layer, opt.head);
  const int tgt_words = dump.tgt_words();

  std::vector<CrossProfile> per_keyword;
  for (int k : s.keyword_indices) {
    const auto t = aligned_target_token(alignment, k);
    if (!t) continue;
    if (*t >= tgt_words)
      fail(ErrorKind::consistency, fmt::format("sentence '{}': aligned target word {} outside {} target words",
                                               s.id, *t, tgt_words));
    const auto rows = subtokens_of(dump.subword_to_word_tgt, *t);
    std::vector<int> noun_cols = subtokens_of(dump.subword_to_word_src, k);
    std::vector<int> other_cols;
    for (int w : s.pie_word_indices) {
      if (w == k) continue;
      for (int c : subtokens_of(dump.subword_to_word_src, w)) other_cols.push_back(c);
    }
    CrossProfile p;
    for (int r : rows) {
      for (int c : noun_cols) p.to_noun += x(r, c);
      for (int c : other_cols) p.to_pie_other += x(r, c);
      if (dump.eos_index >= 0) p.to_eos += x(r, dump.eos_index);
    }
    const double n = static_cast<double>(rows.size());
    p.to_noun /= n;
    p.to_pie_other /= n;
    p.to_eos /= n;
    per_keyword.push_back(p);
  }
  if (per_keyword.empty()) return std::nullopt;
  CrossProfile out;
  for (const auto& p : per_keyword) {
    out.to_noun += p.to_noun;
    out.to_pie_other += p.to_pie_other;
    out.to_eos += p.to_eos;
  }
  const double n = static_cast<double>(per_keyword.size());
  out.to_noun /= n;
  out.to_pie_other /= n;
  out.to_eos /= n;
  return out;
}

DumpIndex index_dumps(const std::vector<ActivationDump>& dumps) {
  DumpIndex idx;
  for (const auto& d : dumps)
    if (!idx.emplace(d.sentence_id, &d).second)
      fail(ErrorKind::consistency, fmt::format("two dumps for sentence '{}'", d.sentence_id));
  return idx;
}

namespace {

const ActivationDump& dump_for(const DumpIndex& dumps, const std::string& id) {
  auto it = dumps.find(id);
  if (it == dumps.end()) fail(ErrorKind::consistency, fmt::format("no dump for sentence '{}'", id));
  return *it->second;
}

int common_layers(const DumpIndex& dumps, const std::vector<PieSentence>& sentences) {
  int layers = -1;
  for (const auto& s : sentences) {
    const int l = dump_for(dumps, s.id).layers();
    if (layers >= 0 && l != layers)
      fail(ErrorKind::consistency, fmt::format("dump '{}' has {} layers, expected {}", s.id, l, layers));
    layers = l;
  }
  return std::max(layers, 0);
}

}  // namespace

AttnProfile encoder_profiles(const DumpIndex& dumps, const std::vector<PieSentence>& sentences,
                             Analysis analysis, Category subset, const ProfileOptions& opt) {
  AttnProfile out;
  out.analysis = analysis;
  out.subset = subset;
  const int layers = common_layers(dumps, sentences);
  out.per_layer.assign(layers, {});
  std::vector<std::vector<std::optional<double>>> values(sentences.size());
  parallel_for(sentences.size(), opt.jobs, [&](std::size_t i) {
    const auto& s = sentences[i];
    if (s.keyword_indices.empty()) return;
    const auto& d = dump_for(dumps, s.id);
    values[i].resize(layers);
    for (int l = 0; l < layers; ++l) values[i][l] = encoder_profile(d, s, l, analysis, opt);
  });
  for (const auto& v : values) {
    ++out.sentences;
    bool any = false;
    for (std::size_t l = 0; l < v.size(); ++l)
      if (v[l]) {
        out.per_layer[l].push_back(*v[l]);
        any = true;
      }
    if (!any) ++out.skipped;
  }
  return out;
}

CrossProfiles cross_profiles(const DumpIndex& dumps, const std::vector<PieSentence>& sentences,
                             const std::map<std::string, AlignmentPairs, std::less<>>& alignment_of,
                             Category subset, const ProfileOptions& opt) {
  CrossProfiles out;
  out.noun.analysis = Analysis::xattn_noun;
  out.pie_other.analysis = Analysis::xattn_pie_other;
  out.eos.analysis = Analysis::xattn_eos;
  out.noun.subset = out.pie_other.subset = out.eos.subset = subset;
  const int layers = common_layers(dumps, sentences);
  for (auto* p : {&out.noun, &out.pie_other, &out.eos}) p->per_layer.assign(layers, {});

  static const AlignmentPairs kNone;
  std::vector<std::vector<std::optional<CrossProfile>>> values(sentences.size());
  parallel_for(sentences.size(), opt.jobs, [&](std::size_t i) {
    const auto& s = sentences[i];
    if (s.keyword_indices.empty()) return;
    auto it = alignment_of.find(s.id);
    const AlignmentPairs& pairs = it == alignment_of.end() ? kNone : it->second;
    const auto& d = dump_for(dumps, s.id);
    values[i].resize(layers);
    for (int l = 0; l < layers; ++l) values[i][l] = cross_profile(d, pairs, s, l, opt);
  });
  for (const auto& v : values) {
    ++out.considered;
    for (auto* p : {&out.noun, &out.pie_other, &out.eos}) ++p->sentences;
    if (v.empty() || !v.front()) {
      ++out.absent_alignment;
      for (auto* p : {&out.noun, &out.pie_other, &out.eos}) ++p->skipped;
      continue;
    }
    for (std::size_t l = 0; l < v.size(); ++l) {
      out.noun.per_layer[l].push_back(v[l]->to_noun);
      out.pie_other.per_layer[l].push_back(v[l]->to_pie_other);
      out.eos.per_layer[l].push_back(v[l]->to_eos);
    }
  }
  return out;
}

BoxStats box_stats(std::vector<double> v) {
  if (v.empty()) fail(ErrorKind::empty_set, "box statistics of an empty sample");
  std::sort(v.begin(), v.end());
  auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  BoxStats b;
  b.n = v.size();
  b.mean = mean_of(v);
  b.q1 = quantile(0.25);
  b.median = quantile(0.5);
  b.q3 = quantile(0.75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr, hi_fence = b.q3 + 1.5 * iqr;
  b.lo_whisker = *std::find_if(v.begin(), v.end(), [&](double x) { return x >= lo_fence; });
  b.hi_whisker = *std::find_if(v.rbegin(), v.rend(), [&](double x) { return x <= hi_fence; });
  return b;
}

std::vector<LayerDifference> subset_difference(const AttnProfile& a, const AttnProfile& b,
                                               std::vector<std::string>* warnings) {
  if (a.analysis != b.analysis) fail(ErrorKind::consistency, "subset difference across different analyses");
  std::vector<LayerDifference> out;
  const std::size_t layers = std::max(a.per_layer.size(), b.per_layer.size());
  for (std::size_t l = 0; l < layers; ++l) {
    const bool ea = l >= a.per_layer.size() || a.per_layer[l].empty();
    const bool eb = l >= b.per_layer.size() || b.per_layer[l].empty();
    if (ea || eb) {
      if (warnings)
        warnings->push_back(fmt::format("{} layer {}: empty subset {}, layer omitted", to_string(a.analysis), l,
                                        ea ? to_string(a.subset) : to_string(b.subset)));
      continue;
    }
    LayerDifference d;
    d.layer = static_cast<int>(l);
    d.minuend = box_stats(a.per_layer[l]);
    d.subtrahend = box_stats(b.per_layer[l]);
    d.difference = d.minuend.mean - d.subtrahend.mean;
    out.push_back(d);
  }
  return out;
}

std::vector<AttentionDelta> inlp_attention_delta(const std::vector<ActivationDump>& normal,
                                                 const std::vector<ActivationDump>& projected,
                                                 const std::vector<PieSentence>& sentences,
                                                 const ProfileOptions& opt) {
  const DumpIndex ni = index_dumps(normal), pi = index_dumps(projected);
  int layers = -1;
  for (const auto& s : sentences) {
    auto n = ni.find(s.id);
    auto p = pi.find(s.id);
    if (n == ni.end()) fail(ErrorKind::consistency, fmt::format("no normal dump for '{}'", s.id));
    if (p == pi.end()) fail(ErrorKind::consistency, fmt::format("no projected dump for '{}'", s.id));
    if (n->second->variant.kind != DumpVariant::Kind::normal)
      fail(ErrorKind::consistency, fmt::format("dump for '{}' is not a normal variant", s.id));
    if (p->second->variant.kind != DumpVariant::Kind::projected)
      fail(ErrorKind::consistency, fmt::format("dump for '{}' is not a projected variant", s.id));
    if (n->second->layers() != p->second->layers() || (layers >= 0 && n->second->layers() != layers))
      fail(ErrorKind::consistency, fmt::format("layer count mismatch for '{}'", s.id));
    layers = n->second->layers();
  }
  std::vector<AttentionDelta> out;
  for (Analysis a : {Analysis::pie2noun, Analysis::pie2ctx, Analysis::ctx2pie}) {
    for (int l = 0; l < std::max(layers, 0); ++l) {
      AttentionDelta row;
      row.analysis = a;
      row.layer = l;
      for (const auto& s : sentences) {
        if (s.keyword_indices.empty()) continue;
        const auto before = encoder_profile(*ni.at(s.id), s, l, a, opt);
        const auto after = encoder_profile(*pi.at(s.id), s, l, a, opt);
        if (!before || !after) continue;
        row.normal_mean += *before;
        row.projected_mean += *after;
        ++row.n;
      }
      if (row.n == 0) continue;
      row.normal_mean /= static_cast<double>(row.n);
      row.projected_mean /= static_cast<double>(row.n);
      row.delta = row.projected_mean - row.normal_mean;
      out.push_back(row);
    }
  }
  return out;
}

}  // namespace idiolens
