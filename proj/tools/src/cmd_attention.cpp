#include <fmt/format.h>

#include "commands.hpp"
#include "idiolens/alignment.hpp"
#include "idiolens/attnstats.hpp"
#include "idiolens/io.hpp"

namespace idiolens::cli {

namespace {

const std::vector<std::string> kStatsHeader{"language", "analysis", "subset", "layer", "mean", "q1", "median",
                                            "q3", "lo_whisker", "hi_whisker", "n"};

void add_profile_rows(CsvTable& t, const std::string& lang, const AttnProfile& p) {
  for (std::size_t l = 0; l < p.per_layer.size(); ++l) {
    std::vector<std::string> row{lang, std::string(to_string(p.analysis)), std::string(to_string(p.subset)),
                                 std::to_string(l)};
    if (p.per_layer[l].empty()) {
      row.insert(row.end(), {"", "", "", "", "", "", "0"});
    } else {
      const BoxStats b = box_stats(p.per_layer[l]);
      for (double v : {b.mean, b.q1, b.median, b.q3, b.lo_whisker, b.hi_whisker}) row.push_back(format_real(v));
      row.push_back(std::to_string(b.n));
    }
    t.add_row(std::move(row));
  }
}

void add_difference_rows(CsvTable& t, const std::string& lang, const AttnProfile& a, const AttnProfile& b,
                         const Context& ctx) {
  std::vector<std::string> warnings;
  for (const auto& d : subset_difference(a, b, &warnings))
    t.add_row({lang, std::string(to_string(a.analysis)), std::string(to_string(a.subset)),
               std::string(to_string(b.subset)), std::to_string(d.layer), format_real(d.difference),
               std::to_string(d.minuend.n), std::to_string(d.subtrahend.n)});
  for (const auto& w : warnings) ctx.warn(w);
}

const std::vector<std::string> kDiffHeader{"language", "analysis", "minuend", "subtrahend", "layer",
                                           "difference", "n_minuend", "n_subtrahend"};

std::vector<std::string> default_subsets(const std::vector<std::string>& given) {
  return given.empty() ? std::vector<std::string>{"fig-par", "lit-wfw"} : given;
}

}  // namespace

void run_attn(const AttnArgs& a, const Context& ctx) {
  const CorpusSet corpus = load_corpus(a.corpus);
  const auto labels = maybe_labels(a.labels);
  const LabelMap* lp = labels ? &*labels : nullptr;
  const SubsetKind filter = parse_subset_kind(a.filter);
  const std::vector<ActivationDump> dumps = load_variant(a.dump, DumpVariant::Kind::normal);
  const DumpIndex index = index_dumps(dumps);

  std::vector<Analysis> analyses;
  for (const auto& n : a.analyses.empty() ? std::vector<std::string>{"pie2noun", "pie2ctx", "ctx2pie"} : a.analyses) {
    const Analysis an = parse_analysis(n);
    if (!is_encoder_analysis(an)) fail(ErrorKind::input, fmt::format("'{}' is a cross-attention analysis; use xattn", n));
    analyses.push_back(an);
  }
  const std::vector<Category> subsets = parse_categories(default_subsets(a.subsets));
  if (!a.diff_out.empty() && subsets.size() != 2)
    fail(ErrorKind::input, "--diff-out needs exactly two subsets (minuend first)");

  ProfileOptions opt;
  opt.ctx_all_tokens = a.ctx_all_tokens;
  opt.head = a.head;
  opt.jobs = ctx.jobs;

  std::vector<std::vector<PieSentence>> selected;
  for (Category c : subsets) selected.push_back(sentences_for(corpus, filter, c, lp, &index, ctx));

  CsvTable stats(kStatsHeader);
  CsvTable diff(kDiffHeader);
  for (Analysis an : analyses) {
    std::vector<AttnProfile> profiles;
    for (std::size_t i = 0; i < subsets.size(); ++i) {
      profiles.push_back(encoder_profiles(index, selected[i], an, subsets[i], opt));
      add_profile_rows(stats, ctx.language, profiles.back());
    }
    if (!a.diff_out.empty()) add_difference_rows(diff, ctx.language, profiles[0], profiles[1], ctx);
  }
  write_output(a.out, stats.str());
  if (!a.diff_out.empty()) write_output(a.diff_out, diff.str());

  if (!a.projected.empty()) {
    if (a.delta_out.empty()) fail(ErrorKind::input, "--projected needs --delta-out");
    const std::vector<ActivationDump> projected = load_variant(a.projected, DumpVariant::Kind::projected);
    const DumpIndex pindex = index_dumps(projected);
    std::vector<PieSentence> sentences;
    for (const auto& s : filter_subset(corpus, filter, lp))
      if (pindex.count(s.id)) sentences.push_back(s);
    CsvTable t({"language", "analysis", "layer", "normal_mean", "projected_mean", "delta", "n"});
    for (const auto& d : inlp_attention_delta(dumps, projected, sentences, opt))
      t.add_row({ctx.language, std::string(to_string(d.analysis)), std::to_string(d.layer), format_real(d.normal_mean),
                 format_real(d.projected_mean), format_real(d.delta), std::to_string(d.n)});
    write_output(a.delta_out, t.str());
  }
}

void run_xattn(const XattnArgs& a, const Context& ctx) {
  const CorpusSet corpus = load_corpus(a.corpus);
  const auto labels = maybe_labels(a.labels);
  const LabelMap* lp = labels ? &*labels : nullptr;
  const SubsetKind filter = parse_subset_kind(a.filter);
  const std::vector<ActivationDump> dumps = load_variant(a.dump, DumpVariant::Kind::normal);
  const DumpIndex index = index_dumps(dumps);
  const AlignmentSet alignments = load_alignments(a.alignments);
  validate_alignments(alignments, corpus);
  std::map<std::string, AlignmentPairs, std::less<>> by_id;
  for (std::size_t i = 0; i < corpus.size(); ++i) by_id[corpus[i].id] = alignments[i];

  const std::vector<Category> subsets = parse_categories(default_subsets(a.subsets));
  if (!a.diff_out.empty() && subsets.size() != 2)
    fail(ErrorKind::input, "--diff-out needs exactly two subsets (minuend first)");
  ProfileOptions opt;
  opt.head = a.head;
  opt.jobs = ctx.jobs;

  std::vector<CrossProfiles> results;
  for (Category c : subsets) {
    results.push_back(cross_profiles(index, sentences_for(corpus, filter, c, lp, &index, ctx), by_id, c, opt));
    const CrossProfiles& r = results.back();
    if (r.absent_fraction() > kMaxAbsentAlignmentFraction)
      ctx.warn(fmt::format("{}: {} of {} sentences lack an aligned keyword ({:.1f}% > {:.0f}%)", to_string(c),
                           r.absent_alignment, r.considered, 100 * r.absent_fraction(),
                           100 * kMaxAbsentAlignmentFraction));
  }
  CsvTable stats(kStatsHeader);
  CsvTable diff(kDiffHeader);
  for (int which = 0; which < 3; ++which) {
    auto pick = [which](const CrossProfiles& r) -> const AttnProfile& {
      return which == 0 ? r.noun : which == 1 ? r.pie_other : r.eos;
    };
    for (const auto& r : results) add_profile_rows(stats, ctx.language, pick(r));
    if (!a.diff_out.empty()) add_difference_rows(diff, ctx.language, pick(results[0]), pick(results[1]), ctx);
  }
  write_output(a.out, stats.str());
  if (!a.diff_out.empty()) write_output(a.diff_out, diff.str());
}

void add_attention_commands(CLI::App& app, Context& ctx) {
  {
    auto a = std::make_shared<AttnArgs>();
    auto* c = app.add_subcommand("attn", "Encoder self-attention statistics");
    c->add_option("--dump", a->dump, "Dump file or directory")->required();
    c->add_option("--corpus", a->corpus)->required();
    c->add_option("--labels", a->labels);
    c->add_option("--analysis", a->analyses, "pie2noun, pie2ctx, ctx2pie; repeatable (default all)");
    c->add_option("--subset", a->subsets, "Category; repeatable (default fig-par and lit-wfw)");
    c->add_option("--filter", a->filter, "all, identical, intersection or length_controlled");
    c->add_flag("--ctx-all-tokens", a->ctx_all_tokens, "Use every context word, not only nouns");
    c->add_option("--head", a->head, "Single head instead of the head mean");
    c->add_option("--out", a->out)->required();
    c->add_option("--diff-out", a->diff_out, "Per-layer difference of the two subsets");
    c->add_option("--projected", a->projected, "Projected-variant dumps for attention deltas");
    c->add_option("--delta-out", a->delta_out);
    c->callback([a, &ctx] { run_attn(*a, ctx); });
  }
  {
    auto a = std::make_shared<XattnArgs>();
    auto* c = app.add_subcommand("xattn", "Cross-attention from target words aligned to keywords");
    c->add_option("--dump", a->dump)->required();
    c->add_option("--corpus", a->corpus)->required();
    c->add_option("--labels", a->labels);
    c->add_option("--alignments", a->alignments, "Pharaoh file, one line per corpus sentence")->required();
    c->add_option("--subset", a->subsets);
    c->add_option("--filter", a->filter);
    c->add_option("--head", a->head);
    c->add_option("--out", a->out)->required();
    c->add_option("--diff-out", a->diff_out);
    c->callback([a, &ctx] { run_xattn(*a, ctx); });
  }
}

}  // namespace idiolens::cli
