#include <fstream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "idiolens/io.hpp"
#include "idiolens/labeler.hpp"
#include "idiolens/text.hpp"

namespace idiolens::cli {

using nlohmann::json;

namespace {

struct PosEntry {
  std::vector<std::string> tokens;
  std::vector<std::string> pos;
};

std::string id_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  fail(ErrorKind::parse, "id must be a string or an integer");
}

std::map<std::string, PosEntry> load_pos_sidecar(const fs::path& path) {
  std::map<std::string, PosEntry> out;
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, fmt::format("cannot open POS file {}", path.string()));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json r = json::parse(line);
      PosEntry e{r.at("tokens").get<std::vector<std::string>>(), r.at("pos").get<std::vector<std::string>>()};
      if (e.tokens.size() != e.pos.size()) fail(ErrorKind::parse, "tokens and pos differ in length");
      out[id_string(r.at("id"))] = std::move(e);
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    } catch (const Error& e) {
      fail(ErrorKind::parse, fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

bool is_colour(const std::string& word) {
  static const std::set<std::string> colours{"black", "blue",   "brown", "crimson", "gold",  "golden",
                                             "gray",  "green",  "grey",  "orange",  "pink",  "purple",
                                             "red",   "scarlet", "silver", "violet", "white", "yellow"};
  return colours.count(casefold(strip_punct(word))) > 0;
}

bool is_noun(const std::string& tag) { return tag == "NOUN" || tag == "PROPN"; }

/// Character span of each token, found left to right in `text`.
std::optional<std::vector<std::pair<std::size_t, std::size_t>>> token_spans(const std::string& text,
                                                                          const std::vector<std::string>& tokens) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t at = 0;
  for (const auto& t : tokens) {
    const auto pos = text.find(t, at);
    if (t.empty() || pos == std::string::npos) return std::nullopt;
    spans.emplace_back(pos, pos + t.size());
    at = pos + t.size();
  }
  return spans;
}

}  // namespace

void run_convert(const ConvertArgs& a, const Context& ctx) {
  std::map<std::string, PosEntry> sidecar;
  if (!a.pos.empty()) sidecar = load_pos_sidecar(a.pos);
  std::ifstream in(a.magpie);
  if (!in) fail(ErrorKind::io, fmt::format("cannot open MAGPIE file {}", a.magpie.string()));
  std::vector<PieSentence> out;
  std::map<std::string, std::size_t> skipped;
  std::size_t no_keyword = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = fmt::format("{}:{}", a.magpie.string(), lineno);
    json r;
    try {
      r = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, fmt::format("{}: {}", where, e.what()));
    }
    try {
      PieSentence s;
      s.id = id_string(r.at("id"));
      const std::string label = r.at("label").get<std::string>();
      if (label == "i") {
        s.gold_label = GoldLabel::figurative;
      } else if (label == "l") {
        s.gold_label = GoldLabel::literal;
      } else {
        ++skipped["label neither figurative nor literal"];
        continue;
      }
      const auto context = r.at("context").get<std::vector<std::string>>();
      if (context.size() < 3) fail(ErrorKind::parse, "context must hold at least three sentences");
      const std::string& text = context[2];
      s.idiom_id = r.at("idiom").get<std::string>();
      s.identical_match = r.value("variant_type", std::string()) == "identical";

      PosEntry tagged;
      if (auto it = sidecar.find(s.id); it != sidecar.end()) {
        tagged = it->second;
      } else if (r.contains("pos")) {
        tagged.tokens = r.contains("tokens") ? r["tokens"].get<std::vector<std::string>>() : split_whitespace(text);
        tagged.pos = r["pos"].get<std::vector<std::string>>();
      } else {
        ++skipped["no part-of-speech tags"];
        continue;
      }
      if (tagged.tokens.size() != tagged.pos.size()) fail(ErrorKind::parse, "tokens and pos differ in length");
      const auto spans = token_spans(text, tagged.tokens);
      if (!spans) {
        ++skipped["tokens do not match the sentence text"];
        continue;
      }
      std::vector<std::pair<std::size_t, std::size_t>> offsets;
      for (const auto& o : r.at("offsets")) offsets.emplace_back(o.at(0).get<std::size_t>(), o.at(1).get<std::size_t>());
      s.tokens = tagged.tokens;
      for (std::size_t i = 0; i < spans->size(); ++i) {
        const auto [b, e] = (*spans)[i];
        bool in_pie = false;
        for (const auto& [ob, oe] : offsets) in_pie = in_pie || (b < oe && ob < e);
        const std::string& tag = tagged.pos[i];
        if (in_pie) {
          s.pie_word_indices.push_back(static_cast<int>(i));
          if (is_noun(tag) || tag == "NUM" || (tag == "ADJ" && is_colour(s.tokens[i])))
            s.keyword_indices.push_back(static_cast<int>(i));
        } else if (is_noun(tag)) {
          s.context_noun_indices.push_back(static_cast<int>(i));
        }
      }
      if (s.pie_word_indices.empty()) {
        ++skipped["offsets cover no token"];
        continue;
      }
      if (s.keyword_indices.empty()) ++no_keyword;
      validate(s);
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, fmt::format("{}: {}", where, e.what()));
    } catch (const Error& e) {
      fail(e.kind(), fmt::format("{}: {}", where, e.what()));
    }
  }
  for (const auto& [reason, n] : skipped) ctx.warn(fmt::format("skipped {} records: {}", n, reason));
  if (no_keyword) ctx.warn(fmt::format("{} sentences have no keyword", no_keyword));
  write_output(a.out, corpus_to_jsonl(CorpusSet(std::move(out))));
}

void run_label(const LabelArgs& a, const Context& ctx) {
  const CorpusSet corpus = load_corpus(a.corpus);
  const TranslationMap translations = load_translations(a.translations);
  const LiteralLexicon lexicon = load_lexicon(a.lexicon);
  const LabelMap labels = label_corpus(corpus, translations, lexicon);
  if (labels.size() < corpus.size())
    ctx.warn(fmt::format("{} of {} sentences have no translation", corpus.size() - labels.size(), corpus.size()));
  write_output(a.out, labels_to_jsonl(labels));
}

void run_distribution(const DistributionArgs& a, const Context& ctx) {
  const CorpusSet corpus = load_corpus(a.corpus);
  CsvTable t({"language", "gold_label", "paraphrase_pct", "word_for_word_pct", "copy_pct", "n"});
  for (const auto& spec : a.labels) {
    const auto [lang, path] = language_path(spec, ctx);
    const LabelDistribution d = label_distribution(load_labels(path), corpus);
    for (const auto& [gold, share] : {std::pair{GoldLabel::figurative, d.figurative}, {GoldLabel::literal, d.literal}})
      t.add_row({lang, std::string(to_string(gold)), format_real(share.paraphrase_pct),
                 format_real(share.word_for_word_pct), format_real(share.copy_pct), std::to_string(share.n)});
  }
  write_output(a.out, t.str());
}

void run_agreement(const AgreementArgs& a, const Context& ctx) {
  const CorpusSet corpus = load_corpus(a.corpus);
  std::map<std::string, LabelMap> by_lang;
  for (const auto& spec : a.labels) {
    auto [lang, path] = language_path(spec, ctx);
    if (!by_lang.emplace(lang, load_labels(path)).second)
      fail(ErrorKind::input, fmt::format("language '{}' given twice", lang));
  }
  std::optional<GeneticSimilarity> sim;
  if (!a.similarity.empty()) sim = load_genetic_similarity(a.similarity);
  const AgreementResult r = agreement_matrix(by_lang, corpus, sim ? &*sim : nullptr);
  CsvTable t({"gold_language", "predicted_language", "macro_f1", "genetic_similarity"});
  for (std::size_t i = 0; i < r.languages.size(); ++i)
    for (std::size_t j = 0; j < r.languages.size(); ++j) {
      if (i == j) continue;
      std::optional<double> s;
      if (sim) s = sim->get(r.languages[i], r.languages[j]);
      t.add_row({r.languages[i], r.languages[j], format_real(r.f1(i, j)), format_real(s)});
    }
  write_output(a.out, t.str());
  if (!a.summary.empty()) {
    json s{{"languages", r.languages}, {"pairs", r.pairs}, {"pearson", nullptr}};
    if (r.pearson) s["pearson"] = *r.pearson;
    write_output(a.summary, s.dump(2) + "\n");
  }
  if (sim && !r.pearson) ctx.warn("Pearson correlation undefined (zero variance)");
}

void run_crosstab(const CrosstabArgs& a, const Context&) {
  const Crosstab c = crosstab_with_reference(load_labels(a.model_labels), load_labels(a.reference_labels),
                                             load_translations(a.model_translations),
                                             load_translations(a.reference_translations));
  CsvTable t({"reference_label", "model_label", "n", "row_pct", "bleu", "row_share_pct"});
  const Label2 order[2] = {Label2::paraphrase, Label2::word_for_word};
  for (int r = 0; r < 2; ++r)
    for (int m = 0; m < 2; ++m) {
      const CrosstabCell& cell = c.cells[r][m];
      t.add_row({std::string(to_string(order[r])), std::string(to_string(order[m])), std::to_string(cell.n),
                 format_real(cell.row_pct), format_real(cell.bleu), format_real(c.row_share_pct[r])});
    }
  write_output(a.out, t.str());
}

void run_lengths(const LengthsArgs& a, const Context& ctx) {
  const CorpusSet corpus = load_corpus(a.corpus);
  const auto labels = maybe_labels(a.labels);
  const LabelMap* lp = labels ? &*labels : nullptr;
  const SubsetKind filter = parse_subset_kind(a.filter);
  std::vector<std::string> names = a.categories;
  if (names.empty()) {
    names = {"fig", "lit"};
    if (lp) names.insert(names.end(), {"fig-par", "lit-wfw"});
  }
  const CorpusSet base = filter_subset(corpus, filter, lp);
  CsvTable t({"filter", "category", "n", "avg_pie_tokens", "avg_span_distance", "avg_relative_position",
              "avg_context_length"});
  for (Category c : parse_categories(names)) {
    try {
      const LengthStats s = length_stats(base, c, lp);
      t.add_row({a.filter, std::string(to_string(c)), std::to_string(s.n), format_real(s.avg_pie_tokens),
                 format_real(s.avg_span_distance), format_real(s.avg_relative_position),
                 format_real(s.avg_context_length)});
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::empty_set) throw;
      ctx.warn(fmt::format("category {} is empty", to_string(c)));
      t.add_row({a.filter, std::string(to_string(c)), "0", "", "", "", ""});
    }
  }
  write_output(a.out, t.str());
}

void add_corpus_commands(CLI::App& app, Context& ctx) {
  {
    auto a = std::make_shared<ConvertArgs>();
    auto* c = app.add_subcommand("convert", "Convert MAGPIE JSON-lines to the corpus format");
    c->add_option("--magpie", a->magpie, "MAGPIE JSON-lines file")->required();
    c->add_option("--pos", a->pos, "Sidecar JSON-lines with id, tokens, pos");
    c->add_option("--out", a->out, "Corpus JSON-lines output")->required();
    c->callback([a, &ctx] { run_convert(*a, ctx); });
  }
  {
    auto a = std::make_shared<LabelArgs>();
    auto* c = app.add_subcommand("label", "Label translations as copy / word-for-word / paraphrase");
    c->add_option("--corpus", a->corpus)->required();
    c->add_option("--translations", a->translations)->required();
    c->add_option("--lexicon", a->lexicon)->required();
    c->add_option("--out", a->out)->required();
    c->callback([a, &ctx] { run_label(*a, ctx); });
  }
  {
    auto a = std::make_shared<DistributionArgs>();
    auto* c = app.add_subcommand("distribution", "Label distribution per gold label");
    c->add_option("--corpus", a->corpus)->required();
    c->add_option("--labels", a->labels, "Labels file, optionally LANG=PATH; repeatable")->required();
    c->add_option("--out", a->out)->required();
    c->callback([a, &ctx] { run_distribution(*a, ctx); });
  }
  {
    auto a = std::make_shared<AgreementArgs>();
    auto* c = app.add_subcommand("agreement", "Cross-language label agreement on figurative sentences");
    c->add_option("--corpus", a->corpus)->required();
    c->add_option("--labels", a->labels, "LANG=PATH; at least two")->required()->expected(2, -1);
    c->add_option("--similarity", a->similarity, "Genetic similarity TSV");
    c->add_option("--out", a->out)->required();
    c->add_option("--summary", a->summary, "JSON with the Pearson correlation");
    c->callback([a, &ctx] { run_agreement(*a, ctx); });
  }
  {
    auto a = std::make_shared<CrosstabArgs>();
    auto* c = app.add_subcommand("crosstab", "Cross-tabulate model labels against reference translations");
    c->add_option("--model-labels", a->model_labels)->required();
    c->add_option("--reference-labels", a->reference_labels)->required();
    c->add_option("--model-translations", a->model_translations)->required();
    c->add_option("--reference-translations", a->reference_translations)->required();
    c->add_option("--out", a->out)->required();
    c->callback([a, &ctx] { run_crosstab(*a, ctx); });
  }
  {
    auto a = std::make_shared<LengthsArgs>();
    auto* c = app.add_subcommand("lengths", "PIE length and position statistics");
    c->add_option("--corpus", a->corpus)->required();
    c->add_option("--labels", a->labels);
    c->add_option("--filter", a->filter, "all, identical, intersection or length_controlled");
    c->add_option("--category", a->categories, "fig, lit, fig-par, fig-wfw, lit-par, lit-wfw; repeatable");
    c->add_option("--out", a->out)->required();
    c->callback([a, &ctx] { run_lengths(*a, ctx); });
  }
}

}  // namespace idiolens::cli
