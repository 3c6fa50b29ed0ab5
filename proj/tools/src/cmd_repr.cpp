#include <fmt/format.h>

#include "commands.hpp"
#include "idiolens/io.hpp"
#include "idiolens/repr.hpp"

namespace idiolens::cli {

void run_cca_fit(const CcaFitArgs& a, const Context& ctx) {
  PoolOptions opt;
  opt.pool_size = a.pool_size;
  opt.ridge = a.ridge;
  opt.seed = ctx.seed();
  ProjectionBank bank;
  if (a.role == "layer_pair") {
    if (a.pool.empty()) fail(ErrorKind::input, "layer_pair banks need --pool");
    bank = fit_layer_bank(load_variant(a.pool, DumpVariant::Kind::normal), opt);
  } else if (a.role == "mask") {
    if (a.normal.empty() || a.masked.empty()) fail(ErrorKind::input, "mask banks need --normal and --masked");
    bank = fit_mask_bank(load_variant(a.normal, DumpVariant::Kind::normal),
                         load_variant(a.masked, DumpVariant::Kind::masked), opt);
  } else {
    fail(ErrorKind::input, fmt::format("unknown bank role '{}'", a.role));
  }
  save_bank(a.out, bank);
}

namespace {

ProjectionBank bank_or_empty(const fs::path& path, bool refit, BankRole role) {
  if (!path.empty()) return load_bank(path);
  if (!refit) fail(ErrorKind::input, "--bank is required unless --refit is given");
  ProjectionBank b;
  b.role = role;
  return b;
}

std::vector<std::string> default_categories(const std::vector<std::string>& given, bool have_labels) {
  if (!given.empty()) return given;
  if (have_labels) return {"fig", "lit", "fig-par", "lit-wfw"};
  return {"fig", "lit"};
}

}  // namespace

void run_cca_layers(const CcaLayersArgs& a, const Context& ctx) {
  const CorpusSet corpus = load_corpus(a.corpus);
  const auto labels = maybe_labels(a.labels);
  const LabelMap* lp = labels ? &*labels : nullptr;
  const SubsetKind filter = parse_subset_kind(a.filter);
  const std::vector<ActivationDump> dumps = load_variant(a.dump, DumpVariant::Kind::normal);
  const DumpIndex index = index_dumps(dumps);
  const ProjectionBank bank = bank_or_empty(a.bank, a.refit, BankRole::layer_pair);
  SimilarityOptions opt;
  opt.min_tokens = a.min_tokens;
  opt.refit = a.refit;
  opt.ridge = a.ridge;

  std::vector<TokenClass> classes;
  for (const auto& n : a.token_classes.empty() ? std::vector<std::string>{"pie_noun", "non_pie_noun"} : a.token_classes)
    classes.push_back(parse_token_class(n));

  CsvTable t({"language", "layer_pair", "subset", "token_class", "similarity", "n"});
  for (Category c : parse_categories(default_categories(a.subsets, lp != nullptr))) {
    const auto sentences = sentences_for(corpus, filter, c, lp, &index, ctx);
    for (TokenClass tc : classes) {
      std::vector<std::string> warnings;
      for (const auto& r : layer_similarity(index, sentences, tc, bank, opt, &warnings))
        t.add_row({ctx.language, fmt::format("{}-{}", r.layer, r.layer + 1), std::string(to_string(c)),
                   std::string(to_string(tc)), format_real(r.similarity), std::to_string(r.n)});
      for (const auto& w : warnings) ctx.warn(fmt::format("{}: {}", to_string(c), w));
    }
  }
  write_output(a.out, t.str());
}

void run_cca_mask(const CcaMaskArgs& a, const Context& ctx) {
  const CorpusSet full = load_corpus(a.corpus);
  const auto labels = maybe_labels(a.labels);
  const CorpusSet corpus =
      a.subset.empty() ? full : select_category(full, parse_category(a.subset), labels ? &*labels : nullptr);
  const std::vector<ActivationDump> normal = load_variant(a.normal, DumpVariant::Kind::normal);
  const std::vector<ActivationDump> masked = load_variant(a.masked, DumpVariant::Kind::masked);
  const DumpIndex index = index_dumps(normal);
  const ProjectionBank bank = bank_or_empty(a.bank, a.refit, BankRole::mask);
  SimilarityOptions opt;
  opt.min_tokens = a.min_tokens;
  opt.refit = a.refit;
  opt.ridge = a.ridge;
  if (!a.masked_class.empty()) opt.masked_class = parse_token_class(a.masked_class);

  const std::string subset = a.subset.empty() ? "all" : a.subset;
  CsvTable t({"language", "masked_layer", "subset", "token_class", "similarity", "n"});
  for (const auto& n : a.affected.empty() ? std::vector<std::string>{"pie_token", "context_token"} : a.affected) {
    const TokenClass tc = parse_token_class(n);
    std::vector<std::string> warnings;
    for (const auto& r : mask_influence(index, masked, corpus, tc, bank, opt, &warnings))
      t.add_row({ctx.language, std::to_string(r.layer), subset, std::string(to_string(tc)), format_real(r.similarity),
                 std::to_string(r.n)});
    for (const auto& w : warnings) ctx.warn(w);
  }
  write_output(a.out, t.str());
}

void add_repr_commands(CLI::App& app, Context& ctx) {
  {
    auto a = std::make_shared<CcaFitArgs>();
    auto* c = app.add_subcommand("cca-fit", "Fit a CCA projection bank on held-out dumps");
    c->add_option("--role", a->role, "layer_pair or mask");
    c->add_option("--pool", a->pool, "Held-out normal dumps (layer_pair)");
    c->add_option("--normal", a->normal, "Normal dumps (mask)");
    c->add_option("--masked", a->masked, "Masked dumps (mask)");
    c->add_option("--pool-size", a->pool_size);
    c->add_option("--ridge", a->ridge)->check(CLI::NonNegativeNumber);
    c->add_option("--out", a->out)->required();
    c->callback([a, &ctx] { run_cca_fit(*a, ctx); });
  }
  {
    auto a = std::make_shared<CcaLayersArgs>();
    auto* c = app.add_subcommand("cca-layers", "CCA similarity of adjacent layers");
    c->add_option("--dump", a->dump)->required();
    c->add_option("--corpus", a->corpus)->required();
    c->add_option("--labels", a->labels);
    c->add_option("--bank", a->bank, "layer_pair projection bank");
    c->add_option("--subset", a->subsets);
    c->add_option("--filter", a->filter);
    c->add_option("--token-class", a->token_classes, "pie_noun, non_pie_noun, pie_token, context_token");
    c->add_option("--min-tokens", a->min_tokens);
    c->add_flag("--refit", a->refit, "Fit CCA on the evaluated data instead of the bank");
    c->add_option("--ridge", a->ridge)->check(CLI::NonNegativeNumber);
    c->add_option("--out", a->out)->required();
    c->callback([a, &ctx] { run_cca_layers(*a, ctx); });
  }
  {
    auto a = std::make_shared<CcaMaskArgs>();
    auto* c = app.add_subcommand("cca-mask", "Influence of attention masking on hidden states");
    c->add_option("--normal", a->normal)->required();
    c->add_option("--masked", a->masked)->required();
    c->add_option("--corpus", a->corpus)->required();
    c->add_option("--labels", a->labels);
    c->add_option("--subset", a->subset);
    c->add_option("--bank", a->bank, "mask projection bank");
    c->add_option("--affected", a->affected, "Token class; repeatable");
    c->add_option("--masked-class", a->masked_class, "Class every masked token must belong to");
    c->add_option("--min-tokens", a->min_tokens);
    c->add_flag("--refit", a->refit);
    c->add_option("--ridge", a->ridge)->check(CLI::NonNegativeNumber);
    c->add_option("--out", a->out)->required();
    c->callback([a, &ctx] { run_cca_mask(*a, ctx); });
  }
}

}  // namespace idiolens::cli
