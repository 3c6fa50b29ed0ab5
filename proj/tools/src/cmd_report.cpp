#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "idiolens/io.hpp"

namespace idiolens::cli {

using nlohmann::json;

namespace {

/// Pipeline configuration; every path is optional except the corpus.
struct RunConfig {
  std::string language = "xx";
  std::optional<std::uint64_t> seed;
  fs::path output_dir = "idiolens-report";
  std::string filter = "all";
  fs::path corpus, translations, lexicon, labels, dumps, alignments, frequency, bank;
  bool cca_refit = false;
};

RunConfig parse_run_config(const fs::path& path) {
  RunConfig c;
  try {
    const json j = json::parse(read_file(path));
    if (!j.is_object()) fail(ErrorKind::parse, "run config must be a JSON object");
    static const std::set<std::string> known{"language", "seed", "output_dir", "subset_filter", "paths", "cca_refit"};
    for (const auto& [k, v] : j.items())
      if (!known.count(k)) fail(ErrorKind::parse, fmt::format("unknown run config key '{}'", k));
    c.language = j.value("language", c.language);
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    c.output_dir = j.value("output_dir", c.output_dir.string());
    c.filter = j.value("subset_filter", c.filter);
    c.cca_refit = j.value("cca_refit", false);
    const json paths = j.value("paths", json::object());
    static const std::set<std::string> known_paths{"corpus",    "translations", "lexicon",   "labels", "dumps",
                                                   "alignments", "frequency",   "genetic_similarity", "bank"};
    for (const auto& [k, v] : paths.items())
      if (!known_paths.count(k)) fail(ErrorKind::parse, fmt::format("unknown path key '{}'", k));
    auto get = [&](const char* key) { return fs::path(paths.value(key, std::string())); };
    c.corpus = get("corpus");
    c.translations = get("translations");
    c.lexicon = get("lexicon");
    c.labels = get("labels");
    c.dumps = get("dumps");
    c.alignments = get("alignments");
    c.frequency = get("frequency");
    c.bank = get("bank");
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, fmt::format("{}: {}", path.string(), e.what()));
  }
  if (c.corpus.empty()) fail(ErrorKind::input, "run config needs paths.corpus");
  parse_subset_kind(c.filter);
  return c;
}

bool has_hidden_states(const fs::path& dumps) {
  for (const auto& d : read_dumps(dumps))
    if (d.variant.kind == DumpVariant::Kind::normal) return d.enc_hidden.rank() == 3;
  return false;
}

}  // namespace

void run_report(const fs::path& config_path, Context& ctx) {
  const RunConfig cfg = parse_run_config(config_path);
  ctx.language = cfg.language;
  if (cfg.seed) ctx.seed_flag = *cfg.seed;
  const fs::path& out = cfg.output_dir;
  json outputs = json::array();
  auto produced = [&](const char* step, const fs::path& file) {
    outputs.push_back({{"step", step}, {"file", file.lexically_relative(out).generic_string()}});
  };

  fs::path labels = cfg.labels;
  if (!cfg.translations.empty() && !cfg.lexicon.empty()) {
    labels = out / "labels.jsonl";
    run_label({cfg.corpus, cfg.translations, cfg.lexicon, labels}, ctx);
    produced("label", labels);
  }
  if (!labels.empty()) {
    DistributionArgs d{cfg.corpus, out / "distribution.csv", {ctx.language + "=" + labels.string()}};
    run_distribution(d, ctx);
    produced("distribution", d.out);
  }
  {
    LengthsArgs l;
    l.corpus = cfg.corpus;
    l.labels = labels;
    l.filter = cfg.filter;
    l.out = out / "lengths.csv";
    run_lengths(l, ctx);
    produced("lengths", l.out);
  }
  const std::vector<std::string> subsets =
      labels.empty() ? std::vector<std::string>{"fig", "lit"} : std::vector<std::string>{"fig-par", "lit-wfw"};
  if (!cfg.dumps.empty()) {
    AttnArgs a;
    a.dump = cfg.dumps;
    a.corpus = cfg.corpus;
    a.labels = labels;
    a.filter = cfg.filter;
    a.subsets = subsets;
    a.out = out / "attn.csv";
    a.diff_out = out / "attn_diff.csv";
    run_attn(a, ctx);
    produced("attn", a.out);
    produced("attn", a.diff_out);
    if (!cfg.alignments.empty()) {
      XattnArgs x;
      x.dump = cfg.dumps;
      x.corpus = cfg.corpus;
      x.labels = labels;
      x.alignments = cfg.alignments;
      x.filter = cfg.filter;
      x.subsets = subsets;
      x.out = out / "xattn.csv";
      x.diff_out = out / "xattn_diff.csv";
      run_xattn(x, ctx);
      produced("xattn", x.out);
      produced("xattn", x.diff_out);
    }
    if (has_hidden_states(cfg.dumps)) {
      if (!cfg.bank.empty() || cfg.cca_refit) {
        CcaLayersArgs c;
        c.dump = cfg.dumps;
        c.corpus = cfg.corpus;
        c.labels = labels;
        c.bank = cfg.bank;
        c.filter = cfg.filter;
        c.refit = cfg.bank.empty();
        c.out = out / "cca_layers.csv";
        run_cca_layers(c, ctx);
        produced("cca-layers", c.out);
      }
      ProbeArgs p;
      p.dump = cfg.dumps;
      p.corpus = cfg.corpus;
      p.filter = cfg.filter;
      p.out = out / "probe.csv";
      run_probe(p, ctx);
      produced("probe", p.out);
      if (!cfg.frequency.empty()) {
        p.task = "frequency";
        p.frequency = cfg.frequency;
        p.out = out / "probe_frequency.csv";
        run_probe(p, ctx);
        produced("probe", p.out);
      }
    }
  }
  const json summary{{"language", ctx.language}, {"seed", ctx.seed()}, {"subset_filter", cfg.filter},
                     {"outputs", outputs}};
  write_output(out / "report.json", summary.dump(2) + "\n");
}

void add_report_command(CLI::App& app, Context& ctx) {
  auto path = std::make_shared<fs::path>();
  auto* c = app.add_subcommand("report", "Run every applicable analysis from a JSON run config");
  c->add_option("--config", *path, "Run config JSON")->required();
  c->callback([path, &ctx] { run_report(*path, ctx); });
}

}  // namespace idiolens::cli
