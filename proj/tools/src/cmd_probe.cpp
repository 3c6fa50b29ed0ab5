#include <fstream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "idiolens/io.hpp"
#include "idiolens/parallel.hpp"
#include "idiolens/probe.hpp"

namespace idiolens::cli {

using nlohmann::json;

namespace {

std::vector<int> hidden_layers(const std::string& spec, const DumpIndex& index) {
  if (!spec.empty()) return parse_int_list(spec);
  if (index.empty()) return {};
  const auto& d = *index.begin()->second;
  std::vector<int> out;
  for (int l = 0; l < static_cast<int>(d.enc_hidden.rank() == 3 ? d.enc_hidden.dim(0) : 0); ++l) out.push_back(l);
  return out;
}

/// Sentence id -> 0/1 label for the chosen task.
std::map<std::string, int> task_labels(const std::string& task, const std::vector<PieSentence>& sentences,
                                       const fs::path& frequency,
                                       const std::function<int(const PieSentence&)>& default_label) {
  std::map<std::string, int> out;
  if (task == "frequency") {
    if (frequency.empty()) fail(ErrorKind::missing_input, "the frequency task needs --frequency");
    const FrequencyTable table = load_frequency_table(frequency);
    const std::vector<int> y = frequency_baseline_labels(sentences, table);
    for (std::size_t i = 0; i < sentences.size(); ++i) out[sentences[i].id] = y[i];
  } else {
    for (const auto& s : sentences) out[s.id] = default_label(s);
  }
  return out;
}

ProbeOptions probe_options(double l2, int max_iterations, std::uint64_t seed) {
  ProbeOptions o;
  o.l2 = l2;
  o.max_iterations = max_iterations;
  o.seed = seed;
  return o;
}

std::set<std::string> read_ids(const fs::path& path) {
  std::set<std::string> ids;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.insert(line);
  }
  return ids;
}

/// The intervention set: listed ids, or every figurative paraphrase.
LabelMap intervention_set(const LabelMap& pre, const CorpusSet& corpus, const fs::path& ids_file) {
  LabelMap out;
  if (!ids_file.empty()) {
    for (const auto& id : read_ids(ids_file)) {
      auto it = pre.find(id);
      if (it == pre.end()) fail(ErrorKind::consistency, fmt::format("listed sentence '{}' has no label", id));
      out.insert(*it);
    }
    return out;
  }
  for (const auto& [id, l] : pre) {
    const PieSentence* s = corpus.find(id);
    if (s && s->gold_label == GoldLabel::figurative && l.label2 == Label2::paraphrase) out.emplace(id, l);
  }
  return out;
}

void add_result_rows(CsvTable& t, const std::string& lang, const std::string& layers, const AmnesicResult& r) {
  t.add_row({lang, layers, format_real(r.mean_success), format_real(r.bleu), std::to_string(r.considered),
             std::to_string(r.flipped)});
}

}  // namespace

void run_probe(const ProbeArgs& a, const Context& ctx) {
  const CorpusSet corpus = load_corpus(a.corpus);
  const std::vector<ActivationDump> dumps = load_variant(a.dump, DumpVariant::Kind::normal);
  const DumpIndex index = index_dumps(dumps);
  std::vector<PieSentence> sentences;
  for (const auto& s : filter_subset(corpus, parse_subset_kind(a.filter), nullptr))
    if (index.count(s.id)) sentences.push_back(s);
  if (sentences.size() < corpus.size())
    ctx.warn(fmt::format("{} sentences without a dump were skipped", corpus.size() - sentences.size()));
  if (a.task != "figurative" && a.task != "frequency") fail(ErrorKind::input, fmt::format("unknown task '{}'", a.task));
  const auto labels = task_labels(a.task, sentences, a.frequency, [](const PieSentence& s) {
    return s.gold_label == GoldLabel::figurative ? 1 : 0;
  });
  const ProbeOptions opt = probe_options(a.l2, a.max_iterations, ctx.seed());
  CsvTable t({"language", "layer", "mean_f1", "std", "n"});
  for (int layer : hidden_layers(a.layers, index)) {
    const ProbeSamples s = collect_pie_samples(
        index, sentences, [&](const PieSentence& p) -> std::optional<int> { return labels.at(p.id); }, layer,
        a.mean_pool);
    const CvResult r = grouped_cv_f1(s.x, s.y, s.groups, a.folds, opt, ctx.jobs);
    t.add_row({ctx.language, std::to_string(layer), format_real(r.mean_f1), format_real(r.std_f1),
               std::to_string(s.y.size())});
  }
  write_output(a.out, t.str());
}

void run_inlp_train(const InlpTrainArgs& a, const Context& ctx) {
  const CorpusSet corpus = load_corpus(a.corpus);
  const LabelMap labels = load_labels(a.labels);
  const std::vector<ActivationDump> dumps = load_variant(a.dump, DumpVariant::Kind::normal);
  const DumpIndex index = index_dumps(dumps);
  if (a.task != "paraphrase" && a.task != "frequency") fail(ErrorKind::input, fmt::format("unknown task '{}'", a.task));

  std::vector<PieSentence> sentences;
  std::size_t missing = 0;
  for (const auto& s : corpus) {
    if (s.gold_label != GoldLabel::figurative || !labels.count(s.id)) continue;
    if (!index.count(s.id)) {
      ++missing;
      continue;
    }
    sentences.push_back(s);
  }
  if (missing) ctx.warn(fmt::format("{} labeled figurative sentences have no dump", missing));
  if (sentences.empty()) fail(ErrorKind::empty_set, "no labeled figurative sentences with dumps");
  const auto y_of = task_labels(a.task, sentences, a.frequency, [&](const PieSentence& s) {
    return labels.at(s.id).label2 == Label2::paraphrase ? 1 : 0;
  });

  std::vector<std::string> groups;
  for (const auto& s : sentences) groups.push_back(s.idiom_id);
  const std::uint64_t seed = ctx.seed();
  const std::vector<int> fold = grouped_folds(groups, a.folds, seed);
  const std::vector<FoldRoles> plan = amnesic_fold_plan(a.folds, a.estimation_fold);
  const std::vector<int> layers = parse_int_list(a.layers);

  InlpOptions opt;
  opt.iterations = a.iterations;
  opt.probe = probe_options(a.l2, a.max_iterations, seed);

  auto in_folds = [&](const std::vector<int>& wanted) {
    std::vector<PieSentence> out;
    for (std::size_t i = 0; i < sentences.size(); ++i)
      if (std::find(wanted.begin(), wanted.end(), fold[i]) != wanted.end()) out.push_back(sentences[i]);
    return out;
  };
  const SentenceLabeler label_of = [&](const PieSentence& s) -> std::optional<int> { return y_of.at(s.id); };

  std::vector<std::map<int, NullspaceProjector>> trained(plan.size());
  std::vector<std::pair<std::size_t, int>> jobs_list;
  for (std::size_t r = 0; r < plan.size(); ++r)
    for (int l : layers) jobs_list.emplace_back(r, l);
  std::vector<NullspaceProjector> results(jobs_list.size());
  parallel_for(jobs_list.size(), ctx.jobs, [&](std::size_t j) {
    const auto [r, layer] = jobs_list[j];
    const ProbeSamples train = collect_pie_samples(index, in_folds(plan[r].train), label_of, layer, a.mean_pool);
    const ProbeSamples dev = collect_pie_samples(index, in_folds({plan[r].dev}), label_of, layer, a.mean_pool);
    if (dev.y.empty()) {
      results[j] = inlp_train(train.x, train.y, nullptr, nullptr, opt);
    } else {
      results[j] = inlp_train(train.x, train.y, &dev.x, &dev.y, opt);
    }
  });
  for (std::size_t j = 0; j < jobs_list.size(); ++j) trained[jobs_list[j].first][jobs_list[j].second] = results[j];

  CsvTable acc({"round", "layer", "iteration", "dev_accuracy", "removed"});
  json manifest{{"task", a.task}, {"seed", seed}, {"folds", a.folds}, {"layers", layers}, {"rounds", json::array()}};
  for (std::size_t r = 0; r < plan.size(); ++r) {
    const FoldRoles& roles = plan[r];
    const bool estimation = roles.success == a.estimation_fold;
    const std::string dir = fmt::format("round{}", r);
    const json meta{{"round", r}, {"success_fold", roles.success}, {"dev_fold", roles.dev},
                    {"train_folds", roles.train}, {"estimation", estimation}, {"task", a.task}};
    save_projectors(a.out_dir / dir / "projectors.actd", trained[r], meta);
    std::string ids;
    for (const auto& s : in_folds({roles.success}))
      if (labels.at(s.id).label2 == Label2::paraphrase) ids += s.id + "\n";
    write_output(a.out_dir / dir / "intervention.txt", ids);
    for (const auto& [layer, p] : trained[r]) {
      for (std::size_t i = 0; i < p.dev_accuracy.size(); ++i)
        acc.add_row({std::to_string(r), std::to_string(layer), std::to_string(i + 1), format_real(p.dev_accuracy[i]),
                     std::to_string(std::min<std::size_t>(i, static_cast<std::size_t>(p.removed())))});
      acc.add_row({std::to_string(r), std::to_string(layer), "final", format_real(p.final_dev_accuracy),
                   std::to_string(p.removed())});
    }
    json entry = meta;
    entry["projectors"] = dir + "/projectors.actd";
    entry["intervention"] = dir + "/intervention.txt";
    manifest["rounds"].push_back(entry);
  }
  write_output(a.out_dir / "inlp_accuracy.csv", acc.str());
  write_output(a.out_dir / "manifest.json", manifest.dump(2) + "\n");
}

void run_inlp_eval(const InlpEvalArgs& a, const Context& ctx) {
  const CorpusSet corpus = load_corpus(a.corpus);
  const LabelMap pre = intervention_set(load_labels(a.pre_labels), corpus, a.ids);
  const AmnesicResult r = amnesic_success(pre, load_labels(a.post_labels), corpus, load_translations(a.pre_translations),
                                          load_translations(a.post_translations));
  CsvTable t({"language", "idiom", "success_pct"});
  for (const auto& [idiom, pct] : r.success_by_idiom) t.add_row({ctx.language, idiom, format_real(pct)});
  write_output(a.out, t.str());
  if (!a.summary.empty()) {
    CsvTable s({"language", "layers", "mean_success_pct", "bleu", "considered", "flipped"});
    add_result_rows(s, ctx.language, "", r);
    write_output(a.summary, s.str());
  }
}

void run_inlp_sweep(const InlpSweepArgs& a, const Context& ctx) {
  const CorpusSet corpus = load_corpus(a.corpus);
  const LabelMap pre = intervention_set(load_labels(a.pre_labels), corpus, a.ids);
  const TranslationMap pre_tr = load_translations(a.pre_translations);
  std::map<std::vector<int>, std::pair<fs::path, fs::path>> files;
  std::vector<std::vector<int>> subsets;
  for (const auto& spec : a.runs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) fail(ErrorKind::input, fmt::format("run '{}' is not LAYERS=LABELS,TRANSLATIONS", spec));
    std::vector<int> layers = parse_int_list(spec.substr(0, eq));
    std::sort(layers.begin(), layers.end());
    const std::string rest = spec.substr(eq + 1);
    if (!layers.empty()) {
      const auto comma = rest.find(',');
      if (comma == std::string::npos) fail(ErrorKind::input, fmt::format("run '{}' lacks a translations file", spec));
      files[layers] = {rest.substr(0, comma), rest.substr(comma + 1)};
    }
    subsets.push_back(layers);
  }
  const auto rows = layer_selection_sweep(
      subsets,
      [&](const std::vector<int>& layers) {
        const auto& [lab, tr] = files.at(layers);
        return PostIntervention{load_labels(lab), load_translations(tr)};
      },
      pre, corpus, pre_tr);
  CsvTable t({"language", "layers", "mean_success_pct", "bleu", "considered", "flipped"});
  for (const auto& row : rows)
    add_result_rows(t, ctx.language, row.layers.empty() ? "none" : join_ints(row.layers, '+'), row.result);
  write_output(a.out, t.str());
}

void add_probe_commands(CLI::App& app, Context& ctx) {
  {
    auto a = std::make_shared<ProbeArgs>();
    auto* c = app.add_subcommand("probe", "Grouped cross-validated probing per layer");
    c->add_option("--dump", a->dump)->required();
    c->add_option("--corpus", a->corpus)->required();
    c->add_option("--filter", a->filter);
    c->add_option("--task", a->task, "figurative or frequency");
    c->add_option("--frequency", a->frequency, "Zipf frequency TSV (frequency task)");
    c->add_option("--layers", a->layers, "Comma-separated hidden-state indices (default all)");
    c->add_option("--folds", a->folds)->check(CLI::Range(2, 1000));
    c->add_option("--l2", a->l2)->check(CLI::NonNegativeNumber);
    c->add_option("--max-iter", a->max_iterations)->check(CLI::NonNegativeNumber);
    c->add_flag("--mean-pool", a->mean_pool, "One mean-pooled sample per sentence");
    c->add_option("--out", a->out)->required();
    c->callback([a, &ctx] { run_probe(*a, ctx); });
  }
  {
    auto a = std::make_shared<InlpTrainArgs>();
    auto* c = app.add_subcommand("inlp-train", "Train nullspace projectors for amnesic probing");
    c->add_option("--dump", a->dump)->required();
    c->add_option("--corpus", a->corpus)->required();
    c->add_option("--labels", a->labels)->required();
    c->add_option("--task", a->task, "paraphrase or frequency");
    c->add_option("--frequency", a->frequency);
    c->add_option("--layers", a->layers, "Hidden-state indices to project");
    c->add_option("--iterations", a->iterations)->check(CLI::NonNegativeNumber);
    c->add_option("--folds", a->folds)->check(CLI::Range(3, 1000));
    c->add_option("--estimation-fold", a->estimation_fold);
    c->add_option("--l2", a->l2)->check(CLI::NonNegativeNumber);
    c->add_option("--max-iter", a->max_iterations)->check(CLI::NonNegativeNumber);
    c->add_flag("--mean-pool", a->mean_pool);
    c->add_option("--out-dir", a->out_dir)->required();
    c->callback([a, &ctx] { run_inlp_train(*a, ctx); });
  }
  {
    auto a = std::make_shared<InlpEvalArgs>();
    auto* c = app.add_subcommand("inlp-eval", "Success rate of an amnesic intervention");
    c->add_option("--corpus", a->corpus)->required();
    c->add_option("--pre-labels", a->pre_labels)->required();
    c->add_option("--post-labels", a->post_labels)->required();
    c->add_option("--pre-translations", a->pre_translations)->required();
    c->add_option("--post-translations", a->post_translations)->required();
    c->add_option("--ids", a->ids, "Intervention sentence ids, one per line");
    c->add_option("--out", a->out)->required();
    c->add_option("--summary", a->summary);
    c->callback([a, &ctx] { run_inlp_eval(*a, ctx); });
  }
  {
    auto a = std::make_shared<InlpSweepArgs>();
    auto* c = app.add_subcommand("inlp-sweep", "Success rate per intervened layer subset");
    c->add_option("--corpus", a->corpus)->required();
    c->add_option("--pre-labels", a->pre_labels)->required();
    c->add_option("--pre-translations", a->pre_translations)->required();
    c->add_option("--ids", a->ids);
    c->add_option("--run", a->runs, "LAYERS=LABELS,TRANSLATIONS with LAYERS like 0+1+2 or none; repeatable")
        ->required();
    c->add_option("--out", a->out)->required();
    c->callback([a, &ctx] { run_inlp_sweep(*a, ctx); });
  }
}

}  // namespace idiolens::cli
