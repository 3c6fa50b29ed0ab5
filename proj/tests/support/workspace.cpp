#include "workspace.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "idiolens/corpus.hpp"
#include "idiolens/dumpio.hpp"
#include "idiolens/io.hpp"
#include "idiolens/labeler.hpp"
#include "idiolens/text.hpp"
#include "synthetic.hpp"

namespace idiolens::testkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kIdioms = 6;
constexpr int kSentences = 60;
constexpr int kPool = 80;
const DumpShape kShape{3, 2, 6, 14, 4};

/// Renames the generic tokens so that keywords, PIE words and context words
/// are distinct types shared across sentences.
PieSentence workspace_sentence(std::mt19937_64& rng, int i) {
  const int idiom = i % kIdioms;
  const int words = 6 + i % 4;
  PieSentence s = random_sentence(rng, "s" + std::to_string(i), words, "idiom" + std::to_string(idiom));
  for (int w = 0; w < words; ++w) {
    auto& tok = s.tokens[static_cast<std::size_t>(w)];
    if (std::find(s.keyword_indices.begin(), s.keyword_indices.end(), w) != s.keyword_indices.end())
      tok = "key" + std::to_string(idiom);
    else if (s.in_pie(w))
      tok = "pie" + std::to_string(idiom) + "x" + std::to_string(w);
    else
      tok = "word" + std::to_string((i * 7 + w) % 23);
  }
  s.gold_label = (i / kIdioms) % 2 == 0 ? GoldLabel::figurative : GoldLabel::literal;
  return s;
}

/// Four target words; `mode` 0 puts the literal translation in, 1 copies the
/// keyword, anything else paraphrases.
std::vector<std::string> target(const PieSentence& s, int mode, int slot) {
  std::vector<std::string> t{"t0", "t1", "t2", "t3"};
  const std::string idiom = s.idiom_id.substr(5);
  if (mode == 0) t[static_cast<std::size_t>(slot)] = "lit" + idiom;
  if (mode == 1) t[static_cast<std::size_t>(slot)] = "key" + idiom;
  return t;
}

int mode_of(std::mt19937_64& rng) {
  const double u = uniform01(rng);
  return u < 0.35 ? 0 : u < 0.45 ? 1 : 2;
}

std::string translations_jsonl(const std::vector<std::pair<std::string, std::vector<std::string>>>& rows,
                               const char* provenance) {
  std::string out;
  for (const auto& [id, toks] : rows)
    out += json{{"sentence_id", id}, {"target_tokens", toks}, {"provenance", provenance}}.dump() + "\n";
  return out;
}

TranslationMap to_map(const std::vector<std::pair<std::string, std::vector<std::string>>>& rows,
                      Provenance provenance) {
  TranslationMap m;
  for (const auto& [id, toks] : rows) m[id] = TranslationRecord{id, toks, provenance};
  return m;
}

/// Flips every `stride`-th label between paraphrase and word-for-word.
LabelMap perturb(LabelMap labels, int stride, int offset) {
  int k = 0;
  for (auto& [id, l] : labels) {
    if (k++ % stride != offset) continue;
    const bool par = l.label2 == Label2::paraphrase;
    l.label2 = par ? Label2::word_for_word : Label2::paraphrase;
    l.label3 = par ? Label3::word_for_word : Label3::paraphrase;
    l.matched_keyword.reset();
    l.matched_target.reset();
  }
  return labels;
}

CorpusSet select_ids(const CorpusSet& corpus, const std::set<std::string>& ids) {
  std::vector<PieSentence> out;
  for (const auto& s : corpus)
    if (ids.count(s.id)) out.push_back(s);
  return CorpusSet(std::move(out));
}

void renormalize(FloatTensor& t) {
  const std::size_t cols = t.dims().back();
  auto data = t.data();
  for (std::size_t r = 0; r < data.size() / cols; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < cols; ++c) total += data[r * cols + c];
    for (std::size_t c = 0; c < cols; ++c) data[r * cols + c] = static_cast<float>(data[r * cols + c] / total);
  }
}

std::string magpie_file() {
  // Offsets cover "kicked the bucket" / "spill the beans"; tokens and pos inline.
  const json lines[] = {
      {{"id", 101},
       {"label", "i"},
       {"idiom", "kick the bucket"},
       {"variant_type", "identical"},
       {"context", {"It rained.", "Nobody knew.", "The old farmer kicked the bucket last winter .", "Sad."}},
       {"offsets", {{15, 21}, {22, 25}, {26, 32}}},
       {"pos", {"DET", "ADJ", "NOUN", "VERB", "DET", "NOUN", "ADJ", "NOUN", "PUNCT"}}},
      {{"id", 102},
       {"label", "l"},
       {"idiom", "kick the bucket"},
       {"context", {"A.", "B.", "She kicked the bucket across the yard .", "C."}},
       {"offsets", {{4, 17}}},
       {"pos", {"PRON", "VERB", "DET", "NOUN", "ADP", "DET", "NOUN", "PUNCT"}}},
      {{"id", "103"},
       {"label", "i"},
       {"idiom", "spill the beans"},
       {"variant_type", "combined-inflection"},
       {"context", {"A.", "B.", "Tom spilled the beans about the party .", "C."}},
       {"offsets", {{4, 11}, {16, 21}}},
       {"pos", {"PROPN", "VERB", "DET", "NOUN", "ADP", "DET", "NOUN", "PUNCT"}}},
      {{"id", 104},
       {"label", "?"},
       {"idiom", "spill the beans"},
       {"context", {"A.", "B.", "Unclear case .", "C."}},
       {"offsets", {{0, 7}}},
       {"pos", {"ADJ", "NOUN", "PUNCT"}}},
  };
  std::string out;
  for (const auto& l : lines) out += l.dump() + "\n";
  return out;
}

}  // namespace

void build_cli_workspace(const fs::path& dir, std::uint64_t seed) {
  fs::create_directories(dir);
  std::mt19937_64 rng(seed);

  std::vector<PieSentence> sentences;
  for (int i = 0; i < kSentences; ++i) sentences.push_back(workspace_sentence(rng, i));
  const CorpusSet corpus(sentences);
  write_file_atomic(dir / "corpus.jsonl", corpus_to_jsonl(corpus));

  std::string lexicon = "# keyword\tliteral translations\n";
  for (int k = 0; k < kIdioms; ++k) lexicon += "key" + std::to_string(k) + "\tlit" + std::to_string(k) + "\n";
  write_file_atomic(dir / "lexicon.tsv", lexicon);
  LiteralLexicon lex;
  for (int k = 0; k < kIdioms; ++k) lex.add("key" + std::to_string(k), "lit" + std::to_string(k));

  using Rows = std::vector<std::pair<std::string, std::vector<std::string>>>;
  Rows model, reference, post1, post2;
  for (const auto& s : sentences) {
    const int slot = static_cast<int>(rng() % 4);
    const int mode = mode_of(rng);
    model.emplace_back(s.id, target(s, mode, slot));
    reference.emplace_back(s.id, target(s, mode_of(rng), slot));
    // The interventions turn some paraphrases into literal translations.
    post1.emplace_back(s.id, target(s, mode == 2 && uniform01(rng) < 0.5 ? 0 : mode, slot));
    post2.emplace_back(s.id, target(s, mode == 2 && uniform01(rng) < 0.3 ? 0 : mode, slot));
  }
  write_file_atomic(dir / "translations.jsonl", translations_jsonl(model, "model"));
  write_file_atomic(dir / "reference_translations.jsonl", translations_jsonl(reference, "reference_corpus"));

  const LabelMap labels = label_corpus(corpus, to_map(model, Provenance::model), lex);
  write_file_atomic(dir / "labels.jsonl", labels_to_jsonl(labels));
  write_file_atomic(dir / "labels_nl.jsonl", labels_to_jsonl(perturb(labels, 4, 1)));
  write_file_atomic(dir / "labels_fr.jsonl", labels_to_jsonl(perturb(labels, 3, 0)));
  write_file_atomic(dir / "reference_labels.jsonl",
                    labels_to_jsonl(label_corpus(corpus, to_map(reference, Provenance::reference_corpus), lex)));
  write_file_atomic(dir / "similarity.tsv", "xx\tnl\t0.8\nxx\tfr\t0.4\nnl\tfr\t0.5\n");

  std::string ids;
  for (const auto& [id, l] : labels)
    if (corpus.find(id)->gold_label == GoldLabel::figurative && l.label2 == Label2::paraphrase) ids += id + "\n";
  write_file_atomic(dir / "ids.txt", ids);

  // Projected inference is only run on the intervention set.
  const std::set<std::string> intervened = [&] {
    std::set<std::string> out;
    std::istringstream lines(ids);
    for (std::string id; std::getline(lines, id);) out.insert(id);
    return out;
  }();
  for (auto* rows : {&post1, &post2})
    rows->erase(std::remove_if(rows->begin(), rows->end(), [&](const auto& r) { return !intervened.count(r.first); }),
                rows->end());
  const CorpusSet intervened_corpus = select_ids(corpus, intervened);
  write_file_atomic(dir / "post1_translations.jsonl", translations_jsonl(post1, "model"));
  write_file_atomic(dir / "post2_translations.jsonl", translations_jsonl(post2, "model"));
  write_file_atomic(dir / "post1_labels.jsonl",
                    labels_to_jsonl(label_corpus(intervened_corpus, to_map(post1, Provenance::model), lex)));
  write_file_atomic(dir / "post2_labels.jsonl",
                    labels_to_jsonl(label_corpus(intervened_corpus, to_map(post2, Provenance::model), lex)));

  std::vector<ActivationDump> normal, masked, projected, pool;
  std::normal_distribution<float> noise(0.0f, 0.3f);
  for (const auto& s : sentences) {
    normal.push_back(random_dump(rng, s, kShape));
    const ActivationDump& d = normal.back();

    ActivationDump m = d;
    m.variant.kind = DumpVariant::Kind::masked;
    m.variant.masked_token = subtokens_of(d.subword_to_word_src, s.keyword_indices.front()).front();
    m.variant.masked_layer = 1 + static_cast<int>(masked.size() % 3);
    for (auto& v : m.enc_hidden.data()) v += noise(rng);
    masked.push_back(std::move(m));

    ActivationDump p = d;
    p.variant.kind = DumpVariant::Kind::projected;
    p.variant.projector_id = "round0";
    p.variant.projected_layers = {1, 2};
    for (auto& v : p.enc_self_attn.data()) v *= static_cast<float>(1.0 + 0.5 * uniform01(rng));
    renormalize(p.enc_self_attn);
    projected.push_back(std::move(p));
  }
  for (int i = 0; i < kPool; ++i) {
    PieSentence s = workspace_sentence(rng, i);
    s.id = "pool" + std::to_string(i);
    pool.push_back(random_dump(rng, s, kShape));
  }
  write_dump_dir(dir / "dumps", normal);
  write_dump(dir / "masked.actd", masked);
  write_dump(dir / "projected.actd", projected);
  write_dump(dir / "pool.actd", pool);

  std::string align;
  for (const auto& s : sentences) {
    std::vector<std::string> pairs;
    for (std::size_t w = 0; w < s.tokens.size(); ++w)
      if (w % 3 != 2) pairs.push_back(std::to_string(w) + "-" + std::to_string(w % 4));
    align += join(pairs, " ") + "\n";
  }
  write_file_atomic(dir / "alignments.txt", align);

  std::set<std::string> types;
  for (const auto& s : sentences) types.insert(s.tokens.begin(), s.tokens.end());
  std::string freq;
  for (const auto& t : types) freq += t + "\t" + format_real(1.0 + 6.0 * uniform01(rng), 3) + "\n";
  write_file_atomic(dir / "frequency.tsv", freq);

  write_file_atomic(dir / "magpie.jsonl", magpie_file());
}

std::vector<Invocation> cli_invocations(const fs::path& in, const fs::path& out, const std::string& seed) {
  auto p = [](const fs::path& f) { return f.string(); };
  const std::string corpus = p(in / "corpus.jsonl"), labels = p(in / "labels.jsonl"), dumps = p(in / "dumps");
  const std::vector<std::string> global{"--seed", seed, "--language", "xx"};
  std::vector<Invocation> runs{
      {"convert", {"convert", "--magpie", p(in / "magpie.jsonl"), "--out", p(out / "converted.jsonl")}},
      {"label",
       {"label", "--corpus", corpus, "--translations", p(in / "translations.jsonl"), "--lexicon",
        p(in / "lexicon.tsv"), "--out", p(out / "labels.jsonl")}},
      {"distribution",
       {"distribution", "--corpus", corpus, "--labels", "xx=" + labels, "--labels", "nl=" + p(in / "labels_nl.jsonl"),
        "--out", p(out / "distribution.csv")}},
      {"agreement",
       {"agreement", "--corpus", corpus, "--labels", "xx=" + labels, "nl=" + p(in / "labels_nl.jsonl"),
        "fr=" + p(in / "labels_fr.jsonl"), "--similarity", p(in / "similarity.tsv"), "--out",
        p(out / "agreement.csv"), "--summary", p(out / "agreement.json")}},
      {"crosstab",
       {"crosstab", "--model-labels", labels, "--reference-labels", p(in / "reference_labels.jsonl"),
        "--model-translations", p(in / "translations.jsonl"), "--reference-translations",
        p(in / "reference_translations.jsonl"), "--out", p(out / "crosstab.csv")}},
      {"lengths", {"lengths", "--corpus", corpus, "--labels", labels, "--out", p(out / "lengths.csv")}},
      {"attn",
       {"attn", "--dump", dumps, "--corpus", corpus, "--labels", labels, "--out", p(out / "attn.csv"), "--diff-out",
        p(out / "attn_diff.csv"), "--projected", p(in / "projected.actd"), "--delta-out", p(out / "attn_delta.csv")}},
      {"attn-head",
       {"attn", "--dump", dumps, "--corpus", corpus, "--subset", "fig", "--subset", "lit", "--analysis", "pie2ctx",
        "--ctx-all-tokens", "--head", "1", "--out", p(out / "attn_head.csv")}},
      {"xattn",
       {"xattn", "--dump", dumps, "--corpus", corpus, "--labels", labels, "--alignments", p(in / "alignments.txt"),
        "--out", p(out / "xattn.csv"), "--diff-out", p(out / "xattn_diff.csv")}},
      {"cca-fit-layers",
       {"cca-fit", "--role", "layer_pair", "--pool", p(in / "pool.actd"), "--pool-size", "300", "--out",
        p(out / "bank_layers.actd")}},
      {"cca-fit-mask",
       {"cca-fit", "--role", "mask", "--normal", dumps, "--masked", p(in / "masked.actd"), "--out",
        p(out / "bank_mask.actd")}},
      {"cca-layers",
       {"cca-layers", "--dump", dumps, "--corpus", corpus, "--labels", labels, "--bank", p(out / "bank_layers.actd"),
        "--token-class", "pie_token", "--token-class", "context_token", "--min-tokens", "10", "--out",
        p(out / "cca_layers.csv")}},
      {"cca-layers-refit",
       {"cca-layers", "--dump", dumps, "--corpus", corpus, "--refit", "--out", p(out / "cca_layers_refit.csv")}},
      {"cca-mask",
       {"cca-mask", "--normal", dumps, "--masked", p(in / "masked.actd"), "--corpus", corpus, "--bank",
        p(out / "bank_mask.actd"), "--min-tokens", "10", "--out", p(out / "cca_mask.csv")}},
      {"probe",
       {"probe", "--dump", dumps, "--corpus", corpus, "--layers", "0,2", "--folds", "3", "--out",
        p(out / "probe.csv")}},
      {"probe-frequency",
       {"probe", "--dump", dumps, "--corpus", corpus, "--task", "frequency", "--frequency", p(in / "frequency.tsv"),
        "--mean-pool", "--folds", "3", "--out", p(out / "probe_frequency.csv")}},
      {"inlp-train",
       {"inlp-train", "--dump", dumps, "--corpus", corpus, "--labels", labels, "--layers", "1,2", "--iterations", "4",
        "--out-dir", p(out / "inlp")}},
      {"inlp-eval",
       {"inlp-eval", "--corpus", corpus, "--pre-labels", labels, "--post-labels", p(in / "post1_labels.jsonl"),
        "--pre-translations", p(in / "translations.jsonl"), "--post-translations",
        p(in / "post1_translations.jsonl"), "--out", p(out / "inlp_eval.csv"), "--summary",
        p(out / "inlp_eval_summary.csv")}},
      {"inlp-sweep",
       {"inlp-sweep", "--corpus", corpus, "--pre-labels", labels, "--pre-translations", p(in / "translations.jsonl"),
        "--ids", p(in / "ids.txt"), "--run", "none=", "--run",
        "1=" + p(in / "post1_labels.jsonl") + "," + p(in / "post1_translations.jsonl"), "--run",
        "1+2=" + p(in / "post2_labels.jsonl") + "," + p(in / "post2_translations.jsonl"), "--out",
        p(out / "inlp_sweep.csv")}},
  };

  const fs::path config = out.parent_path() / (out.filename().string() + "-run.json");
  const json cfg{{"language", "xx"},
                 {"seed", 3},
                 {"output_dir", p(out / "report")},
                 {"paths",
                  {{"corpus", corpus},
                   {"translations", p(in / "translations.jsonl")},
                   {"lexicon", p(in / "lexicon.tsv")},
                   {"dumps", dumps},
                   {"alignments", p(in / "alignments.txt")},
                   {"frequency", p(in / "frequency.tsv")},
                   {"bank", p(out / "bank_layers.actd")}}}};
  fs::create_directories(out);
  write_file_atomic(config, cfg.dump(2) + "\n");
  runs.push_back({"report", {"report", "--config", p(config)}});

  for (auto& r : runs) r.args.insert(r.args.begin(), global.begin(), global.end());
  return runs;
}

std::vector<std::pair<std::string, std::string>> snapshot(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.emplace_back(e.path().lexically_relative(dir).generic_string(), read_file(e.path()));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace idiolens::testkit
