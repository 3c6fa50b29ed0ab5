#include "idiolens/labeler.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "idiolens/error.hpp"
#include "idiolens/metrics.hpp"
#include "idiolens/text.hpp"

namespace idiolens {

using nlohmann::json;

namespace {

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (char c : s)
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  return n;
}

std::string normalize(std::string_view token) { return casefold(strip_punct(token)); }

constexpr std::size_t kMinSubstringMatch = 4;

template <class F>
void for_each_line(std::istream& in, F&& f) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    f(line, lineno);
  }
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t") == std::string::npos; }

}  // namespace

void LiteralLexicon::add(std::string_view keyword, std::string_view translation) {
  const std::string k = casefold(keyword);
  const std::string t = casefold(translation);
  if (k.empty()) fail(ErrorKind::validation, "lexicon keyword is empty");
  if (t.empty()) fail(ErrorKind::validation, fmt::format("empty translation for keyword '{}'", k));
  entries_[k].insert(t);
}

const std::set<std::string>* LiteralLexicon::find(std::string_view keyword) const {
  auto it = entries_.find(keyword);
  return it == entries_.end() ? nullptr : &it->second;
}

LiteralLexicon parse_lexicon(std::istream& in, std::string_view source) {
  LiteralLexicon lex;
  for_each_line(in, [&](const std::string& line, std::size_t lineno) {
    if (blank(line) || line.front() == '#') return;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() < 2)
      fail(ErrorKind::parse, fmt::format("{}:{}: expected keyword and at least one translation", source, lineno));
    for (std::size_t i = 1; i < cols.size(); ++i) {
      if (cols[i].empty())
        fail(ErrorKind::validation, fmt::format("{}:{}: empty translation in column {}", source, lineno, i + 1));
      lex.add(cols[0], cols[i]);
    }
  });
  return lex;
}

LiteralLexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open lexicon " + path.string());
  return parse_lexicon(in, path.string());
}

TranslationMap parse_translations(std::istream& in, std::string_view source) {
  TranslationMap out;
  for_each_line(in, [&](const std::string& line, std::size_t lineno) {
    if (blank(line)) return;
    auto where = [&] { return fmt::format("{}:{}", source, lineno); };
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, fmt::format("{}: {}", where(), e.what()));
    }
    if (!rec.is_object() || !rec.contains("sentence_id") || !rec["sentence_id"].is_string())
      fail(ErrorKind::parse, fmt::format("{}: missing string field 'sentence_id'", where()));
    TranslationRecord tr;
    tr.sentence_id = rec["sentence_id"].get<std::string>();
    if (auto it = rec.find("target_tokens"); it != rec.end()) {
      if (!it->is_array()) fail(ErrorKind::parse, fmt::format("{}: 'target_tokens' must be an array", where()));
      for (const auto& t : *it) {
        if (!t.is_string()) fail(ErrorKind::parse, fmt::format("{}: 'target_tokens' must hold strings", where()));
        tr.target_tokens.push_back(t.get<std::string>());
      }
    } else if (auto it2 = rec.find("translation"); it2 != rec.end() && it2->is_string()) {
      tr.target_tokens = split_whitespace(it2->get<std::string>());
    } else {
      fail(ErrorKind::parse, fmt::format("{}: needs 'target_tokens' or 'translation'", where()));
    }
    if (auto it = rec.find("provenance"); it != rec.end()) {
      const std::string p = it->is_string() ? it->get<std::string>() : "";
      if (p == "model")
        tr.provenance = Provenance::model;
      else if (p == "reference_corpus")
        tr.provenance = Provenance::reference_corpus;
      else
        fail(ErrorKind::parse, fmt::format("{}: unknown provenance '{}'", where(), p));
    }
    if (tr.target_tokens.empty())
      fail(ErrorKind::validation, fmt::format("{}: translation for '{}' has no tokens", where(), tr.sentence_id));
    if (out.count(tr.sentence_id))
      fail(ErrorKind::validation, fmt::format("{}: duplicate translation for '{}'", where(), tr.sentence_id));
    out.emplace(tr.sentence_id, std::move(tr));
  });
  return out;
}

TranslationMap load_translations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open translations " + path.string());
  return parse_translations(in, path.string());
}

namespace {

bool normalized_match(const std::string& entry, const std::string& token) {
  if (entry.empty() || token.empty()) return false;
  if (entry == token) return true;
  return utf8_length(entry) >= kMinSubstringMatch && token.find(entry) != std::string::npos;
}

}  // namespace

bool lexical_match(std::string_view entry, std::string_view token) {
  return normalized_match(normalize(entry), normalize(token));
}

TranslationLabel label_translation(const PieSentence& sentence, const TranslationRecord& translation,
                                   const LiteralLexicon& lexicon) {
  if (sentence.keyword_indices.empty())
    fail(ErrorKind::input, fmt::format("sentence '{}' has no keywords", sentence.id));

  std::vector<std::string> keywords;
  for (int k : sentence.keyword_indices) keywords.push_back(normalize(sentence.tokens.at(k)));
  std::vector<std::string> targets;
  for (const auto& t : translation.target_tokens) targets.push_back(normalize(t));

  TranslationLabel label;
  label.sentence_id = sentence.id;

  for (std::size_t t = 0; t < targets.size(); ++t) {
    for (const auto& kw : keywords) {
      const auto* literals = lexicon.find(kw);
      if (!literals) continue;
      for (const auto& lit : *literals) {
        if (normalized_match(lit, targets[t])) {
          label.label3 = Label3::word_for_word;
          label.label2 = Label2::word_for_word;
          label.matched_keyword = kw;
          label.matched_target = targets[t];
          return label;
        }
      }
    }
  }
  for (std::size_t t = 0; t < targets.size(); ++t) {
    for (const auto& kw : keywords) {
      if (normalized_match(kw, targets[t])) {
        label.label3 = Label3::copy;
        label.label2 = Label2::word_for_word;
        label.matched_keyword = kw;
        label.matched_target = targets[t];
        return label;
      }
    }
  }
  label.label3 = Label3::paraphrase;
  label.label2 = Label2::paraphrase;
  return label;
}

LabelMap label_corpus(const CorpusSet& corpus, const TranslationMap& translations,
                      const LiteralLexicon& lexicon) {
  for (const auto& [id, tr] : translations)
    if (!corpus.find(id)) fail(ErrorKind::consistency, fmt::format("translation for unknown sentence '{}'", id));
  LabelMap out;
  for (const auto& s : corpus) {
    auto it = translations.find(s.id);
    if (it == translations.end()) continue;
    out.emplace(s.id, label_translation(s, it->second, lexicon));
  }
  return out;
}

std::string labels_to_jsonl(const LabelMap& labels) {
  std::string out;
  for (const auto& [id, l] : labels) {
    json rec{{"sentence_id", l.sentence_id},
             {"label3", std::string(to_string(l.label3))},
             {"label2", std::string(to_string(l.label2))},
             {"matched_keyword", l.matched_keyword ? json(*l.matched_keyword) : json(nullptr)},
             {"matched_target", l.matched_target ? json(*l.matched_target) : json(nullptr)}};
    out += rec.dump();
    out.push_back('\n');
  }
  return out;
}

LabelMap parse_labels(std::istream& in, std::string_view source) {
  LabelMap out;
  for_each_line(in, [&](const std::string& line, std::size_t lineno) {
    if (blank(line)) return;
    auto where = [&] { return fmt::format("{}:{}", source, lineno); };
    TranslationLabel l;
    try {
      const json rec = json::parse(line);
      l.sentence_id = rec.at("sentence_id").get<std::string>();
      l.label3 = parse_label3(rec.at("label3").get<std::string>());
      l.label2 = rec.contains("label2") ? parse_label2(rec["label2"].get<std::string>()) : merge(l.label3);
      if (rec.contains("matched_keyword") && rec["matched_keyword"].is_string())
        l.matched_keyword = rec["matched_keyword"].get<std::string>();
      if (rec.contains("matched_target") && rec["matched_target"].is_string())
        l.matched_target = rec["matched_target"].get<std::string>();
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, fmt::format("{}: {}", where(), e.what()));
    } catch (const Error& e) {
      fail(ErrorKind::parse, fmt::format("{}: {}", where(), e.what()));
    }
    if (l.label2 != merge(l.label3))
      fail(ErrorKind::validation, fmt::format("{}: label2 disagrees with label3", where()));
    if (!out.emplace(l.sentence_id, l).second)
      fail(ErrorKind::validation, fmt::format("{}: duplicate label for '{}'", where(), l.sentence_id));
  });
  return out;
}

LabelMap load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open labels " + path.string());
  return parse_labels(in, path.string());
}

LabelDistribution label_distribution(const LabelMap& labels, const CorpusSet& corpus) {
  struct Tally {
    std::size_t par = 0, wfw = 0, copy = 0;
  } fig, lit;
  for (const auto& [id, l] : labels) {
    const PieSentence* s = corpus.find(id);
    if (!s) fail(ErrorKind::consistency, fmt::format("label for unknown sentence '{}'", id));
    Tally& t = s->gold_label == GoldLabel::figurative ? fig : lit;
    if (l.label2 == Label2::paraphrase)
      ++t.par;
    else
      ++t.wfw;
    if (l.label3 == Label3::copy) ++t.copy;
  }
  auto share = [](const Tally& t) {
    CategoryShare c;
    c.n = t.par + t.wfw;
    if (c.n > 0) {
      const double n = static_cast<double>(c.n);
      c.paraphrase_pct = 100.0 * static_cast<double>(t.par) / n;
      c.word_for_word_pct = 100.0 * static_cast<double>(t.wfw) / n;
      c.copy_pct = 100.0 * static_cast<double>(t.copy) / n;
    }
    return c;
  };
  return {share(fig), share(lit)};
}

void GeneticSimilarity::set(const std::string& a, const std::string& b, double similarity) {
  if (!(similarity >= 0.0 && similarity <= 1.0))
    fail(ErrorKind::validation, fmt::format("similarity {}-{} outside [0, 1]", a, b));
  values_[std::minmax(a, b)] = similarity;
}

std::optional<double> GeneticSimilarity::get(const std::string& a, const std::string& b) const {
  auto it = values_.find(std::minmax(a, b));
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

GeneticSimilarity parse_genetic_similarity(std::istream& in, std::string_view source) {
  GeneticSimilarity sim;
  for_each_line(in, [&](const std::string& line, std::size_t lineno) {
    if (blank(line) || line.front() == '#') return;
    std::stringstream ss(line);
    std::string a, b, v;
    if (!std::getline(ss, a, '\t') || !std::getline(ss, b, '\t') || !std::getline(ss, v, '\t'))
      fail(ErrorKind::parse, fmt::format("{}:{}: expected lang_a<TAB>lang_b<TAB>similarity", source, lineno));
    double value = 0;
    try {
      std::size_t used = 0;
      value = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
    } catch (const std::exception&) {
      fail(ErrorKind::parse, fmt::format("{}:{}: bad similarity '{}'", source, lineno, v));
    }
    sim.set(a, b, value);
  });
  return sim;
}

GeneticSimilarity load_genetic_similarity(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open similarity table " + path.string());
  return parse_genetic_similarity(in, path.string());
}

AgreementResult agreement_matrix(const std::map<std::string, LabelMap>& labels_by_language,
                                 const CorpusSet& corpus, const GeneticSimilarity* similarity) {
  if (labels_by_language.size() < 2) fail(ErrorKind::input, "agreement needs at least two languages");
  AgreementResult out;
  for (const auto& [lang, labels] : labels_by_language) out.languages.push_back(lang);
  const auto n = static_cast<Eigen::Index>(out.languages.size());
  out.f1 = Eigen::MatrixXd::Zero(n, n);

  std::vector<double> f1s, sims;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      const auto& la = labels_by_language.at(out.languages[a]);
      const auto& lb = labels_by_language.at(out.languages[b]);
      std::vector<int> gold, pred;
      for (const auto& [id, label] : la) {
        const PieSentence* s = corpus.find(id);
        if (!s) fail(ErrorKind::consistency, fmt::format("label for unknown sentence '{}'", id));
        if (s->gold_label != GoldLabel::figurative) continue;
        auto it = lb.find(id);
        if (it == lb.end()) continue;
        gold.push_back(static_cast<int>(label.label2));
        pred.push_back(static_cast<int>(it->second.label2));
      }
      if (gold.empty())
        fail(ErrorKind::empty_set, fmt::format("languages {} and {} share no figurative sentences",
                                               out.languages[a], out.languages[b]));
      out.f1(a, b) = macro_f1(pred, gold);
      if (a == b) continue;
      ++out.pairs;
      if (similarity) {
        auto sim = similarity->get(out.languages[a], out.languages[b]);
        if (!sim)
          fail(ErrorKind::missing_input, fmt::format("no genetic similarity for {}-{}", out.languages[a],
                                                     out.languages[b]));
        f1s.push_back(out.f1(a, b));
        sims.push_back(*sim);
      }
    }
  }
  if (similarity) {
    try {
      out.pearson = pearson_r(f1s, sims);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::numerical) throw;
    }
  }
  return out;
}

Crosstab crosstab_with_reference(const LabelMap& model_labels, const LabelMap& reference_labels,
                                 const TranslationMap& model_translations,
                                 const TranslationMap& reference_translations) {
  if (model_labels.size() != reference_labels.size())
    fail(ErrorKind::consistency, "model and reference label sets differ in size");
  TokenizedCorpus cand[2][2], ref[2][2];
  Crosstab out;
  for (const auto& [id, ml] : model_labels) {
    auto rl = reference_labels.find(id);
    if (rl == reference_labels.end())
      fail(ErrorKind::consistency, fmt::format("sentence '{}' has no reference label", id));
    auto mt = model_translations.find(id);
    auto rt = reference_translations.find(id);
    if (mt == model_translations.end() || rt == reference_translations.end())
      fail(ErrorKind::consistency, fmt::format("sentence '{}' lacks a model or reference translation", id));
    const int r = crosstab_index(rl->second.label2);
    const int c = crosstab_index(ml.label2);
    ++out.cells[r][c].n;
    cand[r][c].push_back(mt->second.target_tokens);
    ref[r][c].push_back(rt->second.target_tokens);
  }
  const double total = static_cast<double>(model_labels.size());
  for (int r = 0; r < 2; ++r) {
    out.row_n[r] = out.cells[r][0].n + out.cells[r][1].n;
    out.row_share_pct[r] = total > 0 ? 100.0 * static_cast<double>(out.row_n[r]) / total : 0.0;
    for (int c = 0; c < 2; ++c) {
      CrosstabCell& cell = out.cells[r][c];
      if (out.row_n[r] > 0) cell.row_pct = 100.0 * static_cast<double>(cell.n) / static_cast<double>(out.row_n[r]);
      if (cell.n > 0) cell.bleu = bleu(cand[r][c], ref[r][c]);
    }
  }
  return out;
}

}  // namespace idiolens
