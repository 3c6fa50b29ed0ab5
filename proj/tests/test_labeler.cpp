#include <gtest/gtest.h>

#include <sstream>

#include "idiolens/error.hpp"
#include "idiolens/labeler.hpp"
#include "idiolens/text.hpp"
#include "fixtures.hpp"
#include "synthetic.hpp"

using namespace idiolens;

namespace {

PieSentence sentence(const std::string& id, std::vector<std::string> tokens, std::vector<int> pie,
                     std::vector<int> kw, GoldLabel gold = GoldLabel::figurative) {
  PieSentence s;
  s.id = id;
  s.idiom_id = "i_" + id;
  s.tokens = std::move(tokens);
  s.pie_word_indices = std::move(pie);
  s.keyword_indices = std::move(kw);
  s.gold_label = gold;
  return s;
}

TranslationRecord tr(const std::string& id, const std::string& text) {
  return TranslationRecord{id, split_whitespace(text), Provenance::model};
}

TranslationLabel lab(const std::string& id, Label3 l) { return TranslationLabel{id, l, merge(l), {}, {}}; }

}  // namespace

TEST(Labeler, FixtureCasesMatchExpectedLabels) {
  const auto cases = testkit::load_labeler_cases();
  ASSERT_EQ(cases.size(), 40u);
  for (const auto& c : cases) EXPECT_EQ(testkit::check_labeler_case(c), "") << c.name;
}

TEST(Labeler, LexicalMatchRules) {
  EXPECT_TRUE(lexical_match("hart", "Hart,"));
  EXPECT_TRUE(lexical_match("boon", "boon"));       // equality needs no length
  EXPECT_TRUE(lexical_match("hand", "handbereik"));  // four-code-point substring
  EXPECT_FALSE(lexical_match("van", "vangst"));      // too short for a substring
  EXPECT_FALSE(lexical_match("", "x"));
  EXPECT_TRUE(lexical_match("ÉCOLE", "«école»"));
}

TEST(Labeler, CopyOnlyWithoutLiteralMatch) {
  LiteralLexicon lex;
  lex.add("beans", "bonen");
  const auto s = sentence("s", {"spill", "the", "beans"}, {0, 1, 2}, {2});
  EXPECT_EQ(label_translation(s, tr("s", "hij liet de beans vallen"), lex).label3, Label3::copy);
  EXPECT_EQ(label_translation(s, tr("s", "beans en bonen"), lex).label3, Label3::word_for_word);
  EXPECT_EQ(label_translation(s, tr("s", "hij verklapte het geheim"), lex).label3, Label3::paraphrase);
}

TEST(Labeler, EarliestTargetTokenWins) {
  LiteralLexicon lex;
  lex.add("cat", "kat");
  lex.add("bag", "zak");
  const auto s = sentence("s", {"let", "the", "cat", "out", "of", "the", "bag"}, {0, 1, 2, 3, 4, 5, 6}, {2, 6});
  const auto l = label_translation(s, tr("s", "de zak en de kat"), lex);
  EXPECT_EQ(l.label3, Label3::word_for_word);
  EXPECT_EQ(l.matched_keyword, "bag");
  EXPECT_EQ(l.matched_target, "zak");
}

TEST(Labeler, KeywordlessSentenceIsAnError) {
  LiteralLexicon lex;
  auto s = sentence("s", {"a"}, {0}, {});
  EXPECT_THROW(label_translation(s, tr("s", "x"), lex), Error);
}

TEST(Labeler, LabelCorpusSkipsMissingTranslations) {
  LiteralLexicon lex;
  lex.add("beans", "bonen");
  CorpusSet corpus({sentence("a", {"spill", "beans"}, {0, 1}, {1}), sentence("b", {"spill", "beans"}, {0, 1}, {1})});
  TranslationMap trs{{"a", tr("a", "bonen")}};
  const auto labels = label_corpus(corpus, trs, lex);
  ASSERT_EQ(labels.size(), 1u);
  EXPECT_EQ(labels.at("a").label3, Label3::word_for_word);
  trs["zzz"] = tr("zzz", "x");
  try {
    label_corpus(corpus, trs, lex);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::consistency);
  }
}

TEST(Labeler, LexiconParsing) {
  std::istringstream in("# comment\nHeart\thart\tboezem\n\nbeans\tbonen\n");
  const auto lex = parse_lexicon(in);
  EXPECT_EQ(lex.size(), 2u);
  ASSERT_NE(lex.find("heart"), nullptr);
  EXPECT_EQ(lex.find("heart")->size(), 2u);
  std::istringstream bad("onlykeyword\n");
  EXPECT_THROW(parse_lexicon(bad), Error);
}

TEST(Labeler, TranslationParsing) {
  std::istringstream in(R"({"sentence_id":"a","translation":"de kat"}
{"sentence_id":"b","target_tokens":["x","y"],"provenance":"reference_corpus"}
)");
  const auto m = parse_translations(in);
  EXPECT_EQ(m.at("a").target_tokens, (std::vector<std::string>{"de", "kat"}));
  EXPECT_EQ(m.at("b").provenance, Provenance::reference_corpus);
  std::istringstream dup(R"({"sentence_id":"a","translation":"x"}
{"sentence_id":"a","translation":"y"})");
  EXPECT_THROW(parse_translations(dup), Error);
  std::istringstream prov(R"({"sentence_id":"a","translation":"x","provenance":"human"})");
  EXPECT_THROW(parse_translations(prov), Error);
}

TEST(Labeler, LabelsJsonlRoundTrip) {
  LabelMap m;
  m["a"] = lab("a", Label3::copy);
  m["b"] = TranslationLabel{"b", Label3::word_for_word, Label2::word_for_word, "cat", "kat"};
  std::istringstream in(labels_to_jsonl(m));
  EXPECT_EQ(parse_labels(in), m);
  std::istringstream bad(R"({"sentence_id":"a","label3":"copy","label2":"paraphrase"})");
  EXPECT_THROW(parse_labels(bad), Error);
}

TEST(Labeler, DistributionPercentages) {
  CorpusSet corpus({sentence("f1", {"x"}, {0}, {0}), sentence("f2", {"x"}, {0}, {0}),
                    sentence("f3", {"x"}, {0}, {0}), sentence("f4", {"x"}, {0}, {0}),
                    sentence("l1", {"x"}, {0}, {0}, GoldLabel::literal)});
  LabelMap labels{{"f1", lab("f1", Label3::paraphrase)},
                  {"f2", lab("f2", Label3::paraphrase)},
                  {"f3", lab("f3", Label3::copy)},
                  {"f4", lab("f4", Label3::word_for_word)},
                  {"l1", lab("l1", Label3::word_for_word)}};
  const auto d = label_distribution(labels, corpus);
  EXPECT_EQ(d.figurative.n, 4u);
  EXPECT_DOUBLE_EQ(d.figurative.paraphrase_pct, 50.0);
  EXPECT_DOUBLE_EQ(d.figurative.word_for_word_pct, 50.0);
  EXPECT_DOUBLE_EQ(d.figurative.copy_pct, 25.0);
  EXPECT_DOUBLE_EQ(d.literal.word_for_word_pct, 100.0);
  labels["ghost"] = lab("ghost", Label3::copy);
  EXPECT_THROW(label_distribution(labels, corpus), Error);
}

TEST(Labeler, AgreementMatrixAndCorrelation) {
  CorpusSet corpus({sentence("a", {"x"}, {0}, {0}), sentence("b", {"x"}, {0}, {0}), sentence("c", {"x"}, {0}, {0}),
                    sentence("d", {"x"}, {0}, {0}), sentence("e", {"x"}, {0}, {0}, GoldLabel::literal)});
  auto labels = [](std::vector<Label3> ls) {
    LabelMap m;
    const char* ids[] = {"a", "b", "c", "d", "e"};
    for (std::size_t i = 0; i < ls.size(); ++i) m[ids[i]] = lab(ids[i], ls[i]);
    return m;
  };
  using L = Label3;
  std::map<std::string, LabelMap> by_lang{
      {"de", labels({L::paraphrase, L::paraphrase, L::word_for_word, L::word_for_word, L::paraphrase})},
      {"nl", labels({L::paraphrase, L::word_for_word, L::word_for_word, L::copy, L::word_for_word})},
      {"fr", labels({L::word_for_word, L::word_for_word, L::paraphrase, L::paraphrase, L::paraphrase})}};
  GeneticSimilarity sim;
  sim.set("de", "nl", 0.9);
  sim.set("de", "fr", 0.3);
  sim.set("nl", "fr", 0.4);
  const auto r = agreement_matrix(by_lang, corpus, &sim);
  ASSERT_EQ(r.languages, (std::vector<std::string>{"de", "fr", "nl"}));
  // de as gold, nl as prediction over a..d: the hand-computed 11/15 case
  EXPECT_NEAR(r.f1(0, 2), 11.0 / 15.0, 1e-12);
  EXPECT_NEAR(r.f1(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(r.f1(1, 1), 1.0, 1e-12);
  EXPECT_TRUE(r.pearson.has_value());
  EXPECT_GT(*r.pearson, 0.0);
  EXPECT_EQ(r.pairs, 6u);

  const auto no_sim = agreement_matrix(by_lang, corpus, nullptr);
  EXPECT_FALSE(no_sim.pearson.has_value());
  GeneticSimilarity partial;
  partial.set("de", "nl", 0.5);
  EXPECT_THROW(agreement_matrix(by_lang, corpus, &partial), Error);
}

TEST(Labeler, GeneticSimilarityParsing) {
  std::istringstream in("de\tnl\t0.8\n");
  const auto g = parse_genetic_similarity(in);
  EXPECT_EQ(g.get("nl", "de"), 0.8);
  EXPECT_FALSE(g.get("de", "fr"));
  std::istringstream bad("de\tnl\t1.5\n");
  EXPECT_THROW(parse_genetic_similarity(bad), Error);
}

TEST(Labeler, CrosstabWithReference) {
  LabelMap model{{"a", lab("a", Label3::paraphrase)},
                 {"b", lab("b", Label3::word_for_word)},
                 {"c", lab("c", Label3::word_for_word)},
                 {"d", lab("d", Label3::copy)}};
  LabelMap ref{{"a", lab("a", Label3::paraphrase)},
               {"b", lab("b", Label3::paraphrase)},
               {"c", lab("c", Label3::word_for_word)},
               {"d", lab("d", Label3::word_for_word)}};
  TranslationMap mt{{"a", tr("a", "een twee drie vier")},
                    {"b", tr("b", "x y z w")},
                    {"c", tr("c", "p q r s")},
                    {"d", tr("d", "k l m n")}};
  TranslationMap rt = mt;
  const auto x = crosstab_with_reference(model, ref, mt, rt);
  EXPECT_EQ(x.cells[0][0].n, 1u);
  EXPECT_EQ(x.cells[0][1].n, 1u);
  EXPECT_EQ(x.cells[1][1].n, 2u);
  EXPECT_EQ(x.cells[1][0].n, 0u);
  EXPECT_DOUBLE_EQ(x.cells[0][0].row_pct, 50.0);
  EXPECT_DOUBLE_EQ(x.row_share_pct[1], 50.0);
  EXPECT_FALSE(x.cells[1][0].bleu);
  EXPECT_NEAR(*x.cells[1][1].bleu, 100.0, 1e-9);
  ref.erase("d");
  EXPECT_THROW(crosstab_with_reference(model, ref, mt, rt), Error);
}
