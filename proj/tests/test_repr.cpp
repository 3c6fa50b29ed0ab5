#include <gtest/gtest.h>

#include <random>

#include "idiolens/error.hpp"
#include "idiolens/repr.hpp"
#include "synthetic.hpp"

using namespace idiolens;

namespace {

Eigen::MatrixXd random_orthogonal(std::mt19937_64& rng, int d) {
  return Eigen::HouseholderQR<Eigen::MatrixXd>(testkit::gaussian(rng, d, d)).householderQ();
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error";
  return ErrorKind::io;
}

struct Population {
  std::vector<PieSentence> sentences;
  std::vector<ActivationDump> dumps;
};

// Every hidden layer is a copy of the embeddings plus `noise` times fresh
// Gaussian noise per layer step.
Population population(std::uint64_t seed, int n, double noise, const std::string& prefix = "s") {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  Population p;
  testkit::DumpShape shape;
  shape.layers = 3;
  shape.heads = 1;
  shape.hidden = 4;
  shape.target_words = 0;
  for (int i = 0; i < n; ++i) {
    p.sentences.push_back(testkit::random_sentence(rng, prefix + std::to_string(i), 9, "i" + std::to_string(i % 7)));
    auto d = testkit::random_dump(rng, p.sentences.back(), shape);
    auto& h = d.enc_hidden;
    for (std::uint32_t l = 1; l < h.dim(0); ++l)
      for (std::uint32_t s = 0; s < h.dim(1); ++s)
        for (std::uint32_t k = 0; k < h.dim(2); ++k)
          h(l, s, k) = h(l - 1, s, k) + static_cast<float>(noise) * g(rng);
    p.dumps.push_back(std::move(d));
  }
  return p;
}

ActivationDump masked_copy(const ActivationDump& d, int token, int layer, double noise, std::mt19937_64& rng) {
  ActivationDump m = d;
  m.variant.kind = DumpVariant::Kind::masked;
  m.variant.masked_token = token;
  m.variant.masked_layer = layer;
  std::normal_distribution<float> g;
  for (auto& v : m.enc_hidden.data()) v += static_cast<float>(noise) * g(rng);
  return m;
}

}  // namespace

TEST(Cca, SelfSimilarityIsOne) {
  std::mt19937_64 rng(1);
  const auto a = testkit::gaussian(rng, 8, 500);
  const auto p = fit_cca(a, a, 0.0);
  EXPECT_NEAR(cca_similarity(p, a, a), 1.0, 1e-6);
  EXPECT_NEAR(p.correlations.minCoeff(), 1.0, 1e-6);
}

TEST(Cca, InvariantUnderOrthogonalTransform) {
  std::mt19937_64 rng(2);
  const auto a = testkit::gaussian(rng, 8, 1000);
  const Eigen::MatrixXd b = testkit::gaussian(rng, 6, 1000) + 0.5 * testkit::gaussian(rng, 6, 8) * a;
  const auto q = random_orthogonal(rng, 6);
  const double base = cca_similarity(fit_cca(a, b, 0.0), a, b);
  const Eigen::MatrixXd qb = q * b;
  EXPECT_NEAR(cca_similarity(fit_cca(a, qb, 0.0), a, qb), base, 1e-4);
  const Eigen::MatrixXd qa = random_orthogonal(rng, 8) * a;
  EXPECT_NEAR(cca_similarity(fit_cca(qa, b, 0.0), qa, b), base, 1e-4);
}

TEST(Cca, IndependentViewsScoreLow) {
  std::mt19937_64 rng(3);
  const auto a = testkit::gaussian(rng, 8, 5000);
  const auto b = testkit::gaussian(rng, 8, 5000);
  EXPECT_LE(cca_similarity(fit_cca(a, b), a, b), 0.1);
}

TEST(Cca, FitDataSimilarityIsMeanCanonicalCorrelation) {
  std::mt19937_64 rng(4);
  const auto a = testkit::gaussian(rng, 5, 300);
  const Eigen::MatrixXd b = testkit::gaussian(rng, 4, 5) * a + testkit::gaussian(rng, 4, 300);
  const auto p = fit_cca(a, b, 0.0);
  EXPECT_EQ(p.rank(), 4);
  EXPECT_NEAR(cca_similarity(p, a, b), p.correlations.mean(), 1e-9);
  for (Eigen::Index i = 1; i < p.rank(); ++i) EXPECT_LE(p.correlations(i), p.correlations(i - 1) + 1e-12);
  EXPECT_LE(p.correlations.maxCoeff(), 1.0);
  EXPECT_GE(p.correlations.minCoeff(), 0.0);
}

TEST(Cca, DeterministicSigns) {
  std::mt19937_64 rng(5);
  const auto a = testkit::gaussian(rng, 4, 200);
  const auto b = testkit::gaussian(rng, 4, 200);
  const auto p = fit_cca(a, b);
  const auto q = fit_cca(a, b);
  EXPECT_EQ(p.W, q.W);
  for (Eigen::Index r = 0; r < p.W.rows(); ++r) {
    Eigen::Index c;
    p.W.row(r).cwiseAbs().maxCoeff(&c);
    EXPECT_GT(p.W(r, c), 0);
  }
}

TEST(Cca, InputErrors) {
  std::mt19937_64 rng(6);
  const auto a = testkit::gaussian(rng, 4, 50);
  EXPECT_EQ(kind_of([&] { fit_cca(a, testkit::gaussian(rng, 4, 49)); }), ErrorKind::input);
  EXPECT_EQ(kind_of([&] { fit_cca(testkit::gaussian(rng, 8, 6), testkit::gaussian(rng, 8, 6)); }),
            ErrorKind::numerical);
  Eigen::MatrixXd bad = a;
  bad(0, 0) = std::nan("");
  EXPECT_EQ(kind_of([&] { fit_cca(bad, a); }), ErrorKind::input);
  EXPECT_EQ(kind_of([&] { fit_cca(Eigen::MatrixXd::Ones(4, 50), a, 0.0); }), ErrorKind::numerical);
  const auto p = fit_cca(a, a);
  EXPECT_EQ(kind_of([&] { cca_similarity(p, a.leftCols(1), a.leftCols(1)); }), ErrorKind::input);
  EXPECT_EQ(kind_of([&] { cca_similarity(p, testkit::gaussian(rng, 3, 10), a.leftCols(10)); }), ErrorKind::input);
}

TEST(Cca, RecordRoundTrip) {
  std::mt19937_64 rng(7);
  const auto a = testkit::gaussian(rng, 5, 100);
  const auto b = testkit::gaussian(rng, 3, 100);
  const auto p = fit_cca(a, b);
  const auto rec = to_record(p);
  EXPECT_EQ(rec.meta["kind"], "cca_projection");
  const auto q = cca_from_record(rec);
  EXPECT_EQ(q.W, p.W);
  EXPECT_EQ(q.V, p.V);
  EXPECT_EQ(q.mean_a, p.mean_a);
  EXPECT_EQ(q.correlations, p.correlations);
  EXPECT_EQ(q.ridge, p.ridge);
}

TEST(Cca, PoolProjectionsAreStableAcrossSkewedSubsets) {
  const auto r = testkit::two_step_contrast(17);
  ASSERT_EQ(r.two_step.size(), 5u);
  EXPECT_LE(r.two_step_spread, 0.05);
  EXPECT_GT(r.refit_spread, 0.10);
  // refitting on few types inflates similarity
  EXPECT_GT(r.refit.front(), r.refit.back());
}

TEST(TokenClasses, SelectSubtokens) {
  ActivationDump d;
  d.subword_to_word_src = {0, 1, 1, 2, 3, 4, -1};
  d.source_subtokens.assign(7, "x");
  PieSentence s;
  s.tokens = {"a", "b", "c", "d", "e"};
  s.pie_word_indices = {1, 2};
  s.keyword_indices = {1};
  s.context_noun_indices = {4};
  EXPECT_EQ(select_subtokens(d, s, TokenClass::pie_noun), (std::vector<int>{1, 2}));
  EXPECT_EQ(select_subtokens(d, s, TokenClass::pie_token), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(select_subtokens(d, s, TokenClass::non_pie_noun), (std::vector<int>{5}));
  EXPECT_EQ(select_subtokens(d, s, TokenClass::context_token), (std::vector<int>{0, 4, 5}));
  EXPECT_EQ(select_subtokens(d, s, TokenClass::context_token, 1), (std::vector<int>{0, 4}));
  for (auto c : {TokenClass::pie_noun, TokenClass::non_pie_noun, TokenClass::pie_token, TokenClass::context_token})
    EXPECT_EQ(parse_token_class(to_string(c)), c);
}

TEST(LayerSimilarity, IdenticalLayersScoreOne) {
  const auto p = population(10, 80, 0.0);
  SimilarityOptions opt;
  opt.refit = true;
  const auto r = layer_similarity(index_dumps(p.dumps), p.sentences, TokenClass::pie_token, {}, opt);
  ASSERT_EQ(r.size(), 3u);
  for (const auto& l : r) EXPECT_NEAR(l.similarity, 1.0, 1e-6);
  EXPECT_EQ(r[0].layer, 0);
  EXPECT_GT(r[0].n, 80u);
}

TEST(LayerSimilarity, BankFromHeldOutPoolAndNoise) {
  const auto pool = population(11, 200, 0.3, "p");
  PoolOptions po;
  po.pool_size = 500;
  const auto bank = fit_layer_bank(pool.dumps, po);
  EXPECT_EQ(bank.by_layer.size(), 3u);
  const auto quiet = population(12, 80, 0.3);
  const auto loud = population(13, 80, 1.5);
  const auto rq = layer_similarity(index_dumps(quiet.dumps), quiet.sentences, TokenClass::pie_token, bank);
  const auto rl = layer_similarity(index_dumps(loud.dumps), loud.sentences, TokenClass::pie_token, bank);
  ASSERT_EQ(rq.size(), 3u);
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_GT(rq[l].similarity, 0.8);
    EXPECT_LT(rl[l].similarity, rq[l].similarity);
  }
  testkit::TempDir dir("bank");
  save_bank(dir / "bank.actd", bank);
  const auto back = load_bank(dir / "bank.actd");
  EXPECT_EQ(back.role, BankRole::layer_pair);
  EXPECT_EQ(back.by_layer.at(2).W, bank.by_layer.at(2).W);
  const auto again = layer_similarity(index_dumps(quiet.dumps), quiet.sentences, TokenClass::pie_token, back);
  EXPECT_EQ(again[1].similarity, rq[1].similarity);
}

TEST(LayerSimilarity, TooFewTokensWarns) {
  const auto p = population(14, 3, 0.1);
  std::vector<std::string> warnings;
  const auto r = layer_similarity(index_dumps(p.dumps), p.sentences, TokenClass::pie_noun, {},
                                  SimilarityOptions{20, true}, &warnings);
  EXPECT_TRUE(r.empty());
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(LayerSimilarity, WrongBankRole) {
  const auto p = population(15, 30, 0.1);
  ProjectionBank mask;
  mask.role = BankRole::mask;
  EXPECT_EQ(kind_of([&] { layer_similarity(index_dumps(p.dumps), p.sentences, TokenClass::pie_token, mask); }),
            ErrorKind::consistency);
}

TEST(MaskInfluence, UnchangedStatesScoreOneAndNoiseLowers) {
  const auto p = population(20, 120, 0.2);
  const CorpusSet corpus(p.sentences);
  std::mt19937_64 rng(1);
  std::vector<ActivationDump> same, noisy;
  for (std::size_t i = 0; i < p.dumps.size(); ++i) {
    const auto toks = select_subtokens(p.dumps[i], p.sentences[i], TokenClass::pie_noun);
    const int layer = 1 + static_cast<int>(i % 2);
    same.push_back(masked_copy(p.dumps[i], toks.front(), layer, 0.0, rng));
    noisy.push_back(masked_copy(p.dumps[i], toks.front(), layer, 1.0, rng));
  }
  const auto idx = index_dumps(p.dumps);
  SimilarityOptions opt;
  opt.refit = true;
  opt.masked_class = TokenClass::pie_noun;
  const auto r = mask_influence(idx, same, corpus, TokenClass::context_token, {}, opt);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].layer, 1);
  EXPECT_EQ(r[1].layer, 2);
  for (const auto& l : r) EXPECT_NEAR(l.similarity, 1.0, 1e-6);

  const auto bank = fit_mask_bank(p.dumps, noisy);
  EXPECT_EQ(bank.role, BankRole::mask);
  const auto rn = mask_influence(idx, noisy, corpus, TokenClass::context_token, bank);
  ASSERT_EQ(rn.size(), 2u);
  for (const auto& l : rn) EXPECT_LT(l.similarity, 0.99);
}

TEST(MaskInfluence, MaskedTokenIsExcludedAndChecked) {
  const auto p = population(21, 40, 0.2);
  const CorpusSet corpus(p.sentences);
  std::mt19937_64 rng(2);
  std::vector<ActivationDump> masked;
  for (std::size_t i = 0; i < p.dumps.size(); ++i) masked.push_back(masked_copy(p.dumps[i], 0, 1, 0.0, rng));
  const auto idx = index_dumps(p.dumps);
  SimilarityOptions opt;
  opt.refit = true;
  opt.min_tokens = 5;

  // affected = pie_token while the masked token sits inside the PIE for some
  // sentences; counts must drop by exactly those
  std::size_t expected = 0;
  for (std::size_t i = 0; i < p.dumps.size(); ++i) {
    const auto t = select_subtokens(p.dumps[i], p.sentences[i], TokenClass::pie_token);
    expected += t.size() - static_cast<std::size_t>(std::count(t.begin(), t.end(), 0));
  }
  const auto r = mask_influence(idx, masked, corpus, TokenClass::pie_token, {}, opt);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].n, expected);

  opt.masked_class = TokenClass::pie_noun;
  bool any_outside = false;
  for (std::size_t i = 0; i < p.dumps.size(); ++i) {
    const auto k = select_subtokens(p.dumps[i], p.sentences[i], TokenClass::pie_noun);
    any_outside |= !std::binary_search(k.begin(), k.end(), 0);
  }
  ASSERT_TRUE(any_outside);
  EXPECT_EQ(kind_of([&] { mask_influence(idx, masked, corpus, TokenClass::pie_token, {}, opt); }),
            ErrorKind::consistency);

  auto retok = masked;
  retok[0].subword_to_word_src[0] = 1;
  opt.masked_class.reset();
  EXPECT_EQ(kind_of([&] { mask_influence(idx, retok, corpus, TokenClass::pie_token, {}, opt); }),
            ErrorKind::consistency);
}

TEST(MaskInfluence, EmptyAffectedSetIsAnError) {
  // every word belongs to the PIE, so there is no context
  PieSentence s;
  s.id = "s";
  s.idiom_id = "i";
  s.tokens = {"a", "b", "c"};
  s.pie_word_indices = {0, 1, 2};
  s.keyword_indices = {1};
  std::mt19937_64 rng(3);
  testkit::DumpShape shape;
  shape.hidden = 3;
  const auto d = testkit::random_dump(rng, s, shape);
  const std::vector<ActivationDump> normal{d};
  const std::vector<ActivationDump> masked{masked_copy(d, 0, 1, 0.0, rng)};
  SimilarityOptions opt;
  opt.refit = true;
  EXPECT_EQ(kind_of([&] {
              mask_influence(index_dumps(normal), masked, CorpusSet({s}), TokenClass::context_token, {}, opt);
            }),
            ErrorKind::empty_set);
}
