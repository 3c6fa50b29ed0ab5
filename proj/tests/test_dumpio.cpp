#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "idiolens/dumpio.hpp"
#include "synthetic.hpp"

using namespace idiolens;

namespace {

// Raw container bytes assembled independently of the writer.
struct Bytes {
  std::string s;
  void raw(const void* p, std::size_t n) { s.append(static_cast<const char*>(p), n); }
  template <class T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) s.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
  }
  void header(std::uint16_t version, const std::string& meta) {
    raw("ACTD", 4);
    le<std::uint16_t>(version);
    le<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
    raw(meta.data(), meta.size());
  }
};

DumpErrc read_error(const std::string& bytes) {
  std::istringstream in(bytes);
  try {
    read_record(in);
  } catch (const DumpError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::format);
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return DumpErrc::bad_magic;
}

ActivationDump sample_dump(std::uint64_t seed, int hidden = 5) {
  std::mt19937_64 rng(seed);
  const auto s = testkit::random_sentence(rng, "s" + std::to_string(seed), 7, "i");
  testkit::DumpShape shape;
  shape.layers = 2;
  shape.heads = 2;
  shape.hidden = hidden;
  return testkit::random_dump(rng, s, shape);
}

}  // namespace

TEST(Actd, HandBuiltRecordDecodes) {
  Bytes b;
  b.header(1, R"({"kind":"x","tensors":["a","b"]})");
  b.le<std::uint8_t>(0);
  b.le<std::uint8_t>(2);
  b.le<std::uint32_t>(2);
  b.le<std::uint32_t>(1);
  const float f[2] = {1.5f, -2.0f};
  b.raw(f, sizeof f);
  b.le<std::uint8_t>(1);
  b.le<std::uint8_t>(0);
  const double d = 3.25;
  b.raw(&d, sizeof d);
  std::istringstream in(b.s);
  const auto rec = read_record(in);
  ASSERT_TRUE(rec);
  EXPECT_EQ(rec->roles, (std::vector<std::string>{"a", "b"}));
  const auto& a = std::get<FloatTensor>(*rec->find("a"));
  EXPECT_EQ(a.dims(), (std::vector<std::uint32_t>{2, 1}));
  EXPECT_EQ(a(1, 0), -2.0f);
  const auto& sc = std::get<DoubleTensor>(*rec->find("b"));
  EXPECT_EQ(sc.rank(), 0u);
  EXPECT_EQ(sc.data()[0], 3.25);
  EXPECT_FALSE(read_record(in));

  std::ostringstream out;
  write_record(out, *rec);
  std::istringstream again(out.str());
  const auto rec2 = read_record(again);
  EXPECT_EQ(rec2->tensors, rec->tensors);
}

TEST(Actd, ErrorCodes) {
  EXPECT_EQ(read_error("ACTX\x01\x00"), DumpErrc::bad_magic);
  {
    Bytes b;
    b.header(2, "{}");
    EXPECT_EQ(read_error(b.s), DumpErrc::unsupported_version);
  }
  {
    Bytes b;
    b.header(1, "{not json");
    EXPECT_EQ(read_error(b.s), DumpErrc::bad_metadata);
  }
  {
    Bytes b;
    b.header(1, R"({"tensors":["a"]})");
    b.le<std::uint8_t>(2);
    b.le<std::uint8_t>(0);
    EXPECT_EQ(read_error(b.s), DumpErrc::unsupported_dtype);
  }
  {
    Bytes b;
    b.header(1, R"({"tensors":["a"]})");
    b.le<std::uint8_t>(0);
    b.le<std::uint8_t>(9);
    EXPECT_EQ(read_error(b.s), DumpErrc::dimension_overflow);
  }
  {
    Bytes b;
    b.header(1, R"({"tensors":["a"]})");
    b.le<std::uint8_t>(0);
    b.le<std::uint8_t>(2);
    b.le<std::uint32_t>(1u << 20);
    b.le<std::uint32_t>(1u << 13);
    EXPECT_EQ(read_error(b.s), DumpErrc::dimension_overflow);
  }
  {
    Bytes b;
    b.header(1, R"({"tensors":["a"]})");
    b.le<std::uint8_t>(0);
    b.le<std::uint8_t>(1);
    b.le<std::uint32_t>(4);
    b.s.append(7, '\0');
    EXPECT_EQ(read_error(b.s), DumpErrc::truncated);
  }
  {
    Bytes b;
    b.header(1, R"({"tensors":["a"]})");
    b.s.resize(b.s.size() - 3);
    EXPECT_EQ(read_error(b.s), DumpErrc::truncated);
  }
}

TEST(Actd, RandomTensorsRoundTripExactly) {
  std::mt19937_64 rng(11);
  testkit::TempDir dir("actd");
  std::vector<Record> recs;
  for (int i = 0; i < 40; ++i) {
    Record r;
    r.meta["i"] = i;
    const std::size_t rank = rng() % 4;
    std::vector<std::uint32_t> dims;
    for (std::size_t k = 0; k < rank; ++k) dims.push_back(static_cast<std::uint32_t>(rng() % 5));
    if (i % 2) {
      DoubleTensor t(dims);
      for (auto& v : t.data()) v = testkit::uniform01(rng) * 1e300 - 5e299;
      r.tensors.emplace_back(std::move(t));
    } else {
      FloatTensor t(dims);
      for (auto& v : t.data()) v = static_cast<float>(testkit::uniform01(rng) - 0.5);
      r.tensors.emplace_back(std::move(t));
    }
    r.roles.push_back("t");
    recs.push_back(std::move(r));
  }
  write_records(dir / "r.actd", recs);
  const auto back = read_records(dir / "r.actd");
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].tensors, recs[i].tensors);
    EXPECT_EQ(back[i].meta["i"], static_cast<int>(i));
  }
}

TEST(Actd, RolesMustMatchTensors) {
  Record r;
  r.roles = {"a", "b"};
  r.tensors.emplace_back(FloatTensor({1}));
  std::ostringstream out;
  EXPECT_THROW(write_record(out, r), Error);
}

TEST(Dumps, RecordRoundTripKeepsEverything) {
  auto d = sample_dump(3);
  d.variant.kind = DumpVariant::Kind::masked;
  d.variant.masked_token = 1;
  d.variant.masked_layer = 2;
  EXPECT_EQ(dump_from_record(to_record(d)), d);
  d.variant = DumpVariant{DumpVariant::Kind::projected, -1, -1, "round0", {1, 3}};
  EXPECT_EQ(dump_from_record(to_record(d)), d);
}

TEST(Dumps, DirectoryWithManifestAndStreaming) {
  testkit::TempDir dir("dumps");
  std::vector<ActivationDump> dumps{sample_dump(1), sample_dump(2), sample_dump(3)};
  write_dump_dir(dir.path(), dumps);
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
  EXPECT_EQ(read_dumps(dir.path()), dumps);
  EXPECT_EQ(read_dumps(dir / "dumps.actd"), dumps);
  DumpReader reader(dir / "dumps.actd");
  int n = 0;
  while (auto d = reader.next()) EXPECT_EQ(*d, dumps[n++]);
  EXPECT_EQ(n, 3);
}

TEST(Dumps, DirectoryWithoutManifestReadsFilesInNameOrder) {
  testkit::TempDir dir("dumps");
  std::vector<ActivationDump> a{sample_dump(1)}, b{sample_dump(2)};
  write_dump(dir / "b.actd", b);
  write_dump(dir / "a.actd", a);
  const auto all = read_dumps(dir.path());
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0], a[0]);
  EXPECT_EQ(all[1], b[0]);
}

TEST(Dumps, NonDumpRecordIsRejected) {
  Record r;
  r.meta["kind"] = "cca_projection";
  EXPECT_THROW(dump_from_record(r), DumpError);
}

TEST(Dumps, ValidDumpHasNoIssues) {
  const auto d = sample_dump(5);
  EXPECT_TRUE(validate_dump(d, static_cast<int>(7)).empty());
}

TEST(Dumps, RowSumOffByTenPercentWarns) {
  auto d = sample_dump(5);
  auto row = d.enc_self_attn.data().subspan(0, d.enc_self_attn.dims().back());
  double sum = 0;
  for (auto& v : row) {
    v *= 0.9f;
    sum += v;
  }
  ASSERT_NEAR(sum, 0.9, 1e-5);
  const auto issues = validate_dump(d);
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].severity, ValidationIssue::Severity::warning);
  EXPECT_NE(issues[0].message.find("enc_self_attn"), std::string::npos);
}

TEST(Dumps, StructuralProblemsAreErrors) {
  auto errors = [](const ActivationDump& d, std::optional<int> words = {}) {
    int n = 0;
    for (const auto& i : validate_dump(d, words)) n += i.severity == ValidationIssue::Severity::error;
    return n;
  };
  auto d = sample_dump(6);
  EXPECT_GT(errors(d, 9), 0);  // wrong word count
  auto m = d;
  std::swap(m.subword_to_word_src[0], m.subword_to_word_src[m.subword_to_word_src.size() - 2]);
  EXPECT_GT(errors(m), 0);
  m = d;
  m.subword_to_word_src.pop_back();
  EXPECT_GT(errors(m), 0);
  m = d;
  m.eos_index = 0;
  EXPECT_GT(errors(m), 0);
  m = d;
  m.variant.kind = DumpVariant::Kind::masked;
  m.variant.masked_token = 0;
  m.variant.masked_layer = 0;  // layers count from 1
  EXPECT_GT(errors(m), 0);
  m.variant.masked_layer = d.layers();
  EXPECT_EQ(errors(m), 0);
  m = d;
  m.enc_hidden = FloatTensor({1, 1, 1});
  EXPECT_GT(errors(m), 0);
}

TEST(WordAttention, SumsKeysAndAveragesQueries) {
  // subtokens: w0 w0 w1 eos
  Eigen::MatrixXd a(4, 4);
  a << 0.1, 0.2, 0.3, 0.4,  //
      0.3, 0.3, 0.2, 0.2,   //
      0.5, 0.0, 0.5, 0.0,   //
      0.25, 0.25, 0.25, 0.25;
  const std::vector<int> map{0, 0, 1, -1};
  const auto w = word_attention(a, map, 2, map, 2);
  EXPECT_NEAR(w(0, 0), (0.3 + 0.6) / 2, 1e-12);
  EXPECT_NEAR(w(0, 1), (0.3 + 0.2) / 2, 1e-12);
  EXPECT_NEAR(w(1, 0), 0.5, 1e-12);
  EXPECT_NEAR(w(1, 1), 0.5, 1e-12);
  EXPECT_EQ(subtokens_of(map, 0), (std::vector<int>{0, 1}));
}

TEST(WordAttention, LayerAttentionAveragesHeads) {
  FloatTensor t({1, 2, 1, 2});
  t(0, 0, 0, 0) = 1.0f;
  t(0, 1, 0, 1) = 1.0f;
  const auto m = layer_attention(t, 0);
  EXPECT_DOUBLE_EQ(m(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(layer_attention(t, 0, 1)(0, 1), 1.0);
  EXPECT_THROW(layer_attention(t, 1), Error);
  EXPECT_THROW(layer_attention(t, 0, 2), Error);
}
