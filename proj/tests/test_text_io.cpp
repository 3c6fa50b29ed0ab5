#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "idiolens/error.hpp"
#include "idiolens/io.hpp"
#include "idiolens/parallel.hpp"
#include "idiolens/text.hpp"
#include "synthetic.hpp"

using namespace idiolens;

TEST(Text, CasefoldAsciiAndAccented) {
  EXPECT_EQ(casefold("Hello WORLD"), "hello world");
  EXPECT_EQ(casefold("ÉCOLE Ærø"), "école ærø");
  EXPECT_EQ(casefold("ΑΒΓ"), "αβγ");
  EXPECT_EQ(casefold("ДОМ"), "дом");
  EXPECT_EQ(casefold("日本"), "日本");
}

TEST(Text, StripPunctuation) {
  EXPECT_EQ(strip_punct("\"hello,\""), "hello");
  EXPECT_EQ(strip_punct("«mot»"), "mot");
  EXPECT_EQ(strip_punct("don't"), "don't");
  EXPECT_EQ(strip_punct("..."), "");
  EXPECT_EQ(strip_punct("—word—"), "word");
}

TEST(Text, SplitAndJoin) {
  const auto parts = split_whitespace("  a\tb \n c  ");
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(join(parts, "|"), "a|b|c");
  EXPECT_TRUE(split_whitespace("   ").empty());
}

TEST(Io, FormatReal) {
  EXPECT_EQ(format_real(0.5), "0.500000");
  EXPECT_EQ(format_real(std::nullopt), "");
  EXPECT_EQ(format_real(1.0 / 3.0, 3), "0.333");
}

TEST(Io, CsvTableRejectsWrongWidth) {
  CsvTable t({"a", "b"});
  t.add_row({"1", "2"});
  EXPECT_EQ(t.str(), "a,b\n1,2\n");
  EXPECT_THROW(t.add_row({"1"}), Error);
}

TEST(Io, AtomicWriteReplacesContents) {
  testkit::TempDir dir("io");
  const auto file = dir / "out.txt";
  write_file_atomic(file, "first");
  write_file_atomic(file, "second");
  EXPECT_EQ(read_file(file), "second");
  int files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
  EXPECT_EQ(files, 1);
  EXPECT_THROW(read_file(dir / "missing"), Error);
}

TEST(Io, UniformIndexIsStableAndInRange) {
  std::mt19937_64 a(7), b(7);
  for (int i = 0; i < 1000; ++i) {
    const auto x = uniform_index(a, 13);
    EXPECT_LT(x, 13u);
    EXPECT_EQ(x, uniform_index(b, 13));
  }
}

TEST(Io, DeterministicShuffleIsAPermutation) {
  std::vector<int> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i;
  std::mt19937_64 rng(1);
  auto w = v;
  deterministic_shuffle(w, rng);
  EXPECT_NE(w, v);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(w, v);
}

TEST(Parallel, EveryIndexOnceAndErrorsPropagate) {
  std::vector<int> hits(257, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw std::runtime_error("x");
                            }),
               std::runtime_error);
}
