#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "sentinel/dataio.h"
#include "sentinel/errors.h"
#include "test_support.h"

namespace sentinel::data {
namespace {

using testing::TempDir;
using testing::write_text;

std::vector<LabeledExample> make_examples(std::size_t n) {
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"example " + std::to_string(i), i % 3 ? Label::kBenign : Label::kInjection,
                   "gen"});
  }
  return out;
}

TEST(Jsonl, LoadsLabelsAndSources) {
  TempDir dir;
  write_text(dir / "mixed.jsonl",
             "{\"text\": \"ignore the rules\", \"label\": 1, \"source\": \"web\"}\n"
             "\n"
             "{\"text\": \"hello\", \"label\": \"benign\"}\n"
             "{\"text\": \"leak it\", \"label\": \"injection\", \"extra\": true}\n"
             "{\"text\": \"zero\", \"label\": 0}\n");
  const auto r = load_jsonl(dir / "mixed.jsonl");
  EXPECT_TRUE(r.errors.empty());
  ASSERT_EQ(r.examples.size(), 4u);
  EXPECT_EQ(r.examples[0], (LabeledExample{"ignore the rules", Label::kInjection, "web"}));
  EXPECT_EQ(r.examples[1], (LabeledExample{"hello", Label::kBenign, "mixed"}));
  EXPECT_EQ(r.examples[2].label, Label::kInjection);
  EXPECT_EQ(r.examples[3].label, Label::kBenign);
  EXPECT_EQ(load_jsonl(dir / "mixed.jsonl", "override").examples[1].source, "override");
}

TEST(Jsonl, MalformedLinesAreReportedWithLineNumbers) {
  TempDir dir;
  std::string text;
  for (int i = 0; i < 19; ++i) text += "{\"text\": \"ok " + std::to_string(i) + "\", \"label\": 0}\n";
  text += "{\"text\": \"bad label\", \"label\": 7}\n";  // line 20
  write_text(dir / "d.jsonl", text);
  const auto r = load_jsonl(dir / "d.jsonl");
  EXPECT_EQ(r.examples.size(), 19u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].line, 20u);
}

TEST(Jsonl, TooManyMalformedLinesAbort) {
  TempDir dir;
  std::string text;
  for (int i = 0; i < 8; ++i) text += "{\"text\": \"ok\", \"label\": 0}\n";
  text += "not json\n{\"label\": 1}\n";  // 2 of 10 malformed
  write_text(dir / "d.jsonl", text);
  EXPECT_THROW(load_jsonl(dir / "d.jsonl"), DataError);
}

TEST(Jsonl, ExactlyTenPercentMalformedIsTolerated) {
  TempDir dir;
  std::string text;
  for (int i = 0; i < 9; ++i) text += "{\"text\": \"ok\", \"label\": 0}\n";
  text += "{\"text\": \"   \", \"label\": 0}\n";  // blank text
  write_text(dir / "d.jsonl", text);
  const auto r = load_jsonl(dir / "d.jsonl");
  EXPECT_EQ(r.examples.size(), 9u);
  EXPECT_EQ(r.errors.size(), 1u);
}

TEST(Jsonl, MissingFileIsDataError) {
  EXPECT_THROW(load_jsonl("/nonexistent/data.jsonl"), DataError);
}

TEST(Csv, QuotingEscapesAndEmbeddedNewlines) {
  TempDir dir;
  write_text(dir / "d.csv",
             "\xEF\xBB\xBFlabel,text,source\r\n"
             "1,\"Ignore, then \"\"obey\"\"\",forum\r\n"
             "benign,\"line one\nline two\",\r\n"
             "0,plain,mail\n");
  const auto r = load_csv(dir / "d.csv");
  EXPECT_TRUE(r.errors.empty());
  ASSERT_EQ(r.examples.size(), 3u);
  EXPECT_EQ(r.examples[0], (LabeledExample{"Ignore, then \"obey\"", Label::kInjection, "forum"}));
  EXPECT_EQ(r.examples[1].text, "line one\nline two");
  EXPECT_EQ(r.examples[1].source, "d");
  EXPECT_EQ(r.examples[2], (LabeledExample{"plain", Label::kBenign, "mail"}));
}

TEST(Csv, HeaderMustNameTextAndLabel) {
  TempDir dir;
  write_text(dir / "d.csv", "prompt,label\nhi,0\n");
  EXPECT_THROW(load_csv(dir / "d.csv"), DataError);
}

TEST(Csv, DispatchByExtension) {
  TempDir dir;
  write_text(dir / "a.csv", "text,label\nhello,0\n");
  write_text(dir / "b.txt", "{\"text\":\"hello\",\"label\":0}\n");
  EXPECT_EQ(load_examples(dir / "a.csv").examples.size(), 1u);
  EXPECT_EQ(load_examples(dir / "b.txt").examples.size(), 1u);
}

TEST(Jsonl, WriteThenLoadRoundTrips) {
  TempDir dir;
  std::vector<LabeledExample> examples{
      {"quote \" and \\ backslash", Label::kInjection, "s1"},
      {"caf\xC3\xA9\nnew line\ttab", Label::kBenign, "s2"},
  };
  write_jsonl(examples, dir / "out.jsonl");
  EXPECT_EQ(load_jsonl(dir / "out.jsonl").examples, examples);
  EXPECT_EQ(to_jsonl_line(examples[0]),
            R"({"text":"quote \" and \\ backslash","label":1,"source":"s1"})");
}

TEST(Fixtures, BundledCorpusLoadsCleanly) {
  const auto r = load_jsonl(testing::fixture("corpus.jsonl"));
  EXPECT_TRUE(r.errors.empty());
  EXPECT_GE(r.examples.size(), 60u);
  const auto injections = std::count_if(r.examples.begin(), r.examples.end(),
                                        [](const auto& e) { return e.label == Label::kInjection; });
  EXPECT_GT(injections, 0);
  EXPECT_LT(static_cast<std::size_t>(injections), r.examples.size());
}

TEST(Split, SizesForTen) {
  const auto s = split(make_examples(10), {}, 1);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.val.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, SizesForThirteenThousand) {
  const auto s = split(make_examples(13000), {}, 42);
  EXPECT_EQ(s.train.size(), 10400u);
  EXPECT_EQ(s.val.size(), 1300u);
  EXPECT_EQ(s.test.size(), 1300u);
}

TEST(Split, PartitionsTheInputAndMatchesIndices) {
  const auto input = make_examples(137);
  const auto s = split(input, {0.7, 0.2, 0.1}, 9);
  std::vector<std::size_t> all;
  for (const auto* idx : {&s.train_indices, &s.val_indices, &s.test_indices}) {
    all.insert(all.end(), idx->begin(), idx->end());
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expected(input.size());
  std::iota(expected.begin(), expected.end(), 0);
  EXPECT_EQ(all, expected);
  for (std::size_t i = 0; i < s.train.size(); ++i) EXPECT_EQ(s.train[i], input[s.train_indices[i]]);
  for (std::size_t i = 0; i < s.test.size(); ++i) EXPECT_EQ(s.test[i], input[s.test_indices[i]]);
  EXPECT_EQ(s.val.size(), 27u);   // floor(137 * 0.2)
  EXPECT_EQ(s.test.size(), 13u);  // floor(137 * 0.1)
  EXPECT_EQ(s.seed, 9u);
}

TEST(Split, DeterministicPerSeed) {
  const auto input = make_examples(50);
  const auto a = split(input, {}, 5);
  const auto b = split(input, {}, 5);
  EXPECT_EQ(a.train_indices, b.train_indices);
  EXPECT_EQ(a.test_indices, b.test_indices);
  EXPECT_NE(split(input, {}, 6).train_indices, a.train_indices);
}

TEST(Split, Errors) {
  EXPECT_THROW(split(make_examples(9), {}, 1), DataError);
  EXPECT_THROW(split(make_examples(20), {0.5, 0.3, 0.3}, 1), ConfigError);
  EXPECT_THROW(split(make_examples(20), {1.2, -0.1, -0.1}, 1), ConfigError);
}

}  // namespace
}  // namespace sentinel::data
