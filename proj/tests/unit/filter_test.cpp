#include "linequal/filter.hpp"
#include "linequal/io.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <set>

using namespace linequal;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "linequal_filter_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ScoredDocument scored(const std::string& id, std::vector<std::pair<std::string, double>> lines) {
  ScoredDocument sd;
  sd.doc.id = id;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    sd.lines.push_back({{id, i, 0, lines[i].first, false}, lines[i].second});
    sd.doc.text += (i ? "\n" : "") + lines[i].first;
  }
  return sd;
}

std::string concat_shards(const fs::path& dir) {
  std::string all;
  for (const auto& p : manifest_shards(dir)) all += io::read_file(p);
  return all;
}

// Remembers the largest batch it was handed.
class RecordingScorer : public fixture::HashScorer {
public:
  std::vector<ClassDistribution> score(std::span<const LineRecord> batch) const override {
    std::size_t prev = largest.load();
    while (batch.size() > prev && !largest.compare_exchange_weak(prev, batch.size())) {
    }
    for (std::size_t i = 1; i < batch.size(); ++i)
      if (utf8_length(batch[i].text) < utf8_length(batch[i - 1].text)) unsorted = true;
    return HashScorer::score(batch);
  }
  mutable std::atomic<std::size_t> largest{0};
  mutable std::atomic<bool> unsorted{false};
};

class FailingScorer : public fixture::HashScorer {
public:
  std::vector<ClassDistribution> score(std::span<const LineRecord> batch) const override {
    for (const auto& l : batch)
      if (l.doc_id == "doc-57") throw Error("scorer crashed");
    return HashScorer::score(batch);
  }
};

} // namespace

TEST(Round4, HalfAwayFromZero) {
  EXPECT_EQ(round4(0.96739), 0.9674);
  EXPECT_EQ(round4(0.03125), 0.0313);  // exact binary tie
  EXPECT_EQ(round4(-0.03125), -0.0313);
  EXPECT_EQ(round4(1.0), 1.0);
  EXPECT_EQ(round4(0.0), 0.0);
}

TEST(ScoredJsonl, FourDecimalsAndRoundTrip) {
  auto sd = scored("x", {{"first line", 0.5}, {"second", 0.96739}});
  sd.lines[1].quality_score = round4(sd.lines[1].quality_score);
  sd.doc.meta["url"] = "http://a";
  auto line = scored_document_jsonl(sd);
  EXPECT_NE(line.find("\"quality_score\":0.5000"), std::string::npos);
  EXPECT_NE(line.find("\"quality_score\":[0.5000,0.9674]"), std::string::npos);
  auto back = scored_document_from_json(json::parse(line));
  EXPECT_EQ(back.doc.id, "x");
  EXPECT_EQ(back.doc.meta.at("url"), "http://a");
  ASSERT_EQ(back.lines.size(), 2u);
  EXPECT_EQ(back.lines[1].quality_score, 0.9674);
  EXPECT_EQ(scored_document_jsonl(back), line);
}

TEST(Histogram, BinsAndClosure) {
  std::vector<double> s = {0.05, 0.55, 0.95, 0.97};
  auto h = histogram(s);
  std::vector<std::size_t> expected(10, 0);
  expected[0] = 1;
  expected[5] = 1;
  expected[9] = 2;
  EXPECT_EQ(h, expected);
  std::vector<double> one = {1.0, 0.1, 0.0999, 0.9};
  auto h2 = histogram(one);
  EXPECT_EQ(h2[9], 2u);
  EXPECT_EQ(h2[1], 1u);
  EXPECT_EQ(h2[0], 1u);
}

TEST(FilterCorpus, KeepsLinesAtOrAboveThreshold) {
  auto result = filter_corpus({scored("d", {{"a", 0.97}, {"b", 0.30}, {"c", 0.60}})}, 0.5);
  ASSERT_EQ(result.documents.size(), 1u);
  EXPECT_EQ(result.documents[0].text, "a\nc");
  EXPECT_EQ(result.stats.lines_removed(), 1u);

  auto tie = filter_corpus({scored("d", {{"a", 0.5}})}, 0.5);
  EXPECT_EQ(tie.documents.size(), 1u);
}

TEST(FilterCorpus, ZeroThresholdIsIdentity) {
  auto corpus = fixture::scored_corpus(50, 5, 0.3, 1);
  auto result = filter_corpus(corpus, 0.0);
  ASSERT_EQ(result.documents.size(), corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) EXPECT_EQ(result.documents[i].text, corpus[i].doc.text);
}

TEST(FilterCorpus, EmptiedDocumentsAreDropped) {
  auto result = filter_corpus({scored("gone", {{"x", 0.1}}), scored("kept", {{"y", 0.9}})}, 0.5);
  ASSERT_EQ(result.documents.size(), 1u);
  EXPECT_EQ(result.documents[0].id, "kept");
  EXPECT_EQ(result.stats.docs_dropped(), 1u);
}

TEST(FilterCorpus, MonotoneInThreshold) {
  auto corpus = fixture::scored_corpus(200, 6, 0.2, 3);
  std::set<LineKey> previous;
  for (int t = 0; t <= 10; ++t) {
    double tau = t / 10.0;
    std::set<LineKey> kept;
    for (const auto& d : corpus)
      for (const auto& l : d.lines)
        if (l.quality_score >= tau) kept.insert(l.line.key());
    auto result = filter_corpus(corpus, tau);
    EXPECT_EQ(result.stats.kept.lines, kept.size());
    if (t > 0) EXPECT_TRUE(std::includes(previous.begin(), previous.end(), kept.begin(), kept.end()));
    previous = kept;
  }
}

TEST(FilterCorpus, HistogramSumsToLines) {
  auto corpus = fixture::scored_corpus(100, 7, 0.1, 9);
  auto result = filter_corpus(corpus, 0.5);
  std::size_t sum = 0;
  for (auto c : result.stats.histogram) sum += c;
  EXPECT_EQ(sum, 700u);
  EXPECT_EQ(result.stats.original.lines, 700u);
  EXPECT_EQ(result.stats.lines_removed(), 70u);
}

TEST(JoinKeptLines, SegmentsAndGaps) {
  std::vector<LineRecord> kept = {{"d", 0, 0, "Start.", false}, {"d", 0, 1, "Next.", true}, {"d", 0, 3, "Tail", false},
                                  {"d", 2, 0, "Other line", false}};
  EXPECT_EQ(join_kept_lines(kept), "Start. Next. Tail\nOther line");
}

TEST(Reduction, Arithmetic) {
  CorpusTotals original{1, 10, 100, 500};
  CorpusTotals filtered{1, 8, 85, 400};
  auto r = reduction_report(original, filtered);
  EXPECT_NEAR(r.line_reduction_pct, 20.0, 1e-12);
  EXPECT_NEAR(r.word_reduction_pct, 15.0, 1e-12);
  auto same = reduction_report(original, original);
  EXPECT_EQ(same.line_reduction_pct, 0.0);
  EXPECT_EQ(same.word_reduction_pct, 0.0);
  auto empty = reduction_report(CorpusTotals{4, 10, 100, 500}, CorpusTotals{});
  EXPECT_EQ(empty.line_reduction_pct, 100.0);
  EXPECT_EQ(empty.docs_dropped, 4u);
  EXPECT_FALSE(r.to_text().empty());
}

TEST(ScoreDocuments, LengthGroupingPreservesOrderAndScores) {
  auto docs = fixture::random_documents(60, 4);
  fixture::HashScorer plain;
  RecordingScorer grouped_scorer;
  PlattParams platt{10, -5};
  ShardPlan grouped;
  grouped.batch_size = 16;
  ShardPlan ungrouped = grouped;
  ungrouped.length_grouping = false;
  auto a = score_documents(docs, grouped_scorer, platt, grouped);
  auto b = score_documents(docs, plain, platt, ungrouped);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(scored_document_jsonl(a[i]), scored_document_jsonl(b[i]));
  EXPECT_LE(grouped_scorer.largest.load(), 16u);
  EXPECT_FALSE(grouped_scorer.unsorted.load());
  for (const auto& d : a)
    for (const auto& l : d.lines) {
      double expected = round4(apply_platt(platt, static_cast<double>(io::fnv1a(l.line.text) % 10001) / 10000.0));
      EXPECT_EQ(l.quality_score, expected);
    }
}

TEST(ScoreCorpus, ShardsMatchUnshardedRun) {
  auto dir = scratch("shards");
  fixture::write_documents(dir / "corpus.jsonl", fixture::random_documents(250, 6));
  fixture::HashScorer scorer;
  ShardPlan one;
  one.shard_size = 1000;
  ShardPlan many;
  many.shard_size = 100;
  many.workers = 2;
  auto r1 = score_corpus(dir / "corpus.jsonl", scorer, {10, -5}, one, dir / "one");
  auto r2 = score_corpus(dir / "corpus.jsonl", scorer, {10, -5}, many, dir / "many");
  EXPECT_EQ(r1.shards, 1u);
  EXPECT_EQ(r2.shards, 3u);
  EXPECT_EQ(r2.documents, 250u);
  EXPECT_EQ(concat_shards(dir / "one"), concat_shards(dir / "many"));
  auto manifest = json::parse(io::read_file(dir / "many" / "manifest.json"));
  EXPECT_EQ(manifest.at("scorer"), "hash-scorer");
  EXPECT_EQ(manifest.at("shards").size(), 3u);
}

TEST(ScoreCorpus, FailedShardIsolatedAndResumable) {
  auto dir = scratch("resume");
  fixture::write_documents(dir / "corpus.jsonl", fixture::random_documents(250, 6));
  ShardPlan plan;
  plan.shard_size = 100;
  FailingScorer failing;
  auto r = score_corpus(dir / "corpus.jsonl", failing, {}, plan, dir / "out");
  EXPECT_EQ(r.failed, (std::vector<std::size_t>{0}));
  EXPECT_FALSE(fs::exists(dir / "out" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "out" / shard_file_name(1)));
  EXPECT_FALSE(fs::exists(dir / "out" / shard_file_name(0)));

  fixture::HashScorer good;
  auto again = score_corpus(dir / "corpus.jsonl", good, {}, plan, dir / "out");
  EXPECT_TRUE(again.ok());
  EXPECT_EQ(again.skipped, 2u);
  EXPECT_TRUE(fs::exists(dir / "out" / "manifest.json"));
  EXPECT_EQ(manifest_shards(dir / "out").size(), 3u);
}

TEST(ShardPlan, Validation) {
  ShardPlan p;
  p.shard_size = 0;
  EXPECT_THROW(p.validate(), Error);
  p.shard_size = 1;
  p.batch_size = 0;
  EXPECT_THROW(p.validate(), Error);
}
