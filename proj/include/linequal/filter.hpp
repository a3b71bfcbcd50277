#pragma once

#include "linequal/calibration.hpp"
#include "linequal/classifier.hpp"
#include "linequal/corpus.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace linequal {

// Rounds half away from zero to four decimals.
double round4(double value);

struct ScoredLine {
  LineRecord line;
  double quality_score = 0;  // four-decimal resolution
};

struct ScoredDocument {
  Document doc;
  std::vector<ScoredLine> lines;
};

// One JSONL line: the document fields, a "lines" array of
// {line_index, segment_index, text, quality_score} and a parallel document
// level "quality_score" array. Scores are always written with four decimals.
std::string scored_document_jsonl(const ScoredDocument& doc);
ScoredDocument scored_document_from_json(const nlohmann::json& j);
std::vector<ScoredDocument> read_scored(const std::filesystem::path& path);

// Turns a batch of lines into class distributions. Implementations must be
// safe to call from several threads at once.
class LineScorer {
public:
  virtual ~LineScorer() = default;
  virtual std::vector<ClassDistribution> score(std::span<const LineRecord> batch) const = 0;
  // Stable fingerprint recorded in the shard manifest.
  virtual std::string identity() const = 0;
};

class BaselineScorer : public LineScorer {
public:
  explicit BaselineScorer(const BaselineModel& model);
  std::vector<ClassDistribution> score(std::span<const LineRecord> batch) const override;
  std::string identity() const override { return identity_; }

private:
  const BaselineModel& model_;
  std::string identity_;
};

// Serves distributions imported from an external score file.
class ExternalScorer : public LineScorer {
public:
  ExternalScorer(std::map<LineKey, ClassDistribution> rows, std::string identity);
  std::vector<ClassDistribution> score(std::span<const LineRecord> batch) const override;
  std::string identity() const override { return identity_; }

private:
  std::map<LineKey, ClassDistribution> rows_;
  std::string identity_;
};

struct ShardPlan {
  std::size_t shard_size = 100'000;  // documents
  std::size_t batch_size = 128;      // lines
  bool length_grouping = true;
  std::size_t workers = 1;

  void validate() const;
};

// Scores one in-memory shard. Lines are batched in length order (stable) and
// the scores restored to document order.
std::vector<ScoredDocument> score_documents(const std::vector<Document>& docs, const LineScorer& scorer,
                                            const PlattParams& platt, const ShardPlan& plan,
                                            const SegmentationOptions& segmentation = {});

struct ShardRunResult {
  std::size_t shards = 0;
  std::size_t skipped = 0;  // already present from an earlier run
  std::vector<std::size_t> failed;
  std::size_t documents = 0;
  std::size_t lines = 0;
  bool ok() const { return failed.empty(); }
};

std::string shard_file_name(std::size_t index);
std::string platt_identity(const PlattParams& platt);

// Streams `input` in shards of plan.shard_size documents into
// out_dir/shard-NNNNN.jsonl, processing up to plan.workers shards at once.
// Existing shard files are kept (resume). manifest.json is written only when
// every shard succeeded.
ShardRunResult score_corpus(const std::filesystem::path& input, const LineScorer& scorer, const PlattParams& platt,
                            const ShardPlan& plan, const std::filesystem::path& out_dir,
                            const SegmentationOptions& segmentation = {},
                            const std::function<void(const std::string&)>& log = {});

// Shard files listed by the manifest, in order.
std::vector<std::filesystem::path> manifest_shards(const std::filesystem::path& scored_dir);

using TokenCounter = std::function<std::size_t(std::string_view)>;
std::size_t count_whitespace_tokens(std::string_view text);

// Per-bin counts; bin i covers [i/bins, (i+1)/bins), the last bin is closed
// at 1. Scores are taken at four-decimal resolution.
std::vector<std::size_t> histogram(std::span<const double> scores, std::size_t bins = 10);
std::size_t histogram_bin(double score, std::size_t bins);

struct CorpusTotals {
  std::size_t documents = 0;
  std::size_t lines = 0;
  std::size_t words = 0;
  std::size_t chars = 0;

  nlohmann::json to_json() const;
};

struct FilterStats {
  double threshold = 0;
  CorpusTotals original;
  CorpusTotals kept;
  std::vector<std::size_t> histogram = std::vector<std::size_t>(10, 0);

  std::size_t lines_removed() const { return original.lines - kept.lines; }
  std::size_t docs_dropped() const { return original.documents - kept.documents; }
  std::size_t words_removed() const { return original.words - kept.words; }

  nlohmann::json to_json() const;
};

// Incremental form of filter_corpus for streaming over shards.
class CorpusFilter {
public:
  explicit CorpusFilter(double threshold, TokenCounter counter = count_whitespace_tokens);

  // Returns the document with surviving lines (score >= threshold) rejoined,
  // or nothing when every line was removed.
  std::optional<Document> add(const ScoredDocument& doc);
  const FilterStats& stats() const { return stats_; }

private:
  TokenCounter counter_;
  FilterStats stats_;
};

struct FilterResult {
  std::vector<Document> documents;
  FilterStats stats;
};

FilterResult filter_corpus(const std::vector<ScoredDocument>& scored, double threshold,
                           TokenCounter counter = count_whitespace_tokens);

// Joins kept lines: segments of one line by their join rule (a space when an
// intermediate segment was removed), distinct lines by '\n'.
std::string join_kept_lines(const std::vector<LineRecord>& kept);

CorpusTotals totals_of(const std::vector<Document>& docs, const TokenCounter& counter = count_whitespace_tokens,
                       const SegmentationOptions& segmentation = {});

struct ReductionReport {
  CorpusTotals original;
  CorpusTotals filtered;
  double line_reduction_pct = 0;
  double doc_reduction_pct = 0;
  double word_reduction_pct = 0;
  double char_reduction_pct = 0;
  std::size_t docs_dropped = 0;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

ReductionReport reduction_report(const CorpusTotals& original, const CorpusTotals& filtered);

} // namespace linequal
