#pragma once

#include "linequal/error.hpp"

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace linequal {

// A corpus document as read from JSONL. Fields other than "id" and "text"
// are carried in `meta`; non-string values keep their JSON encoding.
struct Document {
  std::string id;
  std::string text;
  std::map<std::string, std::string> meta;
  bool degenerate = false;  // set when text is empty
};

// Identifies one scored/labeled unit of text inside a corpus.
struct LineKey {
  std::string doc_id;
  std::size_t line_index = 0;
  std::size_t segment_index = 0;

  auto operator<=>(const LineKey&) const = default;
};

std::string to_string(const LineKey& key);

struct LineRecord {
  std::string doc_id;
  std::size_t line_index = 0;     // position of the newline-delimited line in the document
  std::size_t segment_index = 0;  // position inside a split long line
  std::string text;
  // True when a single space between this segment and the previous one was
  // consumed by a sentence-boundary split. Always false for segment 0 and
  // for hard splits.
  bool joined_by_space = false;

  LineKey key() const { return {doc_id, line_index, segment_index}; }
  bool operator==(const LineRecord&) const = default;
};

struct Batch {
  std::string doc_id;
  std::vector<LineRecord> lines;
};

class CorpusError : public Error {
public:
  CorpusError(const std::string& message, std::size_t line_number)
      : Error(line_number ? "line " + std::to_string(line_number) + ": " + message : message),
        line_number_(line_number) {}
  std::size_t line_number() const { return line_number_; }

private:
  std::size_t line_number_;
};

// Streams documents from a JSONL corpus file in file order. Memory use is
// bounded by the longest record plus the set of ids seen so far (needed for
// the duplicate-id check).
class DocumentReader {
public:
  explicit DocumentReader(const std::filesystem::path& path);

  std::optional<Document> next();
  std::size_t line_number() const { return line_number_; }

private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_number_ = 0;
  std::unordered_set<std::string> seen_ids_;
};

Document document_from_json(const nlohmann::json& record, std::size_t line_number = 0);
nlohmann::json document_to_json(const Document& doc);

std::vector<Document> load_documents(const std::filesystem::path& path);

inline constexpr std::size_t kDefaultMaxSegmentChars = 200;
inline constexpr std::size_t kDefaultBatchLines = 15;

struct Segment {
  std::string text;
  bool joined_by_space = false;
};

// Splits one line into segments of at most `max_len` code points. Cuts go
// right after the last sentence ender (. ! ? plus an optional closing " ' ) ])
// in the window that is followed by a space; that space is consumed. With no
// such boundary the window is cut hard at `max_len`.
std::vector<Segment> segment_long_line(std::string_view text,
                                       std::size_t max_len = kDefaultMaxSegmentChars);

// Inverse of segment_long_line.
std::string join_segments(const std::vector<Segment>& segments);

// One record per non-empty newline-delimited line; trailing whitespace trimmed.
std::vector<LineRecord> split_into_lines(const Document& doc);

struct SegmentationOptions {
  std::size_t max_len = kDefaultMaxSegmentChars;
  // Only segment documents that consist of a single line.
  bool single_line_documents_only = false;
};

// split_into_lines followed by segmentation of long lines.
std::vector<LineRecord> document_lines(const Document& doc, const SegmentationOptions& opts = {});

// Reassembles document text from its line records (segments joined per their
// join flag, lines joined with '\n').
std::string reconstruct_text(const std::vector<LineRecord>& lines);

std::vector<Batch> make_batches(const std::vector<LineRecord>& lines,
                                std::size_t max = kDefaultBatchLines);

std::size_t utf8_length(std::string_view text);

} // namespace linequal
