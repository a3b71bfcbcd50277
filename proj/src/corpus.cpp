#include "linequal/corpus.hpp"

#include <nlohmann/json.hpp>

namespace linequal {

using nlohmann::json;

std::string to_string(const LineKey& key) {
  return key.doc_id + ":" + std::to_string(key.line_index) + ":" + std::to_string(key.segment_index);
}

Document document_from_json(const json& record, std::size_t line_number) {
  if (!record.is_object()) throw CorpusError("record is not a JSON object", line_number);
  auto id = record.find("id");
  if (id == record.end() || !id->is_string()) throw CorpusError("missing string field \"id\"", line_number);
  auto text = record.find("text");
  if (text == record.end() || !text->is_string())
    throw CorpusError("missing string field \"text\"", line_number);

  Document doc;
  doc.id = id->get<std::string>();
  if (doc.id.empty()) throw CorpusError("empty document id", line_number);
  doc.text = text->get<std::string>();
  doc.degenerate = doc.text.empty();
  for (const auto& [key, value] : record.items()) {
    if (key == "id" || key == "text") continue;
    doc.meta[key] = value.is_string() ? value.get<std::string>() : value.dump();
  }
  return doc;
}

json document_to_json(const Document& doc) {
  json out = json::object();
  out["id"] = doc.id;
  out["text"] = doc.text;
  for (const auto& [key, value] : doc.meta) {
    auto parsed = json::parse(value, nullptr, false);
    out[key] = (parsed.is_discarded() || parsed.is_string()) ? json(value) : parsed;
  }
  return out;
}

DocumentReader::DocumentReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw CorpusError("cannot open corpus file " + path.string(), 0);
}

std::optional<Document> DocumentReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_number_;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto record = json::parse(line, nullptr, false);
    if (record.is_discarded()) throw CorpusError("malformed JSON record", line_number_);
    auto doc = document_from_json(record, line_number_);
    if (!seen_ids_.insert(doc.id).second)
      throw CorpusError("duplicate document id \"" + doc.id + "\"", line_number_);
    return doc;
  }
  return std::nullopt;
}

std::vector<Document> load_documents(const std::filesystem::path& path) {
  DocumentReader reader(path);
  std::vector<Document> docs;
  while (auto doc = reader.next()) docs.push_back(std::move(*doc));
  return docs;
}

namespace {

bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

// Byte offsets of every code point start, plus text.size() as a sentinel.
std::vector<std::size_t> code_point_offsets(std::string_view text) {
  std::vector<std::size_t> offsets;
  offsets.reserve(text.size() + 1);
  for (std::size_t i = 0; i < text.size(); ++i)
    if (!is_continuation(static_cast<unsigned char>(text[i])) || i == 0) offsets.push_back(i);
  offsets.push_back(text.size());
  return offsets;
}

bool is_sentence_ender(std::string_view cp) { return cp == "." || cp == "!" || cp == "?"; }
bool is_closer(std::string_view cp) { return cp == "\"" || cp == "'" || cp == ")" || cp == "]"; }

std::string_view rtrim(std::string_view s) {
  auto end = s.find_last_not_of(" \t\r\f\v");
  return end == std::string_view::npos ? std::string_view{} : s.substr(0, end + 1);
}

} // namespace

std::size_t utf8_length(std::string_view text) { return code_point_offsets(text).size() - 1; }

std::vector<Segment> segment_long_line(std::string_view text, std::size_t max_len) {
  if (max_len == 0) throw Error("segment_long_line: max_len must be >= 1");
  const auto offsets = code_point_offsets(text);
  const std::size_t n = offsets.size() - 1;
  auto cp = [&](std::size_t i) { return text.substr(offsets[i], offsets[i + 1] - offsets[i]); };
  auto slice = [&](std::size_t from, std::size_t to) {
    return std::string(text.substr(offsets[from], offsets[to] - offsets[from]));
  };

  std::vector<Segment> out;
  std::size_t pos = 0;
  bool joined = false;
  while (n - pos > max_len) {
    std::size_t cut = 0;
    // A cut at c means the segment is [pos, c); c must be followed by a space
    // that is not the final code point.
    for (std::size_t c = pos + max_len; c > pos; --c) {
      if (c + 1 >= n || cp(c) != " ") continue;
      bool boundary = is_sentence_ender(cp(c - 1)) ||
                      (c >= pos + 2 && is_closer(cp(c - 1)) && is_sentence_ender(cp(c - 2)));
      if (boundary) {
        cut = c;
        break;
      }
    }
    if (cut) {
      out.push_back({slice(pos, cut), joined});
      pos = cut + 1;
      joined = true;
    } else {
      out.push_back({slice(pos, pos + max_len), joined});
      pos += max_len;
      joined = false;
    }
  }
  out.push_back({slice(pos, n), joined});
  return out;
}

std::string join_segments(const std::vector<Segment>& segments) {
  std::string out;
  for (const auto& s : segments) {
    if (s.joined_by_space) out += ' ';
    out += s.text;
  }
  return out;
}

std::vector<LineRecord> split_into_lines(const Document& doc) {
  std::vector<LineRecord> out;
  std::string_view text = doc.text;
  std::size_t index = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = rtrim(text.substr(start, end - start));
    if (!line.empty()) out.push_back({doc.id, index, 0, std::string(line), false});
    ++index;
    start = end + 1;
  }
  return out;
}

std::vector<LineRecord> document_lines(const Document& doc, const SegmentationOptions& opts) {
  auto lines = split_into_lines(doc);
  if (opts.single_line_documents_only && lines.size() != 1) return lines;
  std::vector<LineRecord> out;
  out.reserve(lines.size());
  for (auto& line : lines) {
    if (utf8_length(line.text) <= opts.max_len) {
      out.push_back(std::move(line));
      continue;
    }
    auto segments = segment_long_line(line.text, opts.max_len);
    for (std::size_t i = 0; i < segments.size(); ++i)
      out.push_back({line.doc_id, line.line_index, i, std::move(segments[i].text), segments[i].joined_by_space});
  }
  return out;
}

std::string reconstruct_text(const std::vector<LineRecord>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& l = lines[i];
    if (i > 0) {
      bool same_line = l.segment_index > 0 && lines[i - 1].line_index == l.line_index &&
                       lines[i - 1].doc_id == l.doc_id;
      if (!same_line) out += '\n';
      else if (l.joined_by_space) out += ' ';
    }
    out += l.text;
  }
  return out;
}

std::vector<Batch> make_batches(const std::vector<LineRecord>& lines, std::size_t max) {
  if (max == 0) throw Error("make_batches: max must be >= 1");
  std::vector<Batch> out;
  for (const auto& line : lines) {
    if (out.empty() || out.back().doc_id != line.doc_id || out.back().lines.size() >= max)
      out.push_back({line.doc_id, {}});
    out.back().lines.push_back(line);
  }
  return out;
}

} // namespace linequal
