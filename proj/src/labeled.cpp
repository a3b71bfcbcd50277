#include "linequal/labeled.hpp"

#include "linequal/io.hpp"

#include <nlohmann/json.hpp>

namespace linequal {

using nlohmann::json;

std::optional<std::size_t> category_index(std::string_view name) {
  for (std::size_t i = 0; i < kCategories.size(); ++i)
    if (kCategories[i] == name) return i;
  return std::nullopt;
}

json to_json(const LabeledLine& l) {
  json j = {{"doc_id", l.line.doc_id},
            {"line_index", l.line.line_index},
            {"segment_index", l.line.segment_index},
            {"text", l.line.text},
            {"label", l.label}};
  if (l.line.joined_by_space) j["joined_by_space"] = true;
  if (!l.category.empty()) j["category"] = l.category;
  return j;
}

LabeledLine labeled_line_from_json(const json& j, std::size_t line_number) {
  try {
    LabeledLine l;
    l.line.doc_id = j.at("doc_id").get<std::string>();
    l.line.line_index = j.at("line_index").get<std::size_t>();
    l.line.segment_index = j.at("segment_index").get<std::size_t>();
    l.line.text = j.at("text").get<std::string>();
    l.line.joined_by_space = j.value("joined_by_space", false);
    l.label = j.at("label").get<std::string>();
    l.category = j.value("category", std::string{});
    return l;
  } catch (const json::exception& e) {
    throw CorpusError(std::string("bad labeled-line record: ") + e.what(), line_number);
  }
}

std::string labeled_jsonl(const LabeledLine& l) { return to_json(l).dump() + "\n"; }

std::vector<LabeledLine> read_labeled(const std::filesystem::path& path) {
  std::vector<LabeledLine> out;
  io::for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (line.empty()) return;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw CorpusError("malformed JSON record", number);
    out.push_back(labeled_line_from_json(j, number));
  });
  return out;
}

void write_labeled(const std::filesystem::path& path, const std::vector<LabeledLine>& lines) {
  std::string buf;
  for (const auto& l : lines) buf += labeled_jsonl(l);
  io::write_file_atomic(path, buf);
}

} // namespace linequal
