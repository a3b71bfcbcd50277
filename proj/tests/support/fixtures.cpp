#include "fixtures.hpp"

#include "linequal/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace fixture {

using namespace linequal;
using nlohmann::json;

std::string random_words(std::mt19937_64& rng, std::size_t count) {
  std::string out;
  for (std::size_t w = 0; w < count; ++w) {
    if (w) out += ' ';
    std::size_t len = 2 + rng() % 7;
    for (std::size_t k = 0; k < len; ++k) out += static_cast<char>('a' + rng() % 26);
  }
  return out;
}

std::vector<LabeledLine> marker_corpus(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledLine> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = rng() % kNumCategories;
    // Three markers per class, e.g. "CCC", "CCD", "CCE" for class 2.
    std::string marker(2, static_cast<char>('A' + 2 * c));
    marker += static_cast<char>('A' + 2 * c + rng() % 3);
    std::size_t before = rng() % 5, after = 1 + rng() % 5;
    std::string text = random_words(rng, before);
    text += (text.empty() ? "" : " ") + marker + " " + random_words(rng, after);
    LabeledLine l;
    l.line = {"doc" + std::to_string(i / 10), i % 10, 0, text, false};
    l.category = std::string(kCategories[c]);
    l.label = c == 0 ? std::string(kClean) : "marker " + std::to_string(c);
    out.push_back(std::move(l));
  }
  return out;
}

std::vector<Document> random_documents(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Document> docs;
  for (std::size_t d = 0; d < n; ++d) {
    Document doc;
    doc.id = "doc-" + std::to_string(d);
    doc.meta["url"] = "https://example.org/" + std::to_string(d);
    std::size_t lines = 1 + rng() % 12;
    for (std::size_t l = 0; l < lines; ++l) {
      if (l) doc.text += '\n';
      if (rng() % 6 == 0) doc.text += '\n';  // blank line, dropped on ingestion
      std::size_t sentences = 1 + rng() % (rng() % 8 == 0 ? 12 : 2);
      for (std::size_t s = 0; s < sentences; ++s) {
        if (s) doc.text += ' ';
        doc.text += random_words(rng, 3 + rng() % 10);
        const char* enders[] = {".", "!", "?", ".\"", ")"};
        doc.text += enders[rng() % 5];
      }
      if (rng() % 40 == 0) doc.text += " unlabelable";
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs) {
  std::string body;
  for (const auto& d : docs) body += document_to_json(d).dump() + "\n";
  io::write_file_atomic(path, body);
}

std::string mock_reply(const LabelRequest& request) {
  const auto& lines = request.batch->lines;
  for (const auto& l : lines)
    if (l.text.find("unlabelable") != std::string::npos) return "Sorry, I cannot help with that.";
  if (request.attempt == 0 && io::fnv1a(lines.front().text) % 7 == 0) return "[\"Clean\"]";
  json labels = json::array();
  for (const auto& l : lines) {
    auto h = io::fnv1a(l.text);
    if (h % 10 < 7) labels.push_back("Clean");
    else labels.push_back("Label " + std::to_string(h % 23));
  }
  return "Here are the labels:\n```json\n" + labels.dump() + "\n```";
}

TaxonomyFixture reference_taxonomy() {
  TaxonomyFixture f;
  std::size_t next = 0;
  auto add = [&](const std::string& label, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k, ++next) {
      LabeledLine l;
      l.line = {"d" + std::to_string(next / 16), next % 16, 0, "line " + std::to_string(next), false};
      l.label = label;
      f.lines.push_back(std::move(l));
    }
  };
  f.lines.reserve(kTableTotal);
  add(std::string(kClean), 274343);
  for (std::size_t k = 0; k < 142; ++k) add("rare label " + std::to_string(k), 1);

  // 23 labels with 8,782 lines: 19 x 382 + 4 x 381.
  for (std::size_t k = 0; k < 23; ++k) {
    std::string label = "mostly fine " + std::to_string(k);
    add(label, k < 19 ? 382 : 381);
    VerificationVerdict v;
    v.label = label;
    v.decision = VerdictDecision::RemapToClean;
    v.reviewer = "r1";
    v.timestamp = "2024-10-01T12:00:00Z";
    f.verdicts.push_back(v);
  }

  // 382 surviving labels: 48 in each of the first six low-quality
  // categories, 47 in the last two.
  f.scheme = json::object();
  f.scheme[std::string(kClean)] = json::array({std::string(kClean)});
  std::size_t label_no = 0;
  for (std::size_t c = 1; c < kNumCategories; ++c) {
    const std::size_t labels = c <= 6 ? 48 : 47;
    const std::size_t total = kTableCounts[c];
    json names = json::array();
    for (std::size_t k = 0; k < labels; ++k) {
      std::string label = "kept label " + std::to_string(label_no++);
      add(label, total / labels + (k < total % labels ? 1 : 0));
      names.push_back(label);
    }
    f.scheme[std::string(kCategories[c])] = names;
  }

  // Superseded decisions: an early remap overruled by a later keep.
  for (std::size_t k = 0; k < 5; ++k) {
    VerificationVerdict early;
    early.label = "kept label " + std::to_string(k * 70);
    early.decision = VerdictDecision::RemapToClean;
    early.reviewer = "r2";
    early.timestamp = "2024-10-01T09:00:00Z";
    VerificationVerdict late = early;
    late.decision = VerdictDecision::Keep;
    late.timestamp = "2024-10-02T09:00:00Z";
    f.verdicts.push_back(late);
    f.verdicts.push_back(early);
  }
  return f;
}

std::vector<ScoredDocument> scored_corpus(std::size_t docs, std::size_t lines_per_doc, double below_fraction,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t total = docs * lines_per_doc;
  const auto below = static_cast<std::size_t>(std::llround(below_fraction * static_cast<double>(total)));
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_below(total, false);
  for (std::size_t i = 0; i < below; ++i) is_below[order[i]] = true;

  std::vector<ScoredDocument> out;
  for (std::size_t d = 0; d < docs; ++d) {
    ScoredDocument sd;
    sd.doc.id = "sd-" + std::to_string(d);
    for (std::size_t l = 0; l < lines_per_doc; ++l) {
      const std::size_t i = d * lines_per_doc + l;
      ScoredLine line;
      line.line = {sd.doc.id, l, 0, random_words(rng, 2 + rng() % 12), false};
      // Four-decimal scores: [0, 0.4999] below, [0.5, 1.0] otherwise.
      auto tick = is_below[i] ? rng() % 5000 : 5000 + rng() % 5001;
      line.quality_score = static_cast<double>(tick) / 10000.0;
      if (l) sd.doc.text += '\n';
      sd.doc.text += line.line.text;
      sd.lines.push_back(std::move(line));
    }
    out.push_back(std::move(sd));
  }
  return out;
}

std::vector<ClassDistribution> HashScorer::score(std::span<const LineRecord> batch) const {
  std::vector<ClassDistribution> out;
  for (const auto& line : batch) {
    ClassDistribution d;
    d.line = line.key();
    const double clean = static_cast<double>(io::fnv1a(line.text) % 10001) / 10000.0;
    d.probs.fill((1.0 - clean) / static_cast<double>(kNumCategories - 1));
    d.probs[0] = clean;
    out.push_back(d);
  }
  return out;
}

} // namespace fixture
