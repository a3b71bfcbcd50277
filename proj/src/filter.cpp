#include "linequal/filter.hpp"

#include "linequal/io.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

namespace linequal {

using nlohmann::json;

double round4(double value) { return std::round(value * 1e4) / 1e4; }

std::string scored_document_jsonl(const ScoredDocument& sd) {
  // Hand-assembled so that scores keep exactly four decimals.
  std::string out = "{\"id\":" + json(sd.doc.id).dump() + ",\"text\":" + json(sd.doc.text).dump();
  for (const auto& [key, value] : sd.doc.meta) {
    auto parsed = json::parse(value, nullptr, false);
    bool raw = !parsed.is_discarded() && !parsed.is_string();
    out += "," + json(key).dump() + ":" + (raw ? parsed.dump() : json(value).dump());
  }
  out += ",\"lines\":[";
  for (std::size_t i = 0; i < sd.lines.size(); ++i) {
    const auto& l = sd.lines[i];
    if (i) out += ',';
    out += "{\"line_index\":" + std::to_string(l.line.line_index) +
           ",\"segment_index\":" + std::to_string(l.line.segment_index);
    if (l.line.joined_by_space) out += ",\"joined_by_space\":true";
    out += ",\"text\":" + json(l.line.text).dump() + ",\"quality_score\":" + io::format_fixed(l.quality_score, 4) + "}";
  }
  out += "],\"quality_score\":[";
  for (std::size_t i = 0; i < sd.lines.size(); ++i) {
    if (i) out += ',';
    out += io::format_fixed(sd.lines[i].quality_score, 4);
  }
  out += "]}\n";
  return out;
}

ScoredDocument scored_document_from_json(const json& j) {
  ScoredDocument sd;
  json base = json::object();
  for (const auto& [key, value] : j.items())
    if (key != "lines" && key != "quality_score") base[key] = value;
  sd.doc = document_from_json(base);
  for (const auto& l : j.at("lines")) {
    ScoredLine line;
    line.line.doc_id = sd.doc.id;
    line.line.line_index = l.at("line_index").get<std::size_t>();
    line.line.segment_index = l.at("segment_index").get<std::size_t>();
    line.line.joined_by_space = l.value("joined_by_space", false);
    line.line.text = l.at("text").get<std::string>();
    line.quality_score = l.at("quality_score").get<double>();
    if (!(line.quality_score >= 0 && line.quality_score <= 1))
      throw Error("quality_score out of [0, 1] in document " + sd.doc.id);
    sd.lines.push_back(std::move(line));
  }
  return sd;
}

std::vector<ScoredDocument> read_scored(const std::filesystem::path& path) {
  std::vector<ScoredDocument> out;
  io::for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (line.empty()) return;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw CorpusError("malformed scored record", number);
    out.push_back(scored_document_from_json(j));
  });
  return out;
}

// ---- Scorers -------------------------------------------------------------

BaselineScorer::BaselineScorer(const BaselineModel& model) : model_(model) {
  std::uint64_t h = io::fnv1a("baseline");
  for (std::size_t f = 0; f < model.feature_dim(); ++f)
    for (std::size_t c = 0; c < kNumCategories; ++c) {
      double w = model.weight(f, c);
      if (w != 0.0) {
        h = io::fnv1a(std::string_view(reinterpret_cast<const char*>(&f), sizeof f), h);
        h = io::fnv1a(std::string_view(reinterpret_cast<const char*>(&w), sizeof w), h);
      }
    }
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    double b = model.bias(c);
    h = io::fnv1a(std::string_view(reinterpret_cast<const char*>(&b), sizeof b), h);
  }
  identity_ = "baseline:" + io::hex64(h);
}

std::vector<ClassDistribution> BaselineScorer::score(std::span<const LineRecord> batch) const {
  std::vector<ClassDistribution> out;
  out.reserve(batch.size());
  for (const auto& l : batch) {
    auto d = predict_distribution(model_, l.text);
    d.line = l.key();
    out.push_back(d);
  }
  return out;
}

ExternalScorer::ExternalScorer(std::map<LineKey, ClassDistribution> rows, std::string identity)
    : rows_(std::move(rows)), identity_(std::move(identity)) {}

std::vector<ClassDistribution> ExternalScorer::score(std::span<const LineRecord> batch) const {
  std::vector<ClassDistribution> out;
  out.reserve(batch.size());
  for (const auto& l : batch) {
    auto it = rows_.find(l.key());
    if (it == rows_.end()) throw ScoreImportError("no external score for " + to_string(l.key()));
    out.push_back(it->second);
  }
  return out;
}

void ShardPlan::validate() const {
  if (shard_size < 1) throw Error("shard_size must be >= 1");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (workers < 1) throw Error("workers must be >= 1");
}

std::vector<ScoredDocument> score_documents(const std::vector<Document>& docs, const LineScorer& scorer,
                                            const PlattParams& platt, const ShardPlan& plan,
                                            const SegmentationOptions& segmentation) {
  plan.validate();
  std::vector<ScoredDocument> out;
  out.reserve(docs.size());
  for (const auto& doc : docs) {
    ScoredDocument sd{doc, {}};
    for (auto& l : document_lines(doc, segmentation)) sd.lines.push_back({std::move(l), 0.0});
    out.push_back(std::move(sd));
  }
  std::vector<ScoredLine*> order;
  for (auto& sd : out)
    for (auto& l : sd.lines) order.push_back(&l);
  if (plan.length_grouping)
    std::stable_sort(order.begin(), order.end(),
                     [](const ScoredLine* x, const ScoredLine* y) { return x->line.text.size() < y->line.text.size(); });

  std::vector<LineRecord> batch;
  for (std::size_t start = 0; start < order.size(); start += plan.batch_size) {
    const std::size_t end = std::min(order.size(), start + plan.batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(order[i]->line);
    auto dists = scorer.score(batch);
    if (dists.size() != batch.size()) throw Error("scorer returned the wrong number of distributions");
    for (std::size_t i = start; i < end; ++i)
      order[i]->quality_score = round4(apply_platt(platt, clean_probability(dists[i - start])));
  }
  return out;
}

std::string shard_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "shard-%05zu.jsonl", index);
  return buf;
}

std::string platt_identity(const PlattParams& platt) {
  std::string bytes(reinterpret_cast<const char*>(&platt.a), sizeof platt.a);
  bytes.append(reinterpret_cast<const char*>(&platt.b), sizeof platt.b);
  return "platt:" + io::hex64(io::fnv1a(bytes));
}

namespace {

struct ShardJob {
  std::size_t index = 0;
  std::vector<Document> docs;
  std::size_t lines = 0;
  bool skipped = false;
  std::string error;
};

std::size_t count_lines_in_shard(const std::filesystem::path& path) {
  std::size_t lines = 0;
  io::for_each_line(path, [&](std::string_view line, std::size_t) {
    if (!line.empty()) lines += json::parse(line).at("lines").size();
  });
  return lines;
}

} // namespace

ShardRunResult score_corpus(const std::filesystem::path& input, const LineScorer& scorer, const PlattParams& platt,
                            const ShardPlan& plan, const std::filesystem::path& out_dir,
                            const SegmentationOptions& segmentation,
                            const std::function<void(const std::string&)>& log) {
  plan.validate();
  std::filesystem::create_directories(out_dir);
  DocumentReader reader(input);
  ShardRunResult result;
  json shards = json::array();
  std::size_t next_index = 0;
  bool exhausted = false;

  while (!exhausted) {
    std::vector<ShardJob> jobs;
    while (jobs.size() < plan.workers) {
      ShardJob job;
      job.index = next_index;
      while (job.docs.size() < plan.shard_size) {
        auto doc = reader.next();
        if (!doc) {
          exhausted = true;
          break;
        }
        job.docs.push_back(std::move(*doc));
      }
      if (job.docs.empty()) break;
      ++next_index;
      jobs.push_back(std::move(job));
      if (exhausted) break;
    }
    if (jobs.empty()) break;

    auto run = [&](ShardJob& job) {
      const auto path = out_dir / shard_file_name(job.index);
      try {
        if (std::filesystem::exists(path)) {
          job.skipped = true;
          job.lines = count_lines_in_shard(path);
          return;
        }
        auto scored = score_documents(job.docs, scorer, platt, plan, segmentation);
        std::string buf;
        for (const auto& sd : scored) {
          buf += scored_document_jsonl(sd);
          job.lines += sd.lines.size();
        }
        io::write_file_atomic(path, buf);
      } catch (const std::exception& e) {
        job.error = e.what();
      }
    };
    if (jobs.size() == 1) {
      run(jobs[0]);
    } else {
      std::vector<std::thread> threads;
      for (auto& job : jobs) threads.emplace_back(run, std::ref(job));
      for (auto& t : threads) t.join();
    }

    for (const auto& job : jobs) {
      ++result.shards;
      if (!job.error.empty()) {
        result.failed.push_back(job.index);
        if (log) log("shard " + std::to_string(job.index) + " failed: " + job.error);
        continue;
      }
      if (job.skipped) ++result.skipped;
      result.documents += job.docs.size();
      result.lines += job.lines;
      shards.push_back({{"file", shard_file_name(job.index)},
                        {"documents", job.docs.size()},
                        {"lines", job.lines},
                        {"first_document", job.docs.front().id}});
      if (log) log("shard " + std::to_string(job.index) + (job.skipped ? " already done" : " scored") + ": " +
                   std::to_string(job.docs.size()) + " documents");
    }
  }

  if (result.ok()) {
    json manifest = {{"shards", shards},
                     {"documents", result.documents},
                     {"lines", result.lines},
                     {"scorer", scorer.identity()},
                     {"platt", platt_identity(platt)},
                     {"platt_params", {{"a", platt.a}, {"b", platt.b}}},
                     {"shard_size", plan.shard_size},
                     {"batch_size", plan.batch_size},
                     {"length_grouping", plan.length_grouping}};
    io::write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  }
  return result;
}

std::vector<std::filesystem::path> manifest_shards(const std::filesystem::path& scored_dir) {
  auto manifest_file = scored_dir / "manifest.json";
  if (!std::filesystem::exists(manifest_file))
    throw Error("no manifest.json in " + scored_dir.string() + " (scoring incomplete?)");
  auto manifest = json::parse(io::read_file(manifest_file));
  std::vector<std::filesystem::path> out;
  for (const auto& s : manifest.at("shards")) out.push_back(scored_dir / s.at("file").get<std::string>());
  return out;
}

// ---- Filtering -----------------------------------------------------------

std::size_t count_whitespace_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : text) {
    bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

std::size_t histogram_bin(double score, std::size_t bins) {
  auto units = std::clamp<long long>(std::llround(score * 1e4), 0, 10000);
  return std::min<std::size_t>(bins - 1, static_cast<std::size_t>(units) * bins / 10000);
}

std::vector<std::size_t> histogram(std::span<const double> scores, std::size_t bins) {
  if (bins < 1) throw Error("histogram needs at least one bin");
  std::vector<std::size_t> counts(bins, 0);
  for (double s : scores) ++counts[histogram_bin(s, bins)];
  return counts;
}

json CorpusTotals::to_json() const {
  return {{"documents", documents}, {"lines", lines}, {"words", words}, {"chars", chars}};
}

json FilterStats::to_json() const {
  return {{"threshold", threshold},
          {"lines_total", original.lines},
          {"lines_removed", lines_removed()},
          {"docs_total", original.documents},
          {"docs_dropped", docs_dropped()},
          {"words_total", original.words},
          {"words_removed", words_removed()},
          {"chars_total", original.chars},
          {"chars_removed", original.chars - kept.chars},
          {"histogram", histogram},
          {"histogram_bins", "bin i covers [i/10, (i+1)/10); last bin includes 1.0"}};
}

std::string join_kept_lines(const std::vector<LineRecord>& kept) {
  std::string out;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto& l = kept[i];
    if (i > 0) {
      const auto& prev = kept[i - 1];
      if (prev.line_index != l.line_index) out += '\n';
      else if (l.segment_index != prev.segment_index + 1 || l.joined_by_space) out += ' ';
    }
    out += l.text;
  }
  return out;
}

CorpusFilter::CorpusFilter(double threshold, TokenCounter counter) : counter_(std::move(counter)) {
  if (!(threshold >= 0 && threshold <= 1)) throw Error("threshold must be within [0, 1]");
  stats_.threshold = threshold;
}

std::optional<Document> CorpusFilter::add(const ScoredDocument& sd) {
  ++stats_.original.documents;
  std::vector<LineRecord> kept;
  for (const auto& l : sd.lines) {
    const std::size_t words = counter_(l.line.text);
    const std::size_t chars = utf8_length(l.line.text);
    ++stats_.original.lines;
    stats_.original.words += words;
    stats_.original.chars += chars;
    ++stats_.histogram[histogram_bin(l.quality_score, stats_.histogram.size())];
    if (l.quality_score < stats_.threshold) continue;
    ++stats_.kept.lines;
    stats_.kept.words += words;
    stats_.kept.chars += chars;
    kept.push_back(l.line);
  }
  if (kept.empty()) return std::nullopt;
  ++stats_.kept.documents;
  Document out = sd.doc;
  out.text = join_kept_lines(kept);
  out.degenerate = false;
  return out;
}

FilterResult filter_corpus(const std::vector<ScoredDocument>& scored, double threshold, TokenCounter counter) {
  CorpusFilter filter(threshold, std::move(counter));
  FilterResult result;
  for (const auto& sd : scored)
    if (auto doc = filter.add(sd)) result.documents.push_back(std::move(*doc));
  result.stats = filter.stats();
  return result;
}

CorpusTotals totals_of(const std::vector<Document>& docs, const TokenCounter& counter,
                       const SegmentationOptions& segmentation) {
  CorpusTotals t;
  for (const auto& d : docs) {
    ++t.documents;
    for (const auto& l : document_lines(d, segmentation)) {
      ++t.lines;
      t.words += counter(l.text);
      t.chars += utf8_length(l.text);
    }
  }
  return t;
}

namespace {
double pct_reduction(std::size_t before, std::size_t after) {
  if (before == 0) return 0.0;
  return 100.0 * static_cast<double>(before - std::min(before, after)) / static_cast<double>(before);
}
} // namespace

ReductionReport reduction_report(const CorpusTotals& original, const CorpusTotals& filtered) {
  ReductionReport r;
  r.original = original;
  r.filtered = filtered;
  r.line_reduction_pct = pct_reduction(original.lines, filtered.lines);
  r.doc_reduction_pct = pct_reduction(original.documents, filtered.documents);
  r.word_reduction_pct = pct_reduction(original.words, filtered.words);
  r.char_reduction_pct = pct_reduction(original.chars, filtered.chars);
  r.docs_dropped = original.documents - std::min(original.documents, filtered.documents);
  return r;
}

json ReductionReport::to_json() const {
  return {{"original", original.to_json()},
          {"filtered", filtered.to_json()},
          {"line_reduction_pct", line_reduction_pct},
          {"doc_reduction_pct", doc_reduction_pct},
          {"word_reduction_pct", word_reduction_pct},
          {"char_reduction_pct", char_reduction_pct},
          {"docs_dropped", docs_dropped},
          {"word_note", "words are whitespace-delimited tokens"}};
}

std::string ReductionReport::to_text() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "documents %zu -> %zu (%.2f%% reduction, %zu dropped)\n"
                "lines     %zu -> %zu (%.2f%% reduction)\n"
                "words     %zu -> %zu (%.2f%% reduction)\n"
                "chars     %zu -> %zu (%.2f%% reduction)\n",
                original.documents, filtered.documents, doc_reduction_pct, docs_dropped, original.lines,
                filtered.lines, line_reduction_pct, original.words, filtered.words, word_reduction_pct,
                original.chars, filtered.chars, char_reduction_pct);
  return buf;
}

} // namespace linequal
