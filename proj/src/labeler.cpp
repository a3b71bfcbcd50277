#include "linequal/labeler.hpp"

#include "linequal/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <future>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace linequal {

using nlohmann::json;

std::string canonicalize_label(std::string_view raw) {
  std::string out;
  bool pending_space = false;
  for (char ch : raw) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
  }
  if (out == "clean") return std::string(kClean);
  return out;
}

std::string Shuffler::state() const {
  std::ostringstream ss;
  ss << engine_;
  return ss.str();
}

void Shuffler::restore(const std::string& state) {
  std::istringstream ss(state);
  ss >> engine_;
  if (!ss) throw Error("invalid shuffler state");
}

// ---- LabelRegistry -------------------------------------------------------

LabelRegistry::LabelRegistry() {
  entries_.push_back({std::string(kClean), 0});
  order_.push_back(0);
  rebuild_index();
}

void LabelRegistry::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) index_[entries_[i].name] = i;
}

std::size_t LabelRegistry::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? entries_.size() : it->second;
}

bool LabelRegistry::contains(std::string_view name) const { return index_of(name) < entries_.size(); }

std::size_t LabelRegistry::count(std::string_view name) const {
  auto i = index_of(name);
  return i < entries_.size() ? entries_[i].count : 0;
}

std::size_t LabelRegistry::total() const {
  std::size_t sum = 0;
  for (const auto& e : entries_) sum += e.count;
  return sum;
}

void LabelRegistry::add(std::string_view name, std::size_t count) {
  auto i = index_of(name);
  if (i < entries_.size()) {
    entries_[i].count += count;
    return;
  }
  index_[std::string(name)] = entries_.size();
  order_.push_back(entries_.size());
  entries_.push_back({std::string(name), count});
}

void LabelRegistry::ingest(const std::vector<std::string>& labels, Shuffler& rng) {
  for (const auto& label : labels) add(label, 1);
  rng.shuffle(order_);
}

std::vector<std::string> LabelRegistry::presentation_order() const {
  std::vector<std::string> names;
  names.reserve(order_.size());
  for (auto i : order_) names.push_back(entries_[i].name);
  return names;
}

void LabelRegistry::merge_into_clean(std::string_view name) {
  auto i = index_of(name);
  if (i >= entries_.size()) throw Error("unknown label \"" + std::string(name) + "\"");
  if (i == 0) return;
  entries_[0].count += entries_[i].count;
  retired_.push_back(entries_[i].name);
  entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(i));
  std::erase(order_, i);
  for (auto& o : order_)
    if (o > i) --o;
  rebuild_index();
}

bool LabelRegistry::is_retired(std::string_view name) const {
  return std::find(retired_.begin(), retired_.end(), name) != retired_.end();
}

void LabelRegistry::set_count(std::string_view name, std::size_t count) {
  auto i = index_of(name);
  if (i >= entries_.size()) throw Error("unknown label \"" + std::string(name) + "\"");
  entries_[i].count = count;
}

json LabelRegistry::to_json() const {
  json labels = json::array();
  for (const auto& e : entries_) labels.push_back({{"name", e.name}, {"count", e.count}});
  return {{"labels", labels}, {"presentation_order", presentation_order()}, {"retired", retired_}};
}

LabelRegistry LabelRegistry::from_json(const json& j) {
  LabelRegistry r;
  r.entries_.clear();
  r.order_.clear();
  r.index_.clear();
  for (const auto& e : j.at("labels")) {
    auto name = canonicalize_label(e.at("name").get<std::string>());
    if (r.contains(name)) throw Error("duplicate label in registry: " + name);
    r.index_[name] = r.entries_.size();
    r.entries_.push_back({name, e.at("count").get<std::size_t>()});
  }
  if (!r.contains(kClean)) {
    r.entries_.insert(r.entries_.begin(), {std::string(kClean), 0});
    r.rebuild_index();
  } else if (r.entries_[0].name != kClean) {
    auto ci = r.index_of(kClean);
    std::rotate(r.entries_.begin(), r.entries_.begin() + static_cast<std::ptrdiff_t>(ci),
                r.entries_.begin() + static_cast<std::ptrdiff_t>(ci) + 1);
    r.rebuild_index();
  }
  if (j.contains("presentation_order")) {
    for (const auto& name : j.at("presentation_order")) {
      auto i = r.index_of(name.get<std::string>());
      if (i < r.entries_.size() && std::find(r.order_.begin(), r.order_.end(), i) == r.order_.end())
        r.order_.push_back(i);
    }
  }
  for (std::size_t i = 0; i < r.entries_.size(); ++i)
    if (std::find(r.order_.begin(), r.order_.end(), i) == r.order_.end()) r.order_.push_back(i);
  if (j.contains("retired")) r.retired_ = j.at("retired").get<std::vector<std::string>>();
  return r;
}

bool LabelRegistry::operator==(const LabelRegistry& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name != other.entries_[i].name || entries_[i].count != other.entries_[i].count)
      return false;
  return presentation_order() == other.presentation_order() && retired_ == other.retired_;
}

// ---- Prompt and response -------------------------------------------------

std::string build_prompt(const Batch& batch, const LabelRegistry& registry) {
  if (batch.lines.empty()) throw Error("build_prompt: empty batch");
  const auto n = batch.lines.size();
  std::ostringstream p;
  p << "You are assessing the quality of web text for training large language models.\n"
       "Label each numbered line below. Use \"Clean\" for high-quality, human-written, "
       "continuous main-content text that is suitable for training a language model.\n"
       "For low-quality lines (for example navigation menus, copyright notices, code, "
       "metadata, HTML remnants or random symbols) choose the best matching label from the "
       "list. If none fits, create a new short descriptive label.\n"
       "The lines are consecutive lines from one document; use the surrounding lines as context.\n\n"
       "Existing labels:\n";
  for (const auto& name : registry.presentation_order()) p << "- " << name << "\n";
  p << "\nLines:\n";
  for (std::size_t i = 0; i < n; ++i) p << (i + 1) << ". " << batch.lines[i].text << "\n";
  p << "\nAnswer with a JSON array of exactly " << n
    << " label strings, one per line, in order. Do not add any other text.\n";
  return p.str();
}

std::vector<std::string> parse_response(std::string_view raw, std::size_t batch_size) {
  if (batch_size == 0) throw Error("parse_response: batch_size must be >= 1");
  std::optional<std::vector<std::string>> found;
  for (auto open = raw.find('['); open != std::string_view::npos && !found; open = raw.find('[', open + 1)) {
    for (auto close = raw.rfind(']'); close != std::string_view::npos && close > open;
         close = close == 0 ? std::string_view::npos : raw.rfind(']', close - 1)) {
      auto j = json::parse(raw.substr(open, close - open + 1), nullptr, false);
      if (j.is_discarded() || !j.is_array()) continue;
      if (!std::all_of(j.begin(), j.end(), [](const json& v) { return v.is_string(); })) continue;
      std::vector<std::string> labels;
      for (const auto& v : j) labels.push_back(canonicalize_label(v.get<std::string>()));
      found = std::move(labels);
      break;
    }
  }
  if (!found) throw LabelResponseError(LabelResponseError::Kind::Unparseable, "no JSON array of strings in response");
  if (found->size() != batch_size)
    throw LabelResponseError(LabelResponseError::Kind::CountMismatch,
                             "expected " + std::to_string(batch_size) + " labels, got " +
                                 std::to_string(found->size()));
  for (auto& l : *found)
    if (l.empty()) l = std::string(kClean);
  return *found;
}

void ingest_assignments(LabelRegistry& registry, const std::vector<LabelAssignment>& assignments,
                        Shuffler& rng) {
  std::vector<std::string> labels;
  labels.reserve(assignments.size());
  for (const auto& a : assignments) labels.push_back(canonicalize_label(a.label));
  registry.ingest(labels, rng);
}

// ---- Config --------------------------------------------------------------

void LabelerConfig::validate() const {
  if (max_concurrent_requests < 1) throw Error("max_concurrent_requests must be >= 1");
  if (checkpoint_every < 1) throw Error("checkpoint_every must be >= 1");
  if (batch_lines < 1) throw Error("batch_lines must be >= 1");
  if (segmentation.max_len < 1) throw Error("max_segment_chars must be >= 1");
  if (!(request_timeout > 0)) throw Error("request_timeout must be positive");
}

LabelerConfig LabelerConfig::from_json(const json& j) {
  LabelerConfig c;
  c.endpoint = j.value("endpoint", c.endpoint);
  c.model_name = j.value("model_name", c.model_name);
  if (j.contains("max_retries")) {
    auto r = j.at("max_retries").get<long long>();
    if (r < 0) throw Error("max_retries must be >= 0");
    c.max_retries = static_cast<std::size_t>(r);
  }
  c.request_timeout = j.value("request_timeout", c.request_timeout);
  c.max_concurrent_requests = j.value("max_concurrent_requests", c.max_concurrent_requests);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.batch_lines = j.value("batch_lines", c.batch_lines);
  c.segmentation.max_len = j.value("max_segment_chars", c.segmentation.max_len);
  c.segmentation.single_line_documents_only =
      j.value("segment_single_line_documents_only", c.segmentation.single_line_documents_only);
  c.transcript = j.value("transcript", c.transcript);
  c.validate();
  return c;
}

json LabelerConfig::to_json() const {
  return {{"endpoint", endpoint},
          {"model_name", model_name},
          {"max_retries", max_retries},
          {"request_timeout", request_timeout},
          {"max_concurrent_requests", max_concurrent_requests},
          {"rng_seed", rng_seed},
          {"checkpoint_every", checkpoint_every},
          {"batch_lines", batch_lines},
          {"max_segment_chars", segmentation.max_len},
          {"segment_single_line_documents_only", segmentation.single_line_documents_only},
          {"transcript", transcript}};
}

// ---- Clients -------------------------------------------------------------

HttpChatClient::HttpChatClient(const LabelerConfig& config)
    : model_(config.model_name), timeout_(config.request_timeout) {
  const auto& url = config.endpoint;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error("endpoint must be an absolute URL: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  base_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (const char* key = std::getenv("LINEQUAL_API_KEY")) api_key_ = key;
}

json HttpChatClient::request_body(const std::string& model, const std::string& prompt) {
  return {{"model", model},
          {"temperature", 0},
          {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
}

std::string HttpChatClient::extract_content(const std::string& body) {
  auto j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw TransportError("endpoint returned non-JSON body");
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw TransportError("endpoint reply lacks choices[0].message.content");
  }
}

std::string HttpChatClient::complete(const LabelRequest& request) {
  httplib::Client cli(base_);
  auto secs = static_cast<time_t>(timeout_);
  auto usecs = static_cast<time_t>((timeout_ - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = cli.Post(path_, headers, request_body(model_, request.prompt).dump(), "application/json");
  if (!res) throw TransportError("request to " + base_ + path_ + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw TransportError("endpoint answered HTTP " + std::to_string(res->status));
  return extract_content(res->body);
}

TranscriptClient::TranscriptClient(const std::filesystem::path& path) {
  io::for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (line.empty()) return;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw CorpusError("malformed transcript record", number);
    LineKey key{j.at("doc_id").get<std::string>(), j.value("line_index", std::size_t{0}),
                j.value("segment_index", std::size_t{0})};
    Reply reply{j.value("response", std::string{}), j.value("error", std::string{})};
    replies_[key][j.value("attempt", std::size_t{0})] = std::move(reply);
  });
}

std::string TranscriptClient::complete(const LabelRequest& request) {
  const auto& first = request.batch->lines.front();
  auto it = replies_.find(first.key());
  if (it == replies_.end()) throw TransportError("no transcript entry for batch at " + to_string(first.key()));
  auto reply = it->second.upper_bound(request.attempt);
  if (reply == it->second.begin()) throw TransportError("no transcript attempt for " + to_string(first.key()));
  --reply;
  if (!reply->second.error.empty()) throw TransportError(reply->second.error);
  return reply->second.response;
}

std::unique_ptr<ChatClient> make_client(const LabelerConfig& config) {
  if (!config.transcript.empty()) return std::make_unique<TranscriptClient>(config.transcript);
  return std::make_unique<HttpChatClient>(config);
}

// ---- Orchestration -------------------------------------------------------

json LabelingStats::to_json() const {
  return {{"documents", documents},
          {"lines", lines},
          {"batches", batches},
          {"retries", retries},
          {"fail_open_batches", fail_open_batches}};
}

LabelingStats LabelingStats::from_json(const json& j) {
  LabelingStats s;
  s.documents = j.value("documents", std::size_t{0});
  s.lines = j.value("lines", std::size_t{0});
  s.batches = j.value("batches", std::size_t{0});
  s.retries = j.value("retries", std::size_t{0});
  s.fail_open_batches = j.value("fail_open_batches", std::size_t{0});
  return s;
}

namespace {

struct BatchOutcome {
  std::vector<std::string> labels;
  std::size_t retries = 0;
  bool fail_open = false;
  std::string last_error;
};

BatchOutcome run_batch(const Batch& batch, const std::string& prompt, ChatClient& client,
                       std::size_t max_retries) {
  BatchOutcome outcome;
  std::string transport_error;
  for (std::size_t attempt = 0; attempt <= max_retries; ++attempt) {
    if (attempt > 0) ++outcome.retries;
    try {
      auto reply = client.complete({&batch, prompt, attempt});
      transport_error.clear();
      outcome.labels = parse_response(reply, batch.lines.size());
      return outcome;
    } catch (const LabelResponseError& e) {
      outcome.last_error = e.what();
    } catch (const TransportError& e) {
      transport_error = e.what();
      outcome.last_error = e.what();
    }
  }
  if (!transport_error.empty())
    throw LabelingAborted("endpoint unreachable after " + std::to_string(max_retries + 1) +
                          " attempts: " + transport_error);
  outcome.fail_open = true;
  outcome.labels.assign(batch.lines.size(), std::string(kClean));
  return outcome;
}

} // namespace

std::vector<LabeledLine> label_documents(const std::vector<Document>& docs, const LabelerConfig& config,
                                         ChatClient& client, LabelRegistry& registry, Shuffler& rng,
                                         LabelingStats& stats, const LogFn& log) {
  config.validate();
  std::vector<Batch> batches;
  for (const auto& doc : docs) {
    auto lines = document_lines(doc, config.segmentation);
    auto doc_batches = make_batches(lines, config.batch_lines);
    batches.insert(batches.end(), std::make_move_iterator(doc_batches.begin()),
                   std::make_move_iterator(doc_batches.end()));
  }

  std::vector<LabeledLine> out;
  const std::size_t wave = config.max_concurrent_requests;
  for (std::size_t start = 0; start < batches.size(); start += wave) {
    const std::size_t end = std::min(batches.size(), start + wave);
    std::vector<std::string> prompts;
    for (std::size_t i = start; i < end; ++i) prompts.push_back(build_prompt(batches[i], registry));

    std::vector<BatchOutcome> outcomes(end - start);
    if (end - start == 1) {
      outcomes[0] = run_batch(batches[start], prompts[0], client, config.max_retries);
    } else {
      std::vector<std::future<BatchOutcome>> inflight;
      for (std::size_t i = start; i < end; ++i)
        inflight.push_back(std::async(std::launch::async, run_batch, std::cref(batches[i]),
                                      std::cref(prompts[i - start]), std::ref(client), config.max_retries));
      // Drain every future before rethrowing so no request outlives this frame.
      std::exception_ptr failure;
      for (std::size_t i = 0; i < inflight.size(); ++i) {
        try {
          outcomes[i] = inflight[i].get();
        } catch (...) {
          if (!failure) failure = std::current_exception();
        }
      }
      if (failure) std::rethrow_exception(failure);
    }

    for (std::size_t i = start; i < end; ++i) {
      auto& outcome = outcomes[i - start];
      const auto& batch = batches[i];
      stats.retries += outcome.retries;
      ++stats.batches;
      if (outcome.fail_open) {
        ++stats.fail_open_batches;
        if (log)
          log("batch at " + to_string(batch.lines.front().key()) + " labeled Clean after " +
              std::to_string(config.max_retries + 1) + " failed attempts (" + outcome.last_error + ")");
      }
      std::vector<LabelAssignment> assignments;
      for (std::size_t k = 0; k < batch.lines.size(); ++k) {
        assignments.push_back({batch.lines[k].key(), outcome.labels[k]});
        out.push_back({batch.lines[k], outcome.labels[k], {}});
      }
      ingest_assignments(registry, assignments, rng);
      stats.lines += batch.lines.size();
    }
  }
  stats.documents += docs.size();
  return out;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& out) {
  auto p = out;
  p += ".ckpt.json";
  return p;
}

std::filesystem::path registry_path(const std::filesystem::path& out) {
  auto p = out;
  p += ".registry.json";
  return p;
}

LabelingResult label_corpus(const std::filesystem::path& input, const std::filesystem::path& out,
                            const LabelerConfig& config, ChatClient& client, const LogFn& log) {
  config.validate();
  LabelingResult result;
  Shuffler rng(config.rng_seed);
  std::size_t docs_done = 0;
  std::uintmax_t output_bytes = 0;

  const auto ckpt = checkpoint_path(out);
  if (std::filesystem::exists(ckpt)) {
    auto j = json::parse(io::read_file(ckpt));
    docs_done = j.at("documents_done").get<std::size_t>();
    output_bytes = j.at("output_bytes").get<std::uintmax_t>();
    result.registry = LabelRegistry::from_json(j.at("registry"));
    result.stats = LabelingStats::from_json(j.at("stats"));
    rng.restore(j.at("rng_state").get<std::string>());
    result.resumed = true;
    if (!std::filesystem::exists(out) || std::filesystem::file_size(out) < output_bytes)
      throw Error("checkpoint refers to " + std::to_string(output_bytes) + " bytes of " + out.string() +
                  " but the file is shorter");
    std::filesystem::resize_file(out, output_bytes);
    if (log) log("resuming after " + std::to_string(docs_done) + " documents");
  } else {
    if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
    std::ofstream(out, std::ios::binary | std::ios::trunc);
  }

  DocumentReader reader(input);
  for (std::size_t skipped = 0; skipped < docs_done; ++skipped)
    if (!reader.next()) throw Error("checkpoint is ahead of the input corpus");

  std::ofstream sink(out, std::ios::binary | std::ios::app);
  if (!sink) throw Error("cannot open " + out.string());
  for (;;) {
    std::vector<Document> shard;
    while (shard.size() < config.checkpoint_every) {
      auto doc = reader.next();
      if (!doc) break;
      shard.push_back(std::move(*doc));
    }
    if (shard.empty()) break;
    auto labeled = label_documents(shard, config, client, result.registry, rng, result.stats, log);
    std::string buf;
    for (const auto& l : labeled) buf += labeled_jsonl(l);
    sink << buf;
    sink.flush();
    if (!sink) throw Error("write failed: " + out.string());
    docs_done += shard.size();
    output_bytes += buf.size();
    json cp = {{"documents_done", docs_done},
               {"output_bytes", output_bytes},
               {"registry", result.registry.to_json()},
               {"stats", result.stats.to_json()},
               {"rng_state", rng.state()},
               {"prompt_version", kPromptVersion}};
    io::write_file_atomic(ckpt, cp.dump());
  }

  if (result.registry.total() != result.stats.lines)
    throw Error("registry counts (" + std::to_string(result.registry.total()) + ") do not match labeled lines (" +
                std::to_string(result.stats.lines) + ")");
  io::write_file_atomic(registry_path(out), result.registry.to_json().dump(2));
  return result;
}

} // namespace linequal
