#pragma once

#include "linequal/corpus.hpp"
#include "linequal/error.hpp"
#include "linequal/labeled.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace linequal {

// Case-folds, trims and collapses internal whitespace. Any spelling of
// "clean" becomes exactly "Clean".
std::string canonicalize_label(std::string_view raw);

// Deterministic shuffler. Uses only the raw mt19937_64 output stream (whose
// sequence the standard fixes) so shuffles reproduce across toolchains.
class Shuffler {
public:
  explicit Shuffler(std::uint64_t seed = 0) : engine_(seed) {}

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(engine_() % i);
      std::swap(items[i - 1], items[j]);
    }
  }

  std::string state() const;
  void restore(const std::string& state);

private:
  std::mt19937_64 engine_;
};

// Dynamic label set built up while labeling. "Clean" is always present.
class LabelRegistry {
public:
  struct Entry {
    std::string name;
    std::size_t count = 0;
  };

  LabelRegistry();

  // Adds or increments each (already canonical) label, then reshuffles the
  // presentation order. Reshuffles even when `labels` is empty.
  void ingest(const std::vector<std::string>& labels, Shuffler& rng);

  bool contains(std::string_view name) const;
  std::size_t count(std::string_view name) const;
  std::size_t total() const;
  std::size_t size() const { return entries_.size(); }
  // Number of labels other than Clean.
  std::size_t descriptive_size() const { return entries_.size() - 1; }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<std::string> presentation_order() const;

  // Drops a label (never Clean), moves its count onto Clean and remembers it
  // as retired.
  void merge_into_clean(std::string_view name);
  bool is_retired(std::string_view name) const;
  const std::vector<std::string>& retired() const { return retired_; }
  void set_count(std::string_view name, std::size_t count);
  void add(std::string_view name, std::size_t count);

  nlohmann::json to_json() const;
  static LabelRegistry from_json(const nlohmann::json& j);

  bool operator==(const LabelRegistry&) const;

private:
  std::size_t index_of(std::string_view name) const;
  void rebuild_index();

  std::vector<Entry> entries_;
  std::vector<std::size_t> order_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> retired_;
};

inline constexpr std::string_view kPromptVersion = "linequal-label-v1";

std::string build_prompt(const Batch& batch, const LabelRegistry& registry);

class LabelResponseError : public Error {
public:
  enum class Kind { CountMismatch, Unparseable };
  LabelResponseError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

// Extracts the JSON array of labels from a model reply (prose and markdown
// fences around it are ignored) and canonicalizes every entry.
std::vector<std::string> parse_response(std::string_view raw, std::size_t batch_size);

struct LabelAssignment {
  LineKey line;
  std::string label;
};

void ingest_assignments(LabelRegistry& registry, const std::vector<LabelAssignment>& assignments,
                        Shuffler& rng);

// ---- LLM transport -------------------------------------------------------

// Raised when the endpoint cannot be reached or answers with an error status.
class TransportError : public Error {
public:
  using Error::Error;
};

struct LabelRequest {
  const Batch* batch = nullptr;
  std::string prompt;
  std::size_t attempt = 0;
};

class ChatClient {
public:
  virtual ~ChatClient() = default;
  // Must be safe to call concurrently.
  virtual std::string complete(const LabelRequest& request) = 0;
};

struct LabelerConfig {
  std::string endpoint;
  std::string model_name = "gpt-4o-mini";
  std::size_t max_retries = 3;
  double request_timeout = 60.0;  // seconds
  std::size_t max_concurrent_requests = 1;
  std::uint64_t rng_seed = 0;
  std::size_t checkpoint_every = 100;  // documents per checkpoint shard
  std::size_t batch_lines = kDefaultBatchLines;
  SegmentationOptions segmentation;
  std::string transcript;  // when set, a TranscriptClient replaces HTTP

  void validate() const;
  static LabelerConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// OpenAI-style chat-completion endpoint over HTTP(S). The API key is read
// from LINEQUAL_API_KEY.
class HttpChatClient : public ChatClient {
public:
  explicit HttpChatClient(const LabelerConfig& config);
  std::string complete(const LabelRequest& request) override;

  static nlohmann::json request_body(const std::string& model, const std::string& prompt);
  static std::string extract_content(const std::string& body);

private:
  std::string base_;
  std::string path_;
  std::string model_;
  std::string api_key_;
  double timeout_;
};

// Replays responses from a JSONL transcript. Entries are keyed by the first
// line of the batch and the attempt number:
//   {"doc_id":..,"line_index":..,"segment_index":..,"attempt":0,"response":".."}
// or {"...","error":"message"} to simulate a transport failure. A missing
// attempt falls back to the highest recorded attempt below it.
class TranscriptClient : public ChatClient {
public:
  explicit TranscriptClient(const std::filesystem::path& path);
  std::string complete(const LabelRequest& request) override;

private:
  struct Reply {
    std::string response;
    std::string error;
  };
  std::map<LineKey, std::map<std::size_t, Reply>> replies_;
};

class FunctionClient : public ChatClient {
public:
  using Fn = std::function<std::string(const LabelRequest&)>;
  explicit FunctionClient(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(const LabelRequest& request) override { return fn_(request); }

private:
  Fn fn_;
};

std::unique_ptr<ChatClient> make_client(const LabelerConfig& config);

// ---- Orchestration -------------------------------------------------------

struct LabelingStats {
  std::size_t documents = 0;
  std::size_t lines = 0;
  std::size_t batches = 0;
  std::size_t retries = 0;
  std::size_t fail_open_batches = 0;

  nlohmann::json to_json() const;
  static LabelingStats from_json(const nlohmann::json& j);
};

class LabelingAborted : public Error {
public:
  using Error::Error;
};

using LogFn = std::function<void(const std::string&)>;

// Labels documents against an evolving registry. Batches are dispatched in
// waves of up to max_concurrent_requests; every prompt in a wave sees the
// registry as it was when the wave started, and replies are ingested in
// dispatch order, reshuffling after each batch.
std::vector<LabeledLine> label_documents(const std::vector<Document>& docs, const LabelerConfig& config,
                                         ChatClient& client, LabelRegistry& registry, Shuffler& rng,
                                         LabelingStats& stats, const LogFn& log = {});

struct LabelingResult {
  LabelRegistry registry;
  LabelingStats stats;
  bool resumed = false;
};

// Streams a corpus file through label_documents, appending to `out` and
// checkpointing (`out`.ckpt.json) after each shard of documents. Reruns
// resume from the checkpoint. The final registry goes to `out`.registry.json.
LabelingResult label_corpus(const std::filesystem::path& input, const std::filesystem::path& out,
                            const LabelerConfig& config, ChatClient& client, const LogFn& log = {});

std::filesystem::path checkpoint_path(const std::filesystem::path& out);
std::filesystem::path registry_path(const std::filesystem::path& out);

} // namespace linequal
