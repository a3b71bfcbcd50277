#pragma once

#include "linequal/agreement.hpp"
#include "linequal/error.hpp"
#include "linequal/labeled.hpp"
#include "linequal/taxonomy.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace linequal::review {

enum class SessionKind { Verification, Iaa };

std::string to_string(SessionKind kind);
SessionKind kind_from_string(const std::string& name);

struct ReviewItem {
  std::size_t item_id = 0;
  LineKey line;
  std::string text;
  std::string llm_label;  // descriptive label (verification) or category (iaa)
  std::vector<std::string> context_before;
  std::vector<std::string> context_after;
};

// Failure classes map onto HTTP status codes in ReviewServer.
class NotFound : public Error {
public:
  using Error::Error;
};
class InvalidPayload : public Error {
public:
  using Error::Error;
};
class KindMismatch : public Error {
public:
  using Error::Error;
};
class Incomplete : public Error {
public:
  using Error::Error;
};

struct Answer {
  bool low_quality = false;  // verification sessions
  AnnotatorVerdict iaa;      // iaa sessions
  std::string at;            // ISO-8601 time of submission
};

struct Session {
  std::string id;
  SessionKind kind = SessionKind::Verification;
  std::vector<ReviewItem> items;
  std::vector<std::string> labels;  // verification: labels under review, in order
  std::size_t sample_size = 0;
  std::map<std::string, std::map<std::size_t, Answer>> answers;  // annotator -> item -> answer
};

struct SubmitResult {
  nlohmann::json summary;
  bool replaced = false;
};

struct StoreOptions {
  std::size_t context_lines = 2;
  // Returns the timestamp stamped on verdicts; defaults to UTC now.
  std::function<std::string()> clock;
};

// Review sessions over a categorized corpus, persisted as an append-only
// event log plus a snapshot in `state_dir`. Every mutation is appended and
// fsynced before it is acknowledged; reopening the store replays the log.
class ReviewStore {
public:
  ReviewStore(std::vector<LabeledLine> corpus, std::filesystem::path state_dir, StoreOptions options = {});
  ~ReviewStore();

  ReviewStore(const ReviewStore&) = delete;
  ReviewStore& operator=(const ReviewStore&) = delete;

  struct Created {
    nlohmann::json summary;
    std::vector<std::string> warnings;
  };

  // Samples up to `sample_size` lines per label (seeded). Labels without
  // lines are skipped, short labels contribute every line; both warn.
  Created start_verification(const std::vector<std::string>& labels, std::size_t sample_size, std::uint64_t seed,
                             std::string id = {});
  Created start_iaa(const std::vector<std::string>& doc_ids, std::string id = {});

  // Lowest-index item this annotator has not answered, or nothing when done.
  std::optional<ReviewItem> next_item(const std::string& session_id, const std::string& annotator) const;

  // Payload: {"low_quality": bool} for verification sessions,
  // {"agrees": bool, "corrected_label": category} for iaa sessions.
  SubmitResult submit_verdict(const std::string& session_id, const std::string& annotator, std::size_t item_id,
                              const nlohmann::json& payload);

  nlohmann::json summary(const std::string& session_id) const;
  nlohmann::json list() const;

  // Verification sessions: VerificationVerdict records (one per label).
  std::vector<VerificationVerdict> export_verification(const std::string& session_id, bool partial) const;
  // IAA sessions: an AnnotationSession ready for agreement_report.
  AnnotationSession export_iaa(const std::string& session_id, bool partial) const;
  SessionKind kind_of(const std::string& session_id) const;

  // Writes a snapshot and truncates the event log.
  void compact();

private:
  const Session& get(const std::string& id) const;
  void append_event(const nlohmann::json& event);
  void apply_event(const nlohmann::json& event);
  nlohmann::json summary_locked(const Session& s) const;
  ReviewItem make_item(std::size_t item_id, const LabeledLine& line) const;
  std::string fresh_id(const std::string& prefix) const;
  std::string now() const;
  void load_state();

  std::vector<LabeledLine> corpus_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_doc_;  // doc -> corpus indices in key order
  std::map<LineKey, std::size_t> position_;                          // key -> position inside its document
  std::filesystem::path state_dir_;
  StoreOptions options_;
  std::map<std::string, Session> sessions_;
  std::vector<std::string> order_;
  std::uint64_t seq_ = 0;
  int log_fd_ = -1;
  mutable std::shared_mutex mutex_;
};

nlohmann::json item_to_json(const ReviewItem& item);

// HTTP front end:
//   GET  /sessions                         list
//   POST /sessions                         create (201)
//   GET  /sessions/{id}/next?annotator=    next item or {"done": true}
//   POST /sessions/{id}/verdicts           submit
//   GET  /sessions/{id}/summary
//   GET  /sessions/{id}/export[?partial=1]
// 400 invalid payload, 404 unknown session, 409 kind mismatch or incomplete
// export. The annotator may also be given in the X-Annotator-Id header.
class ReviewServer {
public:
  explicit ReviewServer(ReviewStore& store);
  ~ReviewServer();

  // Binds and serves on a background thread. Port 0 picks a free port.
  int start(const std::string& host, int port);
  // Blocks serving on the calling thread.
  bool listen(const std::string& host, int port);
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace linequal::review
