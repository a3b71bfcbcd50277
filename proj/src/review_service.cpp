#include "linequal/review_service.hpp"

#include "linequal/io.hpp"
#include "linequal/labeler.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <mutex>
#include <set>
#include <thread>

#include <fcntl.h>
#include <unistd.h>

#include <httplib.h>

namespace linequal::review {

using nlohmann::json;

std::string to_string(SessionKind kind) { return kind == SessionKind::Verification ? "verification" : "iaa"; }

SessionKind kind_from_string(const std::string& name) {
  if (name == "verification" || name == "label_verification") return SessionKind::Verification;
  if (name == "iaa") return SessionKind::Iaa;
  throw InvalidPayload("unknown session kind \"" + name + "\"");
}

json item_to_json(const ReviewItem& item) {
  return {{"item_id", item.item_id},
          {"doc_id", item.line.doc_id},
          {"line_index", item.line.line_index},
          {"segment_index", item.line.segment_index},
          {"text", item.text},
          {"llm_label", item.llm_label},
          {"context_before", item.context_before},
          {"context_after", item.context_after}};
}

namespace {

ReviewItem item_from_json(const json& j) {
  ReviewItem item;
  item.item_id = j.at("item_id").get<std::size_t>();
  item.line = {j.at("doc_id").get<std::string>(), j.at("line_index").get<std::size_t>(),
               j.at("segment_index").get<std::size_t>()};
  item.text = j.at("text").get<std::string>();
  item.llm_label = j.at("llm_label").get<std::string>();
  item.context_before = j.at("context_before").get<std::vector<std::string>>();
  item.context_after = j.at("context_after").get<std::vector<std::string>>();
  return item;
}

json session_header_json(const Session& s) {
  json items = json::array();
  for (const auto& it : s.items) items.push_back(item_to_json(it));
  return {{"id", s.id}, {"kind", to_string(s.kind)}, {"labels", s.labels}, {"sample_size", s.sample_size}, {"items", items}};
}

Session session_from_header(const json& j) {
  Session s;
  s.id = j.at("id").get<std::string>();
  s.kind = kind_from_string(j.at("kind").get<std::string>());
  s.labels = j.at("labels").get<std::vector<std::string>>();
  s.sample_size = j.at("sample_size").get<std::size_t>();
  for (const auto& it : j.at("items")) s.items.push_back(item_from_json(it));
  return s;
}

json answer_json(const Answer& a, SessionKind kind) {
  json j = {{"at", a.at}};
  if (kind == SessionKind::Verification) {
    j["low_quality"] = a.low_quality;
  } else {
    j["agrees"] = a.iaa.agrees;
    if (a.iaa.corrected_label) j["corrected_label"] = *a.iaa.corrected_label;
  }
  return j;
}

// Validates a verdict payload against the session kind.
Answer parse_answer(const json& payload, SessionKind kind) {
  if (!payload.is_object()) throw InvalidPayload("verdict payload must be a JSON object");
  const bool has_verification = payload.contains("low_quality");
  const bool has_iaa = payload.contains("agrees");
  Answer a;
  if (kind == SessionKind::Verification) {
    if (!has_verification && has_iaa) throw KindMismatch("agree/disagree verdict sent to a verification session");
    if (!has_verification || !payload.at("low_quality").is_boolean())
      throw InvalidPayload("verification verdicts need a boolean \"low_quality\"");
    a.low_quality = payload.at("low_quality").get<bool>();
    return a;
  }
  if (!has_iaa && has_verification) throw KindMismatch("quality verdict sent to an iaa session");
  if (!has_iaa || !payload.at("agrees").is_boolean()) throw InvalidPayload("iaa verdicts need a boolean \"agrees\"");
  a.iaa.agrees = payload.at("agrees").get<bool>();
  if (payload.contains("corrected_label") && !payload.at("corrected_label").is_null()) {
    if (!payload.at("corrected_label").is_string()) throw InvalidPayload("\"corrected_label\" must be a string");
    a.iaa.corrected_label = payload.at("corrected_label").get<std::string>();
  }
  try {
    validate_verdict(a.iaa);
  } catch (const Error& e) {
    throw InvalidPayload(e.what());
  }
  return a;
}

std::string utc_now() {
  auto now = std::chrono::system_clock::now();
  auto t = std::chrono::system_clock::to_time_t(now);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

struct LabelTally {
  std::size_t items = 0;
  std::size_t answered_items = 0;
  std::size_t votes = 0;
  std::size_t high_quality_votes = 0;
  std::string latest;
  std::vector<LineKey> evidence;
  std::set<std::string> reviewers;

  // Strictly more than half of the answers say the lines are high quality.
  bool majority_clean() const { return votes > 0 && 2 * high_quality_votes > votes; }
};

std::map<std::string, LabelTally> tally_verification(const Session& s) {
  std::map<std::string, LabelTally> tallies;
  for (const auto& label : s.labels) tallies[label];
  std::vector<bool> answered(s.items.size(), false);
  for (const auto& [annotator, by_item] : s.answers) {
    for (const auto& [index, answer] : by_item) {
      auto& t = tallies[s.items[index].llm_label];
      ++t.votes;
      if (!answer.low_quality) ++t.high_quality_votes;
      t.latest = std::max(t.latest, answer.at);
      t.reviewers.insert(annotator);
      answered[index] = true;
    }
  }
  for (const auto& item : s.items) {
    auto& t = tallies[item.llm_label];
    ++t.items;
    if (answered[item.item_id]) {
      ++t.answered_items;
      t.evidence.push_back(item.line);
    }
  }
  return tallies;
}

} // namespace

// ---- ReviewStore ---------------------------------------------------------

ReviewStore::ReviewStore(std::vector<LabeledLine> corpus, std::filesystem::path state_dir, StoreOptions options)
    : corpus_(std::move(corpus)), state_dir_(std::move(state_dir)), options_(std::move(options)) {
  for (std::size_t i = 0; i < corpus_.size(); ++i) by_doc_[corpus_[i].line.doc_id].push_back(i);
  for (auto& [doc, idx] : by_doc_) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t x, std::size_t y) { return corpus_[x].line.key() < corpus_[y].line.key(); });
    for (std::size_t p = 0; p < idx.size(); ++p) position_[corpus_[idx[p]].line.key()] = p;
  }
  std::filesystem::create_directories(state_dir_);
  load_state();
  compact();
}

ReviewStore::~ReviewStore() {
  if (log_fd_ >= 0) ::close(log_fd_);
}

std::string ReviewStore::now() const { return options_.clock ? options_.clock() : utc_now(); }

void ReviewStore::load_state() {
  const auto snapshot = state_dir_ / "snapshot.json";
  if (std::filesystem::exists(snapshot)) {
    auto j = json::parse(io::read_file(snapshot));
    seq_ = j.at("seq").get<std::uint64_t>();
    for (const auto& sj : j.at("sessions")) {
      auto s = session_from_header(sj);
      for (const auto& [annotator, by_item] : sj.at("answers").items())
        for (const auto& [index, aj] : by_item.items()) {
          json payload = aj;
          payload.erase("at");
          auto a = parse_answer(payload, s.kind);
          a.at = aj.value("at", std::string{});
          s.answers[annotator][std::stoul(index)] = a;
        }
      order_.push_back(s.id);
      sessions_.emplace(s.id, std::move(s));
    }
  }
  const auto log = state_dir_ / "events.jsonl";
  if (std::filesystem::exists(log)) {
    io::for_each_line(log, [&](std::string_view line, std::size_t) {
      if (line.empty()) return;
      auto event = json::parse(line, nullptr, false);
      // A torn final line can only come from a write that was never acknowledged.
      if (event.is_discarded()) return;
      if (event.at("seq").get<std::uint64_t>() <= seq_) return;
      apply_event(event);
      seq_ = event.at("seq").get<std::uint64_t>();
    });
  }
}

void ReviewStore::compact() {
  std::unique_lock lock(mutex_);
  json sessions = json::array();
  for (const auto& id : order_) {
    const auto& s = sessions_.at(id);
    json sj = session_header_json(s);
    json answers = json::object();
    for (const auto& [annotator, by_item] : s.answers)
      for (const auto& [index, a] : by_item) answers[annotator][std::to_string(index)] = answer_json(a, s.kind);
    sj["answers"] = answers;
    sessions.push_back(sj);
  }
  io::write_file_atomic(state_dir_ / "snapshot.json", json{{"seq", seq_}, {"sessions", sessions}}.dump());
  if (log_fd_ >= 0) ::close(log_fd_);
  const auto log = state_dir_ / "events.jsonl";
  log_fd_ = ::open(log.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_APPEND, 0644);
  if (log_fd_ < 0) throw Error("cannot open event log " + log.string());
  ::fsync(log_fd_);
}

void ReviewStore::append_event(const json& event) {
  std::string line = event.dump() + "\n";
  const char* data = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    auto n = ::write(log_fd_, data, left);
    if (n < 0) throw Error("event log write failed");
    data += n;
    left -= static_cast<std::size_t>(n);
  }
  if (::fsync(log_fd_) != 0) throw Error("event log fsync failed");
}

void ReviewStore::apply_event(const json& event) {
  const auto type = event.at("type").get<std::string>();
  if (type == "create") {
    auto s = session_from_header(event.at("session"));
    order_.push_back(s.id);
    sessions_.emplace(s.id, std::move(s));
  } else if (type == "verdict") {
    auto& s = sessions_.at(event.at("session").get<std::string>());
    auto a = parse_answer(event.at("payload"), s.kind);
    a.at = event.at("at").get<std::string>();
    s.answers[event.at("annotator").get<std::string>()][event.at("item_id").get<std::size_t>()] = a;
  } else {
    throw Error("unknown event type " + type);
  }
}

const Session& ReviewStore::get(const std::string& id) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("unknown session \"" + id + "\"");
  return it->second;
}

ReviewItem ReviewStore::make_item(std::size_t item_id, const LabeledLine& line) const {
  ReviewItem item;
  item.item_id = item_id;
  item.line = line.line.key();
  item.text = line.line.text;
  const auto& doc = by_doc_.at(line.line.doc_id);
  const std::size_t p = position_.at(item.line);
  const std::size_t k = options_.context_lines;
  for (std::size_t q = p >= k ? p - k : 0; q < p; ++q) item.context_before.push_back(corpus_[doc[q]].line.text);
  for (std::size_t q = p + 1; q < doc.size() && q <= p + k; ++q) item.context_after.push_back(corpus_[doc[q]].line.text);
  return item;
}

std::string ReviewStore::fresh_id(const std::string& prefix) const {
  for (std::size_t n = sessions_.size() + 1;; ++n) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s-%04zu", prefix.c_str(), n);
    if (!sessions_.count(buf)) return buf;
  }
}

ReviewStore::Created ReviewStore::start_verification(const std::vector<std::string>& labels, std::size_t sample_size,
                                                     std::uint64_t seed, std::string id) {
  if (sample_size < 1) throw InvalidPayload("sample_size must be >= 1");
  if (labels.empty()) throw InvalidPayload("at least one label is required");
  std::unique_lock lock(mutex_);
  if (id.empty()) id = fresh_id("ver");
  if (sessions_.count(id)) throw InvalidPayload("session \"" + id + "\" already exists");

  Created created;
  Session s;
  s.id = id;
  s.kind = SessionKind::Verification;
  s.sample_size = sample_size;
  Shuffler rng(seed);
  for (const auto& raw : labels) {
    const auto label = canonicalize_label(raw);
    std::vector<std::size_t> matches;
    for (std::size_t i = 0; i < corpus_.size(); ++i)
      if (corpus_[i].label == label) matches.push_back(i);
    if (matches.empty()) {
      created.warnings.push_back("label \"" + label + "\" has no lines; skipped");
      continue;
    }
    if (matches.size() < sample_size)
      created.warnings.push_back("label \"" + label + "\" has only " + std::to_string(matches.size()) + " line(s)");
    rng.shuffle(matches);
    matches.resize(std::min(matches.size(), sample_size));
    std::sort(matches.begin(), matches.end());
    s.labels.push_back(label);
    for (auto i : matches) {
      auto item = make_item(s.items.size(), corpus_[i]);
      item.llm_label = label;
      s.items.push_back(std::move(item));
    }
  }
  if (s.items.empty()) throw InvalidPayload("none of the requested labels has any lines");

  append_event({{"seq", seq_ + 1}, {"type", "create"}, {"session", session_header_json(s)}});
  ++seq_;
  order_.push_back(s.id);
  const auto& stored = sessions_.emplace(s.id, std::move(s)).first->second;
  created.summary = summary_locked(stored);
  return created;
}

ReviewStore::Created ReviewStore::start_iaa(const std::vector<std::string>& doc_ids, std::string id) {
  if (doc_ids.empty()) throw InvalidPayload("an iaa session needs at least one document");
  std::unique_lock lock(mutex_);
  if (id.empty()) id = fresh_id("iaa");
  if (sessions_.count(id)) throw InvalidPayload("session \"" + id + "\" already exists");
  Session s;
  s.id = id;
  s.kind = SessionKind::Iaa;
  for (const auto& doc : doc_ids) {
    auto it = by_doc_.find(doc);
    if (it == by_doc_.end()) throw InvalidPayload("unknown document \"" + doc + "\"");
    for (auto i : it->second) {
      if (!category_index(corpus_[i].category))
        throw InvalidPayload("document \"" + doc + "\" is not categorized; serve a refined corpus");
      auto item = make_item(s.items.size(), corpus_[i]);
      item.llm_label = corpus_[i].category;
      s.items.push_back(std::move(item));
    }
  }
  append_event({{"seq", seq_ + 1}, {"type", "create"}, {"session", session_header_json(s)}});
  ++seq_;
  order_.push_back(s.id);
  const auto& stored = sessions_.emplace(s.id, std::move(s)).first->second;
  return {summary_locked(stored), {}};
}

std::optional<ReviewItem> ReviewStore::next_item(const std::string& session_id, const std::string& annotator) const {
  std::shared_lock lock(mutex_);
  const auto& s = get(session_id);
  auto it = s.answers.find(annotator);
  for (const auto& item : s.items)
    if (it == s.answers.end() || !it->second.count(item.item_id)) return item;
  return std::nullopt;
}

SubmitResult ReviewStore::submit_verdict(const std::string& session_id, const std::string& annotator,
                                         std::size_t item_id, const json& payload) {
  if (annotator.empty()) throw InvalidPayload("annotator id is required");
  std::unique_lock lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFound("unknown session \"" + session_id + "\"");
  auto& s = it->second;
  if (item_id >= s.items.size()) throw NotFound("unknown item " + std::to_string(item_id));
  auto answer = parse_answer(payload, s.kind);
  answer.at = now();
  json stored_payload = answer_json(answer, s.kind);
  stored_payload.erase("at");
  append_event({{"seq", seq_ + 1},
                {"type", "verdict"},
                {"session", session_id},
                {"annotator", annotator},
                {"item_id", item_id},
                {"payload", stored_payload},
                {"at", answer.at}});
  ++seq_;
  auto& slot = s.answers[annotator];
  SubmitResult result;
  result.replaced = slot.count(item_id) > 0;
  slot[item_id] = answer;
  result.summary = summary_locked(s);
  return result;
}

json ReviewStore::summary_locked(const Session& s) const {
  json completed = json::object();
  for (const auto& [annotator, by_item] : s.answers) completed[annotator] = by_item.size();
  json out = {{"session_id", s.id}, {"kind", to_string(s.kind)}, {"total", s.items.size()}, {"completed", completed}};
  if (s.kind == SessionKind::Verification) {
    json labels = json::array();
    for (const auto& [label, t] : tally_verification(s)) {
      const bool quorum = 2 * t.answered_items > t.items;
      labels.push_back({{"label", label},
                        {"items", t.items},
                        {"answered", t.answered_items},
                        {"votes", t.votes},
                        {"high_quality_votes", t.high_quality_votes},
                        {"low_quality_votes", t.votes - t.high_quality_votes},
                        {"quorum", quorum},
                        {"majority", t.majority_clean() ? "remap_to_clean" : "keep"}});
    }
    out["labels"] = labels;
  } else {
    json kappas = json::object();
    for (const auto& [annotator, by_item] : s.answers) {
      std::vector<std::string> human, llm;
      for (const auto& [index, a] : by_item) {
        llm.push_back(s.items[index].llm_label);
        human.push_back(a.iaa.agrees ? s.items[index].llm_label : *a.iaa.corrected_label);
      }
      if (human.empty()) continue;
      kappas[annotator] = {{"all_labels", cohens_kappa(human, llm)},
                           {"clean_vs_nonclean", cohens_kappa(binarize(human), binarize(llm))},
                           {"answered", human.size()}};
    }
    out["kappa"] = kappas;
  }
  return out;
}

json ReviewStore::summary(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  return summary_locked(get(session_id));
}

json ReviewStore::list() const {
  std::shared_lock lock(mutex_);
  json out = json::array();
  for (const auto& id : order_) out.push_back(summary_locked(sessions_.at(id)));
  return out;
}

SessionKind ReviewStore::kind_of(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  return get(session_id).kind;
}

std::vector<VerificationVerdict> ReviewStore::export_verification(const std::string& session_id, bool partial) const {
  std::shared_lock lock(mutex_);
  const auto& s = get(session_id);
  if (s.kind != SessionKind::Verification) throw KindMismatch("session \"" + session_id + "\" is not a verification session");
  auto tallies = tally_verification(s);
  if (!partial) {
    std::string remaining;
    for (const auto& [label, t] : tallies)
      if (t.answered_items < t.items)
        remaining += " \"" + label + "\": " + std::to_string(t.items - t.answered_items);
    if (!remaining.empty()) throw Incomplete("session incomplete; unanswered items per label:" + remaining);
  }
  std::vector<VerificationVerdict> out;
  for (const auto& label : s.labels) {
    const auto& t = tallies.at(label);
    VerificationVerdict v;
    v.label = label;
    const bool quorum = 2 * t.answered_items > t.items;
    v.decision = (quorum && t.majority_clean()) ? VerdictDecision::RemapToClean : VerdictDecision::Keep;
    v.evidence = t.evidence;
    for (const auto& r : t.reviewers) v.reviewer += (v.reviewer.empty() ? "" : ",") + r;
    v.timestamp = t.latest;
    out.push_back(std::move(v));
  }
  return out;
}

AnnotationSession ReviewStore::export_iaa(const std::string& session_id, bool partial) const {
  std::shared_lock lock(mutex_);
  const auto& s = get(session_id);
  if (s.kind != SessionKind::Iaa) throw KindMismatch("session \"" + session_id + "\" is not an iaa session");
  if (!partial) {
    if (s.answers.empty()) throw Incomplete("session has no verdicts yet");
    std::string remaining;
    for (const auto& [annotator, by_item] : s.answers)
      if (by_item.size() < s.items.size())
        remaining += " " + annotator + ": " + std::to_string(s.items.size() - by_item.size());
    if (!remaining.empty()) throw Incomplete("session incomplete; unanswered items per annotator:" + remaining);
  }
  AnnotationSession out;
  out.session_id = s.id;
  for (const auto& item : s.items) out.items.push_back({item.line, item.text, item.llm_label});
  for (const auto& [annotator, by_item] : s.answers)
    for (const auto& [index, a] : by_item) record_verdict(out, annotator, index, a.iaa);
  return out;
}

// ---- HTTP ----------------------------------------------------------------

struct ReviewServer::Impl {
  ReviewStore& store;
  httplib::Server server;
  std::thread thread;

  explicit Impl(ReviewStore& s) : store(s) { routes(); }

  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const NotFound& e) {
      send_json(res, 404, {{"error", e.what()}});
    } catch (const KindMismatch& e) {
      send_json(res, 409, {{"error", e.what()}});
    } catch (const Incomplete& e) {
      send_json(res, 409, {{"error", e.what()}});
    } catch (const InvalidPayload& e) {
      send_json(res, 400, {{"error", e.what()}});
    } catch (const json::exception& e) {
      send_json(res, 400, {{"error", std::string("bad JSON: ") + e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", e.what()}});
    }
  }

  static std::string annotator_of(const httplib::Request& req, const json* body = nullptr) {
    if (body && body->contains("annotator")) return body->at("annotator").get<std::string>();
    if (req.has_param("annotator")) return req.get_param_value("annotator");
    if (req.has_header("X-Annotator-Id")) return req.get_header_value("X-Annotator-Id");
    return {};
  }

  static json parse_body(const httplib::Request& req) {
    auto body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw InvalidPayload("request body must be a JSON object");
    return body;
  }

  void routes() {
    server.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, store.list()); });
    });

    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto body = parse_body(req);
        auto kind = kind_from_string(body.value("kind", std::string{}));
        auto id = body.value("id", std::string{});
        ReviewStore::Created created;
        if (kind == SessionKind::Verification) {
          created = store.start_verification(body.value("labels", std::vector<std::string>{}),
                                             body.value("sample_size", std::size_t{20}), body.value("seed", std::uint64_t{0}),
                                             id);
        } else {
          created = store.start_iaa(body.value("doc_ids", std::vector<std::string>{}), id);
        }
        send_json(res, 201, {{"session", created.summary}, {"warnings", created.warnings}});
      });
    });

    server.Get("/sessions/:id/next", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto annotator = annotator_of(req);
        if (annotator.empty()) throw InvalidPayload("annotator is required");
        const auto& id = req.path_params.at("id");
        auto item = store.next_item(id, annotator);
        if (item) send_json(res, 200, {{"done", false}, {"item", item_to_json(*item)}});
        else send_json(res, 200, {{"done", true}, {"summary", store.summary(id)}});
      });
    });

    server.Post("/sessions/:id/verdicts", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto body = parse_body(req);
        if (!body.contains("item_id") || !body.at("item_id").is_number_unsigned())
          throw InvalidPayload("\"item_id\" must be a non-negative integer");
        auto result = store.submit_verdict(req.path_params.at("id"), annotator_of(req, &body),
                                           body.at("item_id").get<std::size_t>(), body);
        send_json(res, 200, {{"summary", result.summary}, {"replaced", result.replaced}});
      });
    });

    server.Get("/sessions/:id/summary", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, store.summary(req.path_params.at("id"))); });
    });

    server.Get("/sessions/:id/export", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto& id = req.path_params.at("id");
        const bool partial = req.has_param("partial") && req.get_param_value("partial") != "0";
        if (store.kind_of(id) == SessionKind::Verification) {
          std::string body;
          for (const auto& v : store.export_verification(id, partial)) body += to_json(v).dump() + "\n";
          res.status = 200;
          res.set_content(body, "application/x-ndjson");
        } else {
          send_json(res, 200, store.export_iaa(id, partial).to_json());
        }
      });
    });
  }
};

ReviewServer::ReviewServer(ReviewStore& store) : impl_(std::make_unique<Impl>(store)) {}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::start(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

bool ReviewServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

void ReviewServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

} // namespace linequal::review
