#include "linequal/agreement.hpp"

#include "linequal/io.hpp"
#include "linequal/labeler.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace linequal {

using nlohmann::json;

json AnnotationSession::to_json() const {
  json items_json = json::array();
  for (const auto& it : items)
    items_json.push_back({{"doc_id", it.line.doc_id},
                          {"line_index", it.line.line_index},
                          {"segment_index", it.line.segment_index},
                          {"text", it.text},
                          {"llm_label", it.llm_label}});
  json verdicts_json = json::object();
  for (const auto& [annotator, by_item] : verdicts) {
    json v = json::object();
    for (const auto& [index, verdict] : by_item) {
      json entry = {{"agrees", verdict.agrees}};
      if (verdict.corrected_label) entry["corrected_label"] = *verdict.corrected_label;
      v[std::to_string(index)] = entry;
    }
    verdicts_json[annotator] = v;
  }
  return {{"session_id", session_id}, {"items", items_json}, {"verdicts", verdicts_json}};
}

AnnotationSession AnnotationSession::from_json(const json& j) {
  AnnotationSession s;
  s.session_id = j.at("session_id").get<std::string>();
  for (const auto& it : j.at("items"))
    s.items.push_back({{it.at("doc_id").get<std::string>(), it.at("line_index").get<std::size_t>(),
                        it.value("segment_index", std::size_t{0})},
                       it.value("text", std::string{}),
                       it.at("llm_label").get<std::string>()});
  const json verdicts = j.value("verdicts", json::object());
  for (const auto& [annotator, by_item] : verdicts.items()) {
    for (const auto& [index, entry] : by_item.items()) {
      AnnotatorVerdict v;
      v.agrees = entry.at("agrees").get<bool>();
      if (entry.contains("corrected_label") && !entry.at("corrected_label").is_null())
        v.corrected_label = entry.at("corrected_label").get<std::string>();
      record_verdict(s, annotator, std::stoul(index), v);
    }
  }
  return s;
}

AnnotationSession AnnotationSession::load(const std::filesystem::path& path) {
  auto j = json::parse(io::read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error("malformed session file " + path.string());
  return from_json(j);
}

void AnnotationSession::save(const std::filesystem::path& path) const {
  io::write_file_atomic(path, to_json().dump(2) + "\n");
}

AnnotationSession create_session(const std::vector<std::string>& doc_ids, const std::vector<LabeledLine>& categorized,
                                 std::string session_id) {
  if (doc_ids.empty()) throw Error("cannot create an annotation session from an empty document sample");
  std::unordered_map<std::string, std::vector<const LabeledLine*>> by_doc;
  for (const auto& l : categorized) by_doc[l.line.doc_id].push_back(&l);

  AnnotationSession s;
  s.session_id = std::move(session_id);
  for (const auto& id : doc_ids) {
    auto it = by_doc.find(id);
    if (it == by_doc.end()) throw Error("document \"" + id + "\" has no labeled lines");
    auto lines = it->second;
    std::stable_sort(lines.begin(), lines.end(),
                     [](const LabeledLine* x, const LabeledLine* y) { return x->line.key() < y->line.key(); });
    for (const auto* l : lines) {
      if (!category_index(l->category))
        throw Error("line " + to_string(l->line.key()) + " has no category; run refine first");
      s.items.push_back({l->line.key(), l->line.text, l->category});
    }
  }
  return s;
}

std::vector<std::string> sample_documents(const std::vector<LabeledLine>& categorized, std::size_t n,
                                          std::uint64_t seed) {
  std::vector<std::string> ids;
  std::unordered_set<std::string> seen;
  for (const auto& l : categorized)
    if (seen.insert(l.line.doc_id).second) ids.push_back(l.line.doc_id);
  std::vector<std::size_t> idx(ids.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Shuffler rng(seed);
  rng.shuffle(idx);
  idx.resize(std::min(n, idx.size()));
  std::sort(idx.begin(), idx.end());
  std::vector<std::string> out;
  for (auto i : idx) out.push_back(ids[i]);
  return out;
}

void validate_verdict(const AnnotatorVerdict& verdict) {
  if (!verdict.agrees && !verdict.corrected_label) throw Error("a disagreement needs a corrected label");
  if (verdict.agrees && verdict.corrected_label) throw Error("an agreement must not carry a corrected label");
  if (verdict.corrected_label && !category_index(*verdict.corrected_label))
    throw Error("corrected label \"" + *verdict.corrected_label + "\" is not one of the nine categories");
}

void record_verdict(AnnotationSession& session, const std::string& annotator, std::size_t item_index,
                    const AnnotatorVerdict& verdict) {
  if (annotator.empty()) throw Error("annotator id must not be empty");
  if (item_index >= session.items.size())
    throw Error("item index " + std::to_string(item_index) + " out of range (session has " +
                std::to_string(session.items.size()) + " items)");
  validate_verdict(verdict);
  session.verdicts[annotator][item_index] = verdict;
}

KappaResult cohens_kappa_detail(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size()) throw Error("kappa: label sequences differ in length");
  if (a.empty()) throw Error("kappa: empty label sequences");
  const double n = static_cast<double>(a.size());
  std::unordered_map<std::string, double> ca, cb;
  double agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca[a[i]] += 1;
    cb[b[i]] += 1;
    if (a[i] == b[i]) agree += 1;
  }
  KappaResult r;
  r.observed = agree / n;
  // Sum in a fixed (sorted) order so the result does not depend on hashing.
  std::map<std::string, double> sorted(ca.begin(), ca.end());
  for (const auto& [label, count] : sorted) {
    auto it = cb.find(label);
    if (it != cb.end()) r.expected += (count / n) * (it->second / n);
  }
  if (r.expected >= 1.0) {
    r.degenerate = true;
    r.kappa = r.observed >= 1.0 ? 1.0 : 0.0;
    return r;
  }
  r.kappa = (r.observed - r.expected) / (1.0 - r.expected);
  return r;
}

double cohens_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return cohens_kappa_detail(a, b).kappa;
}

std::vector<std::string> binarize(const std::vector<std::string>& labels) {
  std::vector<std::string> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(l == kClean ? std::string(kClean) : std::string("Non-clean"));
  return out;
}

std::vector<std::string> annotator_labels(const AnnotationSession& session, const std::string& annotator) {
  auto it = session.verdicts.find(annotator);
  if (it == session.verdicts.end()) throw Error("annotator \"" + annotator + "\" has no verdicts");
  std::vector<std::string> labels;
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < session.items.size(); ++i) {
    auto v = it->second.find(i);
    if (v == it->second.end()) {
      missing.push_back(i);
      continue;
    }
    labels.push_back(v->second.agrees ? session.items[i].llm_label : *v->second.corrected_label);
  }
  if (!missing.empty()) {
    std::string msg = "annotator \"" + annotator + "\" is missing " + std::to_string(missing.size()) + " item(s):";
    for (std::size_t k = 0; k < std::min<std::size_t>(missing.size(), 10); ++k) msg += " " + std::to_string(missing[k]);
    if (missing.size() > 10) msg += " ...";
    throw Error(msg);
  }
  return labels;
}

AgreementReport agreement_report(const AnnotationSession& session) {
  if (session.verdicts.empty()) throw Error("session has no annotators");
  std::vector<std::string> llm;
  for (const auto& it : session.items) llm.push_back(it.llm_label);
  const auto llm_binary = binarize(llm);

  AgreementReport report;
  for (const auto& [annotator, by_item] : session.verdicts) {
    auto labels = annotator_labels(session, annotator);
    report.annotators.push_back(
        {annotator, cohens_kappa_detail(labels, llm), cohens_kappa_detail(binarize(labels), llm_binary)});
  }
  for (const auto& a : report.annotators) {
    report.average_full += a.full.kappa;
    report.average_binary += a.binary.kappa;
  }
  report.average_full /= static_cast<double>(report.annotators.size());
  report.average_binary /= static_cast<double>(report.annotators.size());
  return report;
}

json AgreementReport::to_json() const {
  auto kappa_json = [](const KappaResult& k) {
    return json{{"kappa", k.kappa}, {"observed", k.observed}, {"expected", k.expected}, {"degenerate", k.degenerate}};
  };
  json per = json::array();
  for (const auto& a : annotators)
    per.push_back({{"annotator", a.annotator}, {"all_labels", kappa_json(a.full)}, {"clean_vs_nonclean", kappa_json(a.binary)}});
  return {{"annotators", per}, {"average_all_labels", average_full}, {"average_clean_vs_nonclean", average_binary}};
}

std::string AgreementReport::to_text() const {
  std::ostringstream out;
  char buf[64];
  out << "                     ";
  for (const auto& a : annotators) {
    std::snprintf(buf, sizeof(buf), " %8s", a.annotator.substr(0, 8).c_str());
    out << buf;
  }
  out << "     Avg.\n";
  auto row = [&](const char* name, auto pick, double avg) {
    std::snprintf(buf, sizeof(buf), "%-21s", name);
    out << buf;
    for (const auto& a : annotators) {
      std::snprintf(buf, sizeof(buf), " %8.2f", pick(a));
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), " %8.2f\n", avg);
    out << buf;
  };
  row("All labels", [](const AnnotatorAgreement& a) { return a.full.kappa; }, average_full);
  row("Clean vs. Non-clean", [](const AnnotatorAgreement& a) { return a.binary.kappa; }, average_binary);
  return out.str();
}

} // namespace linequal
