#include "linequal/taxonomy.hpp"

#include "linequal/io.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace linequal {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + ("\"" + s + "\"");
  return out;
}

std::string describe(SchemeError::Kind kind) {
  switch (kind) {
    case SchemeError::Kind::UnassignedLabel: return "unassigned labels";
    case SchemeError::Kind::DuplicateAssignment: return "labels assigned to more than one category";
    case SchemeError::Kind::UnknownCategory: return "unknown categories";
  }
  return "scheme error";
}

} // namespace

SchemeError::SchemeError(Kind kind, std::vector<std::string> labels)
    : Error(describe(kind) + ": " + join(labels)), kind_(kind), labels_(std::move(labels)) {}

CategoryScheme CategoryScheme::from_json(const json& j) {
  if (!j.is_object()) throw Error("category scheme must be a JSON object {category: [labels]}");
  std::vector<std::string> unknown;
  std::map<std::string, std::set<std::string>> homes;
  for (const auto& [category, labels] : j.items()) {
    if (!category_index(category)) {
      unknown.push_back(category);
      continue;
    }
    for (const auto& raw : labels) homes[canonicalize_label(raw.get<std::string>())].insert(category);
  }
  if (!unknown.empty()) throw SchemeError(SchemeError::Kind::UnknownCategory, unknown);

  std::vector<std::string> duplicated;
  CategoryScheme scheme;
  for (const auto& [label, cats] : homes) {
    bool clean_elsewhere = label == kClean && !(cats.size() == 1 && *cats.begin() == kClean);
    if (cats.size() > 1 || clean_elsewhere) {
      duplicated.push_back(label);
      continue;
    }
    scheme.mapping_[label] = *cats.begin();
  }
  if (!duplicated.empty()) throw SchemeError(SchemeError::Kind::DuplicateAssignment, duplicated);
  scheme.mapping_[std::string(kClean)] = std::string(kClean);
  return scheme;
}

json CategoryScheme::to_json() const {
  json out = json::object();
  for (auto name : kCategories) out[std::string(name)] = json::array();
  for (const auto& [label, category] : mapping_) out[category].push_back(label);
  return out;
}

void CategoryScheme::require_covers(const std::vector<std::string>& labels) const {
  std::vector<std::string> missing;
  for (const auto& l : labels)
    if (!mapping_.count(l)) missing.push_back(l);
  std::sort(missing.begin(), missing.end());
  missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
  if (!missing.empty()) throw SchemeError(SchemeError::Kind::UnassignedLabel, missing);
}

const std::string* CategoryScheme::category_of(const std::string& label) const {
  auto it = mapping_.find(label);
  return it == mapping_.end() ? nullptr : &it->second;
}

CategoryScheme load_category_scheme(const std::filesystem::path& path, const LabelRegistry* registry) {
  auto j = json::parse(io::read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error("malformed scheme file " + path.string());
  auto scheme = CategoryScheme::from_json(j);
  if (registry) {
    std::vector<std::string> labels;
    for (const auto& e : registry->entries()) labels.push_back(e.name);
    scheme.require_covers(labels);
  }
  return scheme;
}

LabelRegistry registry_from_lines(const std::vector<LabeledLine>& lines) {
  LabelRegistry r;
  for (const auto& l : lines) r.add(canonicalize_label(l.label), 1);
  return r;
}

std::vector<std::string> remap_infrequent(std::vector<LabeledLine>& lines, LabelRegistry& registry,
                                          std::size_t min_count) {
  if (min_count < 1) throw Error("min_count must be >= 1");
  std::unordered_set<std::string> rare;
  std::vector<std::string> removed;
  for (const auto& e : registry.entries()) {
    if (e.name != kClean && e.count < min_count) {
      rare.insert(e.name);
      removed.push_back(e.name);
    }
  }
  for (auto& l : lines)
    if (rare.count(l.label)) l.label = std::string(kClean);
  for (const auto& name : removed) registry.merge_into_clean(name);
  return removed;
}

json to_json(const VerificationVerdict& v) {
  json evidence = json::array();
  for (const auto& k : v.evidence)
    evidence.push_back({{"doc_id", k.doc_id}, {"line_index", k.line_index}, {"segment_index", k.segment_index}});
  return {{"label", v.label},
          {"decision", v.decision == VerdictDecision::Keep ? "keep" : "remap_to_clean"},
          {"evidence", evidence},
          {"reviewer", v.reviewer},
          {"timestamp", v.timestamp}};
}

VerificationVerdict verdict_from_json(const json& j) {
  VerificationVerdict v;
  v.label = canonicalize_label(j.at("label").get<std::string>());
  auto decision = j.at("decision").get<std::string>();
  if (decision == "keep") v.decision = VerdictDecision::Keep;
  else if (decision == "remap_to_clean") v.decision = VerdictDecision::RemapToClean;
  else throw Error("unknown verdict decision \"" + decision + "\"");
  for (const auto& e : j.value("evidence", json::array()))
    v.evidence.push_back({e.at("doc_id").get<std::string>(), e.at("line_index").get<std::size_t>(),
                          e.value("segment_index", std::size_t{0})});
  v.reviewer = j.value("reviewer", std::string{});
  v.timestamp = j.value("timestamp", std::string{});
  return v;
}

std::vector<VerificationVerdict> read_verdicts(const std::filesystem::path& path) {
  std::vector<VerificationVerdict> out;
  io::for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (line.empty()) return;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw CorpusError("malformed verdict record", number);
    out.push_back(verdict_from_json(j));
  });
  return out;
}

void write_verdicts(const std::filesystem::path& path, const std::vector<VerificationVerdict>& verdicts) {
  std::string buf;
  for (const auto& v : verdicts) buf += to_json(v).dump() + "\n";
  io::write_file_atomic(path, buf);
}

std::map<std::string, VerificationVerdict> resolve_verdicts(const std::vector<VerificationVerdict>& verdicts) {
  std::map<std::string, VerificationVerdict> effective;
  for (const auto& v : verdicts) {
    auto it = effective.find(v.label);
    if (it == effective.end()) {
      effective.emplace(v.label, v);
      continue;
    }
    const auto& cur = it->second;
    if (std::tie(v.timestamp, v.reviewer) >= std::tie(cur.timestamp, cur.reviewer)) it->second = v;
  }
  return effective;
}

std::vector<std::string> apply_verdicts(std::vector<LabeledLine>& lines, LabelRegistry& registry,
                                        const std::vector<VerificationVerdict>& verdicts) {
  auto effective = resolve_verdicts(verdicts);
  std::vector<std::string> unknown;
  for (const auto& [label, v] : effective)
    if (!registry.contains(label) && !registry.is_retired(label)) unknown.push_back(label);
  if (!unknown.empty()) throw Error("verdicts reference unknown labels: " + join(unknown));

  std::unordered_set<std::string> remap;
  std::vector<std::string> remapped;
  for (const auto& [label, v] : effective) {
    if (v.decision != VerdictDecision::RemapToClean || label == kClean || registry.is_retired(label)) continue;
    remap.insert(label);
    remapped.push_back(label);
  }
  for (auto& l : lines)
    if (remap.count(l.label)) l.label = std::string(kClean);
  for (const auto& label : remapped) registry.merge_into_clean(label);
  return remapped;
}

CategoryTally categorize_corpus(std::vector<LabeledLine>& lines, const CategoryScheme& scheme) {
  CategoryTally tally{};
  for (auto& l : lines) {
    const auto* category = scheme.category_of(l.label);
    if (!category) throw SchemeError(SchemeError::Kind::UnassignedLabel, {l.label});
    l.category = *category;
    ++tally[*category_index(*category)];
  }
  return tally;
}

std::string format_tally(const CategoryTally& tally) {
  std::size_t total = 0;
  for (auto c : tally) total += c;
  std::ostringstream out;
  char buf[160];
  for (std::size_t i = 0; i < kNumCategories; ++i) {
    double pct = total ? 100.0 * static_cast<double>(tally[i]) / static_cast<double>(total) : 0.0;
    std::snprintf(buf, sizeof(buf), "%-40s %10zu %7.2f\n", std::string(kCategories[i]).c_str(), tally[i], pct);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "%-40s %10zu %7.2f\n", "Total", total, total ? 100.0 : 0.0);
  out << buf;
  return out.str();
}

} // namespace linequal
