#pragma once

#include "linequal/error.hpp"
#include "linequal/labeled.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace linequal {

struct AnnotationItem {
  LineKey line;
  std::string text;
  std::string llm_label;  // one of the nine categories

  bool operator==(const AnnotationItem&) const = default;
};

struct AnnotatorVerdict {
  bool agrees = true;
  std::optional<std::string> corrected_label;  // present iff !agrees

  bool operator==(const AnnotatorVerdict&) const = default;
};

struct AnnotationSession {
  std::string session_id;
  std::vector<AnnotationItem> items;
  // annotator id -> item index -> verdict
  std::map<std::string, std::map<std::size_t, AnnotatorVerdict>> verdicts;

  nlohmann::json to_json() const;
  static AnnotationSession from_json(const nlohmann::json& j);
  static AnnotationSession load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool operator==(const AnnotationSession&) const = default;
};

// Items are the categorized lines of `doc_ids`, in sample order and then
// document order.
AnnotationSession create_session(const std::vector<std::string>& doc_ids, const std::vector<LabeledLine>& categorized,
                                 std::string session_id = "iaa");

// Seeded sample of `n` distinct document ids, in corpus order of first appearance.
std::vector<std::string> sample_documents(const std::vector<LabeledLine>& categorized, std::size_t n,
                                          std::uint64_t seed);

// Throws when the verdict breaks the agree/correction invariant or the
// correction is not a category. Re-recording replaces the earlier verdict.
void validate_verdict(const AnnotatorVerdict& verdict);
void record_verdict(AnnotationSession& session, const std::string& annotator, std::size_t item_index,
                    const AnnotatorVerdict& verdict);

struct KappaResult {
  double kappa = 0;
  double observed = 0;  // p_o
  double expected = 0;  // p_e
  bool degenerate = false;  // p_e == 1
};

// Cohen's kappa from observed agreement and marginal-product chance agreement.
// When p_e == 1 the result is 1 for perfect agreement and 0 otherwise.
KappaResult cohens_kappa_detail(const std::vector<std::string>& a, const std::vector<std::string>& b);
double cohens_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b);

// "Clean" stays, everything else becomes "Non-clean".
std::vector<std::string> binarize(const std::vector<std::string>& labels);

struct AnnotatorAgreement {
  std::string annotator;
  KappaResult full;
  KappaResult binary;
};

struct AgreementReport {
  std::vector<AnnotatorAgreement> annotators;
  double average_full = 0;
  double average_binary = 0;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Annotator label sequence: the LLM label where they agree, their
// correction otherwise.
std::vector<std::string> annotator_labels(const AnnotationSession& session, const std::string& annotator);

// Requires a verdict on every item from each annotator in the session.
AgreementReport agreement_report(const AnnotationSession& session);

} // namespace linequal
