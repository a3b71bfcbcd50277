#pragma once

#include "linequal/error.hpp"
#include "linequal/labeled.hpp"
#include "linequal/labeler.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace linequal {

class SchemeError : public Error {
public:
  enum class Kind { UnassignedLabel, DuplicateAssignment, UnknownCategory };
  SchemeError(Kind kind, std::vector<std::string> labels);
  Kind kind() const { return kind_; }
  const std::vector<std::string>& labels() const { return labels_; }

private:
  Kind kind_;
  std::vector<std::string> labels_;
};

// Many-to-one grouping of descriptive labels into the nine categories.
class CategoryScheme {
public:
  // Parses {category: [labels...]}. Rejects unknown category names and
  // labels listed under more than one category. "Clean" is always mapped
  // to the Clean category.
  static CategoryScheme from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  // Throws SchemeError(UnassignedLabel) listing every label not covered.
  void require_covers(const std::vector<std::string>& labels) const;

  const std::string* category_of(const std::string& label) const;
  std::size_t num_categories() const { return kNumCategories; }
  const std::map<std::string, std::string>& mapping() const { return mapping_; }

private:
  std::map<std::string, std::string> mapping_;
};

// Loads and validates a scheme file; when `registry` is given every label in
// it must be covered.
CategoryScheme load_category_scheme(const std::filesystem::path& path, const LabelRegistry* registry = nullptr);

// Rebuilds registry counts from labeled lines (presentation order = first
// appearance).
LabelRegistry registry_from_lines(const std::vector<LabeledLine>& lines);

// Relabels Clean every line whose label occurs fewer than `min_count` times
// and retires those labels. Returns the retired labels.
std::vector<std::string> remap_infrequent(std::vector<LabeledLine>& lines, LabelRegistry& registry,
                                          std::size_t min_count = 2);

enum class VerdictDecision { Keep, RemapToClean };

struct VerificationVerdict {
  std::string label;
  VerdictDecision decision = VerdictDecision::Keep;
  std::vector<LineKey> evidence;
  std::string reviewer;
  std::string timestamp;  // ISO-8601 UTC, compared lexicographically

  bool operator==(const VerificationVerdict&) const = default;
};

nlohmann::json to_json(const VerificationVerdict& v);
VerificationVerdict verdict_from_json(const nlohmann::json& j);
std::vector<VerificationVerdict> read_verdicts(const std::filesystem::path& path);
void write_verdicts(const std::filesystem::path& path, const std::vector<VerificationVerdict>& verdicts);

// One effective verdict per label: latest timestamp wins, ties go to the
// lexicographically greatest reviewer id.
std::map<std::string, VerificationVerdict> resolve_verdicts(const std::vector<VerificationVerdict>& verdicts);

// Applies the effective verdicts. Remapped labels are retired; a verdict on a
// retired label is a no-op, so applying the same verdicts twice is harmless.
// Returns the labels remapped by this call.
std::vector<std::string> apply_verdicts(std::vector<LabeledLine>& lines, LabelRegistry& registry,
                                        const std::vector<VerificationVerdict>& verdicts);

using CategoryTally = std::array<std::size_t, kNumCategories>;

// Sets `category` on every line and returns the per-category line counts in
// kCategories order.
CategoryTally categorize_corpus(std::vector<LabeledLine>& lines, const CategoryScheme& scheme);

std::string format_tally(const CategoryTally& tally);

} // namespace linequal
