#pragma once

#include "linequal/corpus.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace linequal {

inline constexpr std::string_view kClean = "Clean";
inline constexpr std::size_t kNumCategories = 9;

// Category names in canonical order; index 0 is always Clean.
inline constexpr std::array<std::string_view, kNumCategories> kCategories = {
    "Clean",
    "Formatting, Style & Errors",
    "Bibliographical & Citation References",
    "Promotional & Spam Content",
    "Contact & Identification Information",
    "Navigation & Interface Elements",
    "Technical Specifications & Metadata",
    "Legal & Administrative Content",
    "Offensive or Inappropriate Content",
};

std::optional<std::size_t> category_index(std::string_view name);

// A line with its descriptive label and, once grouped, its category.
struct LabeledLine {
  LineRecord line;
  std::string label;
  std::string category;  // empty until categorized

  bool operator==(const LabeledLine&) const = default;
};

nlohmann::json to_json(const LabeledLine& l);
LabeledLine labeled_line_from_json(const nlohmann::json& j, std::size_t line_number = 0);

std::vector<LabeledLine> read_labeled(const std::filesystem::path& path);
void write_labeled(const std::filesystem::path& path, const std::vector<LabeledLine>& lines);
std::string labeled_jsonl(const LabeledLine& l);

} // namespace linequal
