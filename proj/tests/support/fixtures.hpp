#pragma once

// Synthetic corpora shared by the unit tests and the acceptance runner.

#include "linequal/filter.hpp"
#include "linequal/labeled.hpp"
#include "linequal/labeler.hpp"
#include "linequal/taxonomy.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fixture {

// Lowercase filler words of 2-8 letters.
std::string random_words(std::mt19937_64& rng, std::size_t count);

// Nine classes; each line carries one of its class's upper-case marker tokens
// among random lowercase filler. Lines are spread over documents of ten.
std::vector<linequal::LabeledLine> marker_corpus(std::size_t n, std::uint64_t seed);

// Documents with 1-12 lines of random prose, some lines longer than 200
// characters with sentence punctuation.
std::vector<linequal::Document> random_documents(std::size_t n, std::uint64_t seed);
void write_documents(const std::filesystem::path& path, const std::vector<linequal::Document>& docs);

// Deterministic stand-in for the chat endpoint. Labels depend only on the
// line text. Batches whose first line text hashes to 0 mod 7 answer with the
// wrong count on attempt 0; lines containing "unlabelable" never get a valid
// reply.
std::string mock_reply(const linequal::LabelRequest& request);

// Labeled lines sized like the reference labeling run: 328,472 lines,
// 274,343 initially Clean, 547 descriptive labels of which 142 are
// singletons and 23 hold 8,782 lines that human review sends back to Clean.
// The 382 surviving labels carry the per-category line counts of the
// reference category table.
struct TaxonomyFixture {
  std::vector<linequal::LabeledLine> lines;
  nlohmann::json scheme;  // category -> labels
  std::vector<linequal::VerificationVerdict> verdicts;
};
TaxonomyFixture reference_taxonomy();

inline constexpr std::size_t kTableCounts[linequal::kNumCategories] = {283267, 13150, 8768, 7339, 3898,
                                                                         3327,   3298,  2992, 2433};
inline constexpr std::size_t kTableTotal = 328472;

// Documents with `lines_per_doc` scored lines each; exactly round(fraction *
// total) lines score below 0.5, the rest in [0.5, 1].
std::vector<linequal::ScoredDocument> scored_corpus(std::size_t docs, std::size_t lines_per_doc, double below_fraction,
                                                    std::uint64_t seed);

// Clean probability from a hash of the line text, so any partition of the
// corpus scores every line identically.
class HashScorer : public linequal::LineScorer {
public:
  std::vector<linequal::ClassDistribution> score(std::span<const linequal::LineRecord> batch) const override;
  std::string identity() const override { return "hash-scorer"; }
};

} // namespace fixture
