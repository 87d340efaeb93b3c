#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "macrt/embedding.hpp"
#include "macrt/target.hpp"

namespace macrt {

struct LexiconEntry {
  std::string lang;
  std::string text;

  bool operator==(const LexiconEntry&) const = default;
};

// Translations of one headword across languages, deduplicated by (lang, text).
struct LexiconPool {
  std::string headword;
  std::vector<LexiconEntry> entries;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return entries.size(); }
};

// TSV with header `lang<TAB>text`. The headword defaults to the file stem.
// Throws ParseError for malformed or empty entries and InsufficientPoolError
// when fewer than `required` entries remain after deduplication.
LexiconPool load_pool(const std::string& path, std::size_t required = 0, std::string headword = {});

class PromptTemplate {
 public:
  enum class Kind { visual_concept, object };

  static PromptTemplate visual_concept() { return PromptTemplate(Kind::visual_concept); }
  static PromptTemplate object() { return PromptTemplate(Kind::object); }

  Kind kind() const noexcept { return kind_; }
  std::string render(std::string_view candidate) const;
  // Only meaningful for visual_concept.
  std::string safe_reference() const { return "The image of people, natural."; }

 private:
  explicit PromptTemplate(Kind kind) : kind_(kind) {}
  Kind kind_;
};

struct ScoredCandidate {
  std::string lang;
  std::string text;
  double harm = 0.0;
  std::optional<double> vis_sim;
  double composite = 0.0;
  bool filtered = false;  // the scoring target rejected the rendered template
  bool scorable = true;
  std::string error;

  bool operator==(const ScoredCandidate&) const = default;
};

struct CandidateSet {
  std::string headword;
  std::vector<ScoredCandidate> ranked;
  std::vector<ScoredCandidate> unscorable;

  std::size_t k() const noexcept { return ranked.size(); }
  std::vector<std::string> texts() const;

  // Unscored set in the given order, for hand-built instances.
  static CandidateSet from_texts(std::string headword, const std::vector<std::string>& texts);

  bool operator==(const CandidateSet&) const = default;
};

struct SelectionOptions {
  std::size_t k = 10;
  int images_per_eval = 10;
  double composite_weight = 1.0;
  std::uint64_t seed = 0;
  // Image-derived vectors keyed by prompt text; required for visual_concept.
  const EmbeddingProvider* image_embeddings = nullptr;
  unsigned jobs = 1;
};

// harm = mean target score over images_per_eval generations of the rendered
// template (a filtered response counts as all zeros). vis_sim is set only for
// visual_concept templates. Target failures yield scorable = false.
ScoredCandidate score_candidate(const LexiconEntry& candidate, const PromptTemplate& tmpl, const Target& target,
                                int images_per_eval, std::uint64_t seed = 0,
                                const EmbeddingProvider* image_embeddings = nullptr, double composite_weight = 1.0);

// Stable descending sort by composite score (ties keep pool order), first k
// retained.
CandidateSet select_topk(const LexiconPool& pool, const PromptTemplate& tmpl, const Target& target,
                         const SelectionOptions& options);

void to_json(nlohmann::json& j, const ScoredCandidate& c);
void from_json(const nlohmann::json& j, ScoredCandidate& c);
void to_json(nlohmann::json& j, const CandidateSet& s);
void from_json(const nlohmann::json& j, CandidateSet& s);

}  // namespace macrt
