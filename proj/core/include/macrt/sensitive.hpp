#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "macrt/embedding.hpp"
#include "macrt/text.hpp"

namespace macrt {

class Blacklist {
 public:
  Blacklist() = default;
  explicit Blacklist(const std::vector<std::string>& terms, std::string source = {});

  // One term per line; blank lines and '#' comments ignored. A file with no
  // terms is rejected.
  static Blacklist load(const std::string& path);

  bool contains(std::string_view word) const;  // case-insensitive
  bool empty() const noexcept { return terms_.empty(); }
  const std::set<std::string>& terms() const noexcept { return terms_; }
  const std::string& source() const noexcept { return source_; }

 private:
  std::set<std::string> terms_;
  std::string source_;
};

struct HarmConcept {
  std::string label;
  Embedding embedding;
};

class HarmConceptBank {
 public:
  HarmConceptBank() = default;
  explicit HarmConceptBank(std::vector<HarmConcept> concepts);

  // Embeds each label with `provider`.
  static HarmConceptBank from_labels(const EmbeddingProvider& provider, const std::vector<std::string>& labels);

  bool empty() const noexcept { return concepts_.empty(); }
  const std::vector<HarmConcept>& concepts() const noexcept { return concepts_; }

  // Argmax concept by cosine; bank must be nonempty.
  SimilarityHit nearest(const Embedding& e) const;

 private:
  std::vector<HarmConcept> concepts_;
};

struct SensitivityThreshold {
  double tau_sim = 0.5;
};

// Words with fewer scalar values than this are never flagged by similarity.
inline constexpr std::size_t kMinSimilarityWordLength = 2;

// Flags positions whose detached word text is blacklisted (case-insensitive
// whole-word match) and positions whose nearest concept has cosine > tau_sim.
// An empty bank disables the similarity rule.
Prompt identify(const Prompt& prompt, const Blacklist& blacklist, const HarmConceptBank& bank,
                SensitivityThreshold threshold, const EmbeddingProvider& provider);

}  // namespace macrt
