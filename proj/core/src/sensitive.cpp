#include "macrt/sensitive.hpp"

#include <fstream>

#include "macrt/errors.hpp"

namespace macrt {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

Blacklist::Blacklist(const std::vector<std::string>& terms, std::string source) : source_(std::move(source)) {
  for (const auto& t : terms) {
    auto lowered = to_lower(trim(t));
    if (!lowered.empty()) terms_.insert(std::move(lowered));
  }
}

Blacklist Blacklist::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open blacklist " + path);
  std::vector<std::string> terms;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto term = trim(line);
    if (term.empty()) continue;
    if (!is_valid_utf8(term)) throw ParseError(path, line_no, "invalid UTF-8");
    terms.push_back(std::move(term));
  }
  Blacklist bl(terms, path);
  if (bl.empty()) throw ParseError(path, 0, "blacklist has no terms");
  return bl;
}

bool Blacklist::contains(std::string_view word) const {
  if (word.empty()) return false;
  return terms_.count(to_lower(word)) > 0;
}

HarmConceptBank::HarmConceptBank(std::vector<HarmConcept> concepts) : concepts_(std::move(concepts)) {
  for (const auto& c : concepts_) {
    if (c.embedding.dim() != concepts_.front().embedding.dim()) {
      throw ContractViolation("concept '" + c.label + "' has a different embedding dimension");
    }
  }
}

HarmConceptBank HarmConceptBank::from_labels(const EmbeddingProvider& provider,
                                             const std::vector<std::string>& labels) {
  std::vector<HarmConcept> concepts;
  concepts.reserve(labels.size());
  for (const auto& label : labels) concepts.push_back({label, provider.embed(label)});
  return HarmConceptBank(std::move(concepts));
}

SimilarityHit HarmConceptBank::nearest(const Embedding& e) const {
  if (concepts_.empty()) throw ContractViolation("nearest() on an empty concept bank");
  SimilarityHit best{concepts_.front().label, cosine(e, concepts_.front().embedding)};
  for (std::size_t j = 1; j < concepts_.size(); ++j) {
    const double s = cosine(e, concepts_[j].embedding);
    if (s > best.score) best = {concepts_[j].label, s};
  }
  return best;
}

Prompt identify(const Prompt& prompt, const Blacklist& blacklist, const HarmConceptBank& bank,
                SensitivityThreshold threshold, const EmbeddingProvider& provider) {
  std::vector<SensitiveMark> marks;
  const auto& words = prompt.words();
  for (std::size_t i = 0; i < words.size(); ++i) {
    SensitiveMark mark{i, blacklist.contains(words[i].text), std::nullopt};
    if (!bank.empty() && words[i].char_len >= kMinSimilarityWordLength) {
      SimilarityHit hit = bank.nearest(provider.embed(to_lower(words[i].text)));
      if (hit.score > threshold.tau_sim) mark.similarity = std::move(hit);
    }
    if (mark.blacklist || mark.similarity) marks.push_back(std::move(mark));
  }
  return prompt.with_sensitive(std::move(marks));
}

}  // namespace macrt
