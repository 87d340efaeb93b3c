#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "macrt/lexicon.hpp"
#include "macrt/text.hpp"

namespace macrt {

// Continuous attack state. For each sensitive word w with k_w candidates the
// flat coordinate vector holds [beta1 (k_w) | beta2 (k_w) | alpha (k_w)];
// blocks follow the order of the sensitive words. Every coordinate stays in
// [0, 1].
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::vector<std::size_t> ks);  // all zeros

  // beta1 = 0, beta2 = 1, alpha_j = (k - j) / k: every candidate whole, in
  // ranked order.
  static ParamVector initial(std::vector<std::size_t> ks);

  std::size_t words() const noexcept { return ks_.size(); }
  std::size_t k(std::size_t word) const { return ks_.at(word); }
  const std::vector<std::size_t>& ks() const noexcept { return ks_; }
  std::size_t size() const noexcept { return coords_.size(); }

  std::span<double> coords() noexcept { return coords_; }
  std::span<const double> coords() const noexcept { return coords_; }
  std::span<const double> beta1(std::size_t word) const { return block(word, 0); }
  std::span<const double> beta2(std::size_t word) const { return block(word, 1); }
  std::span<const double> alpha(std::size_t word) const { return block(word, 2); }
  std::span<double> beta1(std::size_t word) { return block(word, 0); }
  std::span<double> beta2(std::size_t word) { return block(word, 1); }
  std::span<double> alpha(std::size_t word) { return block(word, 2); }

  void clamp();
  bool in_unit_cube() const noexcept;

  bool operator==(const ParamVector&) const = default;

 private:
  std::span<double> block(std::size_t word, std::size_t which);
  std::span<const double> block(std::size_t word, std::size_t which) const;

  std::vector<std::size_t> ks_;
  std::vector<std::size_t> offsets_;
  std::vector<double> coords_;
};

struct IndexPair {
  std::size_t mu1 = 0;
  std::size_t mu2 = 0;

  bool operator==(const IndexPair&) const = default;
};

// mu1 = floor(l * beta1); mu2 = floor(l * beta2) when beta2 >= beta1, else
// mu1. Inputs outside [0, 1] throw ContractViolation.
IndexPair compute_indices(double beta1, double beta2, std::size_t length);

struct Fragment {
  std::string text;
  std::size_t candidate = 0;
  std::size_t mu1 = 0;
  std::size_t mu2 = 0;
};

struct Substitute {
  std::string text;
  std::vector<Fragment> fragments;  // concatenation order

  bool empty() const noexcept { return text.empty(); }
};

// One fragment per candidate, concatenated without separator in descending
// alpha order (ties by candidate index).
Substitute build_substitute(std::span<const std::string> candidates, std::span<const double> beta1,
                            std::span<const double> beta2, std::span<const double> alpha);
Substitute build_substitute(const CandidateSet& candidates, std::span<const double> beta1,
                            std::span<const double> beta2, std::span<const double> alpha);

// Replaces the given word positions. Every sensitive index of `prompt` needs a
// substitute. Punctuation around a replaced word is preserved; a word with an
// empty substitute is dropped together with the whitespace before it.
AdversarialPrompt assemble(const Prompt& prompt, const std::map<std::size_t, std::string>& substitutes);

// Builds every sensitive word's substitute from `params` and assembles.
// candidates[i] belongs to prompt.sensitive()[i].
AdversarialPrompt render_params(const Prompt& prompt, std::span<const CandidateSet> candidates,
                                const ParamVector& params);

void to_json(nlohmann::json& j, const ParamVector& p);
void from_json(const nlohmann::json& j, ParamVector& p);

}  // namespace macrt
