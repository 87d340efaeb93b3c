#include "macrt/macaronic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "macrt/errors.hpp"

namespace macrt {

ParamVector::ParamVector(std::vector<std::size_t> ks) : ks_(std::move(ks)) {
  std::size_t total = 0;
  for (std::size_t k : ks_) {
    if (k == 0) throw ContractViolation("candidate set must not be empty");
    offsets_.push_back(total);
    total += 3 * k;
  }
  coords_.assign(total, 0.0);
}

ParamVector ParamVector::initial(std::vector<std::size_t> ks) {
  ParamVector p(std::move(ks));
  for (std::size_t w = 0; w < p.words(); ++w) {
    const std::size_t k = p.k(w);
    auto b2 = p.beta2(w);
    auto a = p.alpha(w);
    for (std::size_t j = 0; j < k; ++j) {
      b2[j] = 1.0;
      a[j] = static_cast<double>(k - j) / static_cast<double>(k);
    }
  }
  return p;
}

std::span<double> ParamVector::block(std::size_t word, std::size_t which) {
  const std::size_t k = ks_.at(word);
  return std::span<double>(coords_).subspan(offsets_[word] + which * k, k);
}

std::span<const double> ParamVector::block(std::size_t word, std::size_t which) const {
  const std::size_t k = ks_.at(word);
  return std::span<const double>(coords_).subspan(offsets_[word] + which * k, k);
}

void ParamVector::clamp() {
  for (double& c : coords_) c = std::isnan(c) ? 0.0 : std::clamp(c, 0.0, 1.0);
}

bool ParamVector::in_unit_cube() const noexcept {
  return std::all_of(coords_.begin(), coords_.end(), [](double c) { return c >= 0.0 && c <= 1.0; });
}

IndexPair compute_indices(double beta1, double beta2, std::size_t length) {
  if (!(beta1 >= 0.0 && beta1 <= 1.0) || !(beta2 >= 0.0 && beta2 <= 1.0)) {
    throw ContractViolation("boundary parameters must lie in [0, 1]");
  }
  const double l = static_cast<double>(length);
  IndexPair p;
  p.mu1 = static_cast<std::size_t>(std::floor(l * beta1));
  p.mu2 = beta2 >= beta1 ? static_cast<std::size_t>(std::floor(l * beta2)) : p.mu1;
  // l * 1.0 == l exactly, so these only guard rounding of l * beta near 1.
  p.mu1 = std::min(p.mu1, length);
  p.mu2 = std::clamp(p.mu2, p.mu1, length);
  return p;
}

Substitute build_substitute(std::span<const std::string> candidates, std::span<const double> beta1,
                            std::span<const double> beta2, std::span<const double> alpha) {
  const std::size_t k = candidates.size();
  if (beta1.size() != k || beta2.size() != k || alpha.size() != k) {
    throw ContractViolation("parameter vectors must match the candidate count");
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return alpha[a] > alpha[b]; });

  Substitute out;
  out.fragments.reserve(k);
  for (std::size_t j : order) {
    const std::size_t len = scalar_count(candidates[j]);
    const IndexPair idx = compute_indices(beta1[j], beta2[j], len);
    Fragment f{char_slice(candidates[j], idx.mu1, idx.mu2), j, idx.mu1, idx.mu2};
    out.text += f.text;
    out.fragments.push_back(std::move(f));
  }
  return out;
}

Substitute build_substitute(const CandidateSet& candidates, std::span<const double> beta1,
                            std::span<const double> beta2, std::span<const double> alpha) {
  const auto texts = candidates.texts();
  return build_substitute(std::span<const std::string>(texts), beta1, beta2, alpha);
}

AdversarialPrompt assemble(const Prompt& prompt, const std::map<std::size_t, std::string>& substitutes) {
  const auto& words = prompt.words();
  for (const auto& [index, text] : substitutes) {
    if (index >= words.size()) {
      throw ContractViolation("substitute for word " + std::to_string(index) + " but prompt has " +
                              std::to_string(words.size()) + " words");
    }
  }
  for (std::size_t index : prompt.sensitive_indices()) {
    if (!substitutes.count(index)) {
      throw ContractViolation("no substitute for sensitive word " + std::to_string(index));
    }
  }

  AdversarialPrompt out;
  out.base = prompt;
  out.substitutes.assign(substitutes.begin(), substitutes.end());

  // tokens[i] is the rendered token; separators are kept alongside so empty
  // tokens can be collapsed.
  std::vector<std::string> tokens(words.size());
  std::vector<std::string> seps = prompt.separators();
  std::vector<bool> drop_before(words.size(), false);
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto it = substitutes.find(i);
    if (it == substitutes.end()) {
      tokens[i] = words[i].token();
      continue;
    }
    tokens[i] = words[i].prefix + it->second + words[i].suffix;
    if (it->second.empty()) {
      out.removed.push_back(i);
      drop_before[i] = true;
    }
  }

  std::string rendered;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (drop_before[i]) {
      if (i > 0) {
        seps[i].clear();
      } else if (tokens[i].empty()) {
        seps[1].clear();
      }
    }
  }
  rendered = seps[0];
  for (std::size_t i = 0; i < words.size(); ++i) {
    rendered += tokens[i];
    rendered += seps[i + 1];
  }
  out.rendered = std::move(rendered);
  return out;
}

AdversarialPrompt render_params(const Prompt& prompt, std::span<const CandidateSet> candidates,
                                const ParamVector& params) {
  const auto& marks = prompt.sensitive();
  if (candidates.size() != marks.size() || params.words() != marks.size()) {
    throw ContractViolation("one candidate set and parameter block per sensitive word required");
  }
  std::map<std::size_t, std::string> subs;
  for (std::size_t w = 0; w < marks.size(); ++w) {
    if (candidates[w].k() != params.k(w)) throw ContractViolation("parameter block size differs from k");
    subs[marks[w].index] = build_substitute(candidates[w], params.beta1(w), params.beta2(w), params.alpha(w)).text;
  }
  return assemble(prompt, subs);
}

void to_json(nlohmann::json& j, const ParamVector& p) {
  j = nlohmann::json::array();
  for (std::size_t w = 0; w < p.words(); ++w) {
    const auto b1 = p.beta1(w), b2 = p.beta2(w), a = p.alpha(w);
    j.push_back({{"beta1", std::vector<double>(b1.begin(), b1.end())},
                 {"beta2", std::vector<double>(b2.begin(), b2.end())},
                 {"alpha", std::vector<double>(a.begin(), a.end())}});
  }
}

void from_json(const nlohmann::json& j, ParamVector& p) {
  std::vector<std::size_t> ks;
  for (const auto& block : j) ks.push_back(block.at("beta1").size());
  p = ParamVector(ks);
  for (std::size_t w = 0; w < ks.size(); ++w) {
    const auto b1 = j[w].at("beta1").get<std::vector<double>>();
    const auto b2 = j[w].at("beta2").get<std::vector<double>>();
    const auto a = j[w].at("alpha").get<std::vector<double>>();
    if (b2.size() != ks[w] || a.size() != ks[w]) throw ContractViolation("ragged parameter block");
    std::copy(b1.begin(), b1.end(), p.beta1(w).begin());
    std::copy(b2.begin(), b2.end(), p.beta2(w).begin());
    std::copy(a.begin(), a.end(), p.alpha(w).begin());
  }
}

}  // namespace macrt
