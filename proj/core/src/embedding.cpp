#include "macrt/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "macrt/errors.hpp"
#include "macrt/rng.hpp"
#include "macrt/text.hpp"

namespace macrt {

bool Embedding::is_zero() const noexcept {
  return std::all_of(vector.begin(), vector.end(), [](double v) { return v == 0.0; });
}

HashNgramProvider::HashNgramProvider(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw ContractViolation("embedding dimension must be positive");
}

Embedding HashNgramProvider::embed(std::string_view text) const {
  Embedding e;
  e.vector.assign(dim_, 0.0);
  if (text.empty()) return e;

  std::u32string padded = U"^";
  padded += decode_utf8(text);
  padded += U'$';

  std::string gram;
  for (std::size_t n = 2; n <= 3; ++n) {
    if (padded.size() < n) continue;
    for (std::size_t i = 0; i + n <= padded.size(); ++i) {
      gram.clear();
      gram.push_back(static_cast<char>('0' + n));
      for (std::size_t j = i; j < i + n; ++j) append_utf8(gram, padded[j]);
      e.vector[fnv1a64(gram) % dim_] += 1.0;
    }
  }

  double norm = 0.0;
  for (double v : e.vector) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : e.vector) v /= norm;
  return e;
}

EmbeddingStore::EmbeddingStore(std::unordered_map<std::string, std::vector<double>> vectors,
                               std::size_t dim, bool allow_fallback)
    : vectors_(std::move(vectors)), dim_(dim), allow_fallback_(allow_fallback), fallback_(dim) {
  for (const auto& [text, v] : vectors_) {
    if (v.size() != dim_) throw ContractViolation("vector for '" + text + "' has wrong dimension");
  }
}

EmbeddingStore EmbeddingStore::load(const std::string& path, bool allow_fallback) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding store " + path);

  std::unordered_map<std::string, std::vector<double>> vectors;
  std::vector<std::string> warnings;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path, line_no, e.what());
    }
    if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string() || !rec.contains("vector") ||
        !rec["vector"].is_array()) {
      throw ParseError(path, line_no, "expected {\"text\": string, \"vector\": [number, ...]}");
    }
    std::vector<double> v;
    v.reserve(rec["vector"].size());
    for (const auto& x : rec["vector"]) {
      if (!x.is_number()) throw ParseError(path, line_no, "vector entries must be numbers");
      v.push_back(x.get<double>());
      if (!std::isfinite(v.back())) throw ParseError(path, line_no, "vector entries must be finite");
    }
    if (v.empty()) throw ParseError(path, line_no, "empty vector");
    if (dim == 0) {
      dim = v.size();
    } else if (v.size() != dim) {
      throw ParseError(path, line_no,
                       "dimension " + std::to_string(v.size()) + " differs from " + std::to_string(dim));
    }
    auto text = rec["text"].get<std::string>();
    if (vectors.count(text)) {
      warnings.push_back(path + ":" + std::to_string(line_no) + ": duplicate key '" + text + "', last wins");
    }
    vectors[std::move(text)] = std::move(v);
  }
  if (dim == 0) throw ParseError(path, 0, "embedding store is empty");

  EmbeddingStore store(std::move(vectors), dim, allow_fallback);
  store.warnings_ = std::move(warnings);
  return store;
}

bool EmbeddingStore::contains(std::string_view text) const { return vectors_.count(std::string(text)) > 0; }

Embedding EmbeddingStore::embed(std::string_view text) const {
  if (auto it = vectors_.find(std::string(text)); it != vectors_.end()) {
    return Embedding{it->second, Embedding::Source::stored};
  }
  if (!allow_fallback_) throw EmbeddingError("no stored vector for text '" + std::string(text) + "'");
  Embedding e = fallback_.embed(text);
  e.source = Embedding::Source::fallback;
  return e;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b, bool* degenerate) {
  if (a.size() != b.size()) {
    throw ContractViolation("cosine of vectors with dimensions " + std::to_string(a.size()) + " and " +
                            std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (degenerate) *degenerate = false;
  if (na == 0.0 || nb == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  // sqrt(na) * sqrt(nb) is commutative, so the result is exactly symmetric.
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine(const Embedding& a, const Embedding& b, bool* degenerate) {
  return cosine(a.vector, b.vector, degenerate);
}

}  // namespace macrt
