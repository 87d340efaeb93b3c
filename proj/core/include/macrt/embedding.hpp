#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace macrt {

struct Embedding {
  enum class Source { computed, stored, fallback };

  std::vector<double> vector;
  Source source = Source::computed;

  std::size_t dim() const noexcept { return vector.size(); }
  bool is_zero() const noexcept;
};

// Deterministic text encoder. Implementations are read-only after
// construction and may be called concurrently.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual Embedding embed(std::string_view text) const = 0;
};

// Character bigrams and trigrams over scalar values, with '^' / '$' boundary
// markers, hashed (FNV-1a) into `dim` buckets and L2-normalized. Empty text
// maps to the zero vector.
class HashNgramProvider final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kDefaultDim = 256;

  explicit HashNgramProvider(std::size_t dim = kDefaultDim);

  std::string name() const override { return "hash-ngram"; }
  std::size_t dim() const override { return dim_; }
  Embedding embed(std::string_view text) const override;

 private:
  std::size_t dim_;
};

// Precomputed vectors keyed by exact text, loaded from JSON Lines records
// {"text": ..., "vector": [...]}. Keys absent from the store fall back to a
// HashNgramProvider of the store's dimension (Source::fallback), or throw
// EmbeddingError when fallback is disabled.
class EmbeddingStore final : public EmbeddingProvider {
 public:
  static EmbeddingStore load(const std::string& path, bool allow_fallback = true);

  EmbeddingStore(std::unordered_map<std::string, std::vector<double>> vectors, std::size_t dim,
                 bool allow_fallback = true);

  std::string name() const override { return "file-store"; }
  std::size_t dim() const override { return dim_; }
  Embedding embed(std::string_view text) const override;

  bool contains(std::string_view text) const;
  std::size_t size() const noexcept { return vectors_.size(); }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

 private:
  std::unordered_map<std::string, std::vector<double>> vectors_;
  std::size_t dim_;
  bool allow_fallback_;
  HashNgramProvider fallback_;
  std::vector<std::string> warnings_;
};

// Cosine similarity clamped to [-1, 1]. Returns 0 when either vector is zero
// and sets *degenerate. Dimension mismatch throws ContractViolation.
double cosine(const Embedding& a, const Embedding& b, bool* degenerate = nullptr);
double cosine(const std::vector<double>& a, const std::vector<double>& b, bool* degenerate = nullptr);

}  // namespace macrt
