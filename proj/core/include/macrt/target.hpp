#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "macrt/embedding.hpp"
#include "macrt/sensitive.hpp"

namespace macrt {

struct TargetResponse {
  bool filtered = false;
  std::vector<double> scores;  // empty when filtered, else one per requested image
  double latency_ms = 0.0;
  nlohmann::json meta = nlohmann::json::object();
};

// Black-box oracle: safety filter, then generation and scoring. query() must
// be safe to call concurrently.
class Target {
 public:
  virtual ~Target() = default;

  virtual std::string name() const = 0;
  virtual TargetResponse query(std::string_view prompt, int n_images, std::uint64_t seed) const = 0;
};

// ---------------------------------------------------------------------------
// Simulated target
// ---------------------------------------------------------------------------

struct SimulatedTargetConfig {
  Blacklist blacklist;
  int fuzzy_max_edit = 1;
  HarmConceptBank classifier_bank;
  double classifier_threshold = 0.5;
  // Encoder for the classifier stage; defaults to HashNgramProvider.
  std::shared_ptr<const EmbeddingProvider> classifier_provider;
  std::map<std::string, std::vector<std::string>> concept_fragments;
  std::size_t min_run = 4;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  // Scored concept; empty means the maximum over all configured concepts.
  std::string target_concept;
  // When false the filter stages are skipped (generator + detector only).
  bool apply_filters = true;

  void validate() const;
};

enum class FilterStage { none, keyword, fuzzy, classifier };
std::string to_string(FilterStage stage);

struct FilterVerdict {
  FilterStage stage = FilterStage::none;
  std::string word;    // offending prompt word
  std::string match;   // blacklist term or concept label
  double score = 0.0;  // edit distance or cosine, stage dependent

  bool filtered() const noexcept { return stage != FilterStage::none; }
};

// Keyword, then fuzzy edit distance, then embedding classifier; first
// rejection wins.
FilterVerdict run_filters(std::string_view prompt, const SimulatedTargetConfig& cfg);

// Restricted Damerau-Levenshtein (optimal string alignment) over scalars.
std::size_t damerau_levenshtein(std::u32string_view a, std::u32string_view b);
std::size_t longest_common_substring(std::u32string_view a, std::u32string_view b);

// min(1, (r - min_run + 1) / (len(trigger) - min_run + 1)) where r is the
// longest common substring of prompt and trigger, or 0 if r < min_run.
// Comparison is case-insensitive.
double trigger_activation(std::string_view prompt, std::string_view trigger, std::size_t min_run);
double concept_activation(std::string_view prompt, const SimulatedTargetConfig& cfg, const std::string& concept_name);

// Activation plus seeded gaussian noise, clamped to [0, 1].
double simulated_score(std::string_view prompt, const SimulatedTargetConfig& cfg, const std::string& concept_name,
                       std::uint64_t noise_seed = 0);

class SimulatedTarget final : public Target {
 public:
  explicit SimulatedTarget(SimulatedTargetConfig cfg);

  std::string name() const override { return "simulated"; }
  TargetResponse query(std::string_view prompt, int n_images, std::uint64_t seed) const override;

  const SimulatedTargetConfig& config() const noexcept { return cfg_; }
  // Same generator and detector with the filter stages disabled.
  SimulatedTarget without_filters() const;

 private:
  SimulatedTargetConfig cfg_;
};

// ---------------------------------------------------------------------------
// Remote target (HTTP wire protocol)
// ---------------------------------------------------------------------------

namespace wire {

// {"prompt": ..., "n_images": ..., "seed": ...} in that key order, UTF-8.
std::string encode_request(std::string_view prompt, int n_images, std::uint64_t seed);

// Validates a 200 response body; throws TargetError (permanent) naming the
// offending field.
TargetResponse decode_response(std::string_view body, int n_images);

}  // namespace wire

struct RemoteTargetOptions {
  std::string url;  // http://host:port[/prefix]
  double timeout_s = 120.0;
  int max_attempts = 3;
  double backoff_initial_ms = 500.0;
  double backoff_factor = 2.0;
  int max_in_flight = 4;
};

class RemoteTarget final : public Target {
 public:
  explicit RemoteTarget(RemoteTargetOptions options);
  ~RemoteTarget() override;

  RemoteTarget(const RemoteTarget&) = delete;
  RemoteTarget& operator=(const RemoteTarget&) = delete;

  std::string name() const override { return "remote:" + options_.url; }
  TargetResponse query(std::string_view prompt, int n_images, std::uint64_t seed) const override;

  // GET /v1/health answers {"status":"ok"}.
  bool healthy() const;

 private:
  struct Endpoint;

  RemoteTargetOptions options_;
  std::unique_ptr<Endpoint> endpoint_;
  mutable std::counting_semaphore<> in_flight_;
};

}  // namespace macrt
