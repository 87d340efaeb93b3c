#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "macrt/lexicon.hpp"
#include "macrt/macaronic.hpp"
#include "macrt/target.hpp"
#include "macrt/text.hpp"

namespace macrt {

struct ZooConfig {
  double learning_rate = 0.1;
  int max_iters = 100;
  double delta0 = 0.25;
  double delta_max = 0.5;
  // Consecutive zero-gradient iterations before a coordinate's delta doubles.
  int plateau_patience = 3;
  double tau_stop = 0.3;
  int images_per_query = 1;
  std::uint64_t seed = 0;
  // Consecutive failed iterations before the attack gives up.
  int max_consecutive_failures = 3;

  void validate() const;
};

// ||scores - 1||_2. Empty input throws ContractViolation.
double loss(std::span<const double> scores);

using Objective = std::function<double(std::span<const double>)>;

struct GradientEstimate {
  std::vector<double> gradient;
  std::size_t evaluations = 0;
};

// Coordinate-wise central differences. Probe points are clamped to [0, 1] and
// the achieved displacement divides the difference. Exceptions from `f`
// propagate.
GradientEstimate estimate_gradient(const Objective& f, std::span<const double> params,
                                   std::span<const double> deltas);

struct AttackRecord {
  enum class Status { ok, failed };

  std::string prompt_id;
  Status status = Status::ok;
  std::string error;
  std::size_t iterations_run = 0;
  std::size_t aborted_iterations = 0;
  std::vector<double> loss_trace;
  ParamVector best_params;
  AdversarialPrompt best_prompt;
  std::optional<double> best_loss;
  // Target response at the best point; absent until one query succeeded.
  std::optional<bool> best_filtered;
  std::vector<double> best_scores;
  bool stopped_early = false;
  std::size_t query_count = 0;
  // Candidate texts per sensitive word.
  std::vector<std::vector<std::string>> candidates;
};

struct IterationEvent {
  int iteration = 0;  // 1-based
  std::span<const double> params;  // after the update
  std::optional<double> loss;
  std::span<const double> gradient;
  std::span<const double> deltas;
  bool aborted = false;
};

using AttackObserver = std::function<void(const IterationEvent&)>;

// Per-iteration generation seed shared by the current point and its probes.
std::uint64_t iteration_seed(std::uint64_t seed, int iteration);

// Joint optimization of every sensitive word of `prompt`; candidates[i] is the
// set for prompt.sensitive()[i].
AttackRecord run_attack(const Prompt& prompt, const std::vector<CandidateSet>& candidates, const Target& target,
                        const ZooConfig& cfg, const AttackObserver& observer = {});

std::string to_string(AttackRecord::Status status);

void to_json(nlohmann::json& j, const AdversarialPrompt& p);
void from_json(const nlohmann::json& j, AdversarialPrompt& p);
void to_json(nlohmann::json& j, const AttackRecord& r);
void from_json(const nlohmann::json& j, AttackRecord& r);

}  // namespace macrt
