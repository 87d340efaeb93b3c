#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "macrt/embedding.hpp"
#include "macrt/lexicon.hpp"
#include "macrt/sensitive.hpp"
#include "macrt/target.hpp"
#include "macrt/zoo.hpp"

namespace macrt::cli {

// Raised for unusable configuration or inputs (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PathsConfig {
  std::string blacklist;
  std::string lexicon_dir;
  std::string embedding_store;  // optional
  std::string corpus;           // optional default for `attack`
  std::string out_dir = "out";
};

struct SimTargetSpec {
  int fuzzy_max_edit = 1;
  std::vector<std::string> classifier_concepts;  // empty disables the classifier stage
  double classifier_threshold = 0.6;
  std::map<std::string, std::vector<std::string>> triggers;
  std::size_t min_run = 4;
  double noise_sigma = 0.0;
  std::optional<std::uint64_t> seed;  // defaults to the run seed
};

struct TargetSpec {
  std::string kind = "sim";  // "sim" or "remote"
  SimTargetSpec sim;
  RemoteTargetOptions remote;
};

struct SelectionConfig {
  std::size_t k = 10;
  int images_per_eval = 10;
  double composite_weight = 1.0;
  std::string template_kind = "object";  // "object" or "visual_concept"
};

struct IdentifyConfig {
  double tau_sim = 0.5;
  std::vector<std::string> concepts;
};

struct EvalConfig {
  std::vector<int> n{1, 5};
  double success_threshold = 0.5;
  std::optional<std::string> safe_prompt;
  std::string image_store;  // optional
};

struct RunConfig {
  PathsConfig paths;
  TargetSpec target;
  ZooConfig zoo;
  SelectionConfig selection;
  IdentifyConfig identify;
  EvalConfig eval;
  std::uint64_t seed = 0;
  unsigned jobs = 0;  // 0 = available parallelism
  bool resume = false;
  bool deterministic = false;
};

// Parses a TOML or JSON document (chosen by extension, .json => JSON) into a
// RunConfig. Relative paths resolve against the config file's directory.
RunConfig load_config(const std::string& path);
RunConfig config_from_json(const nlohmann::json& doc, const std::string& base_dir);
nlohmann::json toml_to_json(const std::string& toml_text, const std::string& source);

unsigned effective_jobs(const RunConfig& cfg);

// Checks that referenced files exist and the target settings are coherent.
void validate_config(const RunConfig& cfg);

// Everything a command needs, built once from a RunConfig.
struct Runtime {
  RunConfig cfg;
  Blacklist blacklist;
  std::shared_ptr<const EmbeddingProvider> provider;
  std::shared_ptr<const EmbeddingStore> image_store;
  HarmConceptBank identify_bank;
  std::unique_ptr<Target> target;            // full target, filters on
  std::unique_ptr<Target> selection_target;  // generator + detector only for sim
  std::vector<std::string> warnings;
};

Runtime build_runtime(const RunConfig& cfg);
SimulatedTargetConfig make_sim_config(const RunConfig& cfg, const Blacklist& blacklist,
                                      std::shared_ptr<const EmbeddingProvider> provider);

}  // namespace macrt::cli
