#include "config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "macrt/errors.hpp"

namespace macrt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& table, const std::string& where, const std::set<std::string>& allowed) {
  if (!table.is_object()) throw ConfigError("'" + where + "' must be a table");
  for (const auto& [key, _] : table.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in [" + where + "]");
  }
}

template <class T>
void read(const json& table, const char* key, T& out, const std::string& where) {
  if (!table.contains(key)) return;
  try {
    out = table.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + where + "." + key + "'");
  }
}

std::string resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty() || base_dir.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base_dir) / p).lexically_normal().string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

json toml_to_json(const std::string& toml_text, const std::string& source) {
  toml::table tbl;
  try {
    tbl = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    const auto& where = e.source().begin;
    throw ConfigError(source + ":" + std::to_string(where.line) + ": " + std::string(e.description()));
  }
  std::ostringstream ss;
  ss << toml::json_formatter{tbl};
  return json::parse(ss.str());
}

RunConfig config_from_json(const json& doc, const std::string& base_dir) {
  RunConfig cfg;
  check_keys(doc, "root", {"seed", "jobs", "paths", "target", "zoo", "selection", "identify", "eval"});
  read(doc, "seed", cfg.seed, "root");
  read(doc, "jobs", cfg.jobs, "root");

  if (doc.contains("paths")) {
    const json& p = doc["paths"];
    check_keys(p, "paths", {"blacklist", "lexicon_dir", "embedding_store", "corpus", "out_dir"});
    read(p, "blacklist", cfg.paths.blacklist, "paths");
    read(p, "lexicon_dir", cfg.paths.lexicon_dir, "paths");
    read(p, "embedding_store", cfg.paths.embedding_store, "paths");
    read(p, "corpus", cfg.paths.corpus, "paths");
    read(p, "out_dir", cfg.paths.out_dir, "paths");
    for (std::string* s : {&cfg.paths.blacklist, &cfg.paths.lexicon_dir, &cfg.paths.embedding_store,
                           &cfg.paths.corpus, &cfg.paths.out_dir}) {
      *s = resolve(base_dir, *s);
    }
  }

  if (doc.contains("target")) {
    const json& t = doc["target"];
    check_keys(t, "target", {"sim", "remote"});
    if (t.contains("sim") && t.contains("remote")) {
      throw ConfigError("exactly one of [target.sim] and [target.remote] may be given");
    }
    if (t.contains("remote")) {
      const json& r = t["remote"];
      check_keys(r, "target.remote",
                 {"url", "timeout_s", "max_attempts", "backoff_initial_ms", "backoff_factor", "max_in_flight"});
      cfg.target.kind = "remote";
      auto& o = cfg.target.remote;
      read(r, "url", o.url, "target.remote");
      read(r, "timeout_s", o.timeout_s, "target.remote");
      read(r, "max_attempts", o.max_attempts, "target.remote");
      read(r, "backoff_initial_ms", o.backoff_initial_ms, "target.remote");
      read(r, "backoff_factor", o.backoff_factor, "target.remote");
      read(r, "max_in_flight", o.max_in_flight, "target.remote");
    }
    if (t.contains("sim")) {
      const json& s = t["sim"];
      check_keys(s, "target.sim",
                 {"fuzzy_max_edit", "classifier_concepts", "classifier_threshold", "triggers", "min_run",
                  "noise_sigma", "seed"});
      auto& o = cfg.target.sim;
      read(s, "fuzzy_max_edit", o.fuzzy_max_edit, "target.sim");
      read(s, "classifier_concepts", o.classifier_concepts, "target.sim");
      read(s, "classifier_threshold", o.classifier_threshold, "target.sim");
      read(s, "triggers", o.triggers, "target.sim");
      read(s, "min_run", o.min_run, "target.sim");
      read(s, "noise_sigma", o.noise_sigma, "target.sim");
      if (s.contains("seed")) {
        std::uint64_t seed = 0;
        read(s, "seed", seed, "target.sim");
        o.seed = seed;
      }
    }
  }

  if (doc.contains("zoo")) {
    const json& z = doc["zoo"];
    check_keys(z, "zoo",
               {"learning_rate", "max_iters", "delta0", "delta_max", "plateau_patience", "tau_stop",
                "images_per_query", "max_consecutive_failures"});
    read(z, "learning_rate", cfg.zoo.learning_rate, "zoo");
    read(z, "max_iters", cfg.zoo.max_iters, "zoo");
    read(z, "delta0", cfg.zoo.delta0, "zoo");
    read(z, "delta_max", cfg.zoo.delta_max, "zoo");
    read(z, "plateau_patience", cfg.zoo.plateau_patience, "zoo");
    read(z, "tau_stop", cfg.zoo.tau_stop, "zoo");
    read(z, "images_per_query", cfg.zoo.images_per_query, "zoo");
    read(z, "max_consecutive_failures", cfg.zoo.max_consecutive_failures, "zoo");
  }

  if (doc.contains("selection")) {
    const json& s = doc["selection"];
    check_keys(s, "selection", {"k", "images_per_eval", "composite_weight", "template"});
    read(s, "k", cfg.selection.k, "selection");
    read(s, "images_per_eval", cfg.selection.images_per_eval, "selection");
    read(s, "composite_weight", cfg.selection.composite_weight, "selection");
    read(s, "template", cfg.selection.template_kind, "selection");
  }

  if (doc.contains("identify")) {
    const json& s = doc["identify"];
    check_keys(s, "identify", {"tau_sim", "concepts"});
    read(s, "tau_sim", cfg.identify.tau_sim, "identify");
    read(s, "concepts", cfg.identify.concepts, "identify");
  }

  if (doc.contains("eval")) {
    const json& e = doc["eval"];
    check_keys(e, "eval", {"n", "success_threshold", "safe_prompt", "image_store"});
    read(e, "n", cfg.eval.n, "eval");
    read(e, "success_threshold", cfg.eval.success_threshold, "eval");
    if (e.contains("safe_prompt")) {
      std::string sp;
      read(e, "safe_prompt", sp, "eval");
      cfg.eval.safe_prompt = sp;
    }
    read(e, "image_store", cfg.eval.image_store, "eval");
    cfg.eval.image_store = resolve(base_dir, cfg.eval.image_store);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  const std::string text = read_file(path);
  const std::string base = fs::absolute(path).parent_path().string();
  json doc;
  if (fs::path(path).extension() == ".json") {
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(path + ": " + e.what());
    }
  } else {
    doc = toml_to_json(text, path);
  }
  return config_from_json(doc, base);
}

unsigned effective_jobs(const RunConfig& cfg) {
  return cfg.jobs ? cfg.jobs : std::max(1u, std::thread::hardware_concurrency());
}

void validate_config(const RunConfig& cfg) {
  const auto need_file = [](const std::string& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("no ") + what + " configured");
    if (!fs::is_regular_file(p)) throw ConfigError(std::string(what) + " '" + p + "' does not exist");
  };
  need_file(cfg.paths.blacklist, "blacklist");
  if (cfg.paths.lexicon_dir.empty()) throw ConfigError("no lexicon_dir configured");
  if (!fs::is_directory(cfg.paths.lexicon_dir)) {
    throw ConfigError("lexicon_dir '" + cfg.paths.lexicon_dir + "' is not a directory");
  }
  if (!cfg.paths.embedding_store.empty()) need_file(cfg.paths.embedding_store, "embedding store");
  if (!cfg.eval.image_store.empty()) need_file(cfg.eval.image_store, "image store");

  if (cfg.target.kind == "remote") {
    if (cfg.target.remote.url.empty()) throw ConfigError("remote target needs a url");
  } else if (cfg.target.kind != "sim") {
    throw ConfigError("unknown target kind '" + cfg.target.kind + "'");
  }
  if (cfg.selection.template_kind != "object" && cfg.selection.template_kind != "visual_concept") {
    throw ConfigError("selection.template must be 'object' or 'visual_concept'");
  }
  if (cfg.selection.template_kind == "visual_concept" && cfg.eval.image_store.empty()) {
    throw ConfigError("visual_concept template needs eval.image_store for visual similarity");
  }
  if (cfg.selection.k == 0) throw ConfigError("selection.k must be positive");
  if (cfg.selection.images_per_eval < 1) throw ConfigError("selection.images_per_eval must be positive");
  if (cfg.eval.n.empty()) throw ConfigError("eval.n must list at least one N");
  for (int n : cfg.eval.n) {
    if (n < 1) throw ConfigError("eval.n entries must be positive");
  }
  try {
    cfg.zoo.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("zoo: ") + e.what());
  }
}

SimulatedTargetConfig make_sim_config(const RunConfig& cfg, const Blacklist& blacklist,
                                      std::shared_ptr<const EmbeddingProvider> provider) {
  const SimTargetSpec& s = cfg.target.sim;
  SimulatedTargetConfig sc;
  sc.blacklist = blacklist;
  sc.fuzzy_max_edit = s.fuzzy_max_edit;
  if (!s.classifier_concepts.empty()) {
    sc.classifier_bank = HarmConceptBank::from_labels(*provider, s.classifier_concepts);
  }
  sc.classifier_threshold = s.classifier_threshold;
  sc.classifier_provider = std::move(provider);
  sc.concept_fragments = s.triggers;
  sc.min_run = s.min_run;
  sc.noise_sigma = s.noise_sigma;
  sc.seed = s.seed.value_or(cfg.seed);
  try {
    sc.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("target.sim: ") + e.what());
  }
  return sc;
}

Runtime build_runtime(const RunConfig& cfg) {
  validate_config(cfg);
  Runtime rt;
  rt.cfg = cfg;
  try {
    rt.blacklist = Blacklist::load(cfg.paths.blacklist);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  if (cfg.paths.embedding_store.empty()) {
    rt.provider = std::make_shared<HashNgramProvider>();
  } else {
    auto store = std::make_shared<EmbeddingStore>(EmbeddingStore::load(cfg.paths.embedding_store));
    for (const auto& w : store->warnings()) rt.warnings.push_back(w);
    rt.provider = store;
  }
  if (!cfg.eval.image_store.empty()) {
    auto store = std::make_shared<EmbeddingStore>(EmbeddingStore::load(cfg.eval.image_store));
    for (const auto& w : store->warnings()) rt.warnings.push_back(w);
    rt.image_store = store;
  }
  if (!cfg.identify.concepts.empty()) {
    rt.identify_bank = HarmConceptBank::from_labels(*rt.provider, cfg.identify.concepts);
  }
  if (cfg.target.kind == "sim") {
    SimulatedTarget sim(make_sim_config(cfg, rt.blacklist, rt.provider));
    rt.selection_target = std::make_unique<SimulatedTarget>(sim.without_filters());
    rt.target = std::make_unique<SimulatedTarget>(std::move(sim));
  } else {
    try {
      rt.target = std::make_unique<RemoteTarget>(cfg.target.remote);
    } catch (const ContractViolation& e) {
      throw ConfigError(std::string("target.remote: ") + e.what());
    }
  }
  return rt;
}

}  // namespace macrt::cli
