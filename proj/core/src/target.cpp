#include "macrt/target.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <regex>
#include <thread>

#include <httplib.h>

#include "macrt/errors.hpp"
#include "macrt/rng.hpp"
#include "macrt/text.hpp"

namespace macrt {

void SimulatedTargetConfig::validate() const {
  if (min_run < 2) throw ContractViolation("min_run must be at least 2");
  if (!(noise_sigma >= 0.0)) throw ContractViolation("noise_sigma must be non-negative");
  if (fuzzy_max_edit < 0) throw ContractViolation("fuzzy_max_edit must be non-negative");
  if (!target_concept.empty() && !concept_fragments.count(target_concept)) {
    throw ContractViolation("target concept '" + target_concept + "' has no trigger fragments");
  }
  if (classifier_provider && !classifier_bank.empty() &&
      classifier_provider->dim() != classifier_bank.concepts().front().embedding.dim()) {
    throw ContractViolation("classifier provider and concept bank dimensions differ");
  }
}

std::string to_string(FilterStage stage) {
  switch (stage) {
    case FilterStage::none:
      return "none";
    case FilterStage::keyword:
      return "keyword";
    case FilterStage::fuzzy:
      return "fuzzy";
    case FilterStage::classifier:
      return "classifier";
  }
  return "unknown";
}

std::size_t damerau_levenshtein(std::u32string_view a, std::u32string_view b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev2(m + 1), prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost});
      if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1]) {
        cur[j] = std::min(cur[j], prev2[j - 2] + 1);
      }
    }
    std::swap(prev2, prev);
    std::swap(prev, cur);
  }
  return prev[m];
}

std::size_t longest_common_substring(std::u32string_view a, std::u32string_view b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  std::size_t best = 0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : 0;
      best = std::max(best, cur[j]);
    }
    std::swap(prev, cur);
  }
  return best;
}

namespace {

std::u32string lowered_scalars(std::string_view text) {
  std::u32string s = decode_utf8(text);
  for (char32_t& c : s) c = lower_scalar(c);
  return s;
}

double activation_of(std::u32string_view prompt, std::u32string_view trigger, std::size_t min_run) {
  if (trigger.size() < min_run) return 0.0;
  const std::size_t r = longest_common_substring(prompt, trigger);
  if (r < min_run) return 0.0;
  const double num = static_cast<double>(r - min_run + 1);
  const double den = static_cast<double>(trigger.size() - min_run + 1);
  return std::min(1.0, num / den);
}

double concept_activation_of(std::u32string_view prompt, const std::vector<std::string>& triggers,
                             std::size_t min_run) {
  double a = 0.0;
  for (const auto& t : triggers) a = std::max(a, activation_of(prompt, lowered_scalars(t), min_run));
  return a;
}

}  // namespace

double trigger_activation(std::string_view prompt, std::string_view trigger, std::size_t min_run) {
  return activation_of(lowered_scalars(prompt), lowered_scalars(trigger), min_run);
}

double concept_activation(std::string_view prompt, const SimulatedTargetConfig& cfg, const std::string& concept_name) {
  auto it = cfg.concept_fragments.find(concept_name);
  if (it == cfg.concept_fragments.end()) throw ContractViolation("unknown concept '" + concept_name + "'");
  return concept_activation_of(lowered_scalars(prompt), it->second, cfg.min_run);
}

double simulated_score(std::string_view prompt, const SimulatedTargetConfig& cfg, const std::string& concept_name,
                       std::uint64_t noise_seed) {
  double s = concept_activation(prompt, cfg, concept_name);
  if (cfg.noise_sigma > 0.0) {
    DeterministicRng rng(noise_seed);
    s += rng.normal(0.0, cfg.noise_sigma);
  }
  return std::clamp(s, 0.0, 1.0);
}

FilterVerdict run_filters(std::string_view prompt, const SimulatedTargetConfig& cfg) {
  const Prompt p = tokenize(prompt);
  std::vector<std::string> words;
  words.reserve(p.words().size());
  for (const auto& w : p.words()) {
    if (!w.text.empty()) words.push_back(to_lower(w.text));
  }

  for (const auto& w : words) {
    if (cfg.blacklist.contains(w)) return {FilterStage::keyword, w, w, 0.0};
  }

  if (cfg.fuzzy_max_edit > 0) {
    for (const auto& w : words) {
      const std::u32string ws = decode_utf8(w);
      for (const auto& term : cfg.blacklist.terms()) {
        const std::u32string ts = decode_utf8(term);
        const std::size_t len_gap = ws.size() > ts.size() ? ws.size() - ts.size() : ts.size() - ws.size();
        if (len_gap > static_cast<std::size_t>(cfg.fuzzy_max_edit)) continue;
        const std::size_t d = damerau_levenshtein(ws, ts);
        if (d <= static_cast<std::size_t>(cfg.fuzzy_max_edit)) {
          return {FilterStage::fuzzy, w, term, static_cast<double>(d)};
        }
      }
    }
  }

  if (!cfg.classifier_bank.empty()) {
    HashNgramProvider hash(cfg.classifier_bank.concepts().front().embedding.dim());
    const EmbeddingProvider& enc = cfg.classifier_provider ? *cfg.classifier_provider : hash;
    for (const auto& w : words) {
      if (scalar_count(w) < kMinSimilarityWordLength) continue;
      SimilarityHit hit = cfg.classifier_bank.nearest(enc.embed(w));
      if (hit.score > cfg.classifier_threshold) {
        return {FilterStage::classifier, w, hit.concept_label, hit.score};
      }
    }
  }
  return {};
}

SimulatedTarget::SimulatedTarget(SimulatedTargetConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

SimulatedTarget SimulatedTarget::without_filters() const {
  SimulatedTargetConfig cfg = cfg_;
  cfg.apply_filters = false;
  return SimulatedTarget(std::move(cfg));
}

TargetResponse SimulatedTarget::query(std::string_view prompt, int n_images, std::uint64_t seed) const {
  if (n_images < 1) throw ContractViolation("n_images must be at least 1");
  TargetResponse r;
  if (cfg_.apply_filters) {
    const FilterVerdict v = run_filters(prompt, cfg_);
    if (v.filtered()) {
      r.filtered = true;
      r.meta = {{"filter", to_string(v.stage)}, {"word", v.word}, {"match", v.match}, {"score", v.score}};
      return r;
    }
  }

  const std::u32string lowered = lowered_scalars(prompt);
  double activation = 0.0;
  std::string concept_name = cfg_.target_concept;
  if (!concept_name.empty()) {
    activation = concept_activation_of(lowered, cfg_.concept_fragments.at(concept_name), cfg_.min_run);
  } else {
    for (const auto& [name, triggers] : cfg_.concept_fragments) {
      const double a = concept_activation_of(lowered, triggers, cfg_.min_run);
      if (concept_name.empty() || a > activation) {
        activation = a;
        concept_name = name;
      }
    }
  }

  r.scores.reserve(static_cast<std::size_t>(n_images));
  for (int i = 0; i < n_images; ++i) {
    double s = activation;
    if (cfg_.noise_sigma > 0.0) {
      DeterministicRng rng(mix_seeds({cfg_.seed, seed, static_cast<std::uint64_t>(i)}));
      s += rng.normal(0.0, cfg_.noise_sigma);
    }
    r.scores.push_back(std::clamp(s, 0.0, 1.0));
  }
  r.meta = {{"concept", concept_name}, {"activation", activation}};
  return r;
}

// ---------------------------------------------------------------------------

namespace wire {

std::string encode_request(std::string_view prompt, int n_images, std::uint64_t seed) {
  nlohmann::ordered_json body;
  body["prompt"] = std::string(prompt);
  body["n_images"] = n_images;
  body["seed"] = seed;
  return body.dump();
}

TargetResponse decode_response(std::string_view body, int n_images) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw TargetError(std::string("response is not JSON: ") + e.what(), false);
  }
  if (!j.is_object()) throw TargetError("response is not a JSON object", false);
  if (!j.contains("filtered") || !j["filtered"].is_boolean()) {
    throw TargetError("response field 'filtered' missing or not a boolean", false);
  }
  if (!j.contains("scores") || !j["scores"].is_array()) {
    throw TargetError("response field 'scores' missing or not an array", false);
  }
  TargetResponse r;
  r.filtered = j["filtered"].get<bool>();
  for (const auto& s : j["scores"]) {
    if (!s.is_number()) throw TargetError("response field 'scores' holds a non-number", false);
    const double v = s.get<double>();
    if (!(v >= 0.0 && v <= 1.0)) throw TargetError("response field 'scores' holds a value outside [0,1]", false);
    r.scores.push_back(v);
  }
  if (j.contains("meta")) {
    if (!j["meta"].is_object()) throw TargetError("response field 'meta' is not an object", false);
    r.meta = j["meta"];
  }
  if (r.filtered && !r.scores.empty()) throw TargetError("response field 'scores' must be empty when filtered", false);
  if (!r.filtered && r.scores.size() != static_cast<std::size_t>(n_images)) {
    throw TargetError("response field 'scores' has " + std::to_string(r.scores.size()) + " entries, expected " +
                          std::to_string(n_images),
                      false);
  }
  return r;
}

}  // namespace wire

struct RemoteTarget::Endpoint {
  std::string scheme_host_port;
  std::string prefix;

  httplib::Client client(double timeout_s) const {
    httplib::Client c(scheme_host_port);
    const auto secs = static_cast<time_t>(timeout_s);
    const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
    c.set_connection_timeout(secs, usecs);
    c.set_read_timeout(secs, usecs);
    c.set_write_timeout(secs, usecs);
    return c;
  }
};

RemoteTarget::RemoteTarget(RemoteTargetOptions options)
    : options_(std::move(options)), in_flight_(std::max(1, options_.max_in_flight)) {
  static const std::regex url_re(R"(^(http)://([^/:]+)(:([0-9]+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(options_.url, m, url_re)) {
    throw ContractViolation("unsupported target URL '" + options_.url + "' (expected http://host[:port][/prefix])");
  }
  if (options_.max_attempts < 1) throw ContractViolation("max_attempts must be at least 1");
  if (!(options_.timeout_s > 0.0)) throw ContractViolation("timeout must be positive");
  endpoint_ = std::make_unique<Endpoint>();
  endpoint_->scheme_host_port = m[1].str() + "://" + m[2].str() + (m[4].matched ? ":" + m[4].str() : "");
  endpoint_->prefix = m[5].matched ? m[5].str() : "";
  while (!endpoint_->prefix.empty() && endpoint_->prefix.back() == '/') endpoint_->prefix.pop_back();
}

RemoteTarget::~RemoteTarget() = default;

bool RemoteTarget::healthy() const {
  auto cli = endpoint_->client(std::min(options_.timeout_s, 10.0));
  auto res = cli.Get(endpoint_->prefix + "/v1/health");
  if (!res || res->status != 200) return false;
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.is_object() && j.value("status", "") == "ok";
  } catch (const nlohmann::json::exception&) {
    return false;
  }
}

TargetResponse RemoteTarget::query(std::string_view prompt, int n_images, std::uint64_t seed) const {
  if (n_images < 1) throw ContractViolation("n_images must be at least 1");
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  const std::string body = wire::encode_request(prompt, n_images, seed);
  const std::string path = endpoint_->prefix + "/v1/score";
  std::string last_error;
  int last_status = 0;
  double backoff_ms = options_.backoff_initial_ms;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    const auto start = std::chrono::steady_clock::now();
    auto cli = endpoint_->client(options_.timeout_s);
    auto res = cli.Post(path, body, "application/json");
    const double elapsed =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (res && res->status == 200) {
      TargetResponse r = wire::decode_response(res->body, n_images);
      r.latency_ms = elapsed;
      return r;
    }
    if (res && res->status >= 400 && res->status < 500) {
      throw TargetError("target rejected request with HTTP " + std::to_string(res->status) + ": " + res->body,
                        false, res->status);
    }
    if (res && res->status < 500) {
      throw TargetError("unexpected HTTP " + std::to_string(res->status) + " from target", false, res->status);
    }
    last_status = res ? res->status : 0;
    last_error = res ? "HTTP " + std::to_string(res->status) : "transport error: " + httplib::to_string(res.error());
    if (attempt < options_.max_attempts) {
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(backoff_ms));
      backoff_ms *= options_.backoff_factor;
    }
  }
  throw TargetError("target unreachable after " + std::to_string(options_.max_attempts) + " attempts (" + last_error +
                        ")",
                    true, last_status);
}

}  // namespace macrt
