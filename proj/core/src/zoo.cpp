#include "macrt/zoo.hpp"

#include <algorithm>
#include <cmath>

#include "macrt/errors.hpp"
#include "macrt/rng.hpp"

namespace macrt {

void ZooConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractViolation("learning_rate must be positive");
  if (max_iters < 0) throw ContractViolation("max_iters must be non-negative");
  if (!(delta0 > 0.0) || !(delta_max >= delta0)) throw ContractViolation("need 0 < delta0 <= delta_max");
  if (plateau_patience < 1) throw ContractViolation("plateau_patience must be positive");
  if (!(tau_stop > 0.0)) throw ContractViolation("tau_stop must be positive");
  if (images_per_query < 1) throw ContractViolation("images_per_query must be at least 1");
  if (max_consecutive_failures < 1) throw ContractViolation("max_consecutive_failures must be positive");
}

double loss(std::span<const double> scores) {
  if (scores.empty()) throw ContractViolation("loss of an empty score vector");
  double sum = 0.0;
  for (double s : scores) sum += (s - 1.0) * (s - 1.0);
  return std::sqrt(sum);
}

GradientEstimate estimate_gradient(const Objective& f, std::span<const double> params,
                                   std::span<const double> deltas) {
  if (deltas.size() != params.size()) throw ContractViolation("one delta per coordinate required");
  GradientEstimate out;
  out.gradient.assign(params.size(), 0.0);
  std::vector<double> x(params.begin(), params.end());
  for (std::size_t c = 0; c < x.size(); ++c) {
    if (!(deltas[c] > 0.0)) throw ContractViolation("finite-difference deltas must be positive");
    const double origin = x[c];
    const double hi = std::clamp(origin + deltas[c], 0.0, 1.0);
    const double lo = std::clamp(origin - deltas[c], 0.0, 1.0);
    x[c] = hi;
    const double f_hi = f(x);
    ++out.evaluations;
    x[c] = lo;
    const double f_lo = f(x);
    ++out.evaluations;
    x[c] = origin;
    out.gradient[c] = hi > lo ? (f_hi - f_lo) / (hi - lo) : 0.0;
  }
  return out;
}

std::uint64_t iteration_seed(std::uint64_t seed, int iteration) {
  return mix_seeds({seed, static_cast<std::uint64_t>(iteration)});
}

namespace {

double response_loss(const TargetResponse& r, int n_images) {
  if (r.filtered) {
    const std::vector<double> zeros(static_cast<std::size_t>(n_images), 0.0);
    return loss(zeros);
  }
  return loss(r.scores);
}

}  // namespace

AttackRecord run_attack(const Prompt& prompt, const std::vector<CandidateSet>& candidates, const Target& target,
                        const ZooConfig& cfg, const AttackObserver& observer) {
  cfg.validate();
  if (candidates.size() != prompt.sensitive().size()) {
    throw ContractViolation("one candidate set per sensitive word required");
  }
  std::vector<std::size_t> ks;
  AttackRecord rec;
  for (const auto& set : candidates) {
    if (set.k() == 0) throw ContractViolation("empty candidate set for '" + set.headword + "'");
    ks.push_back(set.k());
    rec.candidates.push_back(set.texts());
  }

  ParamVector params = ParamVector::initial(ks);
  rec.best_params = params;
  rec.best_prompt = render_params(prompt, candidates, params);

  const std::size_t dim = params.size();
  std::vector<double> deltas(dim, cfg.delta0);
  std::vector<int> zero_streak(dim, 0);
  int consecutive_failures = 0;

  const auto notify = [&](int it, std::optional<double> l, std::span<const double> g, bool aborted) {
    if (observer) observer(IterationEvent{it, params.coords(), l, g, deltas, aborted});
  };
  const auto record_failure = [&](int it, const TargetError& e, std::optional<double> l) {
    ++rec.aborted_iterations;
    rec.error = e.what();
    notify(it, l, {}, true);
    if (++consecutive_failures >= cfg.max_consecutive_failures) {
      rec.status = AttackRecord::Status::failed;
      return true;
    }
    return false;
  };

  for (int it = 1; it <= cfg.max_iters; ++it) {
    rec.iterations_run = static_cast<std::size_t>(it);
    const std::uint64_t seed = iteration_seed(cfg.seed, it);

    AdversarialPrompt current = render_params(prompt, candidates, params);
    TargetResponse resp;
    try {
      ++rec.query_count;
      resp = target.query(current.rendered, cfg.images_per_query, seed);
    } catch (const TargetError& e) {
      if (record_failure(it, e, std::nullopt)) break;
      continue;
    }
    const double current_loss = response_loss(resp, cfg.images_per_query);
    rec.loss_trace.push_back(current_loss);
    if (!rec.best_loss || current_loss < *rec.best_loss) {
      rec.best_loss = current_loss;
      rec.best_params = params;
      rec.best_prompt = std::move(current);
      rec.best_filtered = resp.filtered;
      rec.best_scores = resp.scores;
    }
    if (current_loss < cfg.tau_stop) {
      rec.stopped_early = true;
      consecutive_failures = 0;
      notify(it, current_loss, {}, false);
      break;
    }

    const Objective objective = [&](std::span<const double> coords) {
      ParamVector probe = params;
      std::copy(coords.begin(), coords.end(), probe.coords().begin());
      const AdversarialPrompt adv = render_params(prompt, candidates, probe);
      ++rec.query_count;
      return response_loss(target.query(adv.rendered, cfg.images_per_query, seed), cfg.images_per_query);
    };

    GradientEstimate est;
    try {
      est = estimate_gradient(objective, params.coords(), deltas);
    } catch (const TargetError& e) {
      if (record_failure(it, e, current_loss)) break;
      continue;
    }
    consecutive_failures = 0;

    // floor() makes the landscape piecewise constant; widen a coordinate's
    // probe while it sits on a plateau, reset once it sees slope again.
    for (std::size_t c = 0; c < dim; ++c) {
      if (est.gradient[c] == 0.0) {
        if (++zero_streak[c] >= cfg.plateau_patience) {
          deltas[c] = std::min(2.0 * deltas[c], cfg.delta_max);
          zero_streak[c] = 0;
        }
      } else {
        zero_streak[c] = 0;
        deltas[c] = cfg.delta0;
      }
    }

    auto coords = params.coords();
    for (std::size_t c = 0; c < dim; ++c) coords[c] -= cfg.learning_rate * est.gradient[c];
    params.clamp();
    notify(it, current_loss, est.gradient, false);
  }
  return rec;
}

std::string to_string(AttackRecord::Status status) { return status == AttackRecord::Status::ok ? "ok" : "failed"; }

void to_json(nlohmann::json& j, const AdversarialPrompt& p) {
  nlohmann::json marks = nlohmann::json::array();
  for (const auto& m : p.base.sensitive()) {
    nlohmann::json mj = {{"index", m.index}, {"blacklist", m.blacklist}, {"similarity", nullptr}};
    if (m.similarity) mj["similarity"] = {{"concept", m.similarity->concept_label}, {"score", m.similarity->score}};
    marks.push_back(std::move(mj));
  }
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& [index, text] : p.substitutes) subs.push_back({{"index", index}, {"text", text}});
  j = {{"original", p.base.raw()}, {"sensitive", marks},   {"substitutes", subs},
       {"rendered", p.rendered},   {"removed", p.removed}};
}

void from_json(const nlohmann::json& j, AdversarialPrompt& p) {
  std::vector<SensitiveMark> marks;
  for (const auto& mj : j.at("sensitive")) {
    SensitiveMark m{mj.at("index").get<std::size_t>(), mj.value("blacklist", false), std::nullopt};
    if (mj.contains("similarity") && !mj["similarity"].is_null()) {
      m.similarity = SimilarityHit{mj["similarity"].at("concept").get<std::string>(),
                                   mj["similarity"].at("score").get<double>()};
    }
    marks.push_back(std::move(m));
  }
  p.base = tokenize(j.at("original").get<std::string>()).with_sensitive(std::move(marks));
  p.substitutes.clear();
  for (const auto& s : j.at("substitutes")) {
    p.substitutes.emplace_back(s.at("index").get<std::size_t>(), s.at("text").get<std::string>());
  }
  p.rendered = j.at("rendered").get<std::string>();
  p.removed = j.value("removed", std::vector<std::size_t>{});
}

void to_json(nlohmann::json& j, const AttackRecord& r) {
  j = nlohmann::json::object();
  j["prompt_id"] = r.prompt_id;
  j["status"] = to_string(r.status);
  j["error"] = r.error;
  j["iterations_run"] = r.iterations_run;
  j["aborted_iterations"] = r.aborted_iterations;
  j["loss_trace"] = r.loss_trace;
  j["best_params"] = r.best_params;
  j["best_prompt"] = r.best_prompt;
  j["best_loss"] = r.best_loss ? nlohmann::json(*r.best_loss) : nlohmann::json(nullptr);
  j["best_filtered"] = r.best_filtered ? nlohmann::json(*r.best_filtered) : nlohmann::json(nullptr);
  j["best_scores"] = r.best_scores;
  j["stopped_early"] = r.stopped_early;
  j["query_count"] = r.query_count;
  j["candidates"] = r.candidates;
}

void from_json(const nlohmann::json& j, AttackRecord& r) {
  r.prompt_id = j.at("prompt_id").get<std::string>();
  const auto status = j.value("status", std::string("ok"));
  if (status != "ok" && status != "failed") throw ContractViolation("unknown attack status '" + status + "'");
  r.status = status == "ok" ? AttackRecord::Status::ok : AttackRecord::Status::failed;
  r.error = j.value("error", "");
  r.iterations_run = j.value("iterations_run", std::size_t{0});
  r.aborted_iterations = j.value("aborted_iterations", std::size_t{0});
  r.loss_trace = j.value("loss_trace", std::vector<double>{});
  r.best_params = j.at("best_params").get<ParamVector>();
  r.best_prompt = j.at("best_prompt").get<AdversarialPrompt>();
  r.best_loss.reset();
  if (j.contains("best_loss") && !j["best_loss"].is_null()) r.best_loss = j["best_loss"].get<double>();
  r.best_filtered.reset();
  if (j.contains("best_filtered") && !j["best_filtered"].is_null()) r.best_filtered = j["best_filtered"].get<bool>();
  r.best_scores = j.value("best_scores", std::vector<double>{});
  r.stopped_early = j.value("stopped_early", false);
  r.query_count = j.value("query_count", std::size_t{0});
  r.candidates = j.value("candidates", std::vector<std::vector<std::string>>{});
}

}  // namespace macrt
