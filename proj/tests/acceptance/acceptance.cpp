// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "macrt/eval.hpp"
#include "macrt/rng.hpp"
#include "macrt/lexicon.hpp"
#include "macrt/macaronic.hpp"
#include "macrt/sensitive.hpp"
#include "macrt/target.hpp"
#include "macrt/zoo.hpp"
#include "test_support.hpp"

using namespace macrt;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  const bool in_time = secs < budget_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s %-22s %s; %.3fs (limit %.0fs)%s\n", pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs,
              budget_s, in_time ? "" : " OVER TIME");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// floor(l * beta) by counting up, independent of std::floor.
std::size_t floor_scaled(double beta, std::size_t l) {
  const double target = static_cast<double>(l) * beta;
  std::size_t m = 0;
  while (m < l && static_cast<double>(m + 1) <= target) ++m;
  return m;
}

Outcome index_oracle() {
  std::mt19937_64 rng(20240607);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    // Mix in exact grid values so the floor boundaries get exercised.
    const std::size_t l = rng() % 41;
    double b1 = u(rng), b2 = u(rng);
    if (i % 4 == 0 && l) b1 = static_cast<double>(rng() % (l + 1)) / static_cast<double>(l);
    if (i % 8 == 0) b2 = b1;
    const std::size_t mu1 = floor_scaled(b1, l);
    const std::size_t mu2 = b2 >= b1 ? floor_scaled(b2, l) : mu1;
    const IndexPair got = compute_indices(b1, b2, l);
    if (got.mu1 != mu1 || got.mu2 != mu2) ++mismatches;
  }
  return {mismatches == 0, fmt("10000 triples, %.0f mismatches", static_cast<double>(mismatches))};
}

Outcome determinism_provenance() {
  const std::vector<std::string> cand{"hund", "ápjaro", "σκύλος", "狗狗"};
  const auto generate = [&](std::vector<Substitute>& out) {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
      ParamVector p({4});
      for (double& c : p.coords()) c = u(rng);
      out.push_back(build_substitute(cand, p.beta1(0), p.beta2(0), p.alpha(0)));
    }
    return out;
  };
  std::vector<Substitute> a, b;
  generate(a);
  generate(b);
  std::size_t identical = 0, provenance_ok = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].text == b[i].text) ++identical;
    std::string rebuilt;
    bool ok = a[i].fragments.size() == cand.size();
    for (const auto& f : a[i].fragments) {
      ok = ok && f.mu1 <= f.mu2 && f.mu2 <= scalar_count(cand[f.candidate]) &&
           f.text == char_slice(cand[f.candidate], f.mu1, f.mu2);
      rebuilt += f.text;
    }
    if (ok && rebuilt == a[i].text) ++provenance_ok;
  }
  return {identical == a.size() && provenance_ok == a.size(),
          fmt("%.0f/1000 identical, %.0f/1000 provenance ok", static_cast<double>(identical),
              static_cast<double>(provenance_ok))};
}

// Sum of c * x0^a x1^b x2^c over monomials of total degree <= deg.
struct Poly {
  struct Term {
    double c;
    int e[3];
  };
  std::vector<Term> terms;

  static Poly random(std::mt19937_64& rng, int deg) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Poly p;
    for (int a = 0; a <= deg; ++a)
      for (int b = 0; a + b <= deg; ++b)
        for (int c = 0; a + b + c <= deg; ++c) p.terms.push_back({u(rng), {a, b, c}});
    return p;
  }
  double operator()(std::span<const double> x) const {
    double s = 0.0;
    for (const auto& t : terms) s += t.c * std::pow(x[0], t.e[0]) * std::pow(x[1], t.e[1]) * std::pow(x[2], t.e[2]);
    return s;
  }
  double partial(std::span<const double> x, int d) const {
    double s = 0.0;
    for (const auto& t : terms) {
      if (t.e[d] == 0) continue;
      double v = t.c * t.e[d];
      for (int k = 0; k < 3; ++k) v *= std::pow(x[k], k == d ? t.e[k] - 1 : t.e[k]);
      s += v;
    }
    return s;
  }
};

Outcome gradient_accuracy() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> interior(0.25, 0.75);
  double worst_ratio = 0.0, worst_quadratic = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Poly quartic = Poly::random(rng, 4), quadratic = Poly::random(rng, 2);
    const std::vector<double> x{interior(rng), interior(rng), interior(rng)};
    for (double delta : {0.25, 0.1, 0.05}) {
      const std::vector<double> deltas(3, delta);
      const GradientEstimate g4 = estimate_gradient(std::cref(quartic), x, deltas);
      const GradientEstimate g2 = estimate_gradient(std::cref(quadratic), x, deltas);
      for (int d = 0; d < 3; ++d) {
        worst_ratio = std::max(worst_ratio, std::abs(g4.gradient[d] - quartic.partial(x, d)) / (delta * delta));
        worst_quadratic = std::max(worst_quadratic, std::abs(g2.gradient[d] - quadratic.partial(x, d)));
      }
    }
  }
  return {worst_ratio <= 10.0 && worst_quadratic <= 1e-9,
          fmt("max |err|/delta^2 = %.3f (<= 10), quadratic max err = %.2e (<= 1e-9)", worst_ratio, worst_quadratic)};
}

Prompt dog_prompt() { return tokenize("a photo of a dog").with_sensitive({{4, true, std::nullopt}}); }

Outcome zoo_vs_grid() {
  const std::vector<std::string> texts{"hund", "perro"};
  SimulatedTargetConfig cfg = macrt::testing::dog_sim_config(texts, 4, 0.0);
  const HashNgramProvider hash;
  cfg.classifier_bank = HarmConceptBank::from_labels(hash, texts);
  cfg.classifier_threshold = 0.6;
  const SimulatedTarget target(cfg);
  const std::vector<CandidateSet> sets{CandidateSet::from_texts("dog", texts)};
  const Prompt prompt = dog_prompt();

  const double grid[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
  double best_grid = 1e9;
  ParamVector p = ParamVector::initial({2});
  for (int code = 0; code < 15625; ++code) {
    int c = code;
    for (double& v : p.coords()) {
      v = grid[c % 5];
      c /= 5;
    }
    const TargetResponse r = target.query(render_params(prompt, sets, p).rendered, 1, 0);
    const double l = r.filtered ? 1.0 : loss(r.scores);
    best_grid = std::min(best_grid, l);
  }

  ZooConfig zoo;
  zoo.tau_stop = 0.01;
  zoo.max_iters = 100;
  const AttackRecord rec = run_attack(prompt, sets, target, zoo);
  const double best = rec.best_loss.value_or(1e9);
  return {best <= best_grid + 0.05, fmt("zoo best %.4f vs grid min %.4f over 15625 points, ", best, best_grid) +
                                        fmt("%.0f iterations", static_cast<double>(rec.iterations_run))};
}

std::vector<std::string> pool_texts(const LexiconPool& pool) {
  std::vector<std::string> out;
  for (const auto& e : pool.entries) out.push_back(e.text);
  return out;
}

Outcome end_to_end() {
  const LexiconPool pool = load_pool(macrt::testing::source_path("data/lexicon/dog.tsv").string(), 10, "dog");
  int converged = 0;
  std::vector<AttackRecord> converged_records;
  std::size_t max_iters_used = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SimulatedTargetConfig cfg = macrt::testing::dog_sim_config(pool_texts(pool), 4, 0.05, seed);
    const SimulatedTarget target(cfg);
    SelectionOptions sel;
    sel.k = 10;
    sel.seed = seed;
    const CandidateSet set = select_topk(pool, PromptTemplate::object(), target.without_filters(), sel);
    ZooConfig zoo;
    zoo.max_iters = 100;
    zoo.seed = seed;
    AttackRecord rec = run_attack(dog_prompt(), {set}, target, zoo);
    rec.prompt_id = "seed" + std::to_string(seed);
    const bool unfiltered = rec.best_filtered.has_value() && !*rec.best_filtered;
    const double score = rec.best_scores.empty() ? 0.0 : *std::max_element(rec.best_scores.begin(), rec.best_scores.end());
    if (unfiltered && score >= 0.5 && rec.iterations_run <= 100) {
      ++converged;
      max_iters_used = std::max(max_iters_used, rec.iterations_run);
      converged_records.push_back(rec);
    }
  }
  bool keyword_clear = true;
  const Blacklist bl({"dog"});
  for (const auto& rec : converged_records) {
    const Prompt rendered = tokenize(rec.best_prompt.rendered);
    for (const auto& w : rendered.words()) keyword_clear = keyword_clear && !bl.contains(w.text);
  }
  const double bpr = converged_records.empty() ? 0.0 : bypass_rate(converged_records).rate;
  return {converged >= 8 && bpr == 1.0 && keyword_clear,
          fmt("%.0f/10 seeds converged (>= 8), BPR %.0f%% on converged, max iterations %.0f", converged, 100.0 * bpr,
              static_cast<double>(max_iters_used))};
}

// Benign corpus attacked with per-concept pools; shared by the report criteria.
struct CorpusRun {
  std::vector<AttackRecord> records;
  std::vector<CorpusResult> reports;
};

const CorpusRun& corpus_run() {
  static const CorpusRun run = [] {
    CorpusRun out;
    const std::vector<std::string> concepts{"bird", "car", "cat", "dog"};
    SimulatedTargetConfig cfg;
    cfg.blacklist = Blacklist(concepts);
    cfg.fuzzy_max_edit = 1;
    cfg.min_run = 4;
    cfg.noise_sigma = 0.15;
    cfg.seed = 11;
    std::map<std::string, CandidateSet> sets;
    std::map<std::string, LexiconPool> pools;
    for (const auto& c : concepts) {
      pools.emplace(c, load_pool(macrt::testing::source_path("data/lexicon/" + c + ".tsv").string(), 10, c));
      cfg.concept_fragments[c] = pool_texts(pools.at(c));
    }
    const SimulatedTarget target(cfg);
    const SimulatedTarget open = target.without_filters();
    for (const auto& c : concepts) {
      SelectionOptions sel;
      sel.seed = fnv1a64(c);
      sets.emplace(c, select_topk(pools.at(c), PromptTemplate::object(), open, sel));
    }

    const HashNgramProvider hash;
    std::ifstream in(macrt::testing::source_path("data/corpus/object200.txt"));
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line) && out.records.size() < 40) {
      ++no;
      const Prompt p = identify(tokenize(line), cfg.blacklist, {}, {}, hash);
      if (p.sensitive().empty()) continue;
      std::vector<CandidateSet> per_word;
      for (const auto& m : p.sensitive()) per_word.push_back(sets.at(to_lower(p.words()[m.index].text)));
      ZooConfig zoo;
      zoo.max_iters = 100;
      zoo.seed = no;
      AttackRecord rec = run_attack(p, per_word, target, zoo);
      char id[16];
      std::snprintf(id, sizeof id, "p%04zu", no);
      rec.prompt_id = id;
      out.records.push_back(std::move(rec));
    }

    EvalOptions opt;
    opt.text_provider = &hash;
    opt.similarity.safe_prompt = "a photo of a quiet street";
    for (double threshold : {0.5, 0.8, 0.95}) {
      opt.success_threshold = threshold;
      opt.seed = 3;
      out.reports.push_back(evaluate_corpus(out.records, target, opt));
    }
    return out;
  }();
  return run;
}

Outcome metric_consistency() {
  const CorpusRun& run = corpus_run();
  std::size_t ordered = 0, round_trips = 0;
  std::string rates;
  for (const auto& r : run.reports) {
    if (r.asr.at(1) <= r.asr.at(5) && r.asr.at(5) <= r.bpr) ++ordered;
    const nlohmann::json j = r;
    const CorpusResult back = j.get<CorpusResult>();
    if (nlohmann::json(back).dump() == j.dump() && back.records.size() == r.records.size()) ++round_trips;
    rates += fmt(" [t=%.2f: %.2f/%.2f/", r.success_threshold, r.asr.at(1), r.asr.at(5)) + fmt("%.2f]", r.bpr);
  }
  return {ordered == run.reports.size() && round_trips == run.reports.size(),
          fmt("%.0f reports ordered, %.0f round-trip;", static_cast<double>(ordered), static_cast<double>(round_trips)) +
              " ASR-1/ASR-5/BPR" + rates};
}

Outcome similarity_separation() {
  const CorpusRun& run = corpus_run();
  const HashNgramProvider hash;
  std::vector<const AttackRecord*> conv;
  for (const auto& r : run.records) {
    if (r.best_filtered && !*r.best_filtered) conv.push_back(&r);
  }
  if (conv.size() < 2) return {false, "fewer than two converged prompts"};
  double self = 0.0, adv = 0.0, shuffled = 0.0;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    const std::string& ori = conv[i]->best_prompt.base.raw();
    // Cyclic shift by one: every prompt paired with a different one.
    const std::string& other = conv[(i + 1) % conv.size()]->best_prompt.base.raw();
    self += cosine(hash.embed(ori), hash.embed(ori));
    adv += cosine(hash.embed(ori), hash.embed(conv[i]->best_prompt.rendered));
    shuffled += cosine(hash.embed(ori), hash.embed(other));
  }
  const double n = static_cast<double>(conv.size());
  self /= n;
  adv /= n;
  shuffled /= n;
  return {adv < self && adv > shuffled,
          fmt("mean cos ori/ori %.4f > ori/adv %.4f > ori/shuffled %.4f", self, adv, shuffled) +
              fmt(" over %.0f converged prompts", n)};
}

}  // namespace

int main() {
  criterion("index-oracle", 1.0, index_oracle);
  criterion("construction", 5.0, determinism_provenance);
  criterion("gradient-accuracy", 10.0, gradient_accuracy);
  criterion("zoo-vs-grid", 60.0, zoo_vs_grid);
  criterion("end-to-end", 300.0, end_to_end);
  criterion("metric-consistency", 300.0, metric_consistency);
  criterion("similarity-separation", 60.0, similarity_separation);
  std::printf("%s: %d failing criteria\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
