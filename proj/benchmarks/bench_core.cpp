#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "macrt/lexicon.hpp"
#include "macrt/macaronic.hpp"
#include "macrt/target.hpp"
#include "macrt/zoo.hpp"

using namespace macrt;

namespace {

std::vector<std::string> dog_pool_texts() {
  const LexiconPool pool = load_pool(std::string(MACRT_SOURCE_DIR) + "/data/lexicon/dog.tsv");
  std::vector<std::string> out;
  for (const auto& e : pool.entries) out.push_back(e.text);
  return out;
}

SimulatedTargetConfig dog_target(std::vector<std::string> triggers) {
  SimulatedTargetConfig cfg;
  cfg.blacklist = Blacklist({"dog"});
  cfg.fuzzy_max_edit = 1;
  cfg.concept_fragments["dog"] = std::move(triggers);
  cfg.noise_sigma = 0.05;
  return cfg;
}

void BM_BuildSubstitute(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  std::vector<std::string> texts = dog_pool_texts();
  texts.resize(k);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> b1(k), b2(k), a(k);
  for (std::size_t j = 0; j < k; ++j) {
    b1[j] = u(rng) * 0.5;
    b2[j] = 0.5 + u(rng) * 0.5;
    a[j] = u(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(build_substitute(texts, b1, b2, a));
}
BENCHMARK(BM_BuildSubstitute)->Arg(2)->Arg(10)->Arg(40);

void BM_SimulatedQuery(benchmark::State& state) {
  const SimulatedTarget target(dog_target(dog_pool_texts()));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(target.query("a photo of a nikchocahundperrokoira", 1, ++seed));
}
BENCHMARK(BM_SimulatedQuery);

void BM_EstimateGradient(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  const Objective f = [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += std::sin(3.0 * v);
    return s;
  };
  const std::vector<double> x(dim, 0.4), deltas(dim, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_gradient(f, x, deltas));
}
BENCHMARK(BM_EstimateGradient)->Arg(6)->Arg(30)->Arg(120);

void BM_RunAttack(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  std::vector<std::string> texts = dog_pool_texts();
  texts.resize(k);
  // Triggers outside the candidate set keep the optimizer busy for every iteration.
  const SimulatedTarget target(dog_target({"zzzzzz"}));
  const Prompt prompt = tokenize("a photo of a dog").with_sensitive({{4, true, std::nullopt}});
  const std::vector<CandidateSet> sets{CandidateSet::from_texts("dog", texts)};
  ZooConfig cfg;
  cfg.max_iters = 10;
  for (auto _ : state) benchmark::DoNotOptimize(run_attack(prompt, sets, target, cfg));
  state.SetItemsProcessed(state.iterations() * cfg.max_iters);
}
BENCHMARK(BM_RunAttack)->Arg(2)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
