#include <gtest/gtest.h>

#include <sstream>

#include "macrt/errors.hpp"
#include "macrt/eval.hpp"
#include "test_support.hpp"

using namespace macrt;
using macrt::testing::dog_sim_config;
using macrt::testing::ScriptedTarget;
using macrt::testing::unfiltered;

namespace {

AttackRecord record(const std::string& id, std::optional<bool> filtered, const std::string& rendered = "a hund") {
  AttackRecord r;
  r.prompt_id = id;
  r.best_filtered = filtered;
  r.best_prompt.base = tokenize("a dog").with_sensitive({{1, true, std::nullopt}});
  r.best_prompt.substitutes = {{1, rendered.substr(2)}};
  r.best_prompt.rendered = rendered;
  r.best_params = ParamVector::initial({1});
  if (filtered) r.best_loss = *filtered ? 1.0 : 0.0;
  return r;
}

std::vector<AttackRecord> mixed(std::size_t bypassed, std::size_t filtered) {
  std::vector<AttackRecord> out;
  for (std::size_t i = 0; i < bypassed + filtered; ++i) out.push_back(record("p" + std::to_string(i), i >= bypassed));
  return out;
}

}  // namespace

TEST(BypassRate, Examples) {
  const RateResult r = bypass_rate(mixed(7, 3));
  EXPECT_DOUBLE_EQ(r.rate, 0.7);
  EXPECT_EQ(r.counted, 10u);
  EXPECT_EQ(bypass_rate(mixed(0, 4)).rate, 0.0);
  EXPECT_THROW(bypass_rate({}), ContractViolation);
}

TEST(BypassRate, IndeterminateRecordsLeaveDenominator) {
  auto recs = mixed(1, 1);
  recs.push_back(record("x", std::nullopt));
  const RateResult r = bypass_rate(recs);
  EXPECT_DOUBLE_EQ(r.rate, 0.5);
  EXPECT_EQ(r.indeterminate, 1u);
}

TEST(AttackSuccess, ScriptedScoresAgainstThreshold) {
  // p0 succeeds on the second attempt, p1 never, p2 was filtered.
  const ScriptedTarget target([](std::string_view prompt, int, std::uint64_t, std::size_t) {
    static thread_local int p0_calls = 0;
    if (prompt == "a hund") return unfiltered({++p0_calls >= 2 ? 0.9 : 0.1});
    return unfiltered({0.2});
  });
  std::vector<AttackRecord> recs{record("p0", false), record("p1", false, "a perro"), record("p2", true)};
  EXPECT_DOUBLE_EQ(attack_success_rate(recs, 1, target, 0.5).rate, 0.0);
  const RateResult five = attack_success_rate(recs, 5, target, 0.5);
  EXPECT_DOUBLE_EQ(five.rate, 1.0 / 3.0);
  EXPECT_EQ(five.counted, 3u);
  EXPECT_THROW(attack_success_rate(recs, 0, target, 0.5), ContractViolation);
}

TEST(AttackSuccess, DeterministicTargetMakesAllNEqual) {
  const SimulatedTarget target(dog_sim_config({"hund"}));
  std::vector<AttackRecord> recs{record("a", false), record("b", false, "a hun"), record("c", true)};
  const double one = attack_success_rate(recs, 1, target, 0.5).rate;
  EXPECT_DOUBLE_EQ(one, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(attack_success_rate(recs, 5, target, 0.5).rate, one);
  EXPECT_DOUBLE_EQ(attack_success_rate(recs, 5, target, 1.01).rate, 0.0);
}

TEST(AttackSuccess, MonotoneInAttemptsUnderNoise) {
  const SimulatedTarget target(dog_sim_config({"hundchen"}, 4, 0.25, 8));
  std::vector<AttackRecord> recs;
  for (int i = 0; i < 200; ++i) recs.push_back(record("p" + std::to_string(i), false, "a hundc"));
  const double one = attack_success_rate(recs, 1, target, 0.5, 3).rate;
  const double five = attack_success_rate(recs, 5, target, 0.5, 3).rate;
  EXPECT_GT(one, 0.0);
  EXPECT_LT(one, 1.0);
  EXPECT_GE(five, one);
  EXPECT_LE(five, bypass_rate(recs).rate);
}

TEST(AttackSuccess, TargetErrorYieldsIndeterminate) {
  const ScriptedTarget target([](std::string_view, int, std::uint64_t, std::size_t) -> TargetResponse {
    throw TargetError("down", true);
  });
  const RateResult r = attack_success_rate({record("a", false), record("b", true)}, 1, target, 0.5);
  EXPECT_EQ(r.indeterminate, 1u);
  EXPECT_EQ(r.counted, 1u);
  EXPECT_EQ(r.rate, 0.0);
}

TEST(SuccessTrace, PrefixSemantics) {
  SuccessTrace t;
  t.eligible = true;
  t.attempts = 3;
  t.first_success = 2;
  EXPECT_EQ(t.success_within(2), false);
  EXPECT_EQ(t.success_within(3), true);
  SuccessTrace e;
  e.eligible = true;
  e.attempts = 1;
  e.first_error = 1;
  EXPECT_EQ(e.success_within(1), false);
  EXPECT_EQ(e.success_within(2), std::nullopt);
  EXPECT_EQ(SuccessTrace{}.success_within(5), false);
  EXPECT_EQ(attempt_seed(1, "p0", 0), attempt_seed(1, "p0", 0));
  EXPECT_NE(attempt_seed(1, "p0", 0), attempt_seed(1, "p0", 1));
  EXPECT_NE(attempt_seed(1, "p0", 0), attempt_seed(1, "p1", 0));
}

TEST(SemanticConsistency, IdentityAndWordBudget) {
  const HashNgramProvider hash;
  const SimilarityReport same = semantic_consistency("a photo of a dog", "a photo of a dog", hash);
  EXPECT_NEAR(same.scores.at("text_ori_adv"), 1.0, 1e-12);
  const double one_word =
      semantic_consistency("a photo of a dog in the park", "a photo of a hund in the park", hash).scores.at("text_ori_adv");
  const double all_words =
      semantic_consistency("a photo of a dog in the park", "ein foto von einem hund im park", hash).scores.at("text_ori_adv");
  EXPECT_GT(one_word, all_words);
  EXPECT_LT(one_word, 1.0);
}

TEST(SemanticConsistency, OmissionsCarryReasons) {
  const HashNgramProvider hash;
  const SimilarityReport bare = semantic_consistency("a dog", "a hund", hash);
  EXPECT_EQ(bare.scores.size(), 1u);
  EXPECT_TRUE(bare.omitted.count("text_safe_adv"));
  EXPECT_TRUE(bare.omitted.count("image_ori_adv"));

  const EmbeddingStore images({{"a dog", {1.0, 0.0}}, {"a hund", {0.6, 0.8}}}, 2, false);
  SimilarityOptions opts;
  opts.safe_prompt = "a quiet street";
  opts.image_store = &images;
  const SimilarityReport full = semantic_consistency("a dog", "a hund", hash, opts);
  EXPECT_DOUBLE_EQ(full.scores.at("image_ori_adv"), 0.6);
  EXPECT_TRUE(full.scores.count("text_safe_adv"));
  EXPECT_TRUE(full.omitted.empty());

  const SimilarityReport missing = semantic_consistency("a dog", "a perro", hash, opts);
  EXPECT_NE(missing.omitted.at("image_ori_adv").find("a perro"), std::string::npos);
}

TEST(EvaluateCorpus, CountsRatesAndInvariants) {
  const SimulatedTarget target(dog_sim_config({"hund"}));
  std::vector<AttackRecord> recs{record("a", false), record("b", false, "a hun"), record("c", true),
                                 record("d", std::nullopt)};
  recs[3].status = AttackRecord::Status::failed;
  const HashNgramProvider hash;
  EvalOptions opts;
  opts.text_provider = &hash;
  opts.jobs = 2;
  const CorpusResult r = evaluate_corpus(recs, target, opts);
  EXPECT_DOUBLE_EQ(r.bpr, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.asr.at(1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.asr.at(5), 1.0 / 3.0);
  EXPECT_EQ(r.counted, 3u);
  EXPECT_EQ(r.bypass_indeterminate, 1u);
  EXPECT_EQ(r.failed_records, 1u);
  EXPECT_TRUE(r.sim_stats.count("text_ori_adv"));
  EXPECT_EQ(r.prompts[2].success.at(5), false);
  EXPECT_EQ(r.prompts[3].success.at(1), std::nullopt);
  EXPECT_NO_THROW(r.check_invariants());
  EXPECT_EQ(recs[0].prompt_id, "a");

  EvalOptions bad;
  bad.n_values = {};
  EXPECT_THROW(evaluate_corpus(recs, target, bad), ContractViolation);
  EXPECT_THROW(evaluate_corpus({}, target, opts), ContractViolation);
}

TEST(EvaluateCorpus, InvariantViolationsDetected) {
  CorpusResult r;
  r.bpr = 0.5;
  r.asr = {{1, 0.4}, {5, 0.3}};
  EXPECT_THROW(r.check_invariants(), ContractViolation);
  r.asr = {{1, 0.4}, {5, 0.6}};
  EXPECT_THROW(r.check_invariants(), ContractViolation);
  r.asr = {{1, 0.4}, {5, 0.5}};
  EXPECT_NO_THROW(r.check_invariants());
}

TEST(Reports, JsonRoundTripAndCsv) {
  const SimulatedTarget target(dog_sim_config({"hund"}));
  std::vector<AttackRecord> recs{record("a", false), record("needs,quote", true)};
  const HashNgramProvider hash;
  EvalOptions opts;
  opts.text_provider = &hash;
  const CorpusResult r = evaluate_corpus(recs, target, opts);
  const nlohmann::json j = r;
  EXPECT_EQ(nlohmann::json(j.get<CorpusResult>()).dump(), j.dump());
  EXPECT_EQ(j["schema_version"], kReportSchemaVersion);

  nlohmann::json future = j;
  future["schema_version"] = 99;
  EXPECT_THROW(future.get<CorpusResult>(), ContractViolation);

  std::ostringstream csv;
  write_csv(csv, r);
  EXPECT_EQ(csv.str(),
            "prompt_id,bypassed,asr1_success,asr5_success,best_loss,iterations,query_count\n"
            "a,1,1,1,0.0,0,0\n"
            "\"needs,quote\",0,0,0,1.0,0,0\n");
}

TEST(Reports, EmbeddingExportPairsPerPrompt) {
  const HashNgramProvider hash(8);
  std::ostringstream out;
  write_embedding_export(out, {record("a", false), record("b", true)}, hash);
  std::istringstream lines(out.str());
  std::string line;
  std::vector<nlohmann::json> rows;
  while (std::getline(lines, line)) rows.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0]["id"], "a");
  EXPECT_EQ(rows[0]["kind"], "ori");
  EXPECT_EQ(rows[1]["kind"], "adv");
  EXPECT_EQ(rows[1]["vector"].get<std::vector<double>>(), hash.embed("a hund").vector);
  EXPECT_EQ(rows[2]["vector"].size(), 8u);
}
