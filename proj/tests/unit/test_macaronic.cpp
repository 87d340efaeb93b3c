#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "macrt/errors.hpp"
#include "macrt/macaronic.hpp"

using namespace macrt;

TEST(ComputeIndices, Examples) {
  EXPECT_EQ(compute_indices(0.0, 1.0, 5), (IndexPair{0, 5}));
  EXPECT_EQ(compute_indices(0.34, 0.67, 6), (IndexPair{2, 4}));
  EXPECT_EQ(compute_indices(0.8, 0.3, 7), (IndexPair{5, 5}));
  EXPECT_EQ(compute_indices(0.5, 0.5, 3), (IndexPair{1, 1}));
  EXPECT_EQ(compute_indices(1.0, 1.0, 4), (IndexPair{4, 4}));
  EXPECT_EQ(compute_indices(0.3, 0.9, 0), (IndexPair{0, 0}));
}

TEST(ComputeIndices, RejectsOutOfRange) {
  EXPECT_THROW(compute_indices(-0.01, 0.5, 4), ContractViolation);
  EXPECT_THROW(compute_indices(0.1, 1.01, 4), ContractViolation);
  EXPECT_THROW(compute_indices(std::nan(""), 0.5, 4), ContractViolation);
}

TEST(ComputeIndices, OrderedWithinLength) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const std::size_t l = rng() % 41;
    const IndexPair p = compute_indices(u(rng), u(rng), l);
    ASSERT_LE(p.mu1, p.mu2);
    ASSERT_LE(p.mu2, l);
  }
}

TEST(BuildSubstitute, OrdersByAlpha) {
  const std::vector<std::string> c{"hund", "perro"};
  const std::vector<double> b1{0, 0}, b2{1, 1};
  EXPECT_EQ(build_substitute(c, b1, b2, std::vector<double>{0.9, 0.1}).text, "hundperro");
  EXPECT_EQ(build_substitute(c, b1, b2, std::vector<double>{0.1, 0.9}).text, "perrohund");
}

TEST(BuildSubstitute, TiesKeepCandidateOrder) {
  const std::vector<std::string> c{"ab", "cd", "ef"};
  const std::vector<double> b1{0, 0, 0}, b2{1, 1, 1};
  const Substitute s = build_substitute(c, b1, b2, std::vector<double>{0.5, 0.5, 0.2});
  EXPECT_EQ(s.text, "abcdef");
  EXPECT_EQ(build_substitute(c, b1, b2, std::vector<double>{0.2, 0.5, 0.5}).text, "cdefab");
  ASSERT_EQ(s.fragments.size(), 3u);
  EXPECT_EQ(s.fragments[0].candidate, 0u);
  EXPECT_EQ(s.fragments[2].candidate, 2u);
}

TEST(BuildSubstitute, FragmentsSliceScalars) {
  const std::vector<std::string> c{"ápjaro", "σκύλος", "hund"};
  const Substitute s = build_substitute(c, std::vector<double>{0.0, 0.5, 0.9}, std::vector<double>{0.34, 1.0, 0.2},
                                        std::vector<double>{0.3, 0.2, 0.1});
  // ápjaro[0,2) + σκύλος[3,6) + hund[3,3)
  EXPECT_EQ(s.text, "áp" "λος");
  ASSERT_EQ(s.fragments.size(), 3u);
  EXPECT_EQ(s.fragments[2].text, "");
  EXPECT_EQ(s.fragments[1].mu1, 3u);
  EXPECT_EQ(s.fragments[1].mu2, 6u);
}

TEST(BuildSubstitute, AllEmptyIsLegal) {
  const std::vector<std::string> c{"hund", "perro"};
  const Substitute s = build_substitute(c, std::vector<double>{0.9, 0.9}, std::vector<double>{0.1, 0.1},
                                        std::vector<double>{0.5, 0.5});
  EXPECT_TRUE(s.empty());
}

TEST(BuildSubstitute, LengthMismatchThrows) {
  const std::vector<std::string> c{"hund", "perro"};
  EXPECT_THROW(build_substitute(c, std::vector<double>{0}, std::vector<double>{1, 1}, std::vector<double>{1, 1}),
               ContractViolation);
}

TEST(BuildSubstitute, PermutationInvariantWithDistinctAlphas) {
  const std::vector<std::string> c{"hund", "perro", "chien", "σκύλος", "koira"};
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> b1(5), b2(5), a(5);
    for (std::size_t j = 0; j < 5; ++j) {
      b1[j] = u(rng);
      b2[j] = u(rng);
      a[j] = u(rng);
    }
    std::vector<std::size_t> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::string> pc;
    std::vector<double> pb1, pb2, pa;
    for (std::size_t j : perm) {
      pc.push_back(c[j]);
      pb1.push_back(b1[j]);
      pb2.push_back(b2[j]);
      pa.push_back(a[j]);
    }
    EXPECT_EQ(build_substitute(c, b1, b2, a).text, build_substitute(pc, pb1, pb2, pa).text);
  }
}

TEST(BuildSubstitute, ProvenanceAndLengthBound) {
  const std::vector<std::string> c{"ápjaro", "σκύλος", "狗", "hund"};
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t total = 0;
  for (const auto& w : c) total += scalar_count(w);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> b1(4), b2(4), a(4);
    for (std::size_t j = 0; j < 4; ++j) {
      b1[j] = u(rng);
      b2[j] = u(rng);
      a[j] = u(rng);
    }
    const Substitute s = build_substitute(c, b1, b2, a);
    EXPECT_LE(scalar_count(s.text), total);
    std::string rebuilt;
    for (const auto& f : s.fragments) {
      EXPECT_EQ(f.text, char_slice(c[f.candidate], f.mu1, f.mu2));
      rebuilt += f.text;
    }
    EXPECT_EQ(rebuilt, s.text);
  }
}

TEST(Assemble, ReplacesAndKeepsPunctuation) {
  const Prompt p = tokenize("a photo of a dog.").with_sensitive({{4, true, std::nullopt}});
  const AdversarialPrompt adv = assemble(p, {{4, "nikchocahund"}});
  EXPECT_EQ(adv.rendered, "a photo of a nikchocahund.");
  EXPECT_TRUE(adv.removed.empty());
}

TEST(Assemble, IdentitySubstitutesReproduceRaw) {
  const Prompt p = tokenize("  (a)  photo of a dog!? ").with_sensitive({{0, true, std::nullopt}, {4, true, std::nullopt}});
  std::map<std::size_t, std::string> subs;
  for (std::size_t i = 0; i < p.words().size(); ++i) subs[i] = p.words()[i].text;
  EXPECT_EQ(assemble(p, subs).rendered, p.raw());
}

TEST(Assemble, EmptySubstituteCollapsesWhitespace) {
  const Prompt p = tokenize("a photo of a dog.").with_sensitive({{4, true, std::nullopt}});
  const AdversarialPrompt adv = assemble(p, {{4, ""}});
  EXPECT_EQ(adv.rendered, "a photo of a.");
  EXPECT_EQ(adv.removed, std::vector<std::size_t>{4});

  const Prompt first = tokenize("dog runs home").with_sensitive({{0, true, std::nullopt}});
  EXPECT_EQ(assemble(first, {{0, ""}}).rendered, "runs home");
  const Prompt middle = tokenize("a dog runs").with_sensitive({{1, true, std::nullopt}});
  EXPECT_EQ(assemble(middle, {{1, ""}}).rendered, "a runs");
}

TEST(Assemble, MissingSubstituteIsContractViolation) {
  const Prompt p = tokenize("a dog and a cat").with_sensitive({{1, true, std::nullopt}, {4, true, std::nullopt}});
  EXPECT_THROW(assemble(p, {{1, "hund"}}), ContractViolation);
  EXPECT_THROW(assemble(p, {{1, "hund"}, {4, "gato"}, {9, "x"}}), ContractViolation);
  EXPECT_EQ(assemble(p, {{1, "hund"}, {4, "gato"}}).rendered, "a hund and a gato");
}

TEST(ParamVector, InitialLayout) {
  const ParamVector p = ParamVector::initial({4, 2});
  EXPECT_EQ(p.size(), 18u);
  EXPECT_EQ(std::vector<double>(p.beta1(0).begin(), p.beta1(0).end()), (std::vector<double>{0, 0, 0, 0}));
  EXPECT_EQ(std::vector<double>(p.beta2(1).begin(), p.beta2(1).end()), (std::vector<double>{1, 1}));
  EXPECT_EQ(std::vector<double>(p.alpha(0).begin(), p.alpha(0).end()), (std::vector<double>{1.0, 0.75, 0.5, 0.25}));
  EXPECT_EQ(std::vector<double>(p.alpha(1).begin(), p.alpha(1).end()), (std::vector<double>{1.0, 0.5}));
  EXPECT_TRUE(p.in_unit_cube());
}

TEST(ParamVector, ClampRestoresUnitCube) {
  ParamVector p = ParamVector::initial({3});
  auto c = p.coords();
  c[0] = -0.2;
  c[4] = 1.7;
  c[8] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(p.in_unit_cube());
  p.clamp();
  EXPECT_TRUE(p.in_unit_cube());
  EXPECT_EQ(p.coords()[0], 0.0);
  EXPECT_EQ(p.coords()[4], 1.0);
  EXPECT_EQ(p.coords()[8], 0.0);
}

TEST(ParamVector, JsonRoundTrip) {
  ParamVector p = ParamVector::initial({3, 2});
  p.coords()[1] = 0.123456789012345678;
  const nlohmann::json j = p;
  EXPECT_EQ(j.get<ParamVector>(), p);
}

TEST(RenderParams, InitialPointConcatenatesEveryCandidate) {
  const Prompt p = tokenize("a dog chasing a cat.").with_sensitive({{1, true, std::nullopt}, {4, true, std::nullopt}});
  const std::vector<CandidateSet> sets{CandidateSet::from_texts("dog", {"hund", "perro"}),
                                       CandidateSet::from_texts("cat", {"gato", "kissa", "chat"})};
  const AdversarialPrompt adv = render_params(p, sets, ParamVector::initial({2, 3}));
  EXPECT_EQ(adv.rendered, "a hundperro chasing a gatokissachat.");
  EXPECT_THROW(render_params(p, sets, ParamVector::initial({2})), ContractViolation);
}
