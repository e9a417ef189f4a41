#include <gtest/gtest.h>

#include <random>

#include "introdrive/metrics.hpp"

using namespace introdrive;

namespace {
TokenSeq toks(const std::string& s) { return tokenize(s); }
}  // namespace

// ---------------------------------------------------------------------------
// MAE + distance correlation
// ---------------------------------------------------------------------------

TEST(Dcor, PerfectPredictionIsOne) {
  std::vector<double> x = {0.5, 1.0, -2.0, 3.5, 0.1};
  auto s = mae_and_dcor(x, x);
  EXPECT_DOUBLE_EQ(s.mae, 0.0);
  EXPECT_NEAR(s.dcor, 1.0, 1e-12);
  EXPECT_FALSE(s.degenerate);
}

TEST(Dcor, NegatedSeriesStillPerfectlyDependent) {
  std::vector<double> x = {0.5, 1.0, -2.0, 3.5, 0.1};
  std::vector<double> nx;
  for (double v : x) nx.push_back(-v);
  EXPECT_NEAR(mae_and_dcor(nx, x).dcor, 1.0, 1e-12);
}

TEST(Dcor, AffineTransformGivesOne) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> uni(-5, 5);
  std::vector<double> x(12);
  for (auto& v : x) v = uni(rng);
  std::vector<double> y;
  for (double v : x) y.push_back(-2.5 * v + 7.0);
  EXPECT_NEAR(mae_and_dcor(y, x).dcor, 1.0, 1e-12);
}

TEST(Dcor, SixPointHandCaseMatchesBruteForce) {
  const std::vector<double> x = {0.2, 1.5, 2.3, 3.1, 4.8, 5.0};
  const std::vector<double> y = {1.0, 0.7, 2.9, 2.1, 5.5, 4.2};
  auto s = mae_and_dcor(x, y);
  // frozen value from the double-centering computation done by hand
  EXPECT_NEAR(s.dcor, 0.9237742276131568, 1e-10);

  // independent route: dCov^2 = S1 - 2*S2 + S3 on raw distance matrices
  const std::size_t n = x.size();
  auto dist = [&](const std::vector<double>& v) {
    std::vector<double> d(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] = std::abs(v[i] - v[j]);
    return d;
  };
  auto a = dist(x), b = dist(y);
  auto v_stat = [&](const std::vector<double>& m1, const std::vector<double>& m2) {
    double s1 = 0, s3a = 0, s3b = 0, s2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double ra = 0, rb = 0;
      for (std::size_t j = 0; j < n; ++j) {
        s1 += m1[i * n + j] * m2[i * n + j];
        ra += m1[i * n + j];
        rb += m2[i * n + j];
      }
      s2 += ra * rb;
      s3a += ra;
      s3b += rb;
    }
    const double nn = static_cast<double>(n);
    return s1 / (nn * nn) - 2.0 * s2 / (nn * nn * nn) + (s3a * s3b) / (nn * nn * nn * nn);
  };
  const double cov = v_stat(a, b), va = v_stat(a, a), vb = v_stat(b, b);
  const double oracle = std::sqrt(std::max(0.0, cov) / std::sqrt(va * vb));
  EXPECT_NEAR(s.dcor, oracle, 1e-10);
}

TEST(Dcor, ConstantSeriesIsDegenerateZero) {
  std::vector<double> flat(6, 2.0);
  std::vector<double> x = {1, 2, 3, 4, 5, 6};
  auto s = mae_and_dcor(flat, x);
  EXPECT_DOUBLE_EQ(s.dcor, 0.0);
  EXPECT_TRUE(s.degenerate);
}

TEST(Dcor, RejectsBadLengths) {
  EXPECT_THROW(mae_and_dcor({1.0}, {1.0, 2.0}), ContractError);
  EXPECT_THROW(mae_and_dcor({}, {}), ContractError);
}

// ---------------------------------------------------------------------------
// BLEU-4
// ---------------------------------------------------------------------------

TEST(Bleu4, IdenticalCorpusScoresOne) {
  std::vector<TokenSeq> cands = {toks("the car stops because the light is red"),
                                 toks("the car turns left at the corner")};
  std::vector<std::vector<TokenSeq>> refs = {{cands[0]}, {cands[1]}};
  EXPECT_DOUBLE_EQ(bleu4(cands, refs), 1.0);
}

TEST(Bleu4, ZeroFourGramOverlapIsZeroWithoutSmoothing) {
  std::vector<TokenSeq> cands = {toks("red green blue yellow")};
  std::vector<std::vector<TokenSeq>> refs = {{toks("one two three four five")}};
  EXPECT_DOUBLE_EQ(bleu4(cands, refs), 0.0);
  EXPECT_GT(bleu4(cands, refs, /*smooth=*/true), 0.0);
}

TEST(Bleu4, TwoSentenceHandCase) {
  // clipped matches by hand: 1-gram 8/10, 2-gram 5/8, 3-gram 3/6, 4-gram 1/4
  // geometric mean = (8/10 * 5/8 * 3/6 * 1/4)^(1/4) = 0.0625^(1/4) = 0.5
  // BP = exp(1 - 12/10); total = 0.5 * exp(-0.2)
  std::vector<TokenSeq> cands = {toks("the car stops at the light"), toks("a car turns left")};
  std::vector<std::vector<TokenSeq>> refs = {{toks("the car stops at a red light")},
                                             {toks("the car turns left quickly")}};
  EXPECT_NEAR(bleu4(cands, refs), 0.5 * std::exp(-0.2), 1e-12);
  EXPECT_NEAR(bleu4(cands, refs), 0.40936537653899097, 1e-12);
  EXPECT_NEAR(bleu4(cands, refs, true), 0.4865037930174382, 1e-12);
}

TEST(Bleu4, CorpusOrderPermutationInvariant) {
  std::vector<TokenSeq> cands = {toks("the car stops at the light"), toks("a car turns left"),
                                 toks("the truck is parked")};
  std::vector<std::vector<TokenSeq>> refs = {{toks("the car stops at a red light")},
                                             {toks("the car turns left quickly")},
                                             {toks("a truck is parked outside")}};
  const double base = bleu4(cands, refs);
  std::vector<TokenSeq> cands2 = {cands[2], cands[0], cands[1]};
  std::vector<std::vector<TokenSeq>> refs2 = {refs[2], refs[0], refs[1]};
  EXPECT_DOUBLE_EQ(bleu4(cands2, refs2), base);
}

// ---------------------------------------------------------------------------
// CIDEr-D
// ---------------------------------------------------------------------------

namespace {
std::vector<TokenSeq> toy_cands() {
  return {toks("the car slows down"), toks("the car turns right"), toks("a truck is parked")};
}
std::vector<std::vector<TokenSeq>> toy_refs() {
  return {{toks("the car slows down")},
          {toks("the car turns right near the sign")},
          {toks("a truck is parked on the road")}};
}
}  // namespace

TEST(CiderD, IdenticalCandidateScoresTenInToyCorpus) {
  auto res = cider_d(toy_cands(), toy_refs());
  ASSERT_EQ(res.per_candidate.size(), 3u);
  EXPECT_NEAR(res.per_candidate[0], 10.0, 1e-12);
  EXPECT_FALSE(res.degenerate_idf);
}

TEST(CiderD, ToyCorpusMatchesHandComputedTfIdf) {
  auto res = cider_d(toy_cands(), toy_refs());
  // frozen from an independent spreadsheet-style evaluation of the formula
  EXPECT_NEAR(res.per_candidate[1], 5.506832707202845, 1e-12);
  EXPECT_NEAR(res.per_candidate[2], 5.8599093679195775, 1e-12);
  EXPECT_NEAR(res.score, 7.122247358374142, 1e-12);
}

TEST(CiderD, DisjointVocabularyScoresZero) {
  auto cands = toy_cands();
  cands[0] = toks("purple elephant flies home");
  auto res = cider_d(cands, toy_refs());
  EXPECT_DOUBLE_EQ(res.per_candidate[0], 0.0);
}

TEST(CiderD, SingletonCorpusFlagsDegenerateIdf) {
  std::vector<TokenSeq> cands = {toks("the car stops")};
  std::vector<std::vector<TokenSeq>> refs = {{toks("the car stops")}};
  auto res = cider_d(cands, refs);
  EXPECT_TRUE(res.degenerate_idf);
}

TEST(CiderD, CorpusOrderPermutationInvariant) {
  auto res = cider_d(toy_cands(), toy_refs());
  std::vector<TokenSeq> cands2 = {toy_cands()[2], toy_cands()[0], toy_cands()[1]};
  std::vector<std::vector<TokenSeq>> refs2 = {toy_refs()[2], toy_refs()[0], toy_refs()[1]};
  auto res2 = cider_d(cands2, refs2);
  EXPECT_DOUBLE_EQ(res.score, res2.score);
  EXPECT_DOUBLE_EQ(res.per_candidate[0], res2.per_candidate[1]);
}

// ---------------------------------------------------------------------------
// Temporal IoU
// ---------------------------------------------------------------------------

TEST(TemporalIou, IdenticalSetsScoreOne) {
  std::vector<TimedInterval> a = {{0, 10}, {12, 20}};
  auto m = temporal_iou(a, a);
  EXPECT_DOUBLE_EQ(m.mean_iou, 1.0);
  EXPECT_EQ(m.pairs.size(), 2u);
}

TEST(TemporalIou, DirectArithmetic) {
  auto m = temporal_iou({{0, 10}}, {{5, 15}});
  EXPECT_NEAR(m.mean_iou, 5.0 / 15.0, 1e-12);
}

TEST(TemporalIou, ThreeVsTwoHandCase) {
  std::vector<TimedInterval> a = {{0, 10}, {12, 20}, {30, 40}};
  std::vector<TimedInterval> b = {{2, 9}, {28, 41}};
  auto m = temporal_iou(a, b);
  // greedy trace: (a2,b1) iou 10/13 first, then (a0,b0) iou 7/10; a1 unmatched
  ASSERT_EQ(m.pairs.size(), 2u);
  EXPECT_EQ(std::get<0>(m.pairs[0]), 2);
  EXPECT_EQ(std::get<1>(m.pairs[0]), 1);
  EXPECT_EQ(std::get<0>(m.pairs[1]), 0);
  EXPECT_EQ(std::get<1>(m.pairs[1]), 0);
  EXPECT_NEAR(m.mean_iou, (0.7 + 10.0 / 13.0) / 3.0, 1e-12);

  // oracle: enumerate all one-to-one matchings and maximize total IoU
  double best = 0.0;
  for (int i0 = -1; i0 < 3; ++i0)
    for (int i1 = -1; i1 < 3; ++i1) {
      if (i0 == i1 && i0 != -1) continue;
      double total = 0.0;
      if (i0 >= 0) total += interval_iou(a[i0], b[0]);
      if (i1 >= 0) total += interval_iou(a[i1], b[1]);
      best = std::max(best, total);
    }
  EXPECT_NEAR(m.mean_iou, best / 3.0, 1e-12);
}

TEST(TemporalIou, SymmetricUnderSwap) {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> uni(0, 30);
  for (int trial = 0; trial < 40; ++trial) {
    auto gen = [&](int n) {
      std::vector<TimedInterval> v;
      for (int i = 0; i < n; ++i) {
        double s = uni(rng);
        v.push_back({s, s + 1.0 + uni(rng) / 4});
      }
      return v;
    };
    auto a = gen(1 + static_cast<int>(rng() % 4));
    auto b = gen(1 + static_cast<int>(rng() % 4));
    EXPECT_NEAR(temporal_iou(a, b).mean_iou, temporal_iou(b, a).mean_iou, 1e-12);
  }
}

TEST(TemporalIou, EmptySetsFlagged) {
  auto m = temporal_iou({}, {{0, 1}});
  EXPECT_TRUE(m.empty_input);
  EXPECT_DOUBLE_EQ(m.mean_iou, 0.0);
}

// ---------------------------------------------------------------------------
// Agreement report
// ---------------------------------------------------------------------------

namespace {
std::vector<AnnotatedClip> worker_fixture(bool shift_times, bool change_text) {
  std::vector<AnnotatedClip> clips;
  // all >= 4 tokens: shorter sentences have no 4-grams and cannot reach the
  // CIDEr-D identity score even against themselves
  const char* descs[5] = {"the car comes to a stop", "the car slows down", "the car turns left",
                          "the car speeds up", "the car drives forward"};
  const char* justs[5] = {"because the light is red", "because there is a car in front",
                          "because the road curves left", "because the light turned green",
                          "because the road is clear"};
  for (int i = 0; i < 5; ++i) {
    AnnotatedClip c;
    c.video_id = "clip" + std::to_string(i);
    AnnotatedInterval iv;
    iv.start_s = 10.0 * i + (shift_times ? 0.5 : 0.0);
    iv.end_s = iv.start_s + 8.0;
    iv.description = change_text && i == 0 ? "the vehicle halts" : descs[i];
    iv.justification = justs[i];
    c.intervals.push_back(iv);
    clips.push_back(c);
  }
  return clips;
}
}  // namespace

TEST(Agreement, IdenticalAnnotationsScoreTen) {
  auto a = worker_fixture(false, false);
  auto rep = agreement_report(a, a, 0.5);
  EXPECT_EQ(rep.n_matched_pairs, 5);
  EXPECT_NEAR(rep.mean_iou, 1.0, 1e-12);
  EXPECT_NEAR(rep.cider_descriptions, 10.0, 1e-9);
  EXPECT_NEAR(rep.cider_justifications, 10.0, 1e-9);
}

TEST(Agreement, DisjointTimelinesProduceNoPairs) {
  auto a = worker_fixture(false, false);
  auto b = worker_fixture(false, false);
  for (auto& c : b)
    for (auto& iv : c.intervals) {
      iv.start_s += 100.0;
      iv.end_s += 100.0;
    }
  auto rep = agreement_report(a, b, 0.5);
  EXPECT_TRUE(rep.no_pairs);
  EXPECT_EQ(rep.n_matched_pairs, 0);
}

TEST(Agreement, FiveClipFixtureMatchesHandMatching) {
  auto a = worker_fixture(false, false);
  auto b = worker_fixture(true, true);  // 0.5s shift: IoU = 7.5/8.5 > 0.5 everywhere
  auto rep = agreement_report(a, b, 0.5);
  EXPECT_EQ(rep.n_candidate_videos, 5);
  EXPECT_EQ(rep.n_matched_pairs, 5);
  EXPECT_NEAR(rep.mean_iou, 7.5 / 8.5, 1e-12);
  // one description differs, so descriptions drop below justifications
  EXPECT_LT(rep.cider_descriptions, rep.cider_justifications);
  EXPECT_NEAR(rep.cider_justifications, 10.0, 1e-9);
}

// ---------------------------------------------------------------------------
// Attention diagnostics
// ---------------------------------------------------------------------------

TEST(AttentionEntropy, KnownValues) {
  std::vector<double> uniform(240, 1.0 / 240.0);
  EXPECT_NEAR(attention_entropy(uniform), std::log(240.0), 1e-9);
  EXPECT_NEAR(attention_entropy(uniform), 5.4806, 1e-4);

  std::vector<double> one_hot(240, 0.0);
  one_hot[17] = 1.0;
  EXPECT_DOUBLE_EQ(attention_entropy(one_hot), 0.0);

  std::vector<double> mixed = {0.5, 0.25, 0.25, 0.0, 0.0, 0.0};
  EXPECT_NEAR(attention_entropy(mixed), 1.5 * std::log(2.0), 1e-12);
  EXPECT_NEAR(attention_entropy(mixed), 1.0397, 1e-4);
}

TEST(AttentionEntropy, RejectsUnnormalizedInput) {
  EXPECT_THROW(attention_entropy({0.5, 0.3}), ContractError);
  EXPECT_THROW(attention_entropy({0.7, -0.1, 0.4}), ContractError);
}

TEST(KlDivergence, GibbsInequalityOnRandomPairs) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> uni(0.01, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 16);
    std::vector<double> p(n), q(n);
    double sp = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
      p[i] = uni(rng);
      q[i] = uni(rng);
      sp += p[i];
      sq += q[i];
    }
    for (int i = 0; i < n; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    EXPECT_GE(kl_divergence(p, q), 0.0);
    EXPECT_NEAR(kl_divergence(p, p), 0.0, 1e-14);
  }
}
