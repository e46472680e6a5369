#include <cmath>
#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "textdial/analytics.hpp"

using namespace textdial;

namespace {

const std::filesystem::path kFixtures = TEXTDIAL_FIXTURE_DIR;

std::vector<Dialogue> questions(std::initializer_list<const char*> qs) {
  std::vector<Dialogue> out(1);
  for (const char* q : qs) out[0] = append_pair(out[0], q, "answer");
  return out;
}

std::vector<Dialogue> utterance(const char* answer) {
  return {append_pair({}, "q", answer)};
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::Io;
}

std::vector<double> random_vector(std::mt19937& rng, std::size_t n, bool ties) {
  std::vector<double> v(n);
  if (ties) {
    std::uniform_int_distribution<int> d(0, 6);
    for (auto& x : v) x = d(rng);
  } else {
    std::normal_distribution<double> d(0.0, 3.0);
    for (auto& x : v) x = d(rng);
  }
  return v;
}

bool constant(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
}

}  // namespace

// --- question types ---------------------------------------------------------

TEST(QuestionTypes, HowMuchExcluded) {
  const auto s =
      question_type_stats(questions({"What is X?", "How much is Y?", "How does Z work?", "Why?"}));
  EXPECT_EQ(s.pct_what_which, 25.0);
  EXPECT_EQ(s.pct_why, 25.0);
  EXPECT_EQ(s.pct_how, 25.0);
}

TEST(QuestionTypes, NonExclusiveBuckets) {
  const auto s = question_type_stats(questions({"Which one, and how?"}));
  EXPECT_EQ(s.pct_what_which, 100.0);
  EXPECT_EQ(s.pct_why, 0.0);
  EXPECT_EQ(s.pct_how, 100.0);
}

TEST(QuestionTypes, NoTriggers) {
  const auto s = question_type_stats(questions({"Tell me more."}));
  EXPECT_EQ(s.pct_what_which + s.pct_why + s.pct_how, 0.0);
}

TEST(QuestionTypes, HowManyThenPlainHowCounts) {
  EXPECT_EQ(question_type_stats(questions({"How many, and how so?"})).pct_how, 100.0);
  EXPECT_EQ(question_type_stats(questions({"How many are there?"})).pct_how, 0.0);
}

TEST(QuestionTypes, EmptyDataset) {
  EXPECT_EQ(kind_of([] { question_type_stats({}); }), ErrorKind::EmptyDataset);
  EXPECT_EQ(kind_of([] { length_stats({Dialogue{}}); }), ErrorKind::EmptyDataset);
}

// --- lengths and entropy --------------------------------------------------------

TEST(LengthStats, SinglePair) {
  const auto s = length_stats({append_pair({}, "a b", "c d e")});
  EXPECT_EQ(s.avg_tokens_question, 2.0);
  EXPECT_EQ(s.avg_tokens_answer, 3.0);
  EXPECT_EQ(s.avg_words_per_utterance, 2.5);
}

TEST(LengthStats, MeanOverQuestions) {
  const auto s = length_stats({append_pair(append_pair({}, "a b", "x"), "a b c d", "y")});
  EXPECT_EQ(s.avg_tokens_question, 3.0);
}

TEST(BigramEntropy, DegenerateDistribution) {
  EXPECT_EQ(bigram_entropy(utterance("a a a")), 0.0);
}

TEST(BigramEntropy, HandCase) {
  EXPECT_NEAR(bigram_entropy(utterance("a b a b")), 0.9182958340544896, 1e-12);
  EXPECT_NEAR(bigram_entropy(utterance("a b a b")), 0.9183, 1e-4);
}

TEST(BigramEntropy, UniformOverKBigrams) {
  for (int k = 1; k <= 8; ++k) {
    std::string text;
    for (int i = 0; i <= k; ++i) text += "w" + std::to_string(i) + " ";
    EXPECT_NEAR(bigram_entropy(utterance(text.c_str())), std::log2(k), 1e-12) << k;
  }
}

TEST(BigramEntropy, NoBigramsAcrossUtterances) {
  // "a" and "b" sit in different utterances, so no bigram spans them.
  EXPECT_EQ(kind_of([] { bigram_entropy({append_pair({}, "a", "b")}); }), ErrorKind::NoBigrams);
}

TEST(BigramEntropyProperty, BoundedByLogDistinct) {
  std::mt19937 rng(2);
  for (int i = 0; i < 200; ++i) {
    std::string text;
    std::map<std::pair<int, int>, int> distinct;
    int prev = -1;
    const int n = 2 + i % 15;
    for (int k = 0; k < n; ++k) {
      const int t = static_cast<int>(rng() % 4);
      text += std::string(1, static_cast<char>('a' + t)) + " ";
      if (prev >= 0) distinct[{prev, t}]++;
      prev = t;
    }
    const double h = bigram_entropy(utterance(text.c_str()));
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log2(static_cast<double>(distinct.size())) + 1e-12);
  }
}

TEST(DatasetStats, FixtureMatchesHandSheet) {
  const auto dialogues = read_dialogues(kFixtures / "stats_dialogues.jsonl");
  std::ifstream in(kFixtures / "stats_expected.json");
  const auto sheet = nlohmann::json::parse(in);
  const auto s = dataset_stats(dialogues);
  EXPECT_EQ(s.n_dialogues, sheet["n_dialogues"].get<std::size_t>());
  EXPECT_EQ(s.n_pairs, sheet["n_pairs"].get<std::size_t>());
  EXPECT_EQ(s.pct_what_which, sheet["pct_what_which"].get<double>());
  EXPECT_EQ(s.pct_why, sheet["pct_why"].get<double>());
  EXPECT_EQ(s.pct_how, sheet["pct_how"].get<double>());
  EXPECT_EQ(s.avg_tokens_question, sheet["avg_tokens_question"].get<double>());
  EXPECT_EQ(s.avg_tokens_answer, sheet["avg_tokens_answer"].get<double>());
  EXPECT_EQ(s.avg_words_per_utterance, sheet["avg_words_per_utterance"].get<double>());
  EXPECT_NEAR(s.bigram_entropy_bits, sheet["bigram_entropy_bits"].get<double>(), 1e-12);
  EXPECT_NE(render_table(s).find("bigram entropy (bits)"), std::string::npos);
  EXPECT_EQ(to_json(s)["n_pairs"], 5);
}

TEST(DatasetStats, OneDialogueOnePair) {
  const auto s = dataset_stats({append_pair({}, "q", "a")});
  EXPECT_EQ(s.n_dialogues, 1u);
  EXPECT_EQ(s.n_pairs, 1u);
}

// --- correlation -------------------------------------------------------------------

TEST(Pearson, PerfectLinear) {
  const auto r = pearson({1, 2, 3}, {2, 4, 6});
  EXPECT_EQ(r.coefficient, 1.0);
  EXPECT_EQ(r.p_value, 0.0);
  EXPECT_EQ(r.n, 3u);
  EXPECT_EQ(pearson({1, 2, 3}, {6, 4, 2}).coefficient, -1.0);
}

TEST(Pearson, HandValue) {
  const auto r = pearson({1, 2, 3, 4}, {1, 3, 2, 4});
  EXPECT_EQ(r.coefficient, 0.8);
  // Reference values from scipy.stats.pearsonr.
  EXPECT_NEAR(r.p_value, 0.20000000000000018, 1e-12);
}

TEST(Pearson, BinaryHumanScores) {
  const auto r = pearson({0.3, 1.7, 2.2, 4.1, 5.0, 3.3, 2.8}, {1, 0, 1, 1, 1, 0, 1});
  EXPECT_NEAR(r.coefficient, 0.11888940525246254, 1e-12);
  EXPECT_NEAR(r.p_value, 0.7995904705937844, 1e-12);
}

TEST(Pearson, Errors) {
  EXPECT_EQ(kind_of([] { pearson({1, 2}, {1, 2}); }), ErrorKind::LengthMismatch);
  EXPECT_EQ(kind_of([] { pearson({1, 2, 3}, {1, 2}); }), ErrorKind::LengthMismatch);
  EXPECT_EQ(kind_of([] { pearson({1, 1, 1}, {1, 2, 3}); }), ErrorKind::ConstantInput);
  EXPECT_EQ(kind_of([] { spearman({1, 2, 3}, {5, 5, 5}); }), ErrorKind::ConstantInput);
}

TEST(Spearman, HandValue) {
  EXPECT_EQ(spearman({1, 2, 3, 4}, {1, 3, 2, 4}).coefficient, 0.8);
}

TEST(Spearman, TiesUseAverageRanks) {
  EXPECT_EQ(average_ranks({10, 20, 20, 30}), (std::vector<double>{1, 2.5, 2.5, 4}));
  const auto r = spearman({1, 2, 2, 3, 5, 4}, {2, 1, 3, 3, 6, 5});
  // Reference values from scipy.stats.spearmanr.
  EXPECT_NEAR(r.coefficient, 0.8676470588235294, 1e-12);
  EXPECT_NEAR(r.p_value, 0.025116718400162795, 1e-12);
}

TEST(Spearman, MonotoneTransformGivesOne) {
  const std::vector<double> x = {0.1, 5, -3, 2.5, 9, 4};
  std::vector<double> y;
  for (double v : x) y.push_back(std::exp(v));
  EXPECT_EQ(spearman(x, y).coefficient, 1.0);
}

TEST(CorrelationProperty, MatchesBruteForceOracle) {
  std::mt19937 rng(2024);
  int checked = 0;
  while (checked < 100) {
    const std::size_t n = 3 + rng() % 48;
    const bool ties = checked % 2 == 0;
    const auto x = random_vector(rng, n, ties);
    const auto y = random_vector(rng, n, ties);
    if (constant(x) || constant(y)) continue;
    ++checked;
    EXPECT_NEAR(pearson(x, y).coefficient, oracle::pearson(x, y), 1e-12);
    EXPECT_EQ(average_ranks(x), oracle::ranks(x));
    EXPECT_NEAR(spearman(x, y).coefficient, oracle::spearman(x, y), 1e-12);
  }
}

TEST(CorrelationProperty, AffineAndMonotoneInvariance) {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> coef(0.1, 5.0);
  for (int i = 0; i < 200; ++i) {
    const auto x = random_vector(rng, 3 + i % 30, false);
    const auto y = random_vector(rng, x.size(), false);
    const double a = coef(rng);
    const double b = coef(rng) - 2.5;
    std::vector<double> pos, neg, mono;
    for (double v : x) {
      pos.push_back(a * v + b);
      neg.push_back(-a * v + b);
      mono.push_back(std::cbrt(v) + v);
    }
    const auto r = pearson(x, y);
    EXPECT_NEAR(pearson(pos, y).coefficient, r.coefficient, 1e-12);
    EXPECT_NEAR(pearson(neg, y).coefficient, -r.coefficient, 1e-12);
    EXPECT_NEAR(spearman(mono, y).coefficient, spearman(x, y).coefficient, 1e-12);
    for (const auto& c : {r, spearman(x, y)}) {
      EXPECT_LE(std::abs(c.coefficient), 1.0);
      EXPECT_GE(c.p_value, 0.0);
      EXPECT_LE(c.p_value, 1.0);
    }
  }
}

// --- annotations --------------------------------------------------------------------

TEST(Annotations, ReadAndJoin) {
  std::istringstream csv(
      "dialogue_id,pair_index,criterion,human_score\n"
      "d1,1,informativeness,1\n"
      "d1,2,informativeness,0\n"
      "d1,1,coherence,1\n");
  const auto records = read_annotations(csv);
  ASSERT_EQ(records.size(), 3u);
  MetricReport r;
  r.dialogue_id = "d1";
  r.per_pair["informativeness"] = {1.0, 0.25};
  const auto joined = join_annotations(records, {{"d1", r}}, "informativeness", "informativeness");
  ASSERT_EQ(joined.size(), 2u);
  EXPECT_EQ(joined[1].metric_score, 0.25);
  EXPECT_EQ(joined[1].human_score, 0);
}

TEST(Annotations, UnmatchedRowsAreListed) {
  std::istringstream csv(
      "dialogue_id,pair_index,criterion,human_score\n"
      "ghost,1,informativeness,1\n"
      "d1,9,informativeness,1\n");
  MetricReport r;
  r.per_pair["informativeness"] = {1.0};
  try {
    join_annotations(read_annotations(csv), {{"d1", r}}, "informativeness", "informativeness");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnmatchedJoin);
    EXPECT_NE(std::string(e.what()).find("ghost#1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("d1#9"), std::string::npos);
  }
}

TEST(Annotations, RejectsNonBinaryScoresAndBadHeader) {
  std::istringstream bad_score("dialogue_id,pair_index,criterion,human_score\nd,1,c,2\n");
  EXPECT_EQ(kind_of([&] { read_annotations(bad_score); }), ErrorKind::Schema);
  std::istringstream bad_header("id,pair,crit,score\n");
  EXPECT_EQ(kind_of([&] { read_annotations(bad_header); }), ErrorKind::Schema);
}
