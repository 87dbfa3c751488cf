#include <numeric>

#include "doctest.h"
#include "weakhier/error.hpp"
#include "weakhier/language_model.hpp"

using namespace weakhier;

namespace {

const TokenizerConfig kSingleLetters{.lowercase = true, .min_token_length = 1, .min_count = 1};

double total(const std::vector<double>& p) { return std::accumulate(p.begin(), p.end(), 0.0); }

}  // namespace

TEST_CASE("toy trigram: both continuations of (a, b) tie") {
  const auto corpus = build_corpus({{"d", "a b c a b d", std::nullopt}}, kSingleLetters);
  const auto lm = NgramModel::train(corpus, 3);
  const auto& v = corpus.vocabulary;
  const std::vector<TokenId> ctx{v.lookup("a"), v.lookup("b")};
  CHECK(lm.count(ctx, v.lookup("c")) == 1);
  CHECK(lm.count(ctx, v.lookup("d")) == 1);

  std::vector<double> p;
  lm.next_distribution(ctx, p);
  CHECK(total(p) == doctest::Approx(1.0).epsilon(1e-12));
  const double pc = p[std::size_t(v.lookup("c"))], pd = p[std::size_t(v.lookup("d"))];
  CHECK(pc == doctest::Approx(pd));
  CHECK(pc > p[std::size_t(v.lookup("a"))]);
  CHECK(pc > p[std::size_t(v.lookup("b"))]);
  CHECK(pc + pd > 0.6);
}

TEST_CASE("every context yields a normalised, smoothed distribution") {
  const auto corpus = build_corpus({{"d1", "the cat sat on the mat", {}}, {"d2", "the dog sat on a log", {}}},
                                   kSingleLetters);
  const auto lm = NgramModel::train(corpus, 3);
  const auto& v = corpus.vocabulary;
  std::vector<double> p;
  const std::vector<std::vector<TokenId>> contexts{
      {}, {v.lookup("the")}, {v.lookup("the"), v.lookup("cat")}, {v.lookup("mat"), v.lookup("dog")},
      {v.lookup("log"), v.lookup("log")}, {kOovToken, v.lookup("sat")}};
  for (const auto& ctx : contexts) {
    lm.next_distribution(ctx, p);
    CHECK(total(p) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p[std::size_t(kOovToken)] == 0.0);
    for (std::size_t i = 1; i < p.size(); ++i) CHECK(p[i] > 0.0);
  }
  // Unseen bigram context backs off to unigram mass: "the" is the most frequent word.
  lm.next_distribution(std::vector<TokenId>{v.lookup("log"), v.lookup("log")}, p);
  CHECK(std::max_element(p.begin(), p.end()) - p.begin() == v.lookup("the"));
}

TEST_CASE("sampling never emits OOV and is seeded") {
  const auto corpus = build_corpus({{"d1", "x y z x y w", {}}}, kSingleLetters);
  const auto lm = NgramModel::train(corpus, 3);
  Rng r1(4), r2(4);
  std::vector<double> scratch;
  for (int i = 0; i < 500; ++i) {
    const auto a = lm.sample_next({}, r1, scratch);
    CHECK(a != kOovToken);
    CHECK(a == lm.sample_next({}, r2, scratch));
  }
}

TEST_CASE("language model argument errors") {
  const auto corpus = build_corpus({{"d1", "aa bb", {}}}, {.min_count = 1});
  CHECK_THROWS_AS(NgramModel::train(corpus, 0), ValidationError);
  CHECK_THROWS_AS(NgramModel::train(corpus, 3, 1.5), ValidationError);
  Corpus empty;
  CHECK_THROWS_AS(NgramModel::train(empty, 3), ValidationError);
}
