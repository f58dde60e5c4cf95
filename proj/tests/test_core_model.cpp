#include <gtest/gtest.h>

#include "support.hpp"

using namespace rl_test;

TEST(ExactScalar, ParsesAndNormalizes) {
  EXPECT_EQ(Q("4/6").str(), "2/3");
  EXPECT_EQ(Q("-0.25").str(), "-1/4");
  EXPECT_EQ(Q("7").str(), "7");
  EXPECT_EQ(Q("6/3").str(), "2");
  EXPECT_TRUE(Q("6/3").is_integer());
  EXPECT_EQ(Q("-3/9").denominator(), 3);
  EXPECT_THROW(Q("1/0"), literal_error);
  EXPECT_THROW(Q("sqrt2"), literal_error);
  EXPECT_THROW(Q(""), literal_error);
}

TEST(ExactScalar, ArithmeticIsExact) {
  EXPECT_EQ(Q("1/3") + Q("1/6"), Q("1/2"));
  EXPECT_EQ(Q("1/3") * Q("3"), ExactScalar(1));
  EXPECT_EQ(Q("1/10") + Q("2/10"), Q("3/10"));
  EXPECT_LT(Q("-1/2"), Q("1/3"));
  EXPECT_EQ(Q("-2/3").abs(), Q("2/3"));
  EXPECT_THROW(Q("1") / ExactScalar(0), std::domain_error);
}

TEST(ExactScalar, FieldLawsOnRandomRationals) {
  Gen g(11);
  for (int i = 0; i < 300; ++i) {
    auto a = g.rational(ExactScalar(-5), ExactScalar(5), 12);
    auto b = g.rational(ExactScalar(-5), ExactScalar(5), 12);
    auto c = g.rational(ExactScalar(-5), ExactScalar(5), 12);
    EXPECT_EQ(a * (b + c), a * b + a * c);
    EXPECT_EQ((a + b) - b, a);
    if (!b.is_zero()) {
      EXPECT_EQ((a / b) * b, a);
    }
    EXPECT_EQ(ExactScalar::parse(a.str()), a);
    EXPECT_TRUE(a < b || a == b || b < a);
  }
}

TEST(RealString, ParseAndPrint) {
  auto x = parse_real_string("(1 1/2, -3)");
  ASSERT_EQ(x.size(), 3u);
  EXPECT_EQ(x[1], Q("1/2"));
  EXPECT_EQ(to_string(x), "(1 1/2 -3)");
  EXPECT_TRUE(parse_real_string("()").empty());
}

TEST(Sexp, RoundTripAndErrors) {
  auto s = parse_sexp("(a (b 1/2) ; comment\n c)");
  EXPECT_EQ(to_string(s), "(a (b 1/2) c)");
  EXPECT_THROW(parse_sexp("(a (b)"), syntax_error);
  EXPECT_THROW(parse_sexp("(a) b"), syntax_error);
}

TEST(FiniteDomain, LexicographicTuples) {
  FiniteDomain d(2);
  auto ts = d.tuples(2);
  ASSERT_EQ(ts.size(), 4u);
  EXPECT_EQ(ts[0], (Tuple{0, 0}));
  EXPECT_EQ(ts[1], (Tuple{0, 1}));
  EXPECT_EQ(ts[3], (Tuple{1, 1}));
  EXPECT_EQ(d.tuples(0).size(), 1u);
  EXPECT_THROW(FiniteDomain(0), structure_error);
}

TEST(EncodeStructure, EmptyVocabulary) {
  RStructure s;
  s.domain = FiniteDomain(1);
  EXPECT_EQ(to_string(encode_structure(s, Ranking::identity(1))), "(1)");
}

TEST(EncodeStructure, UnaryRelationAndWeight) {
  auto s = parse_structure("(structure (domain 2) (relation R 1 (0)) (weight f 1 ((0) 1/2) ((1) 1/3)))");
  Ranking pi = Ranking::identity(2);
  RStructure only_r = s;
  only_r.weights.clear();
  EXPECT_EQ(to_string(encode_structure(only_r, pi)), "(1 1 1 0)");
  EXPECT_EQ(to_string(encode_structure(s, pi)), "(1 1 1 0 1/2 1/3)");
}

TEST(EncodeStructure, RankingMismatch) {
  auto s = parse_structure("(structure (domain 3))");
  EXPECT_THROW(encode_structure(s, Ranking::identity(2)), structure_error);
  EXPECT_THROW(Ranking({1, 1}), structure_error);
}

namespace {

RStructure random_structure(Gen& g) {
  RStructure s;
  s.domain = FiniteDomain(g.uniform(1, 4));
  int nr = g.uniform(0, 2), nw = g.uniform(0, 2);
  for (int i = 0; i < nr; ++i) {
    RelationTable r{g.uniform(0, 3), {}};
    for (const auto& t : s.domain.tuples(r.arity))
      if (g.coin()) r.tuples.insert(t);
    s.add_relation("R" + std::to_string(i), r);
  }
  for (int i = 0; i < nw; ++i) {
    WeightTable w(g.uniform(0, 3));
    for (const auto& t : s.domain.tuples(w.arity)) w.set(t, g.rational(ExactScalar(-2), ExactScalar(2)));
    s.add_weight("f" + std::to_string(i), w);
  }
  return s;
}

Ranking random_ranking(Gen& g, int n) {
  std::vector<int> r(static_cast<std::size_t>(n));
  std::iota(r.begin(), r.end(), 1);
  std::shuffle(r.begin(), r.end(), g.engine());
  return Ranking(r);
}

}  // namespace

TEST(EncodeStructure, LengthFormulaOnRandomStructures) {
  Gen g(21);
  for (int i = 0; i < 200; ++i) {
    RStructure s = random_structure(g);
    std::size_t expect = static_cast<std::size_t>(s.domain.size);
    for (const auto& [n, r] : s.relations) expect += s.domain.tuple_count(r.arity);
    for (const auto& [n, w] : s.weights) expect += s.domain.tuple_count(w.arity);
    EXPECT_EQ(encode_structure(s, random_ranking(g, s.domain.size)).size(), expect);
  }
}

TEST(EncodeStructure, RankingsPermuteBlocks) {
  Gen g(22);
  for (int i = 0; i < 100; ++i) {
    RStructure s = random_structure(g);
    auto a = encode_structure(s, random_ranking(g, s.domain.size));
    auto b = encode_structure(s, random_ranking(g, s.domain.size));
    std::size_t pos = static_cast<std::size_t>(s.domain.size);
    auto block = [&](std::size_t len) {
      std::vector<ExactScalar> x(a.begin() + static_cast<long>(pos), a.begin() + static_cast<long>(pos + len));
      std::vector<ExactScalar> y(b.begin() + static_cast<long>(pos), b.begin() + static_cast<long>(pos + len));
      std::sort(x.begin(), x.end());
      std::sort(y.begin(), y.end());
      EXPECT_EQ(x, y);
      pos += len;
    };
    for (const auto& [n, r] : s.relations) block(s.domain.tuple_count(r.arity));
    for (const auto& [n, w] : s.weights) block(s.domain.tuple_count(w.arity));
  }
}

TEST(CharacteristicDistribution, Examples) {
  FiniteDomain d(2);
  auto w = characteristic_distribution(RelationTable{1, {{0}}}, d, 1);
  EXPECT_EQ(w.at({0, 1}), Q("1/2"));
  EXPECT_EQ(w.at({1, 0}), Q("1/2"));
  EXPECT_EQ(w.at({0, 0}), ExactScalar(0));
  EXPECT_EQ(w.at({1, 1}), ExactScalar(0));

  auto e = characteristic_distribution(RelationTable{1, {}}, d, 1);
  EXPECT_EQ(e.at({0, 0}), Q("1/2"));
  EXPECT_EQ(e.at({1, 0}), Q("1/2"));

  RelationTable full{2, {}};
  for (const auto& t : d.tuples(2)) full.tuples.insert(t);
  auto f = characteristic_distribution(full, d, 2);
  for (const auto& t : d.tuples(2)) {
    Tuple one = t;
    one.push_back(1);
    EXPECT_EQ(f.at(one), Q("1/4"));
  }
  EXPECT_THROW(characteristic_distribution(RelationTable{2, {}}, d, 1), structure_error);
}

TEST(CharacteristicDistribution, SumsToOneOnRandomRelations) {
  Gen g(23);
  for (int i = 0; i < 100; ++i) {
    FiniteDomain d(g.uniform(2, 4));
    int k = g.uniform(0, 2);
    RelationTable r{k, {}};
    for (const auto& t : d.tuples(k))
      if (g.coin()) r.tuples.insert(t);
    auto w = characteristic_distribution(r, d, k);
    EXPECT_EQ(w.sum(), ExactScalar(1));
    EXPECT_TRUE(w.is_total(d));
    ExactScalar share(1, static_cast<long>(d.tuple_count(k)));
    for (const auto& [t, v] : w.values) EXPECT_TRUE(v.is_zero() || v == share);
  }
}

TEST(UniformWeightTable, Examples) {
  auto a = uniform_weight_table(FiniteDomain(2), 1);
  EXPECT_EQ(a.at({0}), Q("1/2"));
  auto b = uniform_weight_table(FiniteDomain(3), 2);
  EXPECT_EQ(b.values.size(), 9u);
  for (const auto& [t, v] : b.values) EXPECT_EQ(v, Q("1/9"));
  auto c = uniform_weight_table(FiniteDomain(3), 0);
  EXPECT_EQ(c.at({}), ExactScalar(1));
}

TEST(RStructure, KindValidation) {
  EXPECT_THROW(parse_structure("(structure (domain 2) (weight f 1 ((0) 1/2)))"), structure_error);
  EXPECT_THROW(parse_structure("(structure (domain 2) (kind unit) (weight f 1 ((0) 2) ((1) 0)))"), structure_error);
  EXPECT_THROW(parse_structure("(structure (domain 2) (kind dist) (weight f 1 ((0) 1/2) ((1) 1/4)))"), structure_error);
  EXPECT_NO_THROW(parse_structure("(structure (domain 2) (kind dist) (weight f 1 ((0) 1/2) ((1) 1/2)))"));
  EXPECT_THROW(parse_structure("(structure (domain 2) (relation R 1 (0 1)))"), structure_error);
}

TEST(RStructure, TextRoundTrip) {
  auto s = parse_structure("(structure (domain 3) (relation E 2 (0 1) (1 2)) (weight f 1 ((0) 1/2) ((1) 0) ((2) -3)))");
  auto again = parse_structure(to_string(structure_sexp(s)));
  EXPECT_EQ(encode_structure(s, Ranking::identity(3)), encode_structure(again, Ranking::identity(3)));
}
