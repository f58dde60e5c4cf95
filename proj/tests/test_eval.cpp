#include <gtest/gtest.h>

#include "support.hpp"

using namespace rl_test;

namespace {

WeightTable table(std::initializer_list<std::pair<Tuple, const char*>> rows) {
  WeightTable w;
  for (const auto& [t, v] : rows) {
    w.arity = static_cast<int>(t.size());
    w.set(t, Q(v));
  }
  return w;
}

WeightTable nullary(const char* v) { return table({{Tuple{}, v}}); }

}  // namespace

TEST(EvalTerm, SumOverDomain) {
  RStructure s;
  s.domain = FiniteDomain(2);
  s.add_weight("f", table({{{0}, "1/3"}, {{1}, "1/4"}}));
  EXPECT_EQ(eval_term(parse_term("(sum (y) (f y))"), &s, {}), Q("7/12"));
  EXPECT_EQ(eval_term(parse_term("5/2"), &s, {}), Q("5/2"));
  Environment env;
  env.reals["x"] = Q("1/2");
  EXPECT_EQ(eval_term(parse_term("(+ x x)"), nullptr, env), ExactScalar(1));
  EXPECT_THROW(eval_term(parse_term("(sum (y) (f y))"), nullptr, {}), EvalError);
  EXPECT_THROW(eval_term(parse_term("(+ z 1)"), nullptr, {}), WitnessError);
}

TEST(EvalTerm, SumMatchesBruteForceOracle) {
  Gen g(41);
  for (int i = 0; i < 150; ++i) {
    RStructure s;
    s.domain = FiniteDomain(g.uniform(1, 4));
    WeightTable f(2), h(1);
    for (const auto& t : s.domain.tuples(2)) f.set(t, g.rational(ExactScalar(-3), ExactScalar(3), 6));
    for (const auto& t : s.domain.tuples(1)) h.set(t, g.rational(ExactScalar(-3), ExactScalar(3), 6));
    s.add_weight("f", f);
    s.add_weight("h", h);

    // Independent oracle: nested index loops over raw mpq values.
    const int n = s.domain.size;
    mpq_class one_var, two_var, mixed;
    for (int a = 0; a < n; ++a) {
      one_var += h.values.at({a}).raw() * h.values.at({a}).raw();
      for (int b = 0; b < n; ++b) {
        two_var += f.values.at({a, b}).raw();
        mixed += f.values.at({a, b}).raw() * h.values.at({b}).raw() + 1;
      }
    }
    EXPECT_EQ(eval_term(parse_term("(sum (y) (* (h y) (h y)))"), &s, {}).raw(), one_var);
    EXPECT_EQ(eval_term(parse_term("(sum (y z) (f y z))"), &s, {}).raw(), two_var);
    EXPECT_EQ(eval_term(parse_term("(sum (y z) (+ (* (f y z) (h z)) 1))"), &s, {}).raw(), mixed);
  }
}

TEST(EvalFormula, FirstOrderQuantifiers) {
  auto s = parse_structure("(structure (domain 3) (relation E 2 (0 1) (1 2)))");
  EXPECT_TRUE(eval_formula(parse_formula("(forall (x) (eqv x x))"), &s, {}));
  EXPECT_TRUE(eval_formula(parse_formula("(exists (x) (exists (y) (rel E x y)))"), &s, {}));
  EXPECT_FALSE(eval_formula(parse_formula("(forall (x) (exists (y) (rel E x y)))"), &s, {}));
  EXPECT_TRUE(eval_formula(parse_formula("(forall (x) (or (rel max:1 x) (exists (y) (rel succ:1 x y))))"), &s, {}));
  EXPECT_TRUE(eval_formula(parse_formula("(rel lt:2 #0 #2 #1 #0)"), &s, {}));
}

TEST(EvalFormula, StrictOrderDefinitionWithNullaryFunctions) {
  auto f = parse_formula(
      "(exists-fn (r 0 real) (exists-fn (n 0 real) (exists-fn (m 0 real) "
      "(and (<= 1 (n)) (<= 1 (m)) (= (n) (* (r) (m))) (= (+ i (r)) j)))))");
  RStructure s;
  Environment env;
  env.reals["i"] = ExactScalar(0);
  env.reals["j"] = ExactScalar(1);
  env.functions["r"] = nullary("1");
  env.functions["n"] = nullary("1");
  env.functions["m"] = nullary("1");
  EXPECT_TRUE(eval_formula(f, &s, env));
  env.reals["j"] = ExactScalar(0);
  EXPECT_FALSE(eval_formula(f, &s, env));
}

TEST(EvalFormula, DistributionWitnessMustSumToOne) {
  auto s = parse_structure("(structure (domain 2))");
  auto f = parse_formula("(exists-fn (f 1 dist) (<= 0 (f #0)))");
  Environment env;
  env.functions["f"] = table({{{0}, "1/2"}, {{1}, "1/4"}});
  EXPECT_THROW(eval_formula(f, &s, env), WitnessError);
  EXPECT_EQ(eval_verdict(f, &s, env), Verdict::missing_witness);
  env.functions["f"] = table({{{0}, "1/2"}, {{1}, "1/2"}});
  EXPECT_EQ(eval_verdict(f, &s, env), Verdict::true_);
}

TEST(EvalFormula, MissingWitnessIsNotFalsity) {
  auto f = parse_formula("(exists01 (x) (= x 1))");
  EXPECT_EQ(eval_verdict(f, nullptr, {}), Verdict::missing_witness);
  Environment env;
  env.reals["x"] = ExactScalar(2);
  EXPECT_EQ(eval_verdict(f, nullptr, env), Verdict::false_);
}

TEST(EvalFormula, ScopedWitnessesUnderFirstOrderQuantifiers) {
  auto s = parse_structure("(structure (domain 2) (weight w 1 ((0) 1/3) ((1) 2/3)))");
  auto f = parse_formula("(forall (x) (exists01 (v) (= (+ v (w x)) 1)))");
  Environment env;
  env.reals[scoped_name("v", {0})] = Q("2/3");
  env.reals[scoped_name("v", {1})] = Q("1/3");
  EXPECT_TRUE(eval_formula(f, &s, env));
  env.reals[scoped_name("v", {1})] = Q("1/2");
  EXPECT_FALSE(eval_formula(f, &s, env));
}

TEST(EvalFormula, ReplayIsDeterministic) {
  Gen g(42);
  auto f = parse_formula("(exists01 (a b) (and (<= (* a b) 1/4) (or (= a b) (< a b))))");
  for (int i = 0; i < 100; ++i) {
    Environment env;
    env.reals["a"] = g.unit(6);
    env.reals["b"] = g.unit(6);
    bool first = eval_formula(f, env);
    EXPECT_EQ(first, eval_formula(f, env));
    bool oracle = env.reals["a"] * env.reals["b"] <= Q("1/4") && env.reals["a"] <= env.reals["b"];
    EXPECT_EQ(first, oracle);
  }
}

TEST(Environment, TextRoundTrip) {
  auto env = parse_environment("(env (var x 1/2) (fn f ((0) 1/3) ((1) 2/3)) (fo y 1) (rel X (0) (1)) (skolem g ((0) 1)))");
  EXPECT_EQ(env.reals.at("x"), Q("1/2"));
  EXPECT_EQ(env.functions.at("f").arity, 1);
  EXPECT_EQ(parse_environment(to_string(environment_sexp(env))), env);
  EXPECT_THROW(parse_environment("(env (var x pi))"), syntax_error);
  EXPECT_THROW(parse_environment("(witness)"), syntax_error);
}

TEST(BoundedSearch, FindsRationalWitnesses) {
  auto found = search_bounded_witness(parse_formula("(exists01 (x) (= (+ x x) 1))"), nullptr, {2});
  ASSERT_TRUE(found);
  EXPECT_EQ(found->reals.at("x"), Q("1/2"));
}

TEST(BoundedSearch, ReportsNoneWhenGridHasNoWitness) {
  for (int bound : {1, 4, 8}) {
    EXPECT_FALSE(search_bounded_witness(parse_formula("(exists01 (x) (= (* x x) 2))"), nullptr, {bound}));
    EXPECT_FALSE(search_bounded_witness(parse_formula("(exists01 (x) (= (+ (* x x) (* x x)) 1))"), nullptr, {bound}));
  }
}

TEST(BoundedSearch, FunctionWitnessesAreSelfConsistent) {
  auto s = parse_structure("(structure (domain 2))");
  auto f = parse_formula("(exists-fn (p 1 dist) (= (* 3 (p #0)) (p #1)))");
  auto found = search_bounded_witness(f, &s, {4});
  ASSERT_TRUE(found);
  EXPECT_EQ(found->functions.at("p").at({0}), Q("1/4"));
  EXPECT_TRUE(eval_formula(f, &s, *found));

  Gen g(43);
  for (int i = 0; i < 30; ++i) {
    auto a = g.unit(4), b = g.unit(4);
    auto h = parse_formula("(exists01 (x y) (and (<= " + a.str() + " (+ x y)) (= (* x " + b.str() + ") y)))");
    if (auto env = search_bounded_witness(h, nullptr, {4})) {
      EXPECT_TRUE(eval_formula(h, *env));
    }
  }
}
