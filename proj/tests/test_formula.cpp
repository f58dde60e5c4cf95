#include <gtest/gtest.h>

#include "support.hpp"

using namespace rl_test;

namespace {

FormulaPtr random_formula(Gen& g, int depth, std::vector<std::string>& reals) {
  auto rterm = [&]() -> TermPtr {
    if (!reals.empty() && g.coin(0.7)) return term::var(g.pick(reals));
    return term::constant(g.rational(ExactScalar(-2), ExactScalar(2), 4));
  };
  if (depth == 0 || g.coin(0.25)) {
    TermPtr l = g.coin() ? term::add(rterm(), rterm()) : term::mul(rterm(), rterm());
    Cmp c = g.pick(std::vector<Cmp>{Cmp::eq, Cmp::le, Cmp::lt});
    return fm::atom(c, l, rterm(), g.coin(0.2));
  }
  switch (g.uniform(0, 3)) {
    case 0: return fm::conj({random_formula(g, depth - 1, reals), random_formula(g, depth - 1, reals)});
    case 1: return fm::disj({random_formula(g, depth - 1, reals), random_formula(g, depth - 1, reals)});
    case 2: {
      std::string v = "v" + std::to_string(reals.size());
      reals.push_back(v);
      auto body = random_formula(g, depth - 1, reals);
      reals.pop_back();
      return fm::exists_real(v, g.coin() ? Range::unit : Range::real, body);
    }
    default: return fm::forall("x", fm::rel("R", {FoTerm::var("x")}, g.coin()));
  }
}

}  // namespace

TEST(FormulaText, PrintParseRoundTrip) {
  Gen g(31);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> reals;
    auto f = random_formula(g, 4, reals);
    auto again = parse_formula(print_formula(f));
    EXPECT_TRUE(formula_eq(f, again)) << print_formula(f);
    EXPECT_TRUE(formula_eq(f, parse_formula(print_formula_pretty(f))));
  }
}

TEST(FormulaText, ParsesAllQuantifierForms) {
  auto f = parse_formula(
      "(exists-fn (f 1 unit) (exists-rel (X 2) (exists-skolem (g 1) (forall (x) (exists01 (y) "
      "(and (rel X x (skolem g x)) (<= (f x) y) (= (sum (z) (f z)) 1)))))))");
  EXPECT_EQ(f->kind, Formula::Kind::exists_fn);
  EXPECT_EQ(f->range, Range::unit);
  EXPECT_EQ(f->body()->kind, Formula::Kind::exists_rel);
  EXPECT_EQ(formula_size(f), 9u);
  EXPECT_TRUE(formula_eq(f, parse_formula(print_formula(f))));
}

TEST(FormulaText, MultipleBindersNest) {
  auto f = parse_formula("(exists01 (a b) (= a b))");
  ASSERT_EQ(f->kind, Formula::Kind::exists_real);
  EXPECT_EQ(f->name, "a");
  EXPECT_EQ(f->body()->name, "b");
}

TEST(FormulaText, RejectsMalformedInput) {
  EXPECT_THROW(parse_formula("(not (and (= x 1)))"), syntax_error);
  EXPECT_THROW(parse_formula("(= (sqrt x) 1)"), syntax_error);
  EXPECT_THROW(parse_formula("(= (- x 1) 0)"), syntax_error);
  EXPECT_THROW(parse_formula("(exists01 () (= 1 1))"), syntax_error);
  EXPECT_THROW(parse_formula("(exists-fn (f 1 big) (= 1 1))"), syntax_error);
  EXPECT_THROW(parse_formula("(= #0 1)"), syntax_error);
  EXPECT_THROW(parse_formula("(eqv 1 x)"), syntax_error);
  EXPECT_THROW(parse_formula("(foo)"), syntax_error);
}

TEST(FormulaScopes, RoleAndArityErrors) {
  EXPECT_THROW(parse_formula("(forall (x) (= x 1))"), scope_error);
  EXPECT_THROW(parse_formula("(exists01 (v) (rel R v))"), scope_error);
  EXPECT_THROW(parse_formula("(and (= (f #0) 1) (= (f #0 #1) 1))"), scope_error);
  EXPECT_THROW(parse_formula("(and (rel R #0) (= (R #0) 1))"), scope_error);
  EXPECT_THROW(parse_formula("(exists-fn (f 2 unit) (= (f #0) 1))"), scope_error);
  EXPECT_NO_THROW(parse_formula("(and (exists-fn (f 1 unit) (= (f #0) 1)) (exists-fn (f 2 unit) (= (f #0 #0) 1)))"));
}

TEST(FormulaHelpers, FreeSymbols) {
  auto f = parse_formula("(exists01 (y) (exists-fn (g 0 unit) (= (+ x y (g) (h #0)) 1)))");
  EXPECT_EQ(free_real_vars(f), (std::set<std::string>{"x"}));
  EXPECT_EQ(free_function_symbols(f), (std::set<std::string>{"h"}));
  NameSupply ns(f);
  EXPECT_EQ(ns.fresh("y"), "y_1");
  EXPECT_EQ(ns.fresh("fresh"), "fresh");
  EXPECT_EQ(ns.fresh("fresh"), "fresh_1");
}

TEST(FormulaBuilders, AddAndMulDegenerateCases) {
  EXPECT_EQ(print_term(term::add(std::vector<TermPtr>{})), "0");
  EXPECT_EQ(print_term(term::mul(std::vector<TermPtr>{})), "1");
  EXPECT_EQ(print_term(term::add({term::var("x")})), "x");
  EXPECT_EQ(print_formula(fm::truth()), "(and)");
}

TEST(Fragment, CanonicalViolations) {
  auto spec = FragmentSpec::loose_guarded();
  auto unguarded = check_fragment(parse_formula("(exists-real (x) (= (* x x) 2))"), spec);
  ASSERT_FALSE(unguarded.ok());
  EXPECT_NE(unguarded.str().find("guard"), std::string::npos);

  auto strict = check_fragment(parse_formula("(exists01 (x) (< x 1))"), spec);
  ASSERT_FALSE(strict.ok());
  EXPECT_NE(strict.str().find("<"), std::string::npos);

  auto negated = check_fragment(parse_formula("(exists01 (x) (not (= x 1)))"), spec);
  ASSERT_FALSE(negated.ok());
  EXPECT_NE(negated.str().find("negated"), std::string::npos);
  EXPECT_EQ(negated.violations[0].path, "0");
}

TEST(Fragment, ConformingFormulas) {
  auto spec = FragmentSpec::loose_guarded();
  EXPECT_TRUE(check_fragment(parse_formula("(exists01 (x) (= (+ x x) 1))"), spec).ok());
  EXPECT_TRUE(check_fragment(parse_formula("(exists-real (x) (and (<= 0 x) (<= x 1) (= x 1/2)))"), spec).ok());
  EXPECT_TRUE(check_fragment(parse_formula("(exists-fn (f 1 dist) (= (sum (z) (f z)) 1))"), spec).ok());
  EXPECT_FALSE(check_fragment(parse_formula("(exists-fn (f 1 real) (= (f #0) 1))"), spec).ok());
  EXPECT_TRUE(check_fragment(parse_formula("(exists-real (x) (= (* x x) 2))"), FragmentSpec::loose_only()).ok());
}

TEST(Fragment, ZeroOneConstants) {
  FragmentSpec spec = FragmentSpec::loose_guarded();
  spec.zero_one_constants = true;
  EXPECT_TRUE(check_fragment(parse_formula("(exists01 (x) (= (+ x x) 1))"), spec).ok());
  EXPECT_FALSE(check_fragment(parse_formula("(exists01 (x) (= x 1/2))"), spec).ok());
}

TEST(Fragment, OperatorRestriction) {
  FragmentSpec spec = FragmentSpec::loose_guarded();
  spec.ops = {TermOp::add};
  auto r = check_fragment(parse_formula("(exists01 (x) (= (* x x) x))"), spec);
  ASSERT_FALSE(r.ok());
  EXPECT_NE(r.str().find("*"), std::string::npos);
}
