#include <gtest/gtest.h>

#include "pteam_instances.hpp"

using namespace rl_test;

TEST(ProbTeam, ConstructionInvariants) {
  EXPECT_THROW(ProbTeam({"x"}, 2, {{{0}, Q("1/2")}}), team_error);
  EXPECT_THROW(ProbTeam({"x", "x"}, 2, {{{0, 0}, ExactScalar(1)}}), team_error);
  EXPECT_THROW(ProbTeam({"x"}, 2, {{{2}, ExactScalar(1)}}), team_error);
  auto e = ProbTeam::empty({"x"}, 2);
  EXPECT_TRUE(e.is_empty());
  EXPECT_THROW(team_to_distribution(e), team_error);
}

TEST(ProbTeam, DistributionExamples) {
  ProbTeam point({"x", "y"}, 2, {{{0, 1}, ExactScalar(1)}});
  auto w = team_to_distribution(point);
  EXPECT_EQ(w.at({0, 1}), ExactScalar(1));
  EXPECT_EQ(w.sum(), ExactScalar(1));
  auto t = dice_team(2);
  auto dt = team_to_distribution(t);
  EXPECT_EQ(dt.at({0, 0}), Q("3/8"));
  EXPECT_EQ(dt.at({1, 1}), Q("3/8"));
  EXPECT_EQ(dt.at({0, 1}), Q("1/8"));
  EXPECT_EQ(dt.at({1, 0}), Q("1/8"));
  EXPECT_EQ(marginal(t, {"x"}, {0}), Q("1/2"));
  EXPECT_EQ(t, parse_team(parse_sexp(read_file(fixture("pteam/dice2.sx")))));
}

TEST(CheckAtom, Examples) {
  auto indep = parse_pt_formula("(indep (x) (y))");
  ProbTeam point({"x", "y"}, 2, {{{0, 1}, ExactScalar(1)}});
  EXPECT_TRUE(check_atom(point, *indep));
  ProbTeam product({"x", "y"}, 2,
                   {{{0, 0}, Q("1/4")}, {{0, 1}, Q("1/4")}, {{1, 0}, Q("1/4")}, {{1, 1}, Q("1/4")}});
  EXPECT_TRUE(check_atom(product, *indep));
  ProbTeam diag({"x", "y"}, 2, {{{0, 0}, Q("1/2")}, {{1, 1}, Q("1/2")}});
  EXPECT_FALSE(check_atom(diag, *indep));
  auto t = dice_team(2);
  EXPECT_TRUE(check_atom(t, *parse_pt_formula("(ident (x) (y))")));
  EXPECT_FALSE(check_atom(t, *indep));
  EXPECT_TRUE(check_atom(ProbTeam::empty({"x", "y"}, 2), *indep));
}

TEST(CheckAtom, AgreesWithMarginalOracle) {
  Gen g(81);
  const std::vector<std::string> vars{"a", "b", "c"};
  for (int i = 0; i < 250; ++i) {
    int n = g.uniform(2, 4);
    auto t = g.team(vars, n, 12);
    Oracle o{team_to_distribution(t), vars, n};
    auto x = some_vars(g, vars, 2), y = some_vars(g, vars, 2), z = some_vars(g, vars, 2);
    auto ci = parse_pt_formula("(ci " + names(x) + " " + names(y) + " " + names(z) + ")");
    auto ind = parse_pt_formula("(indep " + names(y) + " " + names(z) + ")");
    EXPECT_EQ(check_atom(t, *ci), o.ci(x, y, z));
    EXPECT_EQ(check_atom(t, *ind), o.ci({}, y, z));
    if (y.size() == z.size()) {
      EXPECT_EQ(check_atom(t, *parse_pt_formula("(ident " + names(y) + " " + names(z) + ")")), o.ident(y, z));
    }
  }
}

TEST(CheckAtom, ConditionalIndependenceIsSymmetric) {
  Gen g(82);
  const std::vector<std::string> vars{"a", "b", "c"};
  for (int i = 0; i < 200; ++i) {
    auto t = g.team(vars, g.uniform(2, 3), 12);
    auto x = some_vars(g, vars, 2), y = some_vars(g, vars, 2), z = some_vars(g, vars, 2);
    EXPECT_EQ(check_atom(t, *parse_pt_formula("(ci " + names(x) + " " + names(y) + " " + names(z) + ")")),
              check_atom(t, *parse_pt_formula("(ci " + names(x) + " " + names(z) + " " + names(y) + ")")));
    EXPECT_TRUE(check_atom(t, *parse_pt_formula("(ident " + names(y) + " " + names(y) + ")")));
  }
}

TEST(CheckAtom, ProductTeamsAreIndependent) {
  Gen g(83);
  for (int i = 0; i < 100; ++i) {
    int n = g.uniform(2, 4);
    auto px = g.distribution(n), py = g.distribution(n);
    std::map<Tuple, ExactScalar> w;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) w[{a, b}] = px[a] * py[b];
    auto t = ProbTeam::from_weights({"x", "y"}, n, w);
    EXPECT_TRUE(check_atom(t, *parse_pt_formula("(indep (x) (y))")));
  }
}

TEST(CheckFormula, ExampleMixture) {
  auto f = parse_pt_formula(kExample);
  for (int d : {2, 6}) {
    auto t = dice_team(d);
    auto v = check_formula(t, nullptr, *f, dice_certificate(d, Q("1/2")));
    EXPECT_TRUE(v.holds) << d << ": " << v.reason;
    EXPECT_FALSE(check_formula(t, nullptr, *f, dice_certificate(d, ExactScalar(1))).holds) << d;
  }
  auto all = parse_pt_formula("(forall (z) (ident (x) (z)))");
  EXPECT_TRUE(check_formula(dice_team(2), nullptr, *all, trivial_certificate(*all)).holds);
}

TEST(CheckFormula, Fixtures) {
  auto t = parse_team(parse_sexp(read_file(fixture("pteam/dice2.sx"))));
  auto f = parse_pt_formula(read_file(fixture("pteam/example.sx")));
  auto good = parse_certificate(parse_sexp(read_file(fixture("pteam/example_cert.sx"))));
  auto bad = parse_certificate(parse_sexp(read_file(fixture("pteam/example_bad_cert.sx"))));
  EXPECT_TRUE(check_formula(t, nullptr, *f, good).holds);
  auto v = check_formula(t, nullptr, *f, bad);
  EXPECT_FALSE(v.holds);
  EXPECT_FALSE(v.reason.empty());
  auto copy = parse_pt_formula(read_file(fixture("pteam/copy.sx")));
  auto cc = parse_certificate(parse_sexp(read_file(fixture("pteam/copy_cert.sx"))));
  EXPECT_TRUE(check_formula(t, nullptr, *copy, cc).holds);
  EXPECT_EQ(to_string(certificate_sexp(parse_certificate(certificate_sexp(good)))), to_string(certificate_sexp(good)));
}

TEST(CheckFormula, EmptyTeamSatisfiesEverything) {
  auto e = ProbTeam::empty({"x", "y"}, 2);
  auto f = parse_pt_formula("(and (indep (x) (y)) (not (eqv x x)))");
  EXPECT_TRUE(check_formula(e, nullptr, *f, trivial_certificate(*f)).holds);
}

TEST(CheckFormula, MalformedCertificates) {
  auto f = parse_pt_formula("(or (indep (x) (y)) (eqv x y))");
  EXPECT_THROW(check_formula(dice_team(2), nullptr, *f, leaf()), certificate_error);
  EXPECT_THROW(trivial_certificate(*f), certificate_error);
  EXPECT_THROW(parse_pt_formula("(not (indep (x) (y)))"), syntax_error);
  EXPECT_THROW(parse_pt_formula("(or (eqv x y))"), syntax_error);
}

TEST(Encoder, AtomOnlyTruthMatchesCheckAtom) {
  Gen g(84);
  const std::vector<std::string> vars{"a", "b", "c"};
  for (int i = 0; i < 200; ++i) {
    auto t = g.team(vars, g.uniform(2, 3), 12);
    auto y = some_vars(g, vars, 2), z = some_vars(g, vars, 2);
    std::string text = g.coin() ? "(indep " + names(y) + " " + names(z) + ")"
                                : "(ci " + names(some_vars(g, vars, 1)) + " " + names(y) + " " + names(z) + ")";
    auto f = parse_pt_formula(text);
    auto e = encode_check(t, nullptr, f);
    EXPECT_EQ(e.weight_variables, 0u);
    EXPECT_TRUE(check_fragment(e.sentence, FragmentSpec::loose_guarded()).ok());
    auto env = certificate_to_assignment(e, trivial_certificate(*f));
    EXPECT_EQ(eval_formula(e.sentence, env), check_atom(t, *f)) << text;
  }
}

TEST(Encoder, DisjunctionVariableCount) {
  ProbTeam t({"x", "y"}, 2, {{{0, 0}, Q("1/4")}, {{0, 1}, Q("1/4")}, {{1, 0}, Q("1/4")}, {{1, 1}, Q("1/4")}});
  auto e = encode_check(t, nullptr, parse_pt_formula("(or (indep (x) (y)) (eqv x y))"));
  EXPECT_EQ(e.weight_variables, 8u);
}

TEST(Encoder, UniversalChildrenAreDetermined) {
  auto t = dice_team(2);
  auto f = parse_pt_formula("(forall (z) (ident (x) (z)))");
  auto e = encode_check(t, nullptr, f);
  auto env = certificate_to_assignment(e, trivial_certificate(*f));
  ASSERT_EQ(e.nodes.size(), 2u);
  const auto& root = e.nodes[0];
  const auto& child = e.nodes[1];
  EXPECT_EQ(child.rows.size(), root.rows.size() * 2);
  for (std::size_t i = 0; i < child.rows.size(); ++i)
    EXPECT_EQ(env.reals.at(child.weights[i]), env.reals.at(root.weights[child.parent_row[i]]) / ExactScalar(2));
  EXPECT_TRUE(eval_formula(e.sentence, env));
}

TEST(Encoder, ExampleTransportsBothWays) {
  for (int d : {2, 3}) {
    auto t = dice_team(d);
    auto f = parse_pt_formula(kExample);
    auto e = encode_check(t, nullptr, f);
    EXPECT_TRUE(check_fragment(e.sentence, FragmentSpec::loose_guarded()).ok());
    auto env = certificate_to_assignment(e, dice_certificate(d, Q("1/2")));
    EXPECT_TRUE(eval_formula(e.sentence, env));
    EXPECT_TRUE(check_formula(t, nullptr, *f, assignment_to_certificate(e, env)).holds);
    EXPECT_FALSE(eval_formula(e.sentence, certificate_to_assignment(e, dice_certificate(d, ExactScalar(1)))));
  }
}

TEST(Encoder, ScaleInvarianceAndTransport) {
  Gen g(85);
  const std::vector<ExactScalar> factors{ExactScalar(2), Q("1/3"), Q("5/7"), ExactScalar(11)};
  for (int i = 0; i < 120; ++i) {
    auto w = random_witnessed(g);
    auto v = check_formula(w.team, nullptr, *w.f, w.cert);
    ASSERT_TRUE(v.holds) << v.reason;
    auto e = encode_check(w.team, nullptr, w.f);
    auto env = certificate_to_assignment(e, w.cert);
    ASSERT_TRUE(eval_formula(e.sentence, env));
    for (const auto& c : factors) {
      auto sc = scaled(e, env, c);
      for (const auto& a : e.atom_constraints) EXPECT_TRUE(eval_formula(a, sc)) << print_formula(a);
    }
    EXPECT_TRUE(check_formula(w.team, nullptr, *w.f, assignment_to_certificate(e, env)).holds);
  }
}
