#include <gtest/gtest.h>

#include <cstdlib>

#include "support.hpp"

using namespace rl_test;

namespace {

FormulaPtr load_sentence(const char* name) { return parse_formula(read_file(fixture(std::string("smt/") + name + ".sx"))); }

/// Closed guarded sentences from the other modules.
std::vector<std::pair<std::string, FormulaPtr>> corpus() {
  std::vector<std::pair<std::string, FormulaPtr>> out;
  for (const char* n : {"half", "pair", "sqrt2"}) out.emplace_back(n, load_sentence(n));
  out.emplace_back("or", parse_formula("(exists01 (x) (or (<= x 1/3) (= x 1)))"));
  out.emplace_back("sym", parse_formula("(exists-sym (s) (exists01 (u) (<= (* s u) -1/2)))"));
  CompileOptions opt;
  opt.t = 4;
  opt.mode = TimeMode::at_most;
  auto enc = compile_machine(load_machine("threshold"), opt);
  out.emplace_back("threshold", fm::exists01("x1", enc.formula));
  auto team = parse_team(parse_sexp(read_file(fixture("pteam/dice2.sx"))));
  out.emplace_back("pteam", encode_check(team, nullptr, parse_pt_formula("(or (indep (x) (y)) (eqv x y))")).sentence);
  return out;
}

std::string which(const char* tool) {
  std::string cmd = std::string("command -v ") + tool + " >/dev/null 2>&1";
  return std::system(cmd.c_str()) == 0 ? tool : "";
}

}  // namespace

TEST(EmitSmtlib, TrivialAtom) {
  auto doc = emit_smtlib(parse_formula("(<= 0 1)"));
  EXPECT_TRUE(doc.constants.empty());
  EXPECT_EQ(doc.matrix, "(<= 0 1)");
  EXPECT_NE(doc.text.find("(assert (<= 0 1))"), std::string::npos);
  EXPECT_NE(doc.text.find("(check-sat)"), std::string::npos);
}

TEST(EmitSmtlib, GuardedConstant) {
  auto doc = emit_smtlib(load_sentence("half"));
  ASSERT_EQ(doc.constants.size(), 1u);
  EXPECT_EQ(doc.constants[0].symbol, "x");
  EXPECT_NE(doc.text.find("(declare-fun x () Real)"), std::string::npos);
  EXPECT_NE(doc.text.find("(assert (and (<= 0 x) (<= x 1)))"), std::string::npos);
  EXPECT_NE(doc.text.find("(assert (= (+ x x) 1))"), std::string::npos);
}

TEST(EmitSmtlib, ExactRationals) {
  EXPECT_EQ(detail::smt_rational(Q("2/3")), "(/ 2 3)");
  EXPECT_EQ(detail::smt_value(parse_sexp(detail::smt_rational(Q("-5/7")))), Q("-5/7"));
  EXPECT_EQ(detail::smt_value(parse_sexp(detail::smt_rational(ExactScalar(4)))), ExactScalar(4));
}

TEST(EmitSmtlib, RejectsOutsideTheFragment) {
  EXPECT_THROW(emit_smtlib(parse_formula("(exists01 (x) (< x 1))")), smt_error);
  EXPECT_THROW(emit_smtlib(parse_formula("(exists01 (x) (not (<= x 1)))")), smt_error);
  EXPECT_THROW(emit_smtlib(parse_formula("(exists-real (x) (= x 1))")), smt_error);
  EXPECT_THROW(emit_smtlib(parse_formula("(= y 1)")), smt_error);
}

TEST(EmitSmtlib, ShadowedNamesGetDistinctSymbols) {
  auto doc = emit_smtlib(parse_formula("(and (exists01 (x) (= x 1)) (exists01 (x) (= x 0)))"));
  ASSERT_EQ(doc.constants.size(), 2u);
  EXPECT_NE(doc.constants[0].symbol, doc.constants[1].symbol);
}

TEST(ReadSmtlib, RoundTripAgreesUnderEval) {
  Gen g(91);
  for (const auto& [name, f] : corpus()) {
    auto doc = emit_smtlib(f);
    auto back = read_smtlib(doc.text);
    EXPECT_EQ(check_fragment(back, FragmentSpec::loose_guarded()).ok(),
              check_fragment(f, FragmentSpec::loose_guarded()).ok())
        << name;
    for (int i = 0; i < 50; ++i) {
      Environment src, dst;
      for (const auto& c : doc.constants) {
        auto v = g.rational(c.lo, c.hi, 8);
        src.reals[c.source] = v;
        dst.reals[c.symbol] = v;
      }
      EXPECT_EQ(eval_formula(f, src), eval_formula(back, dst)) << name;
    }
  }
}

TEST(ReadSmtlib, MalformedScripts) {
  EXPECT_THROW(read_smtlib("(check-sat)"), smt_error);
  EXPECT_THROW(read_smtlib("(declare-fun x () Real) (assert (= x 1))"), smt_error);
  EXPECT_THROW(read_smtlib("(declare-fun x () Real) (assert (and (<= 0 x) (<= x 2))) (assert (= x 1))"), syntax_error);
}

TEST(SolverOutput, RecordedModelsSatisfyTheSentence) {
  const std::vector<std::pair<const char*, const char*>> cases = {{"half", "half_getvalue"}, {"pair", "pair_model"}};
  for (const auto& [sentence, out] : cases) {
    auto f = load_sentence(sentence);
    auto r = parse_solver_output(emit_smtlib(f), read_file(fixture(std::string("smt/") + out + ".out")));
    ASSERT_EQ(r.status, SolverResult::Status::sat) << sentence;
    ASSERT_TRUE(r.model) << r.message;
    EXPECT_TRUE(eval_formula(f, *r.model)) << sentence;
  }
  EXPECT_EQ(parse_solver_output(emit_smtlib(load_sentence("half")), read_file(fixture("smt/half_getvalue.out")))
                .model->reals.at("x"),
            Q("1/2"));
}

TEST(SolverOutput, VerdictsAndIrrationalModels) {
  auto doc = emit_smtlib(load_sentence("sqrt2"));
  EXPECT_EQ(parse_solver_output(doc, read_file(fixture("smt/sqrt2.out"))).status, SolverResult::Status::unsat);
  auto irr = parse_solver_output(doc, read_file(fixture("smt/irrational.out")));
  EXPECT_EQ(irr.status, SolverResult::Status::sat);
  EXPECT_FALSE(irr.model);
  EXPECT_EQ(parse_solver_output(doc, "unknown\n").status, SolverResult::Status::unknown);
  EXPECT_EQ(parse_solver_output(doc, "(error \"boom\")").status, SolverResult::Status::error);
  EXPECT_EQ(parse_solver_output(doc, "").status, SolverResult::Status::error);
}

TEST(SolverOutput, ExternalSolverWhenAvailable) {
  std::string solver = which("z3");
  std::string cmd = solver.empty() ? "" : "z3 -smt2";
  if (solver.empty() && !(solver = which("cvc5")).empty()) cmd = "cvc5 --produce-models";
  if (cmd.empty()) GTEST_SKIP() << "no SMT solver on PATH; recorded outputs cover model parsing";
  for (const char* name : {"half", "pair", "sqrt2"}) {
    auto f = load_sentence(name);
    auto r = run_solver(emit_smtlib(f), cmd, 10000);
    if (r.status == SolverResult::Status::sat && r.model) {
      EXPECT_TRUE(eval_formula(f, *r.model)) << name;
    }
    if (std::string(name) == "sqrt2") {
      EXPECT_NE(r.status, SolverResult::Status::sat);
    }
  }
}
