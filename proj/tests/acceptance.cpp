#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

#include "pass_instances.hpp"
#include "pteam_instances.hpp"

using namespace rl_test;

namespace {

/// Collects failures; the first few are reported.
struct Report {
  std::vector<std::string> failures;
  std::size_t checks = 0;
  void expect(bool ok, const std::string& what) {
    ++checks;
    if (!ok) failures.push_back(what);
  }
};

using Body = std::function<void(Report&)>;

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  Body body;
};

// 1. Simulator fidelity on hand-written traces.
void simulator_fidelity(Report& r) {
  const std::vector<std::pair<const char*, const char*>> cases = {
      {"always_accept", "(5)"}, {"threshold", "(2)"}, {"output_map", "(1 2 3 4)"},
      {"copier", "(7/2)"},      {"constants", "(5)"},
  };
  for (const auto& [name, input] : cases) {
    auto m = load_machine(name);
    auto tr = run(m, parse_real_string(input));
    auto want = read_file(fixture(std::string("traces/") + name + ".trace"));
    r.expect(format_trace(tr) == want, std::string(name) + ": trace differs from the hand-written one");
    r.expect(!check_trace(m, tr), std::string(name) + ": trace is not step-valid");
  }
}

CompiledEncoding compile(const std::string& name, int n, int t) {
  CompileOptions opt;
  opt.n = n;
  opt.t = t;
  opt.mode = TimeMode::at_most;
  return compile_machine(load_machine(name), opt);
}

// 2. Machine -> formula round trip.
void machine_to_formula(Report& r) {
  Gen g(1002);
  const int t = 15;
  for (const char* name : {"threshold", "square", "interval"}) {
    for (int n : {1, 2}) {
      auto enc = compile(name, n, t);
      std::vector<RealString> inputs;
      for (const char* b : {"1", "2", "3", "-2", "0", "999/1000", "1001/1000"}) {
        RealString in{Q(b)};
        while (static_cast<int>(in.size()) < n) in.push_back(g.rational(ExactScalar(-4), ExactScalar(4), 4));
        inputs.push_back(in);
      }
      while (inputs.size() < 50) {
        RealString in;
        for (int k = 0; k < n; ++k) in.push_back(g.rational(ExactScalar(-4), ExactScalar(4), 6));
        inputs.push_back(in);
      }
      for (const auto& in : inputs) {
        std::string tag = std::string(name) + " n=" + std::to_string(n) + " x=" + to_string(in);
        auto tr = run(enc.machine, in, std::nullopt, t);
        bool accepts = tr.accepted();
        r.expect(compiled_membership(enc, in) == accepts, tag + ": membership disagrees with the run");
        if (!accepts) {
          r.expect(!eval_formula(enc.formula, candidate_assignment(enc, in)), tag + ": rejected run satisfies the formula");
          continue;
        }
        auto env = trace_to_assignment(tr, enc, in);
        r.expect(eval_formula(enc.formula, env), tag + ": transported environment falsifies the formula");
        auto back = assignment_to_trace(env, enc);
        r.expect(back.accepted() && !check_trace(enc.machine, back), tag + ": decoded trace is not a valid accepting run");
        r.expect(format_trace(back) == format_trace(tr), tag + ": decoded trace differs");
      }
    }
  }
}

// 3. Formula -> machine.
void formula_to_machine(Report& r) {
  const std::vector<std::pair<const char*, std::vector<const char*>>> sentences = {
      {"(exists01 (x) (= (+ x x) 1))", {"1/2"}},
      {"(exists01 (x y) (and (= (+ x y) 1) (<= y x)))", {"3/4", "1/4"}},
      {"(exists01 (x) (or (= x 1) (= x 0)))", {"1"}},
      {"(exists01 (x y) (= (* x y) 1/4))", {"1/2", "1/2"}},
      {"(exists01 (a) (and (<= 1/3 a) (<= a 2/3)))", {"1/2"}},
      {"(exists01 (x y z) (= (+ x y z) 2))", {"1", "1/2", "1/2"}},
      {"(exists01 (x) (= (* x x x) 1/8))", {"1/2"}},
      {"(exists01 (p q) (and (<= (* p q) 1/8) (= (+ p q) 1)))", {"7/8", "1/8"}},
      {"(exists01 (x) (and (<= 0 1) (= (* 3 x) 1)))", {"1/3"}},
      {"(exists01 (u v) (or (and (= u v) (= u 1/5)) (= (+ u v) 2)))", {"1/5", "1/5"}},
  };
  Gen g(1003);
  for (const auto& [text, witness] : sentences) {
    auto f = parse_formula(text);
    r.expect(check_fragment(f, FragmentSpec::loose_guarded()).ok(), std::string(text) + ": not guarded");
    auto sm = compile_sentence_to_machine(f);
    std::vector<std::string> names;
    visit_formula(f, [&](const Formula& q) {
      if (q.kind == Formula::Kind::exists_real) names.push_back(q.name);
    });
    auto check = [&](const Environment& env) {
      bool truth = eval_formula(f, env);
      bool acc = run(sm.machine, {}, sm.transport_guesses(env)).accepted();
      r.expect(acc == truth, std::string(text) + ": machine and evaluator disagree");
      return truth;
    };
    Environment known;
    for (std::size_t i = 0; i < names.size(); ++i) known.reals[names[i]] = Q(witness[i]);
    r.expect(check(known), std::string(text) + ": known witness rejected");
    for (int i = 0; i < 20; ++i) {
      Environment env;
      for (const auto& n : names) env.reals[n] = g.unit(6);
      check(env);
    }
  }
  auto unsat = parse_formula(read_file(fixture("smt/sqrt2.sx")));
  auto sm = compile_sentence_to_machine(unsat);
  for (const auto& x : rational_grid(8, ExactScalar(0), ExactScalar(1))) {
    Environment env;
    env.reals["x"] = x;
    r.expect(!run(sm.machine, {}, sm.transport_guesses(env)).accepted(), "x*x=2 accepted at x=" + x.str());
  }
}

// 4. Transform passes.
void transform_passes(Report& r) {
  std::uint64_t seed = 1004;
  for (const auto& pc : pass_cases()) {
    Gen g(seed++);
    for (int i = 0; i < 100; ++i) {
      auto in = sample_true(g, pc.make);
      try {
        if (auto err = pc.check(in)) r.expect(false, std::string(pc.name) + ": " + *err + " on " + print_formula(in.f));
        else r.expect(true, "");
      } catch (const std::exception& e) {
        r.expect(false, std::string(pc.name) + ": " + e.what() + " on " + print_formula(in.f));
      }
    }
  }
}

// 5. SUM elimination halving recurrence against direct summation.
void halving(Report& r) {
  Gen g(1005);
  for (int n : {2, 3}) {
    for (int m : {1, 2}) {
      FiniteDomain d(n);
      auto ts = d.tuples(m);
      std::vector<std::vector<ExactScalar>> tables{g.distribution(ts.size()), g.distribution(ts.size(), 1)};
      for (int i = 0; i < 20; ++i) tables.push_back(g.distribution(ts.size()));
      for (const auto& fp : tables) {
        for (const auto& fu : {ExactScalar(1), Q("1/2"), g.unit(5)}) {
          auto [gt, ht] = detail::halving_tables(fp, fu, d, m);
          mpq_class partial, scale = 1;
          for (std::size_t j = 0; j < ts.size(); ++j) {
            partial += fp[j].raw();
            scale /= 2;
            std::string tag = "|A|=" + std::to_string(n) + " m=" + std::to_string(m) + " j=" + std::to_string(j);
            r.expect(gt.at(detail::concat(ts[j], ts[j])).raw() == scale * partial, tag + ": diagonal cell");
            r.expect(ht.at(detail::concat(ts[j], {0})).raw() == scale * fu.raw(), tag + ": h cell");
          }
          r.expect(gt.sum() == ExactScalar(1) && ht.sum() == ExactScalar(1), "halving tables are not distributions");
        }
      }
    }
  }
}

// 6. Probabilistic team semantics.
void team_semantics(Report& r) {
  Gen g(1006);
  const std::vector<std::string> vars{"a", "b", "c"};
  for (int i = 0; i < 200; ++i) {
    int n = g.uniform(2, 4);
    auto t = g.team(vars, n, 12);
    Oracle o{team_to_distribution(t), vars, n};
    auto x = some_vars(g, vars, 2), y = some_vars(g, vars, 2), z = some_vars(g, vars, 2);
    r.expect(check_atom(t, *parse_pt_formula("(ci " + names(x) + " " + names(y) + " " + names(z) + ")")) == o.ci(x, y, z),
             "ci disagrees with the oracle");
    r.expect(check_atom(t, *parse_pt_formula("(indep " + names(y) + " " + names(z) + ")")) == o.ci({}, y, z),
             "indep disagrees with the oracle");
    if (y.size() == z.size())
      r.expect(check_atom(t, *parse_pt_formula("(ident " + names(y) + " " + names(z) + ")")) == o.ident(y, z),
               "ident disagrees with the oracle");
  }
  auto f = parse_pt_formula(kExample);
  for (int d : {2, 6}) {
    auto v = check_formula(dice_team(d), nullptr, *f, dice_certificate(d, Q("1/2")));
    r.expect(v.holds, "example mixture at d=" + std::to_string(d) + ": " + v.reason);
  }
  const std::vector<ExactScalar> factors{ExactScalar(2), Q("1/3"), Q("5/7")};
  for (int i = 0; i < 100; ++i) {
    auto w = random_witnessed(g);
    auto e = encode_check(w.team, nullptr, w.f);
    auto env = certificate_to_assignment(e, w.cert);
    r.expect(eval_formula(e.sentence, env), "certificate does not satisfy the encoding");
    for (const auto& c : factors) {
      auto sc = scaled(e, env, c);
      for (const auto& a : e.atom_constraints)
        r.expect(eval_formula(a, sc), "atom constraint not scale invariant: " + print_formula(a));
    }
  }
}

// 7. Closed accepted sets checked at their boundaries.
void closedness(Report& r) {
  struct Case {
    const char* name;
    std::function<bool(const ExactScalar&)> member;
    std::vector<const char*> boundary;
  };
  const std::vector<Case> cases = {
      {"threshold", [](const ExactScalar& x) { return x >= ExactScalar(1); }, {"1"}},
      {"interval", [](const ExactScalar& x) { return ExactScalar(1) <= x && x <= ExactScalar(3); }, {"1", "3"}},
      {"square", [](const ExactScalar& x) { return x.abs() >= ExactScalar(2); }, {"2", "-2"}},
  };
  for (const auto& c : cases) {
    auto enc = compile(c.name, 1, 15);
    std::vector<ExactScalar> xs;
    for (const char* b : c.boundary)
      for (const char* eps : {"0", "1/1000", "-1/1000", "1/7", "-1/7", "1", "-1"}) xs.push_back(Q(b) + Q(eps));
    for (const auto& x : xs)
      r.expect(compiled_membership(enc, {x}) == c.member(x), std::string(c.name) + " at " + x.str());
  }
}

// 8. Fragment discipline.
void fragment_discipline(Report& r) {
  auto spec = FragmentSpec::loose_guarded();
  for (const char* name : {"always_accept", "threshold", "square", "interval", "guess"})
    for (int n : {1, 2}) r.expect(check_fragment(compile(name, n, 6).formula, spec).ok(), std::string(name) + " compiles outside the fragment");
  CompileOptions opt;
  opt.t = 6;
  opt.mode = TimeMode::at_most;
  opt.guesses = 1;
  r.expect(check_fragment(compile_machine(load_machine("guess"), opt).formula, spec).ok(), "guess machine with guesses");
  Gen g(1008);
  for (int i = 0; i < 30; ++i) {
    auto si = sample_true(g, make_signed);
    r.expect(check_fragment(signed_to_unit(si.f, &si.s).formula, spec).ok(), "signed_to_unit output");
    auto st = sample_true(g, make_strict);
    r.expect(check_fragment(strict_to_loose(st.f, &st.s).formula, FragmentSpec::loose_only()).ok(), "strict_to_loose output");
    auto w = random_witnessed(g);
    r.expect(check_fragment(encode_check(w.team, nullptr, w.f).sentence, spec).ok(), "team encoding");
  }
  r.expect(!check_fragment(parse_formula("(exists01 (x) (not (= x 1)))"), spec).ok(), "negated atom accepted");
  r.expect(!check_fragment(parse_formula("(exists-real (x) (= (* x x) 2))"), spec).ok(), "unguarded quantifier accepted");
  auto zero_one = spec;
  zero_one.zero_one_constants = true;
  r.expect(!check_fragment(parse_formula("(exists01 (x) (= (+ x x) 1/2))"), zero_one).ok(), "foreign constant accepted");
  r.expect(check_fragment(parse_formula("(exists01 (x) (= (+ x x) 1))"), zero_one).ok(), "0/1 constants rejected");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "simulator fidelity", 1, simulator_fidelity},
      {2, "machine to formula round trip", 60, machine_to_formula},
      {3, "formula to machine", 10, formula_to_machine},
      {4, "transform passes", 120, transform_passes},
      {5, "SUM elimination halving", 10, halving},
      {6, "probabilistic team semantics", 30, team_semantics},
      {7, "closedness at boundaries", 60, closedness},
      {8, "fragment discipline", 60, fragment_discipline},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Report r;
    auto start = std::chrono::steady_clock::now();
    try {
      c.body(r);
    } catch (const std::exception& e) {
      r.failures.push_back(std::string("exception: ") + e.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.limit_s) r.failures.push_back("took " + std::to_string(secs) + " s, limit " + std::to_string(c.limit_s) + " s");
    bool ok = r.failures.empty();
    failed += ok ? 0 : 1;
    std::printf("%s %d %s (%zu checks, %.2f s)\n", ok ? "PASS" : "FAIL", c.id, c.name, r.checks, secs);
    for (std::size_t i = 0; i < r.failures.size() && i < 5; ++i) std::printf("    %s\n", r.failures[i].c_str());
    if (r.failures.size() > 5) std::printf("    ... %zu more\n", r.failures.size() - 5);
  }
  return failed == 0 ? 0 : 1;
}
