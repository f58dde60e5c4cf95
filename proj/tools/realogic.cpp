#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "realogic.hpp"

using namespace realogic;

namespace {

enum Exit { kTrue = 0, kFalse = 1, kUnknown = 2, kUsage = 3 };

struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream os(path);
  if (!os) throw usage_error("cannot write " + path);
  os << text;
  if (!text.empty() && text.back() != '\n') os << '\n';
}

std::optional<RStructure> load_structure(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return parse_structure(read_file(path));
}

const RStructure* ptr(const std::optional<RStructure>& s) { return s ? &*s : nullptr; }

TimeMode parse_mode(const std::string& m) {
  if (m == "exact") return TimeMode::exact;
  if (m == "atmost" || m == "at-most") return TimeMode::at_most;
  throw usage_error("--mode must be exact or atmost");
}

struct CompileArgs {
  std::string machine;
  int n = 1, t = 1;
  std::string mode = "exact";
  int guesses = -1;
  bool simple_gadget = false;

  void add(CLI::App* c) {
    c->add_option("--machine", machine, "machine file")->required();
    c->add_option("--n", n, "input length");
    c->add_option("--t", t, "time bound");
    c->add_option("--mode", mode, "exact | atmost");
    c->add_option("--guesses", guesses, "guess count (nondeterministic layout)");
    c->add_flag("--simple-gadget", simple_gadget, "use the f*f + g = 1 cell constraint");
  }
  CompiledEncoding compile() const {
    CompileOptions o;
    o.n = n;
    o.t = t;
    o.mode = parse_mode(mode);
    if (guesses >= 0) o.guesses = guesses;
    o.simple_gadget = simple_gadget;
    return compile_machine(parse_machine(read_file(machine)), o);
  }
};

int verdict_code(Verdict v) {
  switch (v) {
    case Verdict::true_: std::cout << "true\n"; return kTrue;
    case Verdict::false_: std::cout << "false\n"; return kFalse;
    case Verdict::missing_witness: std::cout << "missing witness\n"; return kUnknown;
  }
  return kUnknown;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"realogic: real-valued logics, BSS machines and probabilistic teams"};
  app.require_subcommand(1);

  // run
  std::string machine_path, input_text = "()", witness_text, out_path = "-";
  long fuel = 10000;
  bool show_trace = false;
  auto* run_cmd = app.add_subcommand("run", "run a machine on an input");
  run_cmd->add_option("--machine", machine_path, "machine file")->required();
  run_cmd->add_option("--input", input_text, "input real string, e.g. \"(1 1/2)\"");
  run_cmd->add_option("--witness", witness_text, "guess string for nondeterministic machines");
  run_cmd->add_option("--fuel", fuel, "step bound");
  run_cmd->add_flag("--trace", show_trace, "print every configuration");

  // compile-m2f
  CompileArgs m2f;
  auto* m2f_cmd = app.add_subcommand("compile-m2f", "compile a machine run into a guarded formula");
  m2f.add(m2f_cmd);
  m2f_cmd->add_option("-o,--out", out_path, "output file");

  // compile-f2m
  std::string formula_path;
  bool zero_one = false;
  auto* f2m_cmd = app.add_subcommand("compile-f2m", "compile a guarded sentence into a machine");
  f2m_cmd->add_option("--formula", formula_path, "sentence file")->required();
  f2m_cmd->add_flag("--zero-one", zero_one, "use only the constants 0 and 1");
  f2m_cmd->add_option("-o,--out", out_path, "output file");

  // transport
  CompileArgs tp;
  std::string assignment_path;
  bool from_trace = false;
  auto* tp_cmd = app.add_subcommand("transport", "move between accepting runs and satisfying assignments");
  tp.add(tp_cmd);
  tp_cmd->add_flag("--trace", from_trace, "run on --input/--witness and emit the assignment");
  tp_cmd->add_option("--assignment", assignment_path, "assignment file to decode into a run");
  tp_cmd->add_option("--input", input_text, "input real string");
  tp_cmd->add_option("--witness", witness_text, "guess string");
  tp_cmd->add_option("-o,--out", out_path, "output file");

  // transform
  std::string pass, in_path, structure_path, variant = "zero-one";
  bool emit_transport = false;
  auto* tr_cmd = app.add_subcommand("transform", "apply a formula pass");
  tr_cmd->add_option("--pass", pass,
                     "prenex-dnf | signed-to-unit | elim-rel | strict-to-loose | erase-numeric | elim-sum | "
                     "dist-constraint | scale-dist")
      ->required();
  tr_cmd->add_option("--in", in_path, "input formula")->required();
  tr_cmd->add_option("--structure", structure_path, "structure file (domain and vocabulary)");
  tr_cmd->add_option("--variant", variant, "elim-rel variant: zero-one | distribution");
  tr_cmd->add_option("--witness", witness_text, "witness file for the input formula");
  tr_cmd->add_flag("--emit-transport", emit_transport, "also write the forward-transported witness to <out>.env");
  tr_cmd->add_option("-o,--out", out_path, "output file");

  // pteam
  std::string team_path, cert_path;
  auto* pc_cmd = app.add_subcommand("pteam-check", "check a team formula with a certificate");
  pc_cmd->add_option("--team", team_path, "team file")->required();
  pc_cmd->add_option("--formula", formula_path, "team formula file")->required();
  pc_cmd->add_option("--cert", cert_path, "certificate file");
  pc_cmd->add_option("--structure", structure_path, "structure for relation literals");
  auto* pe_cmd = app.add_subcommand("pteam-encode", "encode a team check as a guarded sentence");
  pe_cmd->add_option("--team", team_path, "team file")->required();
  pe_cmd->add_option("--formula", formula_path, "team formula file")->required();
  pe_cmd->add_option("--structure", structure_path, "structure for relation literals");
  pe_cmd->add_option("--cert", cert_path, "certificate to transport into an assignment (written to <out>.env)");
  pe_cmd->add_option("-o,--out", out_path, "output file");

  // encode-structure
  std::string ranking_text;
  auto* es_cmd = app.add_subcommand("encode-structure", "encode a structure as a real string");
  es_cmd->add_option("--structure", structure_path, "structure file")->required();
  es_cmd->add_option("--ranking", ranking_text, "ranks of elements 0..n-1, e.g. \"(2 1 3)\"");

  // export-smt
  std::string solver_cmd;
  long timeout_ms = 10000;
  auto* sm_cmd = app.add_subcommand("export-smt", "emit a QF_NRA script, optionally solve it");
  sm_cmd->add_option("--in", in_path, "guarded sentence")->required();
  sm_cmd->add_option("--solver-cmd", solver_cmd, "solver command; the script path is appended");
  sm_cmd->add_option("--timeout-ms", timeout_ms, "solver timeout");
  sm_cmd->add_option("-o,--out", out_path, "script output file");

  // check-fragment
  bool loose_only = false;
  auto* cf_cmd = app.add_subcommand("check-fragment", "check loose and guarded fragment membership");
  cf_cmd->add_option("--in", in_path, "formula")->required();
  cf_cmd->add_flag("--loose-only", loose_only, "do not require guards");

  // eval
  auto* ev_cmd = app.add_subcommand("eval", "evaluate a formula");
  ev_cmd->add_option("--formula", formula_path, "formula file")->required();
  ev_cmd->add_option("--structure", structure_path, "structure file");
  ev_cmd->add_option("--witness", witness_text, "witness environment file");
  int search = 0;
  ev_cmd->add_option("--search", search, "search a denominator grid up to this bound when no witness is given");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (run_cmd->parsed()) {
      Machine m = parse_machine(read_file(machine_path));
      std::optional<RealString> w;
      if (!witness_text.empty()) w = parse_real_string(witness_text);
      RunTrace tr = run(m, parse_real_string(input_text), w, fuel);
      if (show_trace) std::cout << format_trace(tr);
      else {
        std::cout << outcome_name(tr.outcome);
        if (tr.outcome == Outcome::output) std::cout << " " << to_string(tr.output);
        std::cout << "\n";
      }
      if (tr.outcome == Outcome::fuel_exhausted) return kUnknown;
      return tr.accepted() ? kTrue : kFalse;
    }
    if (m2f_cmd->parsed()) {
      CompiledEncoding enc = m2f.compile();
      write_out(out_path, print_formula_pretty(enc.formula));
      return kTrue;
    }
    if (f2m_cmd->parsed()) {
      SentenceMachine sm = compile_sentence_to_machine(parse_formula(read_file(formula_path)), zero_one);
      std::string text = "; guesses:";
      for (const auto& v : sm.variables) {
        auto it = sm.renamed.find(v);
        text += " " + (it == sm.renamed.end() ? v : it->second);
      }
      text += " then " + std::to_string(sm.selectors) + " selector(s)\n";
      write_out(out_path, text + to_string(machine_sexp(sm.machine)));
      return kTrue;
    }
    if (tp_cmd->parsed()) {
      CompiledEncoding enc = tp.compile();
      if (from_trace == !assignment_path.empty()) throw usage_error("give exactly one of --trace and --assignment");
      if (from_trace) {
        RealString x = parse_real_string(input_text);
        RealString u = witness_text.empty() ? RealString{} : parse_real_string(witness_text);
        RunTrace tr = run(enc.machine, x, enc.opt.guesses ? std::optional<RealString>(u) : std::nullopt, enc.opt.t);
        if (!tr.accepted()) {
          std::cout << "run does not accept: " << outcome_name(tr.outcome) << "\n";
          return tr.outcome == Outcome::fuel_exhausted ? kUnknown : kFalse;
        }
        Environment env = trace_to_assignment(tr, enc, x, u);
        for (std::size_t i = 0; i < x.size(); ++i) env.reals[enc.inputs[i]] = x[i];
        write_out(out_path, to_string(environment_sexp(env)));
        return kTrue;
      }
      Environment env = parse_environment(read_file(assignment_path));
      try {
        RunTrace tr = assignment_to_trace(env, enc);
        write_out(out_path, format_trace(tr));
        return kTrue;
      } catch (const WitnessError& e) {
        std::cerr << "missing witness: " << e.what() << "\n";
        return kUnknown;
      }
    }
    if (tr_cmd->parsed()) {
      FormulaPtr f = parse_formula(read_file(in_path));
      auto s = load_structure(structure_path);
      TransformResult r;
      if (pass == "prenex-dnf") r = normalize_prenex_dnf(f, ptr(s));
      else if (pass == "signed-to-unit") r = signed_to_unit(f, ptr(s));
      else if (pass == "elim-rel") {
        if (variant != "zero-one" && variant != "distribution") throw usage_error("--variant must be zero-one or distribution");
        r = eliminate_relation_quantifiers(f, variant == "zero-one" ? RelVariant::zero_one : RelVariant::distribution, ptr(s));
      } else if (pass == "strict-to-loose") r = strict_to_loose(f, ptr(s));
      else if (pass == "erase-numeric") r = erase_numeric(f, ptr(s));
      else if (pass == "elim-sum") r = eliminate_sum(f, ptr(s));
      else if (pass == "dist-constraint") r = distribution_to_unit(f, ptr(s));
      else if (pass == "scale-dist") r = scale_to_distributions(f, ptr(s));
      else throw usage_error("unknown pass " + pass);
      for (const auto& n : r.notes) std::cerr << "; " << n << "\n";
      write_out(out_path, print_formula_pretty(r.formula));
      if (emit_transport) {
        if (witness_text.empty()) throw usage_error("--emit-transport needs --witness");
        if (out_path.empty() || out_path == "-") throw usage_error("--emit-transport needs -o");
        Environment fw = r.forward(parse_environment(read_file(witness_text)));
        write_out(out_path + ".env", to_string(environment_sexp(fw)));
      }
      return kTrue;
    }
    if (pc_cmd->parsed()) {
      ProbTeam team = parse_team(parse_sexp(read_file(team_path)));
      PTFormulaPtr f = parse_pt_formula(read_file(formula_path));
      auto s = load_structure(structure_path);
      Certificate c;
      if (!cert_path.empty()) c = parse_certificate(parse_sexp(read_file(cert_path)));
      else {
        try {
          c = trivial_certificate(*f);
        } catch (const certificate_error& e) {
          std::cout << "unknown: " << e.what() << "\n";
          return kUnknown;
        }
      }
      PTVerdict v = check_formula(team, ptr(s), *f, c);
      std::cout << (v.holds ? "true" : "false: " + v.reason) << "\n";
      return v.holds ? kTrue : kFalse;
    }
    if (pe_cmd->parsed()) {
      ProbTeam team = parse_team(parse_sexp(read_file(team_path)));
      PTFormulaPtr f = parse_pt_formula(read_file(formula_path));
      auto s = load_structure(structure_path);
      EncodedCheck e = encode_check(team, ptr(s), f);
      std::cerr << "; weight variables: " << e.weight_variables << "\n";
      write_out(out_path, print_formula_pretty(e.sentence));
      if (!cert_path.empty()) {
        if (out_path.empty() || out_path == "-") throw usage_error("--cert needs -o");
        Environment env = certificate_to_assignment(e, parse_certificate(parse_sexp(read_file(cert_path))));
        write_out(out_path + ".env", to_string(environment_sexp(env)));
      }
      return kTrue;
    }
    if (es_cmd->parsed()) {
      RStructure s = parse_structure(read_file(structure_path));
      Ranking pi = Ranking::identity(s.domain.size);
      if (!ranking_text.empty()) {
        std::vector<int> ranks;
        for (const auto& r : parse_real_string(ranking_text)) {
          if (!r.is_integer()) throw usage_error("ranks must be integers");
          ranks.push_back(static_cast<int>(r.numerator().get_si()));
        }
        pi = Ranking(ranks);
      }
      std::cout << to_string(encode_structure(s, pi)) << "\n";
      return kTrue;
    }
    if (sm_cmd->parsed()) {
      FormulaPtr f = parse_formula(read_file(in_path));
      SmtDocument doc = emit_smtlib(f);
      if (solver_cmd.empty()) {
        write_out(out_path, doc.text);
        return kTrue;
      }
      if (out_path != "-") write_out(out_path, doc.text);
      SolverResult r = run_solver(doc, solver_cmd, timeout_ms);
      std::cout << status_name(r.status);
      if (!r.message.empty()) std::cout << " (" << r.message << ")";
      std::cout << "\n";
      if (r.status == SolverResult::Status::unsat) return kFalse;
      if (r.status != SolverResult::Status::sat) return kUnknown;
      if (!r.model) return kUnknown;
      bool ok = eval_formula(f, *r.model);
      std::cout << to_string(environment_sexp(*r.model)) << "\nmodel " << (ok ? "verified" : "REJECTED by eval") << "\n";
      return ok ? kTrue : kUnknown;
    }
    if (cf_cmd->parsed()) {
      FormulaPtr f = parse_formula(read_file(in_path));
      ConformanceReport rep = check_fragment(f, loose_only ? FragmentSpec::loose_only() : FragmentSpec::loose_guarded());
      std::cout << (rep.ok() ? "ok\n" : rep.str());
      return rep.ok() ? kTrue : kFalse;
    }
    if (ev_cmd->parsed()) {
      FormulaPtr f = parse_formula(read_file(formula_path));
      auto s = load_structure(structure_path);
      if (!witness_text.empty()) return verdict_code(eval_verdict(f, ptr(s), parse_environment(read_file(witness_text))));
      Verdict v = eval_verdict(f, ptr(s), Environment{});
      if (v != Verdict::missing_witness || search <= 0) return verdict_code(v);
      SearchOptions opt;
      opt.denominator_bound = search;
      if (auto w = search_bounded_witness(f, ptr(s), opt)) {
        std::cout << "true\n" << to_string(environment_sexp(*w)) << "\n";
        return kTrue;
      }
      std::cout << "unknown: no witness on the grid\n";
      return kUnknown;
    }
  } catch (const usage_error& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return kUsage;
  } catch (const syntax_error& e) {
    std::cerr << "syntax error: " << e.what() << "\n";
    return kUsage;
  } catch (const WitnessError& e) {
    std::cerr << "missing witness: " << e.what() << "\n";
    return kUnknown;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
