#pragma once

#include <sys/wait.h>

#include <array>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "realogic/eval.hpp"
#include "realogic/formula.hpp"
#include "realogic/scalar.hpp"
#include "realogic/sexpr.hpp"

namespace realogic {

class smt_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A quantifier-free QF_NRA script: one constant per existential variable,
/// interval assertions for the guards, and a single matrix assertion.
struct SmtDocument {
  struct Constant {
    std::string symbol;  // SMT-LIB symbol
    std::string source;  // variable name in the sentence
    ExactScalar lo, hi;
  };
  std::vector<Constant> constants;
  std::string matrix;  // the asserted formula, SMT-LIB text
  std::string text;    // full script
};

namespace detail {

inline bool smt_simple_symbol(const std::string& s) {
  if (s.empty() || (s[0] >= '0' && s[0] <= '9')) return false;
  for (char c : s) {
    bool ok = std::isalnum(static_cast<unsigned char>(c)) || std::string_view("~!@$%^&*_-+=<>.?/").find(c) != std::string_view::npos;
    if (!ok) return false;
  }
  return true;
}

inline std::string smt_symbol(const std::string& s) { return smt_simple_symbol(s) ? s : "|" + s + "|"; }

inline std::string smt_rational(const ExactScalar& v) {
  const mpq_class& q = v.raw();
  bool neg = q < 0;
  mpq_class a = abs(q);
  std::string body = a.get_den() == 1 ? a.get_num().get_str() : "(/ " + a.get_num().get_str() + " " + a.get_den().get_str() + ")";
  return neg ? "(- " + body + ")" : body;
}

class SmtEmitter {
 public:
  SmtDocument emit(const FormulaPtr& sentence) {
    if (!free_real_vars(sentence).empty()) throw smt_error("sentence has free real variables");
    if (!free_function_symbols(sentence).empty()) throw smt_error("sentence mentions function symbols");
    SmtDocument doc;
    doc.matrix = formula(*sentence, {});
    doc.constants = std::move(consts_);
    std::ostringstream os;
    os << "(set-logic QF_NRA)\n(set-option :produce-models true)\n";
    for (const auto& c : doc.constants) os << "(declare-fun " << c.symbol << " () Real)\n";
    for (const auto& c : doc.constants)
      os << "(assert (and (<= " << smt_rational(c.lo) << " " << c.symbol << ") (<= " << c.symbol << " "
         << smt_rational(c.hi) << ")))\n";
    os << "(assert " << doc.matrix << ")\n(check-sat)\n";
    if (!doc.constants.empty()) {
      os << "(get-value (";
      for (std::size_t i = 0; i < doc.constants.size(); ++i) os << (i ? " " : "") << doc.constants[i].symbol;
      os << "))\n";
    }
    doc.text = os.str();
    return doc;
  }

 private:
  using Scope = std::map<std::string, std::string>;

  std::string bind(const std::string& name) {
    std::string base = name, sym = name;
    for (int k = 1; used_.count(sym); ++k) sym = base + "_" + std::to_string(k);
    used_.insert(sym);
    return smt_symbol(sym);
  }

  std::string term(const Term& t, const Scope& sc) {
    switch (t.kind) {
      case Term::Kind::constant: return smt_rational(t.value);
      case Term::Kind::var: {
        auto it = sc.find(t.name);
        if (it == sc.end()) throw smt_error("unbound variable " + t.name);
        return it->second;
      }
      case Term::Kind::add:
      case Term::Kind::mul: {
        std::string out = t.kind == Term::Kind::add ? "(+" : "(*";
        for (const auto& k : t.kids) out += " " + term(*k, sc);
        return out + ")";
      }
      default: throw smt_error("term outside polynomial arithmetic");
    }
  }

  std::string formula(const Formula& f, const Scope& sc) {
    using K = Formula::Kind;
    switch (f.kind) {
      case K::atom: {
        if (f.cmp == Cmp::lt) throw smt_error("strict atom is not in the fragment");
        return std::string("(") + (f.cmp == Cmp::eq ? "=" : "<=") + " " + term(*f.lhs, sc) + " " + term(*f.rhs, sc) + ")";
      }
      case K::natom: throw smt_error("negated atom is not in the fragment");
      case K::and_:
      case K::or_: {
        if (f.kids.empty()) return f.kind == K::and_ ? "true" : "false";
        if (f.kids.size() == 1) return formula(*f.kids[0], sc);
        std::string out = f.kind == K::and_ ? "(and" : "(or";
        for (const auto& k : f.kids) out += " " + formula(*k, sc);
        return out + ")";
      }
      case K::exists_real: {
        SmtDocument::Constant c;
        c.source = f.name;
        c.symbol = bind(f.name);
        if (f.range == Range::unit || (f.range == Range::real && has_explicit_guard(f))) {
          c.lo = ExactScalar(0);
          c.hi = ExactScalar(1);
        } else if (f.range == Range::sym) {
          c.lo = ExactScalar(-1);
          c.hi = ExactScalar(1);
        } else {
          throw smt_error("unguarded quantifier over " + f.name);
        }
        consts_.push_back(c);
        Scope inner = sc;
        inner[f.name] = c.symbol;
        return formula(*f.body(), inner);
      }
      default: throw smt_error("node outside guarded existential arithmetic");
    }
  }

  std::vector<SmtDocument::Constant> consts_;
  std::set<std::string> used_;
};

}  // namespace detail

inline SmtDocument emit_smtlib(const FormulaPtr& sentence) { return detail::SmtEmitter().emit(sentence); }

namespace detail {

inline ExactScalar smt_value(const Sexp& s) {
  if (s.is_atom()) return ExactScalar::parse(s.atom);
  auto h = std::string(s.head());
  if (h == "-" && s.size() == 2) return -smt_value(s[1]);
  if (h == "/" && s.size() == 3) {
    ExactScalar d = smt_value(s[2]);
    if (d.is_zero()) s.fail("division by zero");
    return smt_value(s[1]) / d;
  }
  s.fail("not a rational value: " + to_string(s));
}

class SmtReader {
 public:
  FormulaPtr read(std::string_view text) {
    std::vector<Sexp> cmds = parse_sexps(text);
    std::vector<std::string> decls;
    std::vector<const Sexp*> asserts;
    for (const auto& c : cmds) {
      auto h = std::string(c.head());
      if (h == "declare-fun" || h == "declare-const") {
        decls.push_back(c[1].expect_atom("constant"));
      } else if (h == "assert") {
        asserts.push_back(&c[1]);
      }
    }
    if (asserts.empty()) throw smt_error("script has no matrix assertion");
    std::map<std::string, Range> ranges;
    for (std::size_t i = 0; i + 1 < asserts.size(); ++i) guard(*asserts[i], ranges);
    FormulaPtr body = formula(*asserts.back());
    for (auto it = decls.rbegin(); it != decls.rend(); ++it) {
      auto r = ranges.find(*it);
      if (r == ranges.end()) throw smt_error("constant " + *it + " has no guard assertion");
      body = fm::exists_real(unquote(*it), r->second, body);
    }
    return body;
  }

 private:
  static std::string unquote(const std::string& s) {
    return s.size() >= 2 && s.front() == '|' && s.back() == '|' ? s.substr(1, s.size() - 2) : s;
  }

  void guard(const Sexp& a, std::map<std::string, Range>& ranges) {
    if (a.head() != "and" || a.size() != 3 || a[1].head() != "<=" || a[2].head() != "<=") a.fail("malformed guard assertion");
    const std::string& v = a[1][2].expect_atom("constant");
    if (a[2][1].expect_atom("constant") != v) a.fail("guard bounds name different constants");
    ExactScalar lo = smt_value(a[1][1]), hi = smt_value(a[2][2]);
    if (lo == ExactScalar(0) && hi == ExactScalar(1)) ranges[v] = Range::unit;
    else if (lo == ExactScalar(-1) && hi == ExactScalar(1)) ranges[v] = Range::sym;
    else a.fail("unsupported guard interval");
  }

  TermPtr term(const Sexp& s) {
    if (s.is_atom()) {
      if (!s.atom.empty() && (std::isdigit(static_cast<unsigned char>(s.atom[0])) || s.atom[0] == '.'))
        return term::constant(ExactScalar::parse(s.atom));
      return term::var(unquote(s.atom));
    }
    auto h = std::string(s.head());
    std::vector<TermPtr> xs;
    for (std::size_t i = 1; i < s.size(); ++i) xs.push_back(term(s[i]));
    if (h == "+") return term::add(std::move(xs));
    if (h == "*") return term::mul(std::move(xs));
    if (h == "/" || (h == "-" && xs.size() == 1)) return term::constant(smt_value(s));
    if (h == "-" && xs.size() == 2) return term::add(xs[0], term::mul(term::constant(ExactScalar(-1)), xs[1]));
    s.fail("unsupported term head " + h);
  }

  FormulaPtr formula(const Sexp& s) {
    if (s.is_atom("true")) return fm::conj({});
    if (s.is_atom("false")) return fm::disj({});
    auto h = std::string(s.head());
    if (h == "and" || h == "or") {
      std::vector<FormulaPtr> kids;
      for (std::size_t i = 1; i < s.size(); ++i) kids.push_back(formula(s[i]));
      return h == "and" ? fm::conj(std::move(kids)) : fm::disj(std::move(kids));
    }
    if ((h == "<=" || h == "=") && s.size() == 3) return fm::atom(h == "=" ? Cmp::eq : Cmp::le, term(s[1]), term(s[2]));
    if (h == ">=" && s.size() == 3) return fm::le(term(s[2]), term(s[1]));
    s.fail("unsupported formula head " + h);
  }
};

}  // namespace detail

/// Parses an emitted script back into a guarded existential sentence.
inline FormulaPtr read_smtlib(std::string_view text) { return detail::SmtReader().read(text); }

// ---------------------------------------------------------------------------
// External solvers.

struct SolverResult {
  enum class Status { sat, unsat, unknown, error };
  Status status = Status::unknown;
  std::optional<Environment> model;  // values for the sentence's variables, when rational
  std::string output;
  std::string message;
};

inline const char* status_name(SolverResult::Status s) {
  switch (s) {
    case SolverResult::Status::sat: return "sat";
    case SolverResult::Status::unsat: return "unsat";
    case SolverResult::Status::unknown: return "unknown";
    case SolverResult::Status::error: return "error";
  }
  return "?";
}

/// Reads `sat`/`unsat`/`unknown` and a get-value or get-model response.
inline SolverResult parse_solver_output(const SmtDocument& doc, const std::string& out) {
  SolverResult r;
  r.output = out;
  std::vector<Sexp> xs;
  try {
    xs = parse_sexps(out);
  } catch (const std::exception& e) {
    r.status = SolverResult::Status::error;
    r.message = e.what();
    return r;
  }
  if (xs.empty() || !xs[0].is_atom()) {
    r.status = SolverResult::Status::error;
    r.message = "no verdict in solver output";
    return r;
  }
  const std::string& v = xs[0].atom;
  if (v == "unsat") r.status = SolverResult::Status::unsat;
  else if (v == "unknown") r.status = SolverResult::Status::unknown;
  else if (v != "sat") {
    r.status = SolverResult::Status::error;
    r.message = "unexpected verdict " + v;
    return r;
  }
  if (v != "sat") return r;
  r.status = SolverResult::Status::sat;
  std::map<std::string, std::string> source;
  for (const auto& c : doc.constants) source[c.symbol] = c.source;
  Environment env;
  auto take = [&](const std::string& sym, const Sexp& val) {
    auto it = source.find(sym);
    if (it == source.end()) return;
    try {
      env.reals[it->second] = detail::smt_value(val);
    } catch (const std::exception&) {
      r.message = "non-rational value for " + sym;
    }
  };
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const Sexp& s = xs[i];
    if (!s.is_list) continue;
    for (const auto& e : s.items) {
      if (e.head() == "define-fun" && e.size() == 5) take(e[1].atom, e[4]);
      else if (e.is_list && e.size() == 2 && e[0].is_atom()) take(e[0].atom, e[1]);
    }
  }
  if (r.message.empty() && env.reals.size() == doc.constants.size()) r.model = env;
  return r;
}

/// Runs `cmd <script-file>` under coreutils `timeout`; the script is written
/// to a temporary file.
inline SolverResult run_solver(const SmtDocument& doc, const std::string& cmd, long timeout_ms) {
  namespace fs = std::filesystem;
  static std::mt19937_64 rng(std::random_device{}());
  fs::path file = fs::temp_directory_path() / ("realogic-" + std::to_string(rng()) + ".smt2");
  {
    std::ofstream os(file);
    if (!os) throw smt_error("cannot write " + file.string());
    os << doc.text;
  }
  std::ostringstream line;
  line << "timeout " << (timeout_ms / 1000) << "." << std::setw(3) << std::setfill('0') << (timeout_ms % 1000) << "s " << cmd
       << " '" << file.string() << "' 2>&1";
  std::string out;
  int code = -1;
  if (FILE* p = popen(line.str().c_str(), "r")) {
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), n);
    code = pclose(p);
  }
  std::error_code ec;
  fs::remove(file, ec);
  if (code != -1 && WIFEXITED(code) && WEXITSTATUS(code) == 124) {
    SolverResult r;
    r.status = SolverResult::Status::unknown;
    r.output = out;
    r.message = "solver timed out";
    return r;
  }
  return parse_solver_output(doc, out);
}

}  // namespace realogic
