#pragma once

#include <cstddef>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace realogic {

/// Syntax error with a byte offset into the source text.
class syntax_error : public std::runtime_error {
 public:
  syntax_error(const std::string& what, std::size_t pos)
      : std::runtime_error(what + " (at offset " + std::to_string(pos) + ")"), pos_(pos) {}
  std::size_t position() const { return pos_; }

 private:
  std::size_t pos_;
};

/// A node of an s-expression: either an atom (symbol/number token) or a list.
struct Sexp {
  bool is_list = false;
  std::string atom;
  std::vector<Sexp> items;
  std::size_t pos = 0;

  static Sexp make_atom(std::string a) {
    Sexp s;
    s.atom = std::move(a);
    return s;
  }
  static Sexp make_list(std::vector<Sexp> xs = {}) {
    Sexp s;
    s.is_list = true;
    s.items = std::move(xs);
    return s;
  }

  bool is_atom() const { return !is_list; }
  bool is_atom(std::string_view a) const { return !is_list && atom == a; }
  std::size_t size() const { return items.size(); }
  const Sexp& operator[](std::size_t i) const { return items.at(i); }

  /// Head symbol of a list, or empty.
  std::string_view head() const {
    if (!is_list || items.empty() || items[0].is_list) return {};
    return items[0].atom;
  }

  [[noreturn]] void fail(const std::string& msg) const { throw syntax_error(msg, pos); }

  const Sexp& expect_list(std::string_view what) const {
    if (!is_list) fail("expected list for " + std::string(what));
    return *this;
  }
  const std::string& expect_atom(std::string_view what) const {
    if (is_list) fail("expected atom for " + std::string(what));
    return atom;
  }
};

namespace detail {

class SexpReader {
 public:
  explicit SexpReader(std::string_view text) : text_(text) {}

  std::vector<Sexp> read_all() {
    std::vector<Sexp> out;
    skip_ws();
    while (pos_ < text_.size()) {
      out.push_back(read());
      skip_ws();
    }
    return out;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == ';') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  Sexp read() {
    skip_ws();
    if (pos_ >= text_.size()) throw syntax_error("unexpected end of input", pos_);
    std::size_t start = pos_;
    char c = text_[pos_];
    if (c == ')') throw syntax_error("unexpected ')'", pos_);
    if (c == '(') {
      ++pos_;
      Sexp list = Sexp::make_list();
      list.pos = start;
      for (;;) {
        skip_ws();
        if (pos_ >= text_.size()) throw syntax_error("unclosed '('", start);
        if (text_[pos_] == ')') {
          ++pos_;
          return list;
        }
        list.items.push_back(read());
      }
    }
    if (c == '"') {
      ++pos_;
      std::string s;
      while (pos_ < text_.size() && text_[pos_] != '"') s.push_back(text_[pos_++]);
      if (pos_ >= text_.size()) throw syntax_error("unterminated string", start);
      ++pos_;
      Sexp a = Sexp::make_atom(std::move(s));
      a.pos = start;
      return a;
    }
    std::string tok;
    while (pos_ < text_.size()) {
      char d = text_[pos_];
      if (d == '(' || d == ')' || d == ' ' || d == '\t' || d == '\n' || d == '\r' || d == ';')
        break;
      tok.push_back(d);
      ++pos_;
    }
    Sexp a = Sexp::make_atom(std::move(tok));
    a.pos = start;
    return a;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<Sexp> parse_sexps(std::string_view text) {
  return detail::SexpReader(text).read_all();
}

/// Parses exactly one s-expression.
inline Sexp parse_sexp(std::string_view text) {
  auto all = parse_sexps(text);
  if (all.empty()) throw syntax_error("empty input", 0);
  if (all.size() > 1) throw syntax_error("trailing input after expression", all[1].pos);
  return std::move(all[0]);
}

inline void write_sexp(std::ostream& os, const Sexp& s) {
  if (!s.is_list) {
    os << s.atom;
    return;
  }
  os << '(';
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    if (i) os << ' ';
    write_sexp(os, s.items[i]);
  }
  os << ')';
}

inline std::string to_string(const Sexp& s) {
  std::ostringstream os;
  write_sexp(os, s);
  return os.str();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace realogic
