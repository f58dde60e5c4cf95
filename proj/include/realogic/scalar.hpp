#pragma once

#include <gmpxx.h>

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace realogic {

/// Thrown when a token is not an exact rational literal.
class literal_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Arbitrary-precision rational. Always stored in lowest terms with a
/// positive denominator.
class ExactScalar {
 public:
  ExactScalar() = default;
  ExactScalar(long v) : q_(v) {}  // NOLINT(google-explicit-constructor)
  ExactScalar(int v) : q_(v) {}   // NOLINT(google-explicit-constructor)
  ExactScalar(long num, long den) {
    if (den == 0) throw std::domain_error("zero denominator");
    q_ = mpq_class(num, den);
    q_.canonicalize();
  }
  explicit ExactScalar(mpq_class q) : q_(std::move(q)) { q_.canonicalize(); }

  /// Parses `p`, `-p`, `p/q` or a finite decimal such as `0.25`.
  static ExactScalar parse(std::string_view text) {
    std::string s(text);
    if (s.empty()) throw literal_error("empty numeric literal");
    auto is_digits = [](std::string_view d) {
      if (d.empty()) return false;
      for (char c : d)
        if (c < '0' || c > '9') return false;
      return true;
    };
    std::string_view body = s;
    bool neg = false;
    if (body.front() == '-' || body.front() == '+') {
      neg = body.front() == '-';
      body.remove_prefix(1);
    }
    mpq_class q;
    if (auto slash = body.find('/'); slash != std::string_view::npos) {
      auto num = body.substr(0, slash);
      auto den = body.substr(slash + 1);
      if (!is_digits(num) || !is_digits(den))
        throw literal_error("not an exact rational literal: " + s);
      mpz_class d(std::string(den), 10);
      if (d == 0) throw literal_error("zero denominator in literal: " + s);
      q = mpq_class(mpz_class(std::string(num), 10), d);
    } else if (auto dot = body.find('.'); dot != std::string_view::npos) {
      auto ip = body.substr(0, dot);
      auto fp = body.substr(dot + 1);
      if ((!ip.empty() && !is_digits(ip)) || !is_digits(fp))
        throw literal_error("not an exact rational literal: " + s);
      mpz_class scale;
      mpz_ui_pow_ui(scale.get_mpz_t(), 10, fp.size());
      mpz_class whole(ip.empty() ? std::string("0") : std::string(ip), 10);
      q = mpq_class(whole * scale + mpz_class(std::string(fp), 10), scale);
    } else {
      if (!is_digits(body))
        throw literal_error("not an exact rational literal: " + s);
      q = mpq_class(mpz_class(std::string(body), 10));
    }
    q.canonicalize();
    if (neg) q = -q;
    return ExactScalar(q);
  }

  /// True when the token looks like an attempt at a number.
  static bool looks_numeric(std::string_view t) {
    if (t.empty()) return false;
    std::size_t i = (t[0] == '-' || t[0] == '+') ? 1 : 0;
    return i < t.size() && ((t[i] >= '0' && t[i] <= '9') || t[i] == '.');
  }

  const mpq_class& raw() const { return q_; }
  mpz_class numerator() const { return q_.get_num(); }
  mpz_class denominator() const { return q_.get_den(); }

  bool is_zero() const { return sgn(q_) == 0; }
  bool is_integer() const { return q_.get_den() == 1; }
  int sign() const { return sgn(q_); }
  ExactScalar abs() const { return ExactScalar(mpq_class(::abs(q_))); }
  double to_double() const { return q_.get_d(); }

  /// `p/q`, or just `p` for integers.
  std::string str() const {
    if (q_.get_den() == 1) return q_.get_num().get_str();
    return q_.get_num().get_str() + "/" + q_.get_den().get_str();
  }

  ExactScalar operator-() const { return ExactScalar(mpq_class(-q_)); }
  ExactScalar& operator+=(const ExactScalar& o) { q_ += o.q_; return *this; }
  ExactScalar& operator-=(const ExactScalar& o) { q_ -= o.q_; return *this; }
  ExactScalar& operator*=(const ExactScalar& o) { q_ *= o.q_; return *this; }
  ExactScalar& operator/=(const ExactScalar& o) {
    if (o.is_zero()) throw std::domain_error("division by zero");
    q_ /= o.q_;
    return *this;
  }
  friend ExactScalar operator+(ExactScalar a, const ExactScalar& b) { return a += b; }
  friend ExactScalar operator-(ExactScalar a, const ExactScalar& b) { return a -= b; }
  friend ExactScalar operator*(ExactScalar a, const ExactScalar& b) { return a *= b; }
  friend ExactScalar operator/(ExactScalar a, const ExactScalar& b) { return a /= b; }

  friend bool operator==(const ExactScalar& a, const ExactScalar& b) { return a.q_ == b.q_; }
  friend std::strong_ordering operator<=>(const ExactScalar& a, const ExactScalar& b) {
    int c = cmp(a.q_, b.q_);
    return c < 0 ? std::strong_ordering::less
                 : (c > 0 ? std::strong_ordering::greater : std::strong_ordering::equal);
  }

  friend std::ostream& operator<<(std::ostream& os, const ExactScalar& s) { return os << s.str(); }

  std::size_t hash() const {
    return std::hash<std::string>{}(str());
  }

 private:
  mpq_class q_{0};
};

/// A finite string of reals, x in R^*.
using RealString = std::vector<ExactScalar>;

inline std::string to_string(const RealString& xs) {
  std::string out = "(";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ' ';
    out += xs[i].str();
  }
  return out + ")";
}

/// Parses a whitespace- or comma-separated list of rationals, e.g. "2, 1/2".
inline RealString parse_real_string(std::string_view text) {
  RealString out;
  std::string tok;
  auto flush = [&] {
    if (!tok.empty()) out.push_back(ExactScalar::parse(tok));
    tok.clear();
  };
  for (char c : text) {
    if (c == ',' || c == ' ' || c == '\t' || c == '\n' || c == '(' || c == ')')
      flush();
    else
      tok.push_back(c);
  }
  flush();
  return out;
}

}  // namespace realogic

template <>
struct std::hash<realogic::ExactScalar> {
  std::size_t operator()(const realogic::ExactScalar& s) const { return s.hash(); }
};
