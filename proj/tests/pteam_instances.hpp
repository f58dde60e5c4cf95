#pragma once

#include "support.hpp"

namespace rl_test {

using CK = Certificate::Kind;

inline ProbTeam dice_team(int d) {
  std::vector<std::pair<Tuple, ExactScalar>> rows;
  ExactScalar dd(d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      ExactScalar w = ExactScalar(1) / (ExactScalar(2) * dd * dd);
      if (a == b) w += ExactScalar(1) / (ExactScalar(2) * dd);
      rows.push_back({{a, b}, w});
    }
  return ProbTeam({"x", "y"}, d, rows);
}

inline Certificate leaf() { return {}; }

inline Certificate dice_certificate(int d, const ExactScalar& k) {
  Certificate disj;
  disj.kind = CK::or_;
  disj.k = k;
  ExactScalar dd(d);
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) disj.left[{a, b}] = ExactScalar(1) / (dd * dd);
    disj.right[{a, a}] = ExactScalar(1) / dd;
  }
  disj.kids = {leaf(), leaf()};
  Certificate all;
  all.kind = CK::forall;
  all.kids = {leaf()};
  Certificate c;
  c.kind = CK::and_;
  c.kids = {disj, all};
  return c;
}

inline const char* kExample = "(and (or (indep (x) (y)) (eqv x y)) (forall (z) (ident (x) (z))))";

/// Brute-force oracle: marginals summed straight from the distribution table.
struct Oracle {
  WeightTable dist;
  std::vector<std::string> vars;
  int n;

  mpq_class marg(const std::vector<std::string>& vs, const Tuple& vals) const {
    mpq_class m;
    for (const auto& [t, w] : dist.values) {
      bool match = true;
      for (std::size_t i = 0; i < vs.size(); ++i) {
        auto pos = std::find(vars.begin(), vars.end(), vs[i]) - vars.begin();
        if (t[static_cast<std::size_t>(pos)] != vals[i]) match = false;
      }
      if (match) m += w.raw();
    }
    return m;
  }

  bool ci(const std::vector<std::string>& x, const std::vector<std::string>& y, const std::vector<std::string>& z) const {
    FiniteDomain d(n);
    for (const auto& a : d.tuples(static_cast<int>(x.size())))
      for (const auto& b : d.tuples(static_cast<int>(y.size())))
        for (const auto& c : d.tuples(static_cast<int>(z.size()))) {
          auto cat = [](std::vector<std::string> p, const std::vector<std::string>& q) {
            p.insert(p.end(), q.begin(), q.end());
            return p;
          };
          auto tcat = [](Tuple p, const Tuple& q) {
            p.insert(p.end(), q.begin(), q.end());
            return p;
          };
          if (marg(cat(x, y), tcat(a, b)) * marg(cat(x, z), tcat(a, c)) !=
              marg(x, a) * marg(cat(cat(x, y), z), tcat(tcat(a, b), c)))
            return false;
        }
    return true;
  }

  bool ident(const std::vector<std::string>& x, const std::vector<std::string>& y) const {
    for (const auto& a : FiniteDomain(n).tuples(static_cast<int>(x.size())))
      if (marg(x, a) != marg(y, a)) return false;
    return true;
  }
};

inline std::vector<std::string> some_vars(Gen& g, const std::vector<std::string>& pool, int max_len) {
  std::vector<std::string> out;
  int k = g.uniform(1, max_len);
  for (int i = 0; i < k; ++i) out.push_back(g.pick(pool));
  return out;
}

inline std::string names(const std::vector<std::string>& vs) {
  std::string out = "(";
  for (std::size_t i = 0; i < vs.size(); ++i) out += (i ? " " : "") + vs[i];
  return out + ")";
}

/// Scales every weight variable by c.
inline Environment scaled(const EncodedCheck& e, const Environment& env, const ExactScalar& c) {
  Environment out = env;
  for (const auto& v : e.variables) out.reals[v] = env.reals.at(v) * c;
  return out;
}

struct Witnessed {
  ProbTeam team;
  PTFormulaPtr f;
  Certificate cert;
};

/// Certificate-first instances: the team is assembled from the certificate.
inline Witnessed random_witnessed(Gen& g) {
  const int n = g.uniform(2, 3);
  FiniteDomain d(n);
  switch (g.uniform(0, 2)) {
    case 0: {
      // product-or-diagonal mixture
      auto px = g.distribution(n), py = g.distribution(n), pd = g.distribution(n);
      ExactScalar k = g.unit(4);
      std::map<Tuple, ExactScalar> left, right, mix;
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b)
          if (!(px[a] * py[b]).is_zero()) left[{a, b}] = px[a] * py[b];
        if (!pd[a].is_zero()) right[{a, a}] = pd[a];
      }
      for (const auto& [t, w] : left) mix[t] += k * w;
      for (const auto& [t, w] : right) mix[t] += (ExactScalar(1) - k) * w;
      Certificate c;
      c.kind = CK::or_;
      c.k = k;
      if (!k.is_zero()) c.left = left;
      if (k != ExactScalar(1)) c.right = right;
      c.kids = {leaf(), leaf()};
      return {ProbTeam::from_weights({"x", "y"}, n, mix), parse_pt_formula("(or (indep (x) (y)) (eqv x y))"), c};
    }
    case 1: {
      // z drawn independently with x's marginal
      auto t = g.team({"x", "y"}, n, 6);
      std::vector<ExactScalar> mx(static_cast<std::size_t>(n));
      for (int a = 0; a < n; ++a) mx[a] = marginal(t, {"x"}, {a});
      Certificate inner;
      inner.kind = CK::and_;
      inner.kids = {leaf(), leaf()};
      Certificate c;
      c.kind = CK::exists;
      for (const auto& [row, w] : t.rows()) c.split[row] = mx;
      c.kids = {inner};
      return {t, parse_pt_formula("(exists (z) (and (ident (x) (z)) (indep (z) (y))))"), c};
    }
    default: {
      // z copies x, then a uniform u is independent of everything
      auto t = g.team({"x", "y"}, n, 6);
      Certificate c;
      c.kind = CK::exists;
      for (const auto& [row, w] : t.rows()) {
        std::vector<ExactScalar> point(static_cast<std::size_t>(n));
        point[static_cast<std::size_t>(row[0])] = ExactScalar(1);
        c.split[row] = point;
      }
      Certificate all;
      all.kind = CK::forall;
      Certificate both;
      both.kind = CK::and_;
      both.kids = {leaf(), leaf()};
      all.kids = {both};
      c.kids = {all};
      return {t, parse_pt_formula("(exists (z) (forall (u) (and (eqv z x) (indep (u) (x z)))))"), c};
    }
  }
}

}  // namespace rl_test
