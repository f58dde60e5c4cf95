#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "realogic/scalar.hpp"
#include "realogic/sexpr.hpp"

namespace realogic {

/// Tuple of domain element indices.
using Tuple = std::vector<int>;

class structure_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Finite domain {0, ..., size-1}.
struct FiniteDomain {
  int size = 1;

  explicit FiniteDomain(int n = 1) : size(n) {
    if (n < 1) throw structure_error("domain must be nonempty");
  }

  /// Number of k-tuples, |A|^k.
  std::size_t tuple_count(int k) const {
    std::size_t c = 1;
    for (int i = 0; i < k; ++i) c *= static_cast<std::size_t>(size);
    return c;
  }

  /// All k-tuples in lexicographic index order.
  std::vector<Tuple> tuples(int k) const {
    std::vector<Tuple> out;
    out.reserve(tuple_count(k));
    Tuple t(static_cast<std::size_t>(k), 0);
    for (;;) {
      out.push_back(t);
      int i = k - 1;
      while (i >= 0 && t[i] == size - 1) t[i--] = 0;
      if (i < 0) break;
      ++t[i];
    }
    return out;
  }

  bool contains(const Tuple& t) const {
    return std::all_of(t.begin(), t.end(), [&](int a) { return a >= 0 && a < size; });
  }

  friend bool operator==(const FiniteDomain&, const FiniteDomain&) = default;
};

/// Total function A^arity -> values. Missing entries read as absent, not zero.
struct WeightTable {
  int arity = 0;
  std::map<Tuple, ExactScalar> values;

  WeightTable() = default;
  explicit WeightTable(int k) : arity(k) {}

  std::optional<ExactScalar> get(const Tuple& t) const {
    auto it = values.find(t);
    if (it == values.end()) return std::nullopt;
    return it->second;
  }
  const ExactScalar& at(const Tuple& t) const {
    auto it = values.find(t);
    if (it == values.end()) throw structure_error("weight table has no entry for tuple");
    return it->second;
  }
  void set(const Tuple& t, ExactScalar v) { values[t] = std::move(v); }

  bool is_total(const FiniteDomain& d) const {
    if (values.size() != d.tuple_count(arity)) return false;
    for (const auto& [t, v] : values)
      if (static_cast<int>(t.size()) != arity || !d.contains(t)) return false;
    return true;
  }

  ExactScalar sum() const {
    ExactScalar s;
    for (const auto& [t, v] : values) s += v;
    return s;
  }

  friend bool operator==(const WeightTable&, const WeightTable&) = default;
};

struct RelationTable {
  int arity = 0;
  std::set<Tuple> tuples;

  bool contains(const Tuple& t) const { return tuples.count(t) > 0; }
  friend bool operator==(const RelationTable&, const RelationTable&) = default;
};

/// Bijection from domain elements to ranks 1..|A|.
class Ranking {
 public:
  explicit Ranking(std::vector<int> rank_of) : rank_of_(std::move(rank_of)) {
    const int n = static_cast<int>(rank_of_.size());
    element_at_.assign(static_cast<std::size_t>(n), -1);
    for (int a = 0; a < n; ++a) {
      int r = rank_of_[a];
      if (r < 1 || r > n || element_at_[r - 1] != -1)
        throw structure_error("ranking is not a bijection onto 1..|A|");
      element_at_[r - 1] = a;
    }
  }

  static Ranking identity(int n) {
    std::vector<int> r(static_cast<std::size_t>(n));
    std::iota(r.begin(), r.end(), 1);
    return Ranking(std::move(r));
  }

  int size() const { return static_cast<int>(rank_of_.size()); }
  int rank(int element) const { return rank_of_.at(element); }
  int element(int rank) const { return element_at_.at(rank - 1); }

  /// Induced k-ranking: lexicographic rank of a k-tuple, in 1..|A|^k.
  std::size_t rank_tuple(const Tuple& t) const {
    std::size_t r = 0;
    for (int a : t) r = r * static_cast<std::size_t>(size()) + static_cast<std::size_t>(rank(a) - 1);
    return r + 1;
  }

  /// The k-tuples ordered by induced k-rank.
  std::vector<Tuple> ordered_tuples(int k) const {
    auto rank_tuples = FiniteDomain(size()).tuples(k);
    for (auto& t : rank_tuples)
      for (auto& a : t) a = element(a + 1);
    return rank_tuples;
  }

 private:
  std::vector<int> rank_of_;
  std::vector<int> element_at_;
};

enum class StructureKind { plain, unit_interval, distribution };

/// Finite relational structure with real weight functions.
struct RStructure {
  FiniteDomain domain;
  std::vector<std::pair<std::string, RelationTable>> relations;
  std::vector<std::pair<std::string, WeightTable>> weights;
  StructureKind kind = StructureKind::plain;

  const RelationTable* relation(const std::string& name) const {
    for (const auto& [n, r] : relations)
      if (n == name) return &r;
    return nullptr;
  }
  const WeightTable* weight(const std::string& name) const {
    for (const auto& [n, w] : weights)
      if (n == name) return &w;
    return nullptr;
  }

  void add_relation(std::string name, RelationTable r) {
    for (auto& [n, existing] : relations)
      if (n == name) {
        existing = std::move(r);
        return;
      }
    relations.emplace_back(std::move(name), std::move(r));
  }
  void add_weight(std::string name, WeightTable w) {
    for (auto& [n, existing] : weights)
      if (n == name) {
        existing = std::move(w);
        return;
      }
    weights.emplace_back(std::move(name), std::move(w));
  }

  /// Checks arities, totality and the kind constraints.
  void validate() const {
    for (const auto& [name, r] : relations)
      for (const auto& t : r.tuples)
        if (static_cast<int>(t.size()) != r.arity || !domain.contains(t))
          throw structure_error("relation " + name + " has a tuple of wrong arity or outside the domain");
    for (const auto& [name, w] : weights) {
      if (!w.is_total(domain)) throw structure_error("weight function " + name + " is not total");
      if (kind != StructureKind::plain)
        for (const auto& [t, v] : w.values)
          if (v < ExactScalar(0) || v > ExactScalar(1))
            throw structure_error("weight function " + name + " leaves [0,1]");
      if (kind == StructureKind::distribution && w.sum() != ExactScalar(1))
        throw structure_error("weight function " + name + " does not sum to 1");
    }
  }
};

/// Encodes a structure as a real string: |A| ones, then each relation's 0/1
/// block, then each weight block, all in induced k-rank order.
inline RealString encode_structure(const RStructure& s, const Ranking& pi) {
  if (pi.size() != s.domain.size) throw structure_error("ranking/domain mismatch");
  RealString out(static_cast<std::size_t>(s.domain.size), ExactScalar(1));
  for (const auto& [name, r] : s.relations)
    for (const auto& t : pi.ordered_tuples(r.arity))
      out.push_back(ExactScalar(r.contains(t) ? 1 : 0));
  for (const auto& [name, w] : s.weights)
    for (const auto& t : pi.ordered_tuples(w.arity)) out.push_back(w.at(t));
  return out;
}

/// (k+1)-ary table with mass 1/n^k on (a, 1) for a in R and on (a, 0) otherwise.
/// Elements 0 and 1 of the domain serve as the membership bits.
inline WeightTable characteristic_distribution(const RelationTable& rel, const FiniteDomain& d, int k) {
  if (rel.arity != k) throw structure_error("relation arity does not match k");
  if (d.size < 2) throw structure_error("characteristic distribution needs two distinct elements 0 and 1");
  for (const auto& t : rel.tuples)
    if (static_cast<int>(t.size()) != k) throw structure_error("relation tuple has wrong arity");
  const ExactScalar share(1, static_cast<long>(d.tuple_count(k)));
  WeightTable out(k + 1);
  for (const auto& t : d.tuples(k + 1)) out.set(t, ExactScalar(0));
  for (const auto& t : d.tuples(k)) {
    Tuple ext = t;
    ext.push_back(rel.contains(t) ? 1 : 0);
    out.set(ext, share);
  }
  return out;
}

inline WeightTable uniform_weight_table(const FiniteDomain& d, int k) {
  if (k < 0) throw structure_error("negative arity");
  const ExactScalar share(1, static_cast<long>(d.tuple_count(k)));
  WeightTable out(k);
  for (const auto& t : d.tuples(k)) out.set(t, share);
  return out;
}

/// Names of the built-in lexicographic order relations on m-tuples.
struct OrderNames {
  static std::string lt(int m) { return "lt:" + std::to_string(m); }
  static std::string succ(int m) { return "succ:" + std::to_string(m); }
  static std::string min(int m) { return "min:" + std::to_string(m); }
  static std::string max(int m) { return "max:" + std::to_string(m); }
};

/// Adds lt:m, succ:m (2m-ary) and min:m, max:m (m-ary) for the index order.
inline void add_order_relations(RStructure& s, int m) {
  auto ts = s.domain.tuples(m);
  RelationTable lt{2 * m, {}}, succ{2 * m, {}}, mn{m, {}}, mx{m, {}};
  for (std::size_t i = 0; i < ts.size(); ++i) {
    for (std::size_t j = i + 1; j < ts.size(); ++j) {
      Tuple t = ts[i];
      t.insert(t.end(), ts[j].begin(), ts[j].end());
      lt.tuples.insert(t);
      if (j == i + 1) succ.tuples.insert(t);
    }
  }
  mn.tuples.insert(ts.front());
  mx.tuples.insert(ts.back());
  s.add_relation(OrderNames::lt(m), std::move(lt));
  s.add_relation(OrderNames::succ(m), std::move(succ));
  s.add_relation(OrderNames::min(m), std::move(mn));
  s.add_relation(OrderNames::max(m), std::move(mx));
}

// Text format:
// (structure (domain N) (relation R 2 (0 1) ...) (weight f 1 ((0) 1/2) ...) (kind plain|unit|dist))

inline Tuple parse_tuple(const Sexp& s) {
  s.expect_list("tuple");
  Tuple t;
  for (const auto& e : s.items) {
    const auto& a = e.expect_atom("tuple element");
    try {
      std::size_t used = 0;
      int v = std::stoi(a, &used);
      if (used != a.size() || v < 0) throw std::invalid_argument(a);
      t.push_back(v);
    } catch (const std::exception&) {
      e.fail("tuple element must be a domain index: " + a);
    }
  }
  return t;
}

inline Sexp tuple_sexp(const Tuple& t) {
  Sexp l = Sexp::make_list();
  for (int a : t) l.items.push_back(Sexp::make_atom(std::to_string(a)));
  return l;
}

inline int parse_int_atom(const Sexp& s, const char* what) {
  const auto& a = s.expect_atom(what);
  try {
    std::size_t used = 0;
    int v = std::stoi(a, &used);
    if (used != a.size()) throw std::invalid_argument(a);
    return v;
  } catch (const std::exception&) {
    s.fail(std::string("expected integer for ") + what);
  }
}

inline RStructure parse_structure(const Sexp& top) {
  if (top.head() != "structure") top.fail("expected (structure ...)");
  RStructure s;
  bool have_domain = false;
  for (std::size_t i = 1; i < top.size(); ++i) {
    const Sexp& item = top[i].expect_list("structure item");
    auto h = item.head();
    if (h == "domain") {
      if (item.size() != 2) item.fail("(domain N)");
      s.domain = FiniteDomain(parse_int_atom(item[1], "domain size"));
      have_domain = true;
    } else if (h == "relation") {
      if (item.size() < 3) item.fail("(relation NAME ARITY tuples...)");
      RelationTable r{parse_int_atom(item[2], "arity"), {}};
      for (std::size_t j = 3; j < item.size(); ++j) r.tuples.insert(parse_tuple(item[j]));
      s.add_relation(item[1].expect_atom("relation name"), std::move(r));
    } else if (h == "weight") {
      if (item.size() < 3) item.fail("(weight NAME ARITY (tuple value)...)");
      WeightTable w(parse_int_atom(item[2], "arity"));
      for (std::size_t j = 3; j < item.size(); ++j) {
        const Sexp& e = item[j].expect_list("weight entry");
        if (e.size() != 2) e.fail("weight entry is (tuple value)");
        try {
          w.set(parse_tuple(e[0]), ExactScalar::parse(e[1].expect_atom("weight value")));
        } catch (const literal_error& err) {
          e[1].fail(err.what());
        }
      }
      s.add_weight(item[1].expect_atom("weight name"), std::move(w));
    } else if (h == "kind") {
      if (item.size() != 2) item.fail("(kind plain|unit|dist)");
      const auto& k = item[1].expect_atom("kind");
      if (k == "plain") s.kind = StructureKind::plain;
      else if (k == "unit") s.kind = StructureKind::unit_interval;
      else if (k == "dist") s.kind = StructureKind::distribution;
      else item[1].fail("unknown structure kind " + k);
    } else {
      item.fail("unknown structure item");
    }
  }
  if (!have_domain) top.fail("structure lacks (domain N)");
  s.validate();
  return s;
}

inline RStructure parse_structure(std::string_view text) { return parse_structure(parse_sexp(text)); }

inline Sexp structure_sexp(const RStructure& s) {
  Sexp top = Sexp::make_list({Sexp::make_atom("structure"),
                              Sexp::make_list({Sexp::make_atom("domain"),
                                               Sexp::make_atom(std::to_string(s.domain.size))})});
  for (const auto& [name, r] : s.relations) {
    Sexp item = Sexp::make_list({Sexp::make_atom("relation"), Sexp::make_atom(name),
                                 Sexp::make_atom(std::to_string(r.arity))});
    for (const auto& t : r.tuples) item.items.push_back(tuple_sexp(t));
    top.items.push_back(std::move(item));
  }
  for (const auto& [name, w] : s.weights) {
    Sexp item = Sexp::make_list({Sexp::make_atom("weight"), Sexp::make_atom(name),
                                 Sexp::make_atom(std::to_string(w.arity))});
    for (const auto& [t, v] : w.values)
      item.items.push_back(Sexp::make_list({tuple_sexp(t), Sexp::make_atom(v.str())}));
    top.items.push_back(std::move(item));
  }
  const char* kind = s.kind == StructureKind::plain ? "plain"
                     : s.kind == StructureKind::unit_interval ? "unit" : "dist";
  top.items.push_back(Sexp::make_list({Sexp::make_atom("kind"), Sexp::make_atom(kind)}));
  return top;
}

}  // namespace realogic
