#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "realogic.hpp"

namespace rl_test {

using namespace realogic;

inline std::string fixture(const std::string& rel) { return std::string(REALOGIC_FIXTURES) + "/" + rel; }

inline Machine load_machine(const std::string& name) {
  return parse_machine(read_file(fixture("machines/" + name + ".sx")));
}

inline ExactScalar Q(const char* s) { return ExactScalar::parse(s); }

/// Hand-rolled generators over a seeded engine.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
  template <class T>
  const T& pick(const std::vector<T>& xs) { return xs[static_cast<std::size_t>(uniform(0, static_cast<int>(xs.size()) - 1))]; }

  /// p/q with 1 <= q <= max_den and lo <= p/q <= hi.
  ExactScalar rational(const ExactScalar& lo, const ExactScalar& hi, int max_den = 8) {
    int q = uniform(1, max_den);
    mpq_class l = lo.raw() * q, h = hi.raw() * q;
    mpz_class pl = l.get_num() / l.get_den(), ph = h.get_num() / h.get_den();
    if (mpq_class(pl) < l) pl += 1;
    if (mpq_class(ph) > h) ph -= 1;
    if (pl > ph) return lo;
    long span = mpz_class(ph - pl).get_si();
    long off = std::uniform_int_distribution<long>(0, span)(rng_);
    return ExactScalar(mpq_class(pl + off, q));
  }
  ExactScalar unit(int max_den = 8) { return rational(ExactScalar(0), ExactScalar(1), max_den); }

  /// Positive integer weights normalized to a distribution of the given size.
  std::vector<ExactScalar> distribution(std::size_t size, int max_weight = 6, bool allow_zero = true) {
    std::vector<long> w(size);
    long total = 0;
    for (auto& x : w) {
      x = uniform(allow_zero ? 0 : 1, max_weight);
      total += x;
    }
    if (total == 0) {
      w[0] = 1;
      total = 1;
    }
    std::vector<ExactScalar> out;
    for (long x : w) out.emplace_back(x, total);
    return out;
  }

  /// Team over vars with at most max_support rows.
  ProbTeam team(const std::vector<std::string>& vars, int domain, int max_support) {
    FiniteDomain d(domain);
    auto all = d.tuples(static_cast<int>(vars.size()));
    std::shuffle(all.begin(), all.end(), rng_);
    std::size_t k = static_cast<std::size_t>(uniform(1, std::min<int>(max_support, static_cast<int>(all.size()))));
    auto w = distribution(k, 5, false);
    std::vector<std::pair<Tuple, ExactScalar>> rows;
    for (std::size_t i = 0; i < k; ++i) rows.emplace_back(all[i], w[i]);
    return ProbTeam(vars, domain, rows);
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace rl_test
