// SPDX-License-Identifier: Apache-2.0
#include "ginnkan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "ginnkan/autodiff.hpp"

namespace ginnkan::ad {

namespace {

struct Case {
  const char* name;
  std::size_t arity;
  std::function<Var(Graph&, std::span<const Var>)> f;
  double lo, hi;  // sampling range of the first argument
  double lo2 = -2.0, hi2 = 2.0;
  bool kinked = false;  // skip points with a within 1e-3 of b
};

const SplineGrid& oracle_grid() {
  static const SplineGrid grid{-1.0, 0.4, 5, 3};
  return grid;
}

std::vector<Case> cases() {
  using V = std::span<const Var>;
  std::vector<Case> c = {
      {"add", 2, [](Graph&, V v) { return v[0] + v[1]; }, -3, 3},
      {"sub", 2, [](Graph&, V v) { return v[0] - v[1]; }, -3, 3},
      {"mul", 2, [](Graph&, V v) { return v[0] * v[1]; }, -3, 3},
      {"div", 2, [](Graph&, V v) { return v[1] / v[0]; }, 0.5, 3},
      {"neg", 1, [](Graph&, V v) { return -v[0]; }, -3, 3},
      {"exp", 1, [](Graph&, V v) { return exp(v[0]); }, -2, 2},
      {"ln", 1, [](Graph&, V v) { return log(v[0]); }, 0.3, 5},
      {"sin", 1, [](Graph&, V v) { return sin(v[0]); }, -3, 3},
      {"cos", 1, [](Graph&, V v) { return cos(v[0]); }, -3, 3},
      {"tanh", 1, [](Graph&, V v) { return tanh(v[0]); }, -3, 3},
      {"sigmoid", 1, [](Graph&, V v) { return sigmoid(v[0]); }, -3, 3},
      {"max", 2, [](Graph&, V v) { return max(v[0], v[1]) * v[0]; }, -2, 2, -2, 2, true},
      {"step", 2, [](Graph&, V v) { return step(v[0], v[1]) * square(v[0]); }, -2, 2, -2, 2, true},
      {"sum", 2, [](Graph&, V v) {
         const Var t[] = {v[0], v[1], v[0] * v[1]};
         return sum(t);
       }, -3, 3},
      {"square", 1, [](Graph&, V v) { return square(v[0]); }, -3, 3},
      {"powi", 1, [](Graph&, V v) { return powi(v[0], 3); }, -2, 2},
      {"pow", 2, [](Graph&, V v) { return pow(v[0], v[1]); }, 0.3, 3},
      {"silu", 1, [](Graph&, V v) { return silu(v[0]); }, -3, 3},
      {"spline", 9, [](Graph& g, V v) {
         return g.make_spline(v[0], v.subspan(1), oracle_grid(), oracle_grid().degree, 0);
       }, -1, 1},
  };
  return c;
}

// k-th derivative of f with respect to its first argument, as a graph.
ScalarBuilder nested(const Case& c, int k) {
  return [&c, k](Graph& g, std::span<const Var> v) {
    Var y = c.f(g, v);
    for (int i = 0; i < k; ++i) y = g.grad(y, v[0], true);
    return y;
  };
}

}  // namespace

std::vector<OracleResult> gradient_oracles(std::uint64_t seed, std::size_t points) {
  std::vector<OracleResult> out;
  const auto all = cases();
  for (std::size_t ci = 0; ci < all.size(); ++ci) {
    const Case& c = all[ci];
    for (int k = 0; k <= 2; ++k) {
      std::mt19937_64 rng(seed * 1000003 + ci * 7 + static_cast<std::uint64_t>(k));
      std::uniform_real_distribution<double> ua(c.lo, c.hi), ub(c.lo2, c.hi2);
      OracleResult r;
      r.name = c.name;
      r.nesting = k;
      r.tolerance = k == 0 ? 1e-4 : 1e-3;
      const ScalarBuilder f = nested(c, k);
      const double eps = k == 0 ? 1e-6 : 1e-5;
      std::vector<double> p(c.arity);
      while (r.points < points) {
        p[0] = ua(rng);
        for (std::size_t j = 1; j < p.size(); ++j) p[j] = ub(rng);
        if (c.kinked && std::abs(p[0] - p[1]) < 1e-3) continue;
        r.max_error = std::max(r.max_error, check_gradient(f, p, eps));
        ++r.points;
      }
      r.passed = r.max_error < r.tolerance;
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace ginnkan::ad
