#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ginnkan/kan.hpp"

using namespace ginnkan;
using kan::SplineActivation;
using kan::SplineGrid;

namespace {

constexpr double kPi = std::numbers::pi;

SplineActivation fitted(const SplineGrid& grid, double (*f)(double), std::size_t n = 400) {
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = grid.lo + (grid.hi() - grid.lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    ys[i] = f(xs[i]);
  }
  SplineActivation a = SplineActivation::zero(grid);
  a.coef = kan::fit_coefficients(grid, xs, ys);
  return a;
}

// Direct Cox-de Boor recursion over an explicit knot vector.
double cox_de_boor(const std::vector<double>& t, std::size_t i, std::uint32_t k, double x) {
  if (k == 0) return (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
  double v = 0.0;
  if (t[i + k] > t[i]) v += (x - t[i]) / (t[i + k] - t[i]) * cox_de_boor(t, i, k - 1, x);
  if (t[i + k + 1] > t[i + 1]) v += (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * cox_de_boor(t, i + 1, k - 1, x);
  return v;
}

}  // namespace

TEST(Basis, KnotsAndCount) {
  const SplineGrid g = kan::make_grid(-1, 1);
  const auto k = kan::knots(g);
  ASSERT_EQ(k.size(), 5u + 2 * 3 + 1);
  EXPECT_DOUBLE_EQ(k[3], -1.0);
  EXPECT_NEAR(k[8], 1.0, 1e-15);
  EXPECT_EQ(g.basis_count(), 8u);
  for (std::size_t i = 1; i < k.size(); ++i) EXPECT_GT(k[i], k[i - 1]);
}

TEST(Basis, MatchesCoxDeBoorInside) {
  const SplineGrid g = kan::make_grid(-1.3, 2.1, 5, 3);
  const auto t = kan::knots(g);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(g.lo, g.hi());
  for (int n = 0; n < 200; ++n) {
    const double x = u(rng);
    const auto b = kan::bspline_basis(x, g);
    for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(b[i], cox_de_boor(t, i, 3, x), 1e-12);
  }
}

TEST(Basis, PartitionOfUnityIncludingUpdatedGrids) {
  std::vector<SplineGrid> grids{kan::make_grid(-1, 1)};
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0.3, 2.0);
  SplineActivation act = SplineActivation::zero(grids[0]);
  for (int r = 0; r < 5; ++r) {
    std::vector<double> samples(80);
    for (double& s : samples) s = nd(rng);
    act = kan::update_grid(act, samples);
    grids.push_back(act.grid);
  }
  for (const SplineGrid& g : grids) {
    std::uniform_real_distribution<double> u(g.lo, g.hi());
    for (int n = 0; n < 1000; ++n) {
      const auto b = kan::bspline_basis(u(rng), g);
      double s = 0;
      for (double v : b) s += v;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Basis, LocalSupport) {
  const SplineGrid g = kan::make_grid(-1, 1);
  for (std::uint32_t j = 1; j < g.intervals; ++j) {
    const auto b = kan::bspline_basis(g.lo + j * g.h, g);
    int nonzero = 0;
    for (double v : b) nonzero += std::abs(v) > 0.0;
    EXPECT_LE(nonzero, 4);
  }
  // Over 1000 random points each basis function is seen on at most k+1
  // consecutive intervals.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(g.lo, g.hi());
  std::vector<std::vector<int>> seen(g.basis_count(), std::vector<int>(g.intervals, 0));
  for (int n = 0; n < 1000; ++n) {
    const double x = u(rng);
    const auto b = kan::bspline_basis(x, g);
    const auto j = std::min<std::uint32_t>(static_cast<std::uint32_t>((x - g.lo) / g.h), g.intervals - 1);
    for (std::size_t m = 0; m < b.size(); ++m) seen[m][j] |= b[m] != 0.0;
  }
  for (std::size_t m = 0; m < g.basis_count(); ++m) {
    int first = -1, last = -1, count = 0;
    for (int j = 0; j < static_cast<int>(g.intervals); ++j) {
      if (!seen[m][j]) continue;
      if (first < 0) first = j;
      last = j;
      ++count;
    }
    EXPECT_LE(count, 4);
    if (count > 0) EXPECT_EQ(last - first + 1, count);
  }
}

TEST(Basis, DegreeZeroIsIndicator) {
  const SplineGrid g = kan::make_grid(0, 5, 5, 0);
  for (int j = 0; j < 5; ++j) {
    const auto b = kan::bspline_basis(j + 0.5, g);
    ASSERT_EQ(b.size(), 5u);
    for (int m = 0; m < 5; ++m) EXPECT_EQ(b[m], m == j ? 1.0 : 0.0);
  }
}

TEST(Activation, Examples) {
  const SplineGrid g = kan::make_grid(-1, 1);
  SplineActivation zero = SplineActivation::zero(g);
  for (double x : {-3.0, -0.2, 0.0, 0.7, 4.0}) EXPECT_EQ(kan::activation_forward(zero, x), 0.0);

  SplineActivation ident = fitted(g, [](double x) { return x; });
  for (double x = -0.95; x < 0.95; x += 0.05) EXPECT_NEAR(kan::activation_forward(ident, x), x, 1e-3);

  SplineActivation base = zero;
  base.w_base = 1.0;
  base.w_spline = 0.0;
  EXPECT_EQ(kan::activation_forward(base, 0.0), 0.0);
  EXPECT_NEAR(kan::activation_forward(base, 1.0), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(Activation, OutsideRangeExtendsBoundaryPolynomial) {
  const SplineGrid g = kan::make_grid(-1, 1);
  SplineActivation sq = fitted(g, [](double x) { return x * x; });
  EXPECT_NEAR(kan::activation_forward(sq, 1.5), 2.25, 1e-9);
  EXPECT_NEAR(kan::activation_forward(sq, -2.0), 4.0, 1e-9);
}

TEST(Activation, GraphDerivativeMatchesFiniteDifferences) {
  const SplineGrid g = kan::make_grid(-1, 1);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0, 0.5);
  SplineActivation act = SplineActivation::zero(g);
  for (double& c : act.coef) c = nd(rng);
  act.w_base = 0.7;
  act.w_spline = 1.3;
  std::uniform_real_distribution<double> u(-0.99, 0.99);
  for (int n = 0; n < 100; ++n) {
    const double x0 = u(rng);
    ad::Graph gr;
    ad::Var x = gr.input(x0);
    std::vector<ad::Var> coef;
    for (double c : act.coef) coef.push_back(gr.constant(c));
    ad::Var y = kan::activation_forward(gr, g, x, ad::silu(x), coef, gr.constant(act.w_base), gr.constant(act.w_spline));
    EXPECT_NEAR(y.value(), kan::activation_forward(act, x0), 1e-14);
    const double d = gr.grad(y, x, false).value();
    const double eps = 1e-6;
    const double fd = (kan::activation_forward(act, x0 + eps) - kan::activation_forward(act, x0 - eps)) / (2 * eps);
    EXPECT_LE(std::abs(d - fd) / std::max(1.0, std::abs(fd)), 1e-4);
  }
}

TEST(KanForward, IdentityChainAndZeroNetwork) {
  const SplineGrid g = kan::make_grid(-1, 1);
  kan::KanLayer layer{1, 1, {fitted(g, [](double x) { return x; })}};
  std::vector<kan::KanLayer> net{layer};
  for (double x : {-0.8, 0.1, 0.6}) EXPECT_NEAR(kan::kan_forward(net, std::vector<double>{x}), x, 1e-9);

  kan::KanLayer l1{2, 5, std::vector<SplineActivation>(10, SplineActivation::zero(g))};
  kan::KanLayer l2{5, 1, std::vector<SplineActivation>(5, SplineActivation::zero(g))};
  std::vector<kan::KanLayer> zero{l1, l2};
  EXPECT_EQ(kan::kan_forward(zero, std::vector<double>{0.3, -2.0}), 0.0);
  EXPECT_THROW(kan::kan_forward(zero, std::vector<double>{0.3}), nn::Error);

  ad::Graph gr;
  std::vector<ad::Var> in{gr.input(0.3), gr.input(-0.4)};
  EXPECT_EQ(kan::kan_forward(gr, zero, in).value(), 0.0);
}

TEST(KanForward, MultiplicationNeedsTwoLayers) {
  // x1*x2 = ((x1+x2)^2 - (x1-x2)^2)/4; the printed variant with '+' gives (x1^2+x2^2)/2.
  const SplineGrid g1 = kan::make_grid(-1, 1);
  const SplineGrid g2 = kan::make_grid(-2, 2);
  const auto id = fitted(g1, [](double x) { return x; });
  const auto neg = fitted(g1, [](double x) { return -x; });
  const auto zero1 = SplineActivation::zero(g1);
  kan::KanLayer l1{2, 2, {id, id, id, neg}};
  (void)zero1;
  kan::KanLayer l2{2, 1, {fitted(g2, [](double h) { return h * h / 4; }), fitted(g2, [](double h) { return -h * h / 4; })}};
  kan::KanLayer l2_printed{2, 1, {fitted(g2, [](double h) { return h * h / 4; }), fitted(g2, [](double h) { return h * h / 4; })}};
  std::vector<kan::KanLayer> mul{l1, l2}, printed{l1, l2_printed};
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int n = 0; n < 50; ++n) {
    const double a = u(rng), b = u(rng);
    EXPECT_NEAR(kan::kan_forward(mul, std::vector<double>{a, b}), a * b, 1e-9);
    EXPECT_NEAR(kan::kan_forward(printed, std::vector<double>{a, b}), (a * a + b * b) / 2, 1e-9);
  }
}

TEST(UpdateGrid, FixedPointOnMatchingSamples) {
  const SplineGrid g = kan::make_grid(-1, 1);
  SplineActivation act = fitted(g, [](double x) { return std::sin(2 * x); });
  std::vector<double> samples;
  for (int i = 0; i <= 60; ++i) samples.push_back(-1.0 + 2.0 * i / 60.0);
  const auto out = kan::update_grid(act, samples);
  const auto k0 = kan::knots(act.grid), k1 = kan::knots(out.grid);
  for (std::size_t i = 0; i < k0.size(); ++i) EXPECT_NEAR(k0[i], k1[i], 1e-12);
  for (std::size_t i = 0; i < act.coef.size(); ++i) EXPECT_NEAR(act.coef[i], out.coef[i], 1e-8);
}

TEST(UpdateGrid, ZeroStaysZeroAndDegenerateSamplesAreIgnored) {
  const SplineGrid g = kan::make_grid(-1, 1);
  const auto zero = SplineActivation::zero(g);
  const auto out = kan::update_grid(zero, std::vector<double>{-3, 0.5, 2, 7});
  for (double x = -4; x < 8; x += 0.25) EXPECT_EQ(kan::activation_forward(out, x), 0.0);
  SplineActivation act = fitted(g, [](double x) { return x * x * x; });
  const auto same = kan::update_grid(act, std::vector<double>(10, 0.4));
  EXPECT_EQ(same.grid.lo, act.grid.lo);
  EXPECT_EQ(same.grid.h, act.grid.h);
  EXPECT_EQ(same.coef, act.coef);
}

TEST(UpdateGrid, RefitPreservesQuadratic) {
  const SplineGrid g = kan::make_grid(-1, 1);
  SplineActivation act = fitted(g, [](double x) { return x * x; });
  std::vector<double> samples;
  for (int i = 0; i <= 80; ++i) samples.push_back(-2.0 + 4.0 * i / 80.0);
  const auto out = kan::update_grid(act, samples);
  EXPECT_NEAR(out.grid.lo, -2.0, 1e-12);
  EXPECT_NEAR(out.grid.hi(), 2.0, 1e-12);
  double ss = 0;
  int n = 0;
  for (double x = -1; x <= 1; x += 0.01, ++n) ss += std::pow(kan::activation_forward(out, x) - x * x, 2);
  EXPECT_LT(std::sqrt(ss / n), 1e-4);
}

TEST(KanModel, ParameterCount) {
  kan::KanModel m(2, 0);
  EXPECT_EQ(m.net().layer_count(), 2u);
  const auto layers = m.net().layers(m.parameters());
  EXPECT_EQ(layers[0].acts.size() + layers[1].acts.size(), 15u);
  EXPECT_EQ(m.parameters().size(), 15u * (8 + 2));
  for (const auto& l : layers)
    for (const auto& a : l.acts) EXPECT_EQ(a.coef.size(), 8u);
}

TEST(KanModel, GraphMatchesPlainEvaluation) {
  kan::KanModel m(2, 4);
  std::vector<double> x1{0.1, 2.0, -1.0}, x2{-0.5, 0.3, 4.0};
  std::vector<std::span<const double>> cols{x1, x2};
  m.prepare(cols);
  const auto pred = m.predict(std::span<const std::span<const double>>(cols));
  for (std::size_t n = 0; n < x1.size(); ++n) {
    const std::vector<double> u{x1[n] * m.scale(0) + m.offset(0), x2[n] * m.scale(1) + m.offset(1)};
    EXPECT_NEAR(pred[n], m.net().eval(m.parameters(), u), 1e-13);
  }
}

TEST(KanModel, StateRoundTrip) {
  kan::KanModel m(2, 7);
  std::vector<double> x1{0.1, 2.0, -1.0, 0.5}, x2{-0.5, 0.3, 4.0, 1.0};
  std::vector<std::span<const double>> cols{x1, x2};
  m.prepare(cols);
  m.net().update_grids(m.parameters(), cols);
  kan::KanModel back(2, 99);
  back.parameters() = nn::ParameterStore::from_json(m.parameters().to_json());
  back.load_state(nn::Json::parse(m.state().dump()));
  EXPECT_EQ(back.predict(std::span<const std::span<const double>>(cols)),
            m.predict(std::span<const std::span<const double>>(cols)));
}

TEST(KanModel, LearnsSmallTarget) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  nn::Matrix X(300, 2);
  nn::Vector y(300);
  for (int n = 0; n < 300; ++n) {
    X(n, 0) = u(rng);
    X(n, 1) = u(rng);
    y(n) = std::sin(X(n, 0)) + X(n, 1);
  }
  kan::KanModel m(2, 0);
  nn::TrainConfig cfg;
  cfg.max_steps = 600;
  auto r = nn::train_supervised(m, X, y, cfg);
  EXPECT_LT(r.loss_history.back(), 1e-2);
}

TEST(Snap, Examples) {
  const auto& lib = kan::default_library();
  const SplineGrid gs = kan::make_grid(-kPi, kPi);
  const auto s = kan::snap_to_symbolic(fitted(gs, [](double x) { return std::sin(x); }), lib, kan::probe_points(gs));
  EXPECT_EQ(s.name, "sin");
  EXPECT_GT(s.r2, 0.99);

  const SplineGrid ge = kan::make_grid(0, 2);
  const auto e = kan::snap_to_symbolic(fitted(ge, [](double x) { return std::exp(x); }), lib, kan::probe_points(ge));
  EXPECT_EQ(e.name, "exp");
  EXPECT_GT(e.r2, 0.99);

  SplineActivation c = SplineActivation::zero(ge);
  for (double& v : c.coef) v = 0.75;
  const auto k = kan::snap_to_symbolic(c, lib, kan::probe_points(ge));
  EXPECT_EQ(k.name, "constant");
  EXPECT_EQ(k.r2, 1.0);
  EXPECT_NEAR(k(1.3), 0.75, 1e-12);
  EXPECT_EQ(k.apply(sym::LinearForm::atom("x1")).render(), "0.75");

  EXPECT_THROW(kan::snap_to_symbolic(c, lib, std::vector<double>(10, 0.5)), nn::Error);
}

TEST(Snap, FallsBackToConstantWhenNothingIsDefined) {
  kan::SymbolicLibrary lib{{"ln", [](double u) { return std::log(u); }, [](double u) { return u > 1e6; }},
                           {"constant", [](double) { return 1.0; }, [](double) { return true; }}};
  std::vector<double> xs, ys;
  for (int i = 0; i < 30; ++i) {
    xs.push_back(-10.0 - i);
    ys.push_back(std::sin(i * 1.0));
  }
  const auto r = kan::snap_samples(xs, ys, lib, 1.0);
  EXPECT_EQ(r.name, "constant");
}

TEST(Snap, RecoversEveryLibraryEntry) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ua(0.5, 2.0);
  const auto& lib = kan::default_library();
  for (const auto& entry : lib) {
    if (entry.name == "constant") continue;
    const bool positive = entry.name == "1/x" || entry.name == "sqrt" || entry.name == "ln";
    const SplineGrid g = positive ? kan::make_grid(0.5, 2.5, 40) : kan::make_grid(-2, 2, 40);
    for (int trial = 0; trial < 3; ++trial) {
      const double a = ua(rng), c = ua(rng);
      std::vector<double> xs, ys;
      for (int i = 0; i < 400; ++i) {
        xs.push_back(g.lo + (g.hi() - g.lo) * i / 399.0);
        ys.push_back(c * entry.f(a * xs.back()));
      }
      SplineActivation act = SplineActivation::zero(g);
      act.coef = kan::fit_coefficients(g, xs, ys);
      const auto r = kan::snap_to_symbolic(act, lib, kan::probe_points(g));
      EXPECT_EQ(r.name, entry.name) << "a=" << a << " c=" << c << " got r2=" << r.r2;
      EXPECT_GT(r.r2, 0.95);
    }
  }
}

TEST(Snap, RenderingComposes) {
  kan::SnapResult s{"sin", 1.0, 0.0, 2.0, 0.5, 1.0};
  EXPECT_EQ(s.apply(sym::LinearForm::atom("x1*x2")).render(), "2*sin(x1*x2) + 0.5");
  kan::SnapResult id{"x", 2.0, 1.0, 3.0, -1.0, 1.0};
  EXPECT_EQ(id.apply(sym::LinearForm::atom("x1")).render(), "6*x1 + 2");
  kan::SnapResult sq{"x^2", 1.0, -1.0, 1.0, 0.0, 1.0};
  const std::string text = sq.apply(sym::LinearForm::atom("x1")).render();
  EXPECT_EQ(text, "(x1 - 1)^2");
  EXPECT_DOUBLE_EQ(sym::evaluate(text, {{"x1", 3.0}}), 4.0);
}

// sin and cos pick whichever needs the smaller phase once composed.
TEST(Snap, TrigPhaseIsCanonicalAfterComposition) {
  const double pi = std::numbers::pi;
  const auto x = sym::LinearForm::atom("x1");
  EXPECT_EQ((kan::SnapResult{"cos", 1.0, -pi / 2, 2.0, 0.0, 1.0}).apply(x).render(), "2*sin(x1)");
  EXPECT_EQ((kan::SnapResult{"sin", 1.0, pi / 2, 1.0, 0.0, 1.0}).apply(x).render(), "cos(x1)");
  EXPECT_EQ((kan::SnapResult{"sin", 1.0, pi, 1.0, 0.0, 1.0}).apply(x).render(), "-sin(x1)");
  // The shift that matters is the one left after composing with the argument.
  const auto arg = 0.5 * x + sym::LinearForm(1.0);
  const std::string t = (kan::SnapResult{"cos", 2.0, -2.0 - pi / 2, 1.0, 0.0, 1.0}).apply(arg).render();
  EXPECT_EQ(t, "sin(x1)");
  for (double v : {-1.3, 0.2, 2.9}) {
    EXPECT_NEAR(sym::evaluate((kan::SnapResult{"cos", 1.0, 2.4, 1.5, 0.3, 1.0}).apply(x, 8).render(8), {{"x1", v}}),
                1.5 * std::cos(v + 2.4) + 0.3, 1e-6);
  }
}

TEST(KanNet, GridUpdateKeepsEveryEdge) {
  nn::ParameterStore store;
  std::mt19937_64 rng(5);
  kan::KanNet net({}, store, "", rng);
  std::vector<double> a, b;
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  for (int n = 0; n < 400; ++n) {
    a.push_back(u(rng));
    b.push_back(u(rng));
  }
  std::vector<std::span<const double>> cols{a, b};
  std::vector<double> ref;
  for (int n = 0; n < 400; ++n) ref.push_back(net.eval(store, std::vector<double>{a[n], b[n]}));
  net.update_grids(store, cols);
  double worst = 0.0;
  for (int n = 0; n < 400; ++n) {
    worst = std::max(worst, std::abs(net.eval(store, std::vector<double>{a[n], b[n]}) - ref[n]));
  }
  EXPECT_LT(worst, 1e-2);
}
