#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "ginnkan/ginnkan.hpp"
#include "model_check.hpp"

using namespace ginnkan;
using ginnkan_model::GinnKanModel;

namespace {

nn::Matrix uniform_inputs(std::size_t rows, std::uint64_t seed, double lo = 0.5, double hi = 2.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  nn::Matrix X(static_cast<Eigen::Index>(rows), 2);
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    X(r, 0) = u(rng);
    X(r, 1) = u(rng);
  }
  return X;
}

std::vector<std::span<const double>> columns(const nn::Matrix& X) {
  std::vector<std::span<const double>> out;
  for (Eigen::Index c = 0; c < X.cols(); ++c) out.emplace_back(X.col(c).data(), static_cast<std::size_t>(X.rows()));
  return out;
}

void set_ginn(GinnKanModel& m, std::size_t i, std::vector<double> exponents, double coef) {
  auto& store = m.parameters();
  const std::string p = "ginn" + std::to_string(i + 1) + ".pta0";
  store.tensor(store.index(p + ".exponents")).values = std::move(exponents);
  store.tensor(store.index(p + ".coef")).values = {coef};
}

void zero_kan(GinnKanModel& m) {
  auto& net = m.kan();
  for (std::size_t l = 0; l < net.layer_count(); ++l)
    for (std::size_t i = 0; i < net.widths()[l]; ++i)
      for (std::size_t j = 0; j < net.widths()[l + 1]; ++j) {
        auto act = kan::SplineActivation::zero(net.grid(l, i));
        act.w_base = 0.0;
        net.set_edge(m.parameters(), l, i, j, act);
      }
}

// Edge whose spline part is the least-squares fit of f over its grid.
void set_edge_fn(GinnKanModel& m, std::size_t l, std::size_t i, std::size_t j, double (*f)(double)) {
  auto& net = m.kan();
  kan::SplineActivation act = kan::SplineActivation::zero(net.grid(l, i));
  act.w_base = 0.0;
  const auto xs = kan::probe_points(act.grid, 401);
  std::vector<double> ys;
  for (double x : xs) ys.push_back(f(x));
  act.coef = kan::fit_coefficients(act.grid, xs, ys);
  net.set_edge(m.parameters(), l, i, j, act);
}

double identity(double x) { return x; }

// GINN1 = x1*x2 on [0.5, 2]^2, normalized onto [-1, 1]; the hidden node
// carries u and the output edge undoes the normalization inside sin.
GinnKanModel hand_built_sin() {
  kan::KanNet::Options opts;
  opts.intervals = 20;
  GinnKanModel m(2, 0, opts);
  zero_kan(m);
  set_ginn(m, 0, {1.0, 1.0}, 1.0);
  set_ginn(m, 1, {0.0, 0.0}, 0.0);
  // 0.25..4 -> -1..1
  m.set_normalizer(0, {2.0 / 3.75, -1.0 - 0.25 * 2.0 / 3.75});
  set_edge_fn(m, 0, 0, 0, identity);
  set_edge_fn(m, 1, 0, 0, +[](double h) { return std::sin((h + 1.0 + 0.25 * 2.0 / 3.75) * 3.75 / 2.0); });
  return m;
}

}  // namespace

TEST(GinnKan, ConstantChain) {
  GinnKanModel m(2, 3);
  zero_kan(m);
  auto act = m.kan().edge(m.parameters(), 1, 2, 0);
  std::fill(act.coef.begin(), act.coef.end(), 1.25);
  m.kan().set_edge(m.parameters(), 1, 2, 0, act);
  for (double x : {0.5, 1.0, 2.7}) EXPECT_NEAR(m.eval(std::vector<double>{x, 1.0 / x}), 1.25, 1e-12);
  EXPECT_EQ(m.extract().expression, "1.25");
}

TEST(GinnKan, HandBuiltProduct) {
  const GinnKanModel m = hand_built_sin();
  double worst = 0.0;
  for (double a = 0.5; a <= 2.0; a += 0.125)
    for (double b = 0.5; b <= 2.0; b += 0.125)
      worst = std::max(worst, std::abs(m.eval(std::vector<double>{a, b}) - std::sin(a * b)));
  EXPECT_LT(worst, 1e-2);
}

TEST(GinnKan, ExtractsSinOfPowerTerm) {
  const GinnKanModel m = hand_built_sin();
  const auto ex = m.extract();
  EXPECT_EQ(ex.ginn_expressions[0], "x1*x2");
  EXPECT_EQ(ex.ginn_expressions[1], "0");
  EXPECT_NE(ex.expression.find("sin(x1*x2)"), std::string::npos) << ex.expression;
  for (double a : {0.6, 1.1, 1.9})
    for (double b : {0.7, 1.5})
      EXPECT_NEAR(sym::evaluate(ex.expression, {{"x1", a}, {"x2", b}}), std::sin(a * b), 2e-2) << ex.expression;
}

TEST(GinnKan, ZeroKanExtractsZero) {
  GinnKanModel m(2, 9);
  zero_kan(m);
  const auto ex = m.extract();
  EXPECT_EQ(ex.expression, "0");
  for (const auto& e : ex.edges) EXPECT_TRUE(e.pruned);
}

TEST(GinnKan, IdentityPathKeepsPowerTerm) {
  GinnKanModel m(2, 4);
  zero_kan(m);
  set_ginn(m, 0, {1.0, 2.0}, 1.0);
  set_ginn(m, 1, {0.0, 0.0}, 0.0);
  const nn::Matrix X = uniform_inputs(200, 2);
  m.prepare(columns(X));
  set_edge_fn(m, 0, 0, 1, identity);
  set_edge_fn(m, 1, 1, 0, identity);
  const auto ex = m.extract();
  EXPECT_NE(ex.expression.find("x1*x2^2"), std::string::npos) << ex.expression;
  // c*x1*x2^2 + d with c = alpha and d = beta.
  const auto n = m.normalizer(0);
  for (double a : {0.6, 1.4})
    for (double b : {0.8, 1.9})
      EXPECT_NEAR(sym::evaluate(ex.expression, {{"x1", a}, {"x2", b}}), n.alpha * a * b * b + n.beta, 1e-3);
}

TEST(GinnKan, ParameterCountIsKanPlusTwoGinns) {
  GinnKanModel m(2, 1);
  kan::KanModel k(2, 1);
  const std::size_t ginns = m.ginn(0).parameter_count(m.parameters()) + m.ginn(1).parameter_count(m.parameters());
  EXPECT_EQ(ginns, 6u);
  EXPECT_EQ(m.parameters().size(), k.parameters().size() + ginns);
  EXPECT_EQ(m.kan().parameter_count(m.parameters()), k.net().parameter_count(k.parameters()));
}

TEST(GinnKan, GradientMatchesFiniteDifferences) {
  GinnKanModel m(2, 7);
  const nn::Matrix X = uniform_inputs(20, 8);
  m.prepare(columns(X));
  double worst = 0.0;
  for (Eigen::Index r = 0; r < X.rows(); ++r)
    worst = std::max(worst, testing_util::parameter_gradient_error(m, {X(r, 0), X(r, 1)}));
  EXPECT_LT(worst, 1e-5);
}

TEST(GinnKan, GrowthIsNeutral) {
  GinnKanModel m(2, 5);
  const nn::Matrix X = uniform_inputs(50, 6);
  m.prepare(columns(X));
  const auto before = m.predict(X);
  ASSERT_TRUE(m.ginn(0).grow(m.parameters()));
  ASSERT_TRUE(m.ginn(1).grow(m.parameters()));
  EXPECT_EQ(m.predict(X), before);
}

TEST(GinnKan, NormalizerRefitKeepsFunction) {
  GinnKanModel m(2, 11);
  const nn::Matrix X = uniform_inputs(300, 12);
  m.prepare(columns(X));
  // Move the GINN so its outputs no longer span the grid.
  set_ginn(m, 0, {0.9, 1.1}, 1.3);
  const auto before = m.predict(X);
  const auto old = m.normalizer(0);
  m.refit_normalizers(columns(X));
  EXPECT_NE(m.normalizer(0).alpha, old.alpha);
  const auto after = m.predict(X);
  double worst = 0.0, scale = 0.0;
  for (std::size_t n = 0; n < before.size(); ++n) {
    worst = std::max(worst, std::abs(after[n] - before[n]));
    scale = std::max(scale, std::abs(before[n]));
  }
  EXPECT_LT(worst, 1e-2 * std::max(1.0, scale));
}

TEST(GinnKan, StateRoundTrip) {
  GinnKanModel m(2, 2);
  const nn::Matrix X = uniform_inputs(40, 3);
  m.prepare(columns(X));
  m.ginn(1).grow(m.parameters());
  GinnKanModel copy(2, 99);
  copy.parameters() = m.parameters();
  copy.load_state(m.state());
  EXPECT_EQ(copy.predict(X), m.predict(X));
}

TEST(GinnKan, ReportIsStructured) {
  const GinnKanModel m = hand_built_sin();
  const nn::Json j = m.extract().report();
  EXPECT_EQ(j.at("edges").size(), 15u);
  EXPECT_EQ(j.at("ginn").size(), 2u);
  const auto& e = j.at("edges").at(0);
  for (const char* key : {"layer", "from", "to", "function", "a", "b", "c", "d", "r2", "pruned", "poor_fit"})
    EXPECT_TRUE(e.contains(key)) << key;
  EXPECT_EQ(e.at("function"), "x");
}

TEST(GinnKan, TrainingReducesLoss) {
  const nn::Matrix X = uniform_inputs(200, 21);
  nn::Vector y(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) y(r) = std::sin(X(r, 0) * X(r, 1));
  GinnKanModel m(2, 0);
  m.prepare(columns(X));
  const auto p0 = m.predict(X);
  const double start = nn::mse(p0, std::vector<double>(y.data(), y.data() + y.size()));
  nn::TrainConfig cfg;
  cfg.max_steps = 1000;
  nn::train_supervised(m, X, y, cfg);
  const auto p1 = m.predict(X);
  const double end = nn::mse(p1, std::vector<double>(y.data(), y.data() + y.size()));
  EXPECT_LT(end, 0.1 * start);
  EXPECT_LT(end, 1e-2);
}
