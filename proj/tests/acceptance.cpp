// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion. Cheap criteria use
// in-process oracles; the training criteria run the full default configs,
// so the whole run takes on the order of an hour on one core.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "ginnkan/bench.hpp"
#include "ginnkan/cli.hpp"
#include "ginnkan/ginn.hpp"
#include "ginnkan/ginnkan.hpp"
#include "ginnkan/gradcheck.hpp"
#include "ginnkan/kan.hpp"
#include "ginnkan/pinn.hpp"
#include "ginnkan/stats.hpp"
#include "ginnkan/symbolic.hpp"

using namespace ginnkan;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + sci(x);
  return s;
}

// -- 1 ----------------------------------------------------------------------

Verdict autodiff_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = ad::gradient_oracles(0, 20);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::set<std::string> names;
  std::set<int> levels;
  double worst[3] = {0, 0, 0};
  std::string failed;
  for (const auto& r : results) {
    names.insert(r.name);
    levels.insert(r.nesting);
    worst[r.nesting] = std::max(worst[r.nesting], r.max_error);
    if (!r.passed) failed += " " + r.name + "@" + std::to_string(r.nesting);
  }
  std::ostringstream d;
  d << names.size() << " primitives x " << levels.size() << " nesting levels, worst rel err " << sci(worst[0]) << " / "
    << sci(worst[1]) << " / " << sci(worst[2]) << ", " << sci(secs) << " s";
  if (!failed.empty()) d << ", failed:" << failed;
  return {failed.empty() && levels.size() == 3 && secs < 10.0, d.str()};
}

// -- 2 ----------------------------------------------------------------------

Verdict spline_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(7);
  // The default grid plus grids produced by update_grid.
  std::vector<kan::SplineGrid> grids{kan::make_grid(-1, 1)};
  kan::SplineActivation act = kan::SplineActivation::zero(grids[0]);
  std::normal_distribution<double> nd(0.4, 1.5);
  for (int r = 0; r < 3; ++r) {
    std::vector<double> samples(200);
    for (double& s : samples) s = nd(rng);
    act = kan::update_grid(act, samples);
    grids.push_back(act.grid);
  }
  double pou = 0.0;
  std::size_t support_violations = 0;
  for (const auto& g : grids) {
    std::uniform_real_distribution<double> u(g.lo, g.hi());
    std::vector<std::set<std::uint32_t>> seen(g.basis_count());
    for (int n = 0; n < 1000; ++n) {
      const double x = u(rng);
      const auto b = kan::bspline_basis(x, g);
      double s = 0.0;
      for (double v : b) s += v;
      pou = std::max(pou, std::abs(s - 1.0));
      const auto j = std::min<std::uint32_t>(static_cast<std::uint32_t>((x - g.lo) / g.h), g.intervals - 1);
      for (std::size_t m = 0; m < b.size(); ++m)
        if (b[m] != 0.0) seen[m].insert(j);
    }
    for (const auto& s : seen) {
      if (s.empty()) continue;
      if (s.size() > g.degree + 1 || *s.rbegin() - *s.begin() + 1 != s.size()) ++support_violations;
    }
  }
  // Autodiff derivative of a random activation against central differences.
  const kan::SplineGrid g = kan::make_grid(-1, 1);
  kan::SplineActivation a = kan::SplineActivation::zero(g);
  std::normal_distribution<double> cd(0, 0.5);
  for (double& c : a.coef) c = cd(rng);
  a.w_base = 0.7;
  a.w_spline = 1.3;
  std::uniform_real_distribution<double> u(-0.99, 0.99);
  double deriv = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const double x0 = u(rng);
    ad::Graph gr;
    ad::Var x = gr.input(x0);
    std::vector<ad::Var> coef;
    for (double c : a.coef) coef.push_back(gr.constant(c));
    ad::Var y = kan::activation_forward(gr, g, x, ad::silu(x), coef, gr.constant(a.w_base), gr.constant(a.w_spline));
    const double d = gr.grad(y, x, false).value();
    const double eps = 1e-6;
    const double fd = (kan::activation_forward(a, x0 + eps) - kan::activation_forward(a, x0 - eps)) / (2 * eps);
    deriv = std::max(deriv, std::abs(d - fd) / std::max(1.0, std::abs(fd)));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream d;
  d << grids.size() << " grids, max |sum B - 1| " << sci(pou) << ", support violations " << support_violations
    << ", derivative rel err " << sci(deriv) << ", " << sci(secs) << " s";
  return {pou <= 1e-12 && support_violations == 0 && deriv < 1e-4 && secs < 5.0, d.str()};
}

// -- 3 ----------------------------------------------------------------------

Verdict registry_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2025);
  double worst = 0.0;
  std::string worst_id;
  for (const auto& p : pinn::registry()) {
    std::uniform_real_distribution<double> ux(p.x_lo, p.x_hi), ut(0.0, p.t_hi);
    double w = 0.0;
    for (int i = 0; i < 500; ++i) {
      ad::Graph g;
      ad::Var x = g.input(ux(rng)), t = g.input(ut(rng));
      const pinn::Fields f = pinn::fields_of(g, p.solution_graph(x, t), x, t, p.order_x, p.order_t);
      w = std::max(w, std::abs(p.residual(g, f).value()));
    }
    for (const auto& ic : p.ics) {
      for (int i = 0; i < 500; ++i) {
        const double xv = ux(rng);
        double v;
        if (ic.t_order == 0) {
          v = p.solution(xv, 0.0);
        } else {
          ad::Graph g;
          ad::Var x = g.input(xv), t = g.input(0.0);
          v = g.grad(p.solution_graph(x, t), t, false).value();
        }
        w = std::max(w, std::abs(v - ic.f(xv)));
      }
    }
    for (const auto& bc : p.bcs) {
      for (int i = 0; i < 500; ++i) {
        const double tv = ut(rng);
        w = std::max(w, bc.periodic ? std::abs(p.solution(p.x_lo, tv) - p.solution(p.x_hi, tv))
                                    : std::abs(p.solution(bc.x, tv) - bc.g(tv)));
      }
    }
    if (w > worst) {
      worst = w;
      worst_id = p.id;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream d;
  d << pinn::registry().size() << " problems, worst residual/IC/BC error " << sci(worst) << " (" << worst_id << "), "
    << sci(secs) << " s";
  return {pinn::registry().size() == 15 && worst < 1e-6 && secs < 30.0, d.str()};
}

// -- 4, 5 -------------------------------------------------------------------

const std::vector<std::uint64_t> kSeeds = {0, 1, 2, 3, 4};

struct ToyRuns {
  std::map<std::pair<std::string, std::string>, std::vector<double>> mse;  // (dataset, model) -> per seed
  double seconds = 0.0;
  double median(const std::string& d, const std::string& m) const { return stats::median(mse.at({d, m})); }
  std::vector<double> pooled(const std::string& model, const std::vector<std::string>& rows) const {
    std::vector<double> v;
    for (const auto& r : rows) v.insert(v.end(), mse.at({r, model}).begin(), mse.at({r, model}).end());
    return v;
  }
};

ToyRuns toy_runs(const nn::TrainConfig& cfg, const std::vector<std::pair<std::string, std::vector<std::string>>>& plan) {
  ToyRuns out;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& [dataset, models] : plan) {
    for (const auto& c : bench::run_toy_study({dataset}, models, kSeeds, cfg)) out.mse[{c.dataset, c.model}].push_back(c.mse);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

const std::vector<std::string> kTrigRows = {"sin(x1)+sin(x2)", "sin(x1*x2)"};
const std::vector<std::string> kLpRows = {"x1*x2^2", "2*x1+3*x2^2+x1*x2"};

ToyRuns& default_toy_runs() {
  static ToyRuns runs = toy_runs(nn::TrainConfig{}, {{"x1*x2^2", {"ginn"}},
                                                     {"sin(x1)+x2", {"kan"}},
                                                     {"sin(x1*x2)", {"ginn", "kan", "ginn-kan"}},
                                                     {"sin(x1)+sin(x2)", {"ginn"}},
                                                     {"2*x1+3*x2^2+x1*x2", {"ginn"}}});
  return runs;
}

Verdict toy_direction() {
  const ToyRuns& r = default_toy_runs();
  const double ginn_lp = r.median("x1*x2^2", "ginn");
  const double kan_trig = r.median("sin(x1)+x2", "kan");
  const double gk = r.median("sin(x1*x2)", "ginn-kan");
  const double g = r.median("sin(x1*x2)", "ginn");
  const double k = r.median("sin(x1*x2)", "kan");
  std::ostringstream d;
  d << "median MSE: GINN x1*x2^2 " << sci(ginn_lp) << " (<1e-4), KAN sin(x1)+x2 " << sci(kan_trig)
    << " (<1e-2), sin(x1*x2) GINN-KAN " << sci(gk) << " (<1e-2) vs GINN " << sci(g) << " (" << sci(g / gk)
    << "x) KAN " << sci(k) << " (" << sci(k / gk) << "x) (>=5x); " << sci(r.seconds) << " s";
  return {ginn_lp < 1e-4 && kan_trig < 1e-2 && gk < 1e-2 && g >= 5 * gk && k >= 5 * gk && r.seconds < 1800, d.str()};
}

Verdict limitation(std::size_t extended_steps) {
  const ToyRuns& r = default_toy_runs();
  const double trig = stats::median(r.pooled("ginn", kTrigRows));
  const double lp = stats::median(r.pooled("ginn", kLpRows));
  std::ostringstream d;
  d << "GINN median MSE, default config: trig rows " << sci(trig) << " vs LP rows " << sci(lp) << " (ratio "
    << sci(trig / lp) << ", need >=10); per-row medians";
  for (const auto& row : kTrigRows) d << " " << row << "=" << sci(r.median(row, "ginn"));
  for (const auto& row : kLpRows) d << " " << row << "=" << sci(r.median(row, "ginn"));
  if (extended_steps > 0) {
    nn::TrainConfig cfg;
    cfg.max_steps = extended_steps;
    std::vector<std::pair<std::string, std::vector<std::string>>> plan;
    for (const auto& row : kTrigRows) plan.push_back({row, {"ginn"}});
    for (const auto& row : kLpRows) plan.push_back({row, {"ginn"}});
    const ToyRuns e = toy_runs(cfg, plan);
    const double et = stats::median(e.pooled("ginn", kTrigRows)), el = stats::median(e.pooled("ginn", kLpRows));
    d << "; with " << extended_steps << " steps (informational): " << sci(et) << " vs " << sci(el) << " (ratio "
      << sci(et / el) << ")";
  }
  return {trig >= 10 * lp, d.str()};
}

// -- 6 ----------------------------------------------------------------------

Verdict pinn_suite(std::size_t jobs) {
  const auto t0 = std::chrono::steady_clock::now();
  const nn::TrainConfig cfg = pinn::default_config();
  std::map<std::pair<std::string, std::string>, std::vector<double>> mse;
  const std::vector<std::pair<std::string, std::string>> cells = {{"inviscid_burgers", "kan"}, {"lp1", "ginn"},
                                                                   {"wave", "ginn-kan"},        {"wave", "fc"},
                                                                   {"lp3", "fc"},               {"lp3", "kan"}};
  std::ostringstream d;
  for (const auto& [pde, model] : cells) {
    for (const auto& c : pinn::run_suite({pde}, {model}, kSeeds, cfg, jobs)) {
      mse[{pde, model}].push_back(c.failure.empty() ? c.mse : std::numeric_limits<double>::infinity());
    }
    d << pde << "/" << model << " [" << list(mse[{pde, model}]) << "]; ";
  }
  auto med = [&](const char* p, const char* m) { return stats::median(mse.at({p, m})); };
  struct Check {
    const char* what;
    double value;
    bool ok;
  };
  const double gk = med("wave", "ginn-kan"), fcw = med("wave", "fc");
  const std::vector<Check> checks = {
      {"KAN inviscid_burgers < 1e-2", med("inviscid_burgers", "kan"), med("inviscid_burgers", "kan") < 1e-2},
      {"GINN lp1 < 1e-3", med("lp1", "ginn"), med("lp1", "ginn") < 1e-3},
      {"GINN-KAN wave < 0.3", gk, gk < 0.3},
      {"GINN-KAN wave < FC wave", fcw, gk < fcw},
      {"FC lp3 > 1", med("lp3", "fc"), med("lp3", "fc") > 1.0},
      {"KAN lp3 < 1e-2", med("lp3", "kan"), med("lp3", "kan") < 1e-2},
  };
  bool all = true;
  std::ostringstream head;
  for (const auto& c : checks) {
    head << c.what << ": " << sci(c.value) << (c.ok ? " ok" : " MISSED") << "; ";
    all = all && c.ok;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  head << "medians over 5 seeds, " << sci(secs) << " s; per seed: " << d.str();
  return {all && secs < 7200, head.str()};
}

// -- 7 ----------------------------------------------------------------------

// Exponents of the dominant product term of a power-term expression such as
// "0.98*x1*x2^2.001 + 0.01*x1^0.5"; missing variables count as exponent 0.
std::pair<double, double> dominant_exponents(const std::string& expr) {
  double best = -1.0;
  std::pair<double, double> out{0, 0};
  const std::regex term(R"(([-+]?\s*[0-9.eE+-]*)\*?((?:x[12](?:\^[-0-9.eE]+)?\*?)+))");
  for (std::sregex_iterator it(expr.begin(), expr.end(), term), end; it != end; ++it) {
    std::string c = (*it)[1].str();
    c.erase(std::remove(c.begin(), c.end(), ' '), c.end());
    const double coef = c.empty() || c == "+" ? 1.0 : c == "-" ? -1.0 : std::stod(c);
    std::pair<double, double> e{0, 0};
    const std::string vars = (*it)[2].str();
    const std::regex var(R"(x([12])(?:\^([-0-9.eE]+))?)");
    for (std::sregex_iterator v(vars.begin(), vars.end(), var); v != end; ++v) {
      const double p = (*v)[2].matched ? std::stod((*v)[2].str()) : 1.0;
      ((*v)[1].str() == "1" ? e.first : e.second) = p;
    }
    if (std::abs(coef) > best) {
      best = std::abs(coef);
      out = e;
    }
  }
  return out;
}

void set_ginn(ginnkan_model::GinnKanModel& m, std::size_t i, std::vector<double> exponents, double coef) {
  auto& store = m.parameters();
  const std::string p = "ginn" + std::to_string(i + 1) + ".pta0";
  store.tensor(store.index(p + ".exponents")).values = std::move(exponents);
  store.tensor(store.index(p + ".coef")).values = {coef};
}

void set_edge_fn(ginnkan_model::GinnKanModel& m, std::size_t l, std::size_t i, std::size_t j,
                 const std::function<double(double)>& f) {
  auto& net = m.kan();
  kan::SplineActivation act = kan::SplineActivation::zero(net.grid(l, i));
  act.w_base = 0.0;
  const auto xs = kan::probe_points(act.grid, 401);
  std::vector<double> ys;
  for (double x : xs) ys.push_back(f(x));
  act.coef = kan::fit_coefficients(act.grid, xs, ys);
  net.set_edge(m.parameters(), l, i, j, act);
}

// GINN 1 computes x1*x2 on [0.5, 2]^2; the normalizer maps it onto [-1, 1],
// one hidden node passes it on and the output edge applies sin after undoing
// the normalization.
ginnkan_model::GinnKanModel hand_composed_sin() {
  kan::KanNet::Options opts;
  opts.intervals = 20;
  ginnkan_model::GinnKanModel m(2, 0, opts);
  auto& net = m.kan();
  for (std::size_t l = 0; l < net.layer_count(); ++l)
    for (std::size_t i = 0; i < net.widths()[l]; ++i)
      for (std::size_t j = 0; j < net.widths()[l + 1]; ++j) {
        auto act = kan::SplineActivation::zero(net.grid(l, i));
        act.w_base = 0.0;
        net.set_edge(m.parameters(), l, i, j, act);
      }
  set_ginn(m, 0, {1.0, 1.0}, 1.0);
  set_ginn(m, 1, {0.0, 0.0}, 0.0);
  const double a = 2.0 / 3.75, b = -1.0 - 0.25 * a;  // 0.25..4 -> -1..1
  m.set_normalizer(0, {a, b});
  set_edge_fn(m, 0, 0, 0, [](double u) { return u; });
  set_edge_fn(m, 1, 0, 0, [a, b](double h) { return std::sin((h - b) / a); });
  return m;
}

Verdict extraction() {
  const auto data = bench::generate_dataset("x1*x2^2", 2000, 0);
  const auto fit = bench::fit(data, "ginn", nn::TrainConfig{});
  const auto& g = dynamic_cast<const ginn::GinnModel&>(*fit.model);
  const std::string ginn_expr = ginn::extract_equation(g.snapshot());
  const auto [a, b] = dominant_exponents(ginn_expr);
  const bool ginn_ok = std::abs(a - 1.0) <= 0.05 && std::abs(b - 2.0) <= 0.05;

  const std::string gk_expr = hand_composed_sin().extract().expression;
  // sin( followed by a power term over x1 and x2.
  std::smatch m;
  bool gk_ok = false;
  std::pair<double, double> e{0, 0};
  if (std::regex_search(gk_expr, m, std::regex(R"(sin\(([^()]*x1[^()]*x2[^()]*)\))"))) {
    e = dominant_exponents(m[1].str());
    gk_ok = std::abs(e.first - 1.0) <= 0.1 && std::abs(e.second - 1.0) <= 0.1;
  }
  std::ostringstream d;
  d << "GINN on x1*x2^2 -> \"" << ginn_expr << "\" exponents (" << sci(a) << ", " << sci(b) << "); GINN-KAN -> \""
    << gk_expr << "\" sin argument exponents (" << sci(e.first) << ", " << sci(e.second) << ")";
  return {ginn_ok && gk_ok, d.str()};
}

// -- 8 ----------------------------------------------------------------------

nn::Matrix probe_points(std::size_t n, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  nn::Matrix X(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index r = 0; r < X.rows(); ++r) X(r, 0) = u(rng), X(r, 1) = u(rng);
  return X;
}

// Wraps the growth hook: predictions on the probe straddling every step at
// which some GINN grows.
template <class Base>
class GrowthProbe : public Base {
 public:
  GrowthProbe(Base base, nn::Matrix probe) : Base(std::move(base)), probe_(std::move(probe)) {}
  bool after_step(const nn::StepContext& ctx) override {
    const auto before = this->predict(probe_);
    const std::size_t blocks = count();
    const bool changed = Base::after_step(ctx);
    if (count() != blocks) {
      ++events;
      if (this->predict(probe_) != before) ++mismatches;
    }
    return changed;
  }
  std::size_t events = 0, mismatches = 0;

 private:
  std::size_t count() const {
    if constexpr (std::is_same_v<Base, ginn::GinnModel>) return this->net().block_count();
    else return this->ginn(0).block_count() + this->ginn(1).block_count();
  }
  nn::Matrix probe_;
};

Verdict growth_neutrality() {
  std::size_t events = 0, mismatches = 0;
  std::ostringstream d;
  {
    const auto data = bench::generate_dataset("2*x1+3*x2^2+x1*x2", 2000, 0);
    GrowthProbe<ginn::GinnModel> m(ginn::GinnModel(2, 0), probe_points(100, 11, 0.5, 3.0));
    nn::TrainConfig cfg;
    cfg.max_steps = 10000;
    nn::train_supervised(m, data.rows(data.train), data.values(data.train), cfg);
    d << "GINN " << m.events << " growth events";
    events += m.events;
    mismatches += m.mismatches;
  }
  {
    // train_pinn takes ownership; the result hands the model back.
    const auto& p = pinn::problem("lp1");
    nn::TrainConfig cfg = pinn::default_config();
    cfg.max_steps = 1500;
    const auto res = pinn::train_pinn(std::make_unique<GrowthProbe<ginnkan_model::GinnKanModel>>(
                                          ginnkan_model::GinnKanModel(2, 0), probe_points(100, 12, 0.0, 1.0)),
                                      p, cfg);
    const auto* raw = dynamic_cast<const GrowthProbe<ginnkan_model::GinnKanModel>*>(res.model.get());
    d << ", GINN-KAN PINN " << raw->events << " growth events";
    events += raw->events;
    mismatches += raw->mismatches;
  }
  d << "; " << mismatches << " with changed predictions on the 100-point probe";
  return {events > 0 && mismatches == 0, d.str()};
}

// -- 9 ----------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

Verdict determinism() {
  const fs::path dir = fs::temp_directory_path() / "ginnkan_acceptance_determinism";
  fs::remove_all(dir);
  std::ostringstream sink;
  std::ostringstream d;
  bool ok = true;
  const std::vector<std::pair<std::string, std::vector<std::string>>> runs = {
      {"toy_results.csv",
       {"toy", "--datasets", "sin(x1*x2),x1*x2^2", "--models", "ginn,kan,ginn-kan", "--seeds", "0,1", "--steps", "200"}},
      {"pde_results.csv", {"pde", "wave,lp1", "--model", "ginn,kan,ginn-kan,fc", "--seeds", "0", "--steps", "100"}},
  };
  for (const auto& [csv, args] : runs) {
    std::string first;
    for (int rep = 0; rep < 2; ++rep) {
      auto a = args;
      const fs::path out = dir / (csv + std::to_string(rep));
      a.insert(a.end(), {"--out-dir", out.string()});
      const int code = cli::run(a, sink, sink);
      const std::string text = slurp(out / csv);
      if (code != cli::kOk || text.empty()) ok = false;
      if (rep == 0) first = text;
      else {
        const bool same = text == first;
        ok = ok && same;
        d << csv << " (" << std::count(text.begin(), text.end(), '\n') - 1 << " rows) "
          << (same ? "identical" : "DIFFERENT") << "; ";
      }
    }
  }
  fs::remove_all(dir);
  if (!ok) d << sink.str();
  return {ok, d.str()};
}

// -- 10 ---------------------------------------------------------------------

Verdict rank_machinery() {
  // Reference median MSEs per problem, columns GINN-KAN, GINN, KAN, FC.
  const std::vector<std::pair<std::string, std::array<double, 4>>> table = {
      {"inviscid_burgers", {3.07e-03, 5.59e-03, 3.70e-04, 9.35e-03}},
      {"convection_1", {5.49e-01, 5.05e-01, 9.03e-01, 9.11e-01}},
      {"convection_2", {6.75e-04, 5.15e-01, 5.59e-04, 3.74e-03}},
      {"diffusion", {2.70e-01, 1.09e-01, 3.56e+00, 5.23e-01}},
      {"fokker_planck", {8.81e-01, 4.15e-01, 9.98e-01, 9.75e-01}},
      {"reaction", {4.28e-02, 1.98e-01, 4.02e-02, 4.17e-02}},
      {"telegraph", {2.84e-03, 5.14e-02, 3.35e-04, 9.38e-01}},
      {"wave", {7.20e-02, 9.02e-02, 2.01e-01, 1.54e-01}},
      {"toy_1", {1.11e-03, 1.09e-01, 3.51e-03, 1.05e-02}},
      {"toy_2", {1.54e-05, 1.31e-04, 6.07e-07, 9.90e-05}},
      {"lp1", {3.15e-02, 2.06e-07, 1.07e-03, 5.77e-01}},
      {"lp2", {9.61e-02, 9.92e-02, 9.10e-02, 7.59e-02}},
      {"lp3", {1.29e-01, 2.57e-02, 6.90e-05, 1.75e+02}},
      {"lp4", {7.65e-03, 1.10e-02, 6.15e-05, 1.49e+01}},
      {"lp5", {2.83e-02, 2.14e-04, 2.56e-03, 7.66e-02}},
  };
  const std::vector<std::string> models = {"ginn-kan", "ginn", "kan", "fc"};
  std::vector<pinn::SuiteCell> cells;
  for (const auto& [pde, row] : table)
    for (std::size_t m = 0; m < 4; ++m) cells.push_back({pde, models[m], 0, row[m], row[m], 0.0, ""});
  const auto s = pinn::summarize(cells, models);
  const double all[4] = {2.20, 2.53, 2.00, 3.27}, non_lp[4] = {1.90, 2.70, 2.20, 3.20};
  bool ok = true;
  std::ostringstream d;
  d << "all:";
  for (std::size_t m = 0; m < 4; ++m) {
    char buf[16];
    std::snprintf(buf, sizeof buf, " %.2f", s.mean_rank[m]);
    d << buf;
    ok = ok && std::abs(s.mean_rank[m] - all[m]) <= 0.01;
  }
  d << "  excluding LP 1-5:";
  for (std::size_t m = 0; m < 4; ++m) {
    char buf[16];
    std::snprintf(buf, sizeof buf, " %.2f", s.mean_rank_non_lp[m]);
    d << buf;
    ok = ok && std::abs(s.mean_rank_non_lp[m] - non_lp[m]) <= 0.01;
  }
  d << "  (GINN-KAN GINN KAN FC)";
  return {ok, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ginnkan acceptance run"};
  std::vector<int> only;
  bool strict = false;
  std::size_t jobs = 1, extended = 10000;
  std::string report = "acceptance_report.txt";
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  app.add_flag("--strict", strict, "exit 1 when any criterion fails");
  app.add_option("--jobs", jobs, "worker threads for the PINN cells");
  app.add_option("--extended-steps", extended, "step budget of the informational GINN rerun in criterion 5 (0: skip)");
  app.add_option("--report", report, "also write the lines here (ctest hides a passing test's output; '' to skip)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"autodiff oracle suite", autodiff_oracles},
      {"spline properties", spline_properties},
      {"PDE registry master oracle", registry_oracle},
      {"toy study direction", toy_direction},
      {"GINN limitation on trig rows", [&] { return limitation(extended); }},
      {"PINN suite (relaxed)", [&] { return pinn_suite(jobs); }},
      {"equation extraction", extraction},
      {"growth neutrality", growth_neutrality},
      {"CLI determinism", determinism},
      {"rank machinery", rank_machinery},
  };
  std::ofstream file;
  if (!report.empty()) file.open(report);
  auto emit = [&](const std::string& line) {
    std::cout << line << std::endl;
    if (file) file << line << std::endl;
  };
  std::size_t failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    ++ran;
    failed += !v.pass;
    emit("criterion " + std::to_string(id) + ": " + (v.pass ? "PASS" : "FAIL") + "  " + criteria[i].first + " | " +
         v.detail);
  }
  emit("acceptance: " + std::to_string(ran) + " criteria evaluated, " + std::to_string(ran - failed) + " passed, " +
       std::to_string(failed) + " failed");
  return strict && failed ? 1 : 0;
}
