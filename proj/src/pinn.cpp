// SPDX-License-Identifier: Apache-2.0
#include "ginnkan/pinn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>

#include "ginnkan/fc.hpp"
#include "ginnkan/models.hpp"
#include "ginnkan/parallel.hpp"
#include "ginnkan/stats.hpp"

namespace ginnkan::pinn {

using ad::Var;
using nn::Error;

namespace {

constexpr double kPi = std::numbers::pi;

double gauss_bump(double x) {
  const double s = kPi / 4;
  return std::exp(-(x - kPi) * (x - kPi) / (2 * s * s));
}
Var gauss_bump(Var x) {
  const double s = kPi / 4;
  return ad::exp(-1.0 / (2 * s * s) * ad::square(x - kPi));
}

BoundaryCondition periodic() {
  BoundaryCondition b;
  b.periodic = true;
  return b;
}
BoundaryCondition dirichlet(double x, std::function<double(double)> g) { return {false, x, std::move(g)}; }
InitialCondition value_ic(std::function<double(double)> f) { return {0, std::move(f)}; }
InitialCondition rate_ic(std::function<double(double)> f) { return {1, std::move(f)}; }

std::vector<PdeProblem> build_registry() {
  std::vector<PdeProblem> r;
  auto add = [&](std::string id, std::string name, double xl, double xh, double th, int ox, int ot) -> PdeProblem& {
    PdeProblem p;
    p.id = std::move(id);
    p.name = std::move(name);
    p.x_lo = xl;
    p.x_hi = xh;
    p.t_hi = th;
    p.order_x = ox;
    p.order_t = ot;
    r.push_back(std::move(p));
    return r.back();
  };

  {
    auto& p = add("inviscid_burgers", "Inviscid Burgers'", 0, 2, 1, 1, 1);
    p.residual = [](ad::Graph&, const Fields& f) { return f.ut + f.u * f.ux; };
    p.ics = {value_ic([](double x) { return 2 * x + 1; })};
    p.bcs = {dirichlet(0, [](double t) { return 1 / (2 * t + 1); })};
    p.solution = [](double x, double t) { return (2 * x + 1) / (2 * t + 1); };
    p.solution_graph = [](Var x, Var t) { return (2.0 * x + 1.0) / (2.0 * t + 1.0); };
  }
  for (int c : {30, 5}) {
    auto& p = add(c == 30 ? "convection_1" : "convection_2", c == 30 ? "Convection 1" : "Convection 2", 0, 2 * kPi,
                  1, 1, 1);
    const double beta = c;
    p.residual = [beta](ad::Graph&, const Fields& f) { return f.ut + beta * f.ux; };
    p.ics = {value_ic([](double x) { return std::sin(x); })};
    p.bcs = {periodic()};
    p.solution = [beta](double x, double t) { return std::sin(x - beta * t); };
    p.solution_graph = [beta](Var x, Var t) { return ad::sin(x - beta * t); };
  }
  {
    auto& p = add("diffusion", "Diffusion", -1, 1, 1, 2, 1);
    p.residual = [](ad::Graph&, const Fields& f) {
      return f.ut - f.uxx + (1 - kPi * kPi) * ad::exp(-f.t) * ad::sin(kPi * f.x);
    };
    p.ics = {value_ic([](double x) { return std::sin(kPi * x); })};
    p.bcs = {dirichlet(-1, [](double) { return 0.0; }), dirichlet(1, [](double) { return 0.0; })};
    p.solution = [](double x, double t) { return std::exp(-t) * std::sin(kPi * x); };
    p.solution_graph = [](Var x, Var t) { return ad::exp(-t) * ad::sin(kPi * x); };
  }
  {
    auto& p = add("fokker_planck", "Fokker-Planck", 0, 1, 1, 2, 1);
    p.residual = [](ad::Graph&, const Fields& f) {
      return f.ut - (f.x + 1.0) * f.ux - ad::square(f.x) * ad::exp(f.t) * f.uxx;
    };
    p.ics = {value_ic([](double x) { return x + 1; })};
    p.bcs = {dirichlet(0, [](double t) { return std::exp(t); })};
    p.solution = [](double x, double t) { return (x + 1) * std::exp(t); };
    p.solution_graph = [](Var x, Var t) { return (x + 1.0) * ad::exp(t); };
  }
  {
    auto& p = add("reaction", "Reaction", 0, 2 * kPi, 1, 1, 1);
    p.residual = [](ad::Graph&, const Fields& f) { return f.ut - 3.0 * f.u * (1.0 - f.u); };
    p.ics = {value_ic([](double x) { return gauss_bump(x); })};
    p.bcs = {periodic()};
    p.solution = [](double x, double t) {
      const double h = gauss_bump(x), e = std::exp(3 * t);
      return h * e / (h * e + 1 - h);
    };
    p.solution_graph = [](Var x, Var t) {
      Var h = gauss_bump(x), he = h * ad::exp(3.0 * t);
      return he / (he + 1.0 - h);
    };
  }
  {
    auto& p = add("telegraph", "Telegraph", 0, 1, 1, 2, 2);
    p.residual = [](ad::Graph&, const Fields& f) { return f.utt + 2.0 * f.ut + f.u - f.uxx; };
    p.ics = {rate_ic([](double) { return -1.0; }), value_ic([](double x) { return std::exp(x) + 1; })};
    p.bcs = {dirichlet(0, [](double t) { return std::exp(-t) + 1; })};
    p.solution = [](double x, double t) { return std::exp(x) + std::exp(-t); };
    p.solution_graph = [](Var x, Var t) { return ad::exp(x) + ad::exp(-t); };
  }
  {
    auto& p = add("wave", "Wave", 0, kPi, 3, 2, 2);
    p.residual = [](ad::Graph&, const Fields& f) { return f.utt - f.uxx; };
    p.ics = {rate_ic([](double x) { return std::sin(x); }), value_ic([](double) { return 0.0; })};
    p.bcs = {dirichlet(0, [](double) { return 0.0; }), dirichlet(kPi, [](double) { return 0.0; })};
    p.solution = [](double x, double t) { return std::sin(x) * std::sin(t); };
    p.solution_graph = [](Var x, Var t) { return ad::sin(x) * ad::sin(t); };
  }
  {
    auto& p = add("toy_1", "Toy 1", -1, 1, 1, 1, 1);
    p.residual = [](ad::Graph&, const Fields& f) { return f.ut - (f.x + 2.0) / (f.t + 1.0) * f.ux; };
    p.ics = {value_ic([](double x) { return std::cos(x + 2); })};
    p.bcs = {dirichlet(1, [](double t) { return std::cos(3 * (t + 1)); })};
    p.solution = [](double x, double t) { return std::cos((t + 1) * (x + 2)); };
    p.solution_graph = [](Var x, Var t) { return ad::cos((t + 1.0) * (x + 2.0)); };
  }
  {
    auto& p = add("toy_2", "Toy 2", 0, 2, 1, 1, 1);
    p.residual = [](ad::Graph&, const Fields& f) { return f.ut + f.x / (f.t + 1.0) * f.ux; };
    p.ics = {value_ic([](double x) { return std::exp(-x); })};
    p.bcs = {dirichlet(0, [](double) { return 1.0; })};
    p.solution = [](double x, double t) { return std::exp(-x / (t + 1)); };
    p.solution_graph = [](Var x, Var t) { return ad::exp(-x / (t + 1.0)); };
  }
  {
    auto& p = add("lp1", "LP 1", 0, 2, 1, 1, 1);
    p.lp = true;
    p.residual = [](ad::Graph&, const Fields& f) { return f.ut - 4.0 * f.t * f.ux; };
    p.ics = {value_ic([](double x) { return 3 * x + 1; })};
    p.bcs = {dirichlet(0, [](double t) { return 6 * t * t + 1; })};
    p.solution = [](double x, double t) { return 1 + 3 * x + 6 * t * t; };
    p.solution_graph = [](Var x, Var t) { return 1.0 + 3.0 * x + 6.0 * ad::square(t); };
  }
  {
    auto& p = add("lp2", "LP 2", 0, 2, 1, 1, 1);
    p.lp = true;
    p.residual = [](ad::Graph&, const Fields& f) { return f.ut - f.x / (1.0 + f.t) * f.ux; };
    p.ics = {value_ic([](double x) { return x + 1; })};
    p.bcs = {dirichlet(0, [](double) { return 1.0; }), dirichlet(1, [](double t) { return 2 + t; })};
    p.solution = [](double x, double t) { return 1 + x * (1 + t); };
    p.solution_graph = [](Var x, Var t) { return 1.0 + x * (1.0 + t); };
  }
  {
    auto& p = add("lp3", "LP 3", 0, 2, 1, 1, 1);
    p.lp = true;
    p.residual = [](ad::Graph&, const Fields& f) { return f.x * f.ut - 25.0 * f.ux; };
    p.ics = {value_ic([](double x) { return x * x + 1; })};
    p.bcs = {dirichlet(0, [](double t) { return 50 * t + 1; })};
    p.solution = [](double x, double t) { return 1 + x * x + 50 * t; };
    p.solution_graph = [](Var x, Var t) { return 1.0 + ad::square(x) + 50.0 * t; };
  }
  {
    auto& p = add("lp4", "LP 4", 0, 2, 1, 1, 1);
    p.lp = true;
    p.residual = [](ad::Graph&, const Fields& f) { return 6.0 * f.x * f.ut - f.ux; };
    p.ics = {value_ic([](double x) { return 15 * x * x + 1; })};
    p.bcs = {dirichlet(0, [](double t) { return 5 * t + 1; })};
    p.solution = [](double x, double t) { return 1 + 15 * x * x + 5 * t; };
    p.solution_graph = [](Var x, Var t) { return 1.0 + 15.0 * ad::square(x) + 5.0 * t; };
  }
  {
    auto& p = add("lp5", "LP 5", 0, 2, 1, 2, 1);
    p.lp = true;
    p.residual = [](ad::Graph&, const Fields& f) {
      return f.ut - 0.5 * f.uxx + 3.0 * f.x - 4.0 * ad::powi(f.t, 3);
    };
    p.ics = {value_ic([](double x) { return 1 + x * x + x * x * x; })};
    p.bcs = {dirichlet(0, [](double t) { return 1 + t + t * t * t * t; })};
    p.solution = [](double x, double t) { return 1 + x * x + x * x * x + t + t * t * t * t; };
    p.solution_graph = [](Var x, Var t) {
      return 1.0 + ad::square(x) + ad::powi(x, 3) + t + ad::powi(t, 4);
    };
  }
  return r;
}

std::string normalize_id(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '_' || c == '-' || c == ' ' || c == '\'') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::uint64_t heldout_seed(std::uint64_t seed) { return seed ^ 0xA5A5A5A5DEADBEEFull; }

}  // namespace

const std::vector<PdeProblem>& registry() {
  static const std::vector<PdeProblem> r = build_registry();
  return r;
}

const PdeProblem& problem(std::string_view id) {
  const std::string key = normalize_id(id);
  for (const PdeProblem& p : registry()) {
    if (normalize_id(p.id) == key) return p;
  }
  std::string known;
  for (const PdeProblem& p : registry()) known += (known.empty() ? "" : ", ") + p.id;
  throw Error("unknown PDE '" + std::string(id) + "' (known: " + known + ")");
}

CollocationSet sample_collocation(const PdeProblem& p, std::size_t n, std::uint64_t seed,
                                  std::size_t constraint_points) {
  if (n == 0) throw Error("sample_collocation: need at least one interior point");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(p.x_lo, p.x_hi), ut(0.0, p.t_hi);
  CollocationSet c;
  c.seed = seed;
  c.interior.x.resize(n);
  c.interior.t.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.interior.x[i] = ux(rng);
    c.interior.t[i] = p.t_hi - ut(rng);  // (0, T]
  }
  for (std::size_t k = 0; k < p.ics.size(); ++k) {
    PointSet s;
    for (std::size_t i = 0; i < constraint_points; ++i) {
      s.x.push_back(ux(rng));
      s.t.push_back(0.0);
    }
    c.ic.push_back(std::move(s));
  }
  for (const BoundaryCondition& b : p.bcs) {
    PointSet s;
    for (std::size_t i = 0; i < constraint_points; ++i) {
      s.x.push_back(b.periodic ? p.x_lo : b.x);
      s.t.push_back(p.t_hi - ut(rng));
    }
    c.bc.push_back(std::move(s));
  }
  return c;
}

std::array<std::vector<double>, 2> all_points(const CollocationSet& c) {
  std::array<std::vector<double>, 2> out;
  auto append = [&](const PointSet& s) {
    out[0].insert(out[0].end(), s.x.begin(), s.x.end());
    out[1].insert(out[1].end(), s.t.begin(), s.t.end());
  };
  append(c.interior);
  for (const auto& s : c.ic) append(s);
  for (const auto& s : c.bc) append(s);
  return out;
}

Fields fields_of(ad::Graph& g, Var u, Var x, Var t, int order_x, int order_t) {
  Fields f;
  f.x = x;
  f.t = t;
  f.u = u;
  if (order_x >= 1 || order_t >= 1) {
    const Var wrt[] = {x, t};
    const auto d = g.grad(u, wrt, true);
    if (order_x >= 1) f.ux = d[0];
    if (order_t >= 1) f.ut = d[1];
  }
  if (order_x >= 2) f.uxx = g.grad(f.ux, x, true);
  if (order_t >= 2) f.utt = g.grad(f.ut, t, true);
  return f;
}

Fields fields(ad::Graph& g, const nn::Model& model, const nn::ParamNodes& params, Var x, Var t, int order_x,
              int order_t) {
  const Var in[] = {x, t};
  return fields_of(g, model.forward(g, params, in), x, t, order_x, order_t);
}

void check_smoothness(const PdeProblem& p, const nn::Model& model) {
  const int need = std::max(p.order_x, p.order_t);
  if (model.max_smooth_order() < need) {
    throw Error("model '" + model.kind() + "' is smooth only to order " + std::to_string(model.max_smooth_order()) +
                " but " + p.id + " needs order " + std::to_string(need) +
                (model.kind().find("kan") != std::string::npos ? " (use spline degree >= 3)" : ""));
  }
}

// ---------------------------------------------------------------------------
// Loss assembly

namespace {

enum Part { kPhysics = 0, kIc = 1, kBc = 2 };

using Columns = std::vector<std::vector<double>>;

std::vector<std::span<const double>> spans(const Columns& c) { return {c.begin(), c.end()}; }

nn::Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const nn::Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

struct PinnLoss::Impl {
  PdeProblem p;
  CollocationSet c;
  double weight[3] = {1.0, 1.0, 1.0};
  bool fast = true;
  const nn::Model* model = nullptr;

  // Graph path: one program per term.
  struct Term {
    Part part;
    std::unique_ptr<nn::LossProgram> program;
    Columns data;
    std::size_t rows = 0;
  };
  std::vector<Term> terms;

  // FC jet path.
  struct Residual {
    std::unique_ptr<ad::Graph> g;
    std::vector<Var> in;  // x t u ux ut uxx utt, invalid where unused
    Var loss;
  };
  Residual residual;
  std::vector<std::unique_ptr<fc::JetEvaluator>> jets;

  void build_graph_terms() {
    terms.clear();
    const int ox = p.order_x, ot = p.order_t;
    const PdeProblem* prob = &p;
    {
      Term term{kPhysics, nullptr, {c.interior.x, c.interior.t}, c.interior.size()};
      term.program = std::make_unique<nn::LossProgram>(
          2, [this, prob, ox, ot](ad::Graph& g, const nn::ParamNodes& params, std::span<const Var> in) {
            const Fields f = fields(g, *model, params, in[0], in[1], ox, ot);
            return ad::square(prob->residual(g, f));
          });
      terms.push_back(std::move(term));
    }
    for (std::size_t k = 0; k < p.ics.size(); ++k) {
      const InitialCondition& ic = p.ics[k];
      const PointSet& s = c.ic[k];
      std::vector<double> target;
      for (double x : s.x) target.push_back(ic.f(x));
      Term term{kIc, nullptr, {s.x, s.t, target}, s.size()};
      const int order = ic.t_order;
      term.program = std::make_unique<nn::LossProgram>(
          3, [this, order](ad::Graph& g, const nn::ParamNodes& params, std::span<const Var> in) {
            const Fields f = fields(g, *model, params, in[0], in[1], 0, order);
            return ad::square((order == 1 ? f.ut : f.u) - in[2]);
          });
      terms.push_back(std::move(term));
    }
    for (std::size_t k = 0; k < p.bcs.size(); ++k) {
      const BoundaryCondition& bc = p.bcs[k];
      const PointSet& s = c.bc[k];
      if (bc.periodic) {
        Term term{kBc, nullptr, {std::vector<double>(s.size(), p.x_lo), std::vector<double>(s.size(), p.x_hi), s.t},
                  s.size()};
        term.program = std::make_unique<nn::LossProgram>(
            3, [this](ad::Graph& g, const nn::ParamNodes& params, std::span<const Var> in) {
              const Var lo[] = {in[0], in[2]}, hi[] = {in[1], in[2]};
              return ad::square(model->forward(g, params, lo) - model->forward(g, params, hi));
            });
        terms.push_back(std::move(term));
      } else {
        std::vector<double> target;
        for (double t : s.t) target.push_back(bc.g(t));
        Term term{kBc, nullptr, {s.x, s.t, target}, s.size()};
        term.program = std::make_unique<nn::LossProgram>(
            3, [this](ad::Graph& g, const nn::ParamNodes& params, std::span<const Var> in) {
              const Var xt[] = {in[0], in[1]};
              return ad::square(model->forward(g, params, xt) - in[2]);
            });
        terms.push_back(std::move(term));
      }
    }
  }

  LossParts evaluate_graph(std::span<double> grad) {
    if (terms.empty()) build_graph_terms();
    LossParts parts;
    double* slot[3] = {&parts.physics, &parts.ic, &parts.bc};
    for (Term& term : terms) {
      if (term.rows == 0) continue;
      const double mean_w = 1.0 / static_cast<double>(term.rows);
      const double w = weight[term.part];
      double v;
      if (!grad.empty() && w != 0.0) {
        v = term.program->accumulate(model->parameters(), spans(term.data), w * mean_w, grad) / w;
      } else {
        v = term.program->value(model->parameters(), spans(term.data), mean_w);
      }
      *slot[term.part] += v;
    }
    return parts;
  }

  fc::JetEvaluator& jet(std::size_t i, int ox, int ot) {
    if (jets.size() <= i) jets.resize(i + 1);
    if (!jets[i]) jets[i] = std::make_unique<fc::JetEvaluator>(static_cast<const fc::FcModel&>(*model), ox, ot);
    return *jets[i];
  }

  LossParts evaluate_fc(std::span<double> grad) {
    const auto& store = model->parameters();
    const bool backward = !grad.empty();
    LossParts parts;
    std::size_t next_jet = 0;

    // Physics: jets through the network, residual adjoints from a small graph.
    {
      fc::JetEvaluator& je = jet(next_jet++, p.order_x, p.order_t);
      const nn::Vector x = to_vector(c.interior.x), t = to_vector(c.interior.t);
      const fc::Jet& j = je.forward(store, x, t);
      const std::size_t n = c.interior.size();
      const nn::Vector* cols[7] = {&x, &t, &j.u, &j.ux, &j.ut, &j.uxx, &j.utt};
      if (!residual.g) {
        residual.g = std::make_unique<ad::Graph>(n);
        residual.in.assign(7, Var{});
        for (int k = 0; k < 7; ++k) {
          if (cols[k]->size() == static_cast<Eigen::Index>(n)) {
            residual.in[k] = residual.g->input(std::span<const double>(cols[k]->data(), n));
          }
        }
        Fields f{residual.in[0], residual.in[1], residual.in[2], residual.in[3],
                 residual.in[4], residual.in[5], residual.in[6]};
        residual.loss = ad::square(p.residual(*residual.g, f));
      } else {
        ad::Bindings b;
        for (int k = 0; k < 7; ++k) {
          if (residual.in[k].valid()) b.inputs.emplace_back(residual.in[k], std::span<const double>(cols[k]->data(), n));
        }
        residual.g->evaluate(b);
      }
      const auto lv = residual.g->values(residual.loss);
      double sum = 0.0;
      for (double v : lv) sum += v;
      parts.physics = sum / static_cast<double>(n);
      if (backward) {
        const std::vector<double> seed(n, weight[kPhysics] / static_cast<double>(n));
        residual.g->backward(residual.loss, seed);
        fc::Jet adj;
        auto take = [&](int k, nn::Vector& dst) {
          if (!residual.in[k].valid()) return;
          const auto a = residual.g->adjoint(residual.in[k]);
          dst = Eigen::Map<const nn::Vector>(a.data(), static_cast<Eigen::Index>(n));
        };
        take(2, adj.u);
        take(3, adj.ux);
        take(4, adj.ut);
        take(5, adj.uxx);
        take(6, adj.utt);
        je.backward(store, adj, grad);
      }
    }
    for (std::size_t k = 0; k < p.ics.size(); ++k) {
      const InitialCondition& ic = p.ics[k];
      const PointSet& s = c.ic[k];
      fc::JetEvaluator& je = jet(next_jet++, 0, ic.t_order);
      if (s.size() == 0) continue;
      const nn::Vector x = to_vector(s.x);
      const fc::Jet& j = je.forward(store, x, to_vector(s.t));
      const nn::Vector& v = ic.t_order == 1 ? j.ut : j.u;
      nn::Vector d(v.size());
      for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = v(i) - ic.f(x(i));
      const double m = static_cast<double>(d.size());
      parts.ic += d.squaredNorm() / m;
      if (backward) {
        fc::Jet adj;
        (ic.t_order == 1 ? adj.ut : adj.u) = (2.0 * weight[kIc] / m) * d;
        je.backward(store, adj, grad);
      }
    }
    for (std::size_t k = 0; k < p.bcs.size(); ++k) {
      const BoundaryCondition& bc = p.bcs[k];
      const PointSet& s = c.bc[k];
      if (s.size() == 0) continue;
      const nn::Vector t = to_vector(s.t);
      const double m = static_cast<double>(s.size());
      if (bc.periodic) {
        fc::JetEvaluator& lo = jet(next_jet++, 0, 0);
        fc::JetEvaluator& hi = jet(next_jet++, 0, 0);
        const nn::Vector d = lo.forward(store, nn::Vector::Constant(t.size(), p.x_lo), t).u -
                             hi.forward(store, nn::Vector::Constant(t.size(), p.x_hi), t).u;
        parts.bc += d.squaredNorm() / m;
        if (backward) {
          fc::Jet adj;
          adj.u = (2.0 * weight[kBc] / m) * d;
          lo.backward(store, adj, grad);
          adj.u = -adj.u;
          hi.backward(store, adj, grad);
        }
      } else {
        fc::JetEvaluator& je = jet(next_jet++, 0, 0);
        const fc::Jet& j = je.forward(store, to_vector(s.x), t);
        nn::Vector d(t.size());
        for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = j.u(i) - bc.g(t(i));
        parts.bc += d.squaredNorm() / m;
        if (backward) {
          fc::Jet adj;
          adj.u = (2.0 * weight[kBc] / m) * d;
          je.backward(store, adj, grad);
        }
      }
    }
    return parts;
  }
};

PinnLoss::PinnLoss(const PdeProblem& p, const CollocationSet& c, double ic_weight, double bc_weight, bool fast_paths)
    : impl_(std::make_unique<Impl>()) {
  if (c.ic.size() != p.ics.size() || c.bc.size() != p.bcs.size()) {
    throw Error("collocation set does not match the problem's constraints");
  }
  impl_->p = p;
  impl_->c = c;
  impl_->weight[kIc] = ic_weight;
  impl_->weight[kBc] = bc_weight;
  impl_->fast = fast_paths;
}

PinnLoss::~PinnLoss() = default;
PinnLoss::PinnLoss(PinnLoss&&) noexcept = default;

LossParts PinnLoss::evaluate(const nn::Model& model, std::span<double> grad) {
  if (model.input_dim() != 2) throw Error("PINN models take inputs (x, t)");
  if (!grad.empty() && grad.size() != model.parameters().size()) throw Error("PinnLoss: gradient size mismatch");
  if (impl_->model != &model) {
    invalidate();
    impl_->model = &model;
  }
  if (impl_->fast && dynamic_cast<const fc::FcModel*>(&model)) return impl_->evaluate_fc(grad);
  return impl_->evaluate_graph(grad);
}

void PinnLoss::invalidate() {
  impl_->terms.clear();
  impl_->jets.clear();
}

// ---------------------------------------------------------------------------
// Training

nn::TrainConfig default_config() {
  nn::TrainConfig c;
  c.max_steps = 5000;
  return c;
}

SolveResult train_pinn(std::unique_ptr<nn::Model> model, const PdeProblem& p, const nn::TrainConfig& config,
                       std::size_t n) {
  if (!model) throw Error("train_pinn: no model");
  config.validate();
  check_smoothness(p, *model);
  const auto start = std::chrono::steady_clock::now();
  const CollocationSet c = sample_collocation(p, n, config.seed);
  {
    const auto pts = all_points(c);
    const std::vector<std::span<const double>> cols{pts[0], pts[1]};
    model->prepare(cols);
  }
  PinnLoss loss(p, c, config.ic_weight, config.bc_weight);
  const std::vector<std::span<const double>> interior{c.interior.x, c.interior.t};

  SolveResult out;
  out.loss_history.reserve(config.max_steps);
  std::vector<double> grad;
  for (std::size_t step = 0; step < config.max_steps; ++step) {
    grad.assign(model->parameters().size(), 0.0);
    double total;
    try {
      total = loss.evaluate(*model, grad).total(config.ic_weight, config.bc_weight);
    } catch (const ad::NonFiniteError& e) {
      throw nn::TrainingError(step, std::string("non-finite value in the PINN loss (") + ad::op_name(e.op()) + ")");
    }
    if (!std::isfinite(total)) throw nn::TrainingError(step, "PINN loss is not finite");
    out.loss_history.push_back(total);
    nn::adam_step(model->parameters(), grad, config.lr);
    nn::StepContext ctx;
    ctx.step = step;
    ctx.max_steps = config.max_steps;
    ctx.loss_history = out.loss_history;
    ctx.inputs = interior;
    ctx.config = &config;
    if (model->after_step(ctx)) loss.invalidate();
  }

  auto eval_mse = [&](const PointSet& s) {
    const std::vector<std::span<const double>> cols{s.x, s.t};
    const auto pred = model->predict(cols);
    std::vector<double> truth(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) truth[i] = p.solution(s.x[i], s.t[i]);
    return nn::mse(pred, truth);
  };
  out.mse = eval_mse(c.interior);
  out.heldout_mse = eval_mse(sample_collocation(p, n, heldout_seed(config.seed), 0).interior);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.model = std::move(model);
  return out;
}

SolveResult solve(const PdeProblem& p, std::string_view kind, const nn::TrainConfig& config, std::size_t n) {
  return train_pinn(make_model(kind, 2, config.seed), p, config, n);
}

std::vector<SuiteCell> run_suite(const std::vector<std::string>& pdes, const std::vector<std::string>& kinds,
                                 const std::vector<std::uint64_t>& seeds, const nn::TrainConfig& config,
                                 std::size_t jobs, std::size_t n, const CellCallback& on_result) {
  std::vector<SuiteCell> cells;
  for (const auto& pde : pdes)
    for (const auto& kind : kinds)
      for (std::uint64_t seed : seeds) {
        SuiteCell cell;
        cell.pde = problem(pde).id;
        cell.model = kind;
        cell.seed = seed;
        cells.push_back(std::move(cell));
      }

  auto run = [&](SuiteCell& cell) {
    nn::TrainConfig cfg = config;
    cfg.seed = cell.seed;
    try {
      const SolveResult r = solve(problem(cell.pde), cell.model, cfg, n);
      cell.mse = r.mse;
      cell.heldout_mse = r.heldout_mse;
      cell.seconds = r.seconds;
      if (on_result) on_result(cell, r);
    } catch (const std::exception& e) {
      cell.mse = cell.heldout_mse = std::numeric_limits<double>::infinity();
      cell.failure = e.what();
    }
  };
  parallel_for(cells.size(), jobs, [&](std::size_t i) { run(cells[i]); });
  return cells;
}

SuiteSummary summarize(const std::vector<SuiteCell>& cells, const std::vector<std::string>& model_order) {
  SuiteSummary s;
  s.models = model_order;
  std::vector<std::string> unknown;
  for (const SuiteCell& c : cells) {
    if (std::find(s.models.begin(), s.models.end(), c.model) == s.models.end()) s.models.push_back(c.model);
    bool known = false;
    for (const auto& p : registry()) known = known || p.id == c.pde;
    if (!known && std::find(unknown.begin(), unknown.end(), c.pde) == unknown.end()) unknown.push_back(c.pde);
  }
  std::vector<bool> lp;
  for (const auto& p : registry()) {
    const bool present = std::any_of(cells.begin(), cells.end(), [&](const SuiteCell& c) { return c.pde == p.id; });
    if (present) {
      s.pdes.push_back(p.id);
      lp.push_back(p.lp);
    }
  }
  for (const auto& u : unknown) {
    s.pdes.push_back(u);
    lp.push_back(false);
  }
  std::map<std::pair<std::string, std::string>, std::vector<double>> by_cell;
  for (const SuiteCell& c : cells) {
    by_cell[{c.pde, c.model}].push_back(c.failure.empty() ? c.mse : std::numeric_limits<double>::infinity());
  }
  const double inf = std::numeric_limits<double>::infinity();
  s.mean_rank.assign(s.models.size(), 0.0);
  s.mean_rank_non_lp.assign(s.models.size(), 0.0);
  std::size_t non_lp = 0;
  for (std::size_t i = 0; i < s.pdes.size(); ++i) {
    std::vector<double> med;
    for (const auto& m : s.models) {
      const auto it = by_cell.find({s.pdes[i], m});
      med.push_back(it == by_cell.end() ? inf : stats::median(it->second));
    }
    const auto r = stats::average_ranks(med);
    for (std::size_t j = 0; j < s.models.size(); ++j) {
      s.mean_rank[j] += r[j];
      if (!lp[i]) s.mean_rank_non_lp[j] += r[j];
    }
    if (!lp[i]) ++non_lp;
    s.median.push_back(std::move(med));
    s.rank.push_back(r);
  }
  for (std::size_t j = 0; j < s.models.size(); ++j) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.mean_rank[j] = s.pdes.empty() ? nan : s.mean_rank[j] / static_cast<double>(s.pdes.size());
    s.mean_rank_non_lp[j] = non_lp ? s.mean_rank_non_lp[j] / static_cast<double>(non_lp) : nan;
  }
  return s;
}

}  // namespace ginnkan::pinn
