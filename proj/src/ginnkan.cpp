// SPDX-License-Identifier: Apache-2.0
#include "ginnkan/ginnkan.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ginnkan::ginnkan_model {

using nn::Error;

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Normalizer fit_normalizer(std::span<const double> g, const kan::SplineGrid& grid) {
  Normalizer n;
  if (g.empty()) return n;
  const auto [mn, mx] = std::minmax_element(g.begin(), g.end());
  const double scale = std::max({1.0, std::abs(*mn), std::abs(*mx)});
  if (*mx - *mn > 1e-12 * scale) {
    n.alpha = (grid.hi() - grid.lo) / (*mx - *mn);
    n.beta = grid.lo - *mn * n.alpha;
  } else {
    n.alpha = 1.0;
    n.beta = 0.5 * (grid.lo + grid.hi()) - *mn;
  }
  return n;
}

}  // namespace

nn::Json Extraction::report() const {
  nn::Json edges_json = nn::Json::array();
  for (const EdgeReport& e : edges) {
    edges_json.push_back({{"layer", e.layer},
                          {"from", e.from},
                          {"to", e.to},
                          {"function", e.snap.name},
                          {"a", e.snap.a},
                          {"b", e.snap.b},
                          {"c", e.snap.c},
                          {"d", e.snap.d},
                          {"r2", e.snap.r2},
                          {"pruned", e.pruned},
                          {"poor_fit", e.poor}});
  }
  return {{"expression", expression}, {"ginn", ginn_expressions}, {"edges", edges_json}};
}

GinnKanModel::GinnKanModel(std::size_t features, std::uint64_t seed, kan::KanNet::Options kan_opts) {
  ginn_[0] = ginn::GinnNet(features, params_, "ginn1.", mix(seed, 1));
  ginn_[1] = ginn::GinnNet(features, params_, "ginn2.", mix(seed, 2));
  kan_opts.widths.front() = 2;
  std::mt19937_64 rng(mix(seed, 3));
  kan_ = kan::KanNet(kan_opts, params_, "kan.", rng);
}

ad::Var GinnKanModel::forward(ad::Graph& g, const nn::ParamNodes& params, std::span<const ad::Var> inputs) const {
  std::array<ad::Var, 2> u;
  for (std::size_t i = 0; i < 2; ++i) u[i] = ginn_[i].forward(g, params, inputs) * norm_[i].alpha + norm_[i].beta;
  return kan_.forward(g, params, u);
}

double GinnKanModel::eval(std::span<const double> x) const {
  std::array<double, 2> u;
  for (std::size_t i = 0; i < 2; ++i) u[i] = norm_[i](ginn_[i].eval(params_, x));
  return kan_.eval(params_, u);
}

std::array<std::vector<double>, 2> GinnKanModel::branch_outputs(
    std::span<const std::span<const double>> inputs) const {
  if (inputs.size() != input_dim()) throw Error("GINN-KAN input dimension mismatch");
  const std::size_t rows = inputs.empty() ? 0 : inputs[0].size();
  std::array<std::vector<double>, 2> out;
  std::vector<double> x(input_dim());
  for (std::size_t i = 0; i < 2; ++i) out[i].resize(rows);
  for (std::size_t n = 0; n < rows; ++n) {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = inputs[j][n];
    for (std::size_t i = 0; i < 2; ++i) out[i][n] = ginn_[i].eval(params_, x);
  }
  return out;
}

void GinnKanModel::prepare(std::span<const std::span<const double>> inputs) {
  ginn_[0].fit_shift(inputs);
  ginn_[1].fit_shift(inputs);
  const auto g = branch_outputs(inputs);
  for (std::size_t i = 0; i < 2; ++i) norm_[i] = fit_normalizer(g[i], kan_.grid(0, i));
}

void GinnKanModel::refit_normalizers(std::span<const std::span<const double>> inputs) {
  const auto g = branch_outputs(inputs);
  const std::size_t hidden = kan_.widths()[1];
  for (std::size_t i = 0; i < 2; ++i) {
    const kan::SplineGrid& grid = kan_.grid(0, i);
    const Normalizer old = norm_[i];
    const Normalizer now = fit_normalizer(g[i], grid);
    if (now.alpha == old.alpha && now.beta == old.beta) continue;
    // The old activation saw s*u' + t where the new one sees u'.
    const double s = old.alpha / now.alpha;
    const double t = old.beta - old.alpha * now.beta / now.alpha;
    const auto xs = kan::probe_points(grid, 201);
    for (std::size_t j = 0; j < hidden; ++j) {
      kan::SplineActivation act = kan_.edge(params_, 0, i, j);
      if (std::abs(act.w_spline) < 1e-12) continue;
      std::vector<double> ys(xs.size());
      for (std::size_t n = 0; n < xs.size(); ++n) {
        ys[n] = (kan::activation_forward(act, s * xs[n] + t) - act.w_base * kan::silu(xs[n])) / act.w_spline;
      }
      act.coef = kan::fit_coefficients(grid, xs, ys);
      kan_.set_edge(params_, 0, i, j, act);
    }
    norm_[i] = now;
  }
}

bool GinnKanModel::after_step(const nn::StepContext& ctx) {
  bool grew = false;
  for (auto& g : ginn_) grew = g.maybe_grow(params_, ctx) || grew;
  if (grew) return true;
  const std::size_t interval = ctx.config ? ctx.config->grid_update_interval : 200;
  const std::size_t done = ctx.step + 1;
  if (done % interval != 0 || done >= ctx.max_steps || ctx.inputs.empty()) return false;
  // Normalizers are frozen for the final quarter of training. The KAN grids
  // stay put: the normalizers already keep the branch outputs on them, and
  // re-gridding the first layer on top of that diverges on second-order PDEs.
  if (4 * done > 3 * ctx.max_steps) return false;
  refit_normalizers(ctx.inputs);
  return true;
}

nn::Json GinnKanModel::state() const {
  return {{"ginn", {ginn_[0].state(), ginn_[1].state()}},
          {"kan", kan_.state()},
          {"normalizers", {{norm_[0].alpha, norm_[0].beta}, {norm_[1].alpha, norm_[1].beta}}}};
}

void GinnKanModel::load_state(const nn::Json& j) {
  ginn_[0].load_state(j.at("ginn").at(0), params_);
  ginn_[1].load_state(j.at("ginn").at(1), params_);
  kan_.load_state(j.at("kan"), params_, "kan.");
  for (std::size_t i = 0; i < 2; ++i) {
    norm_[i].alpha = j.at("normalizers").at(i).at(0).get<double>();
    norm_[i].beta = j.at("normalizers").at(i).at(1).get<double>();
  }
}

Extraction GinnKanModel::extract(std::span<const std::string> names) const {
  std::vector<std::string> fallback;
  if (names.empty()) {
    fallback = sym::default_names(input_dim());
    names = fallback;
  }
  Extraction out;
  std::vector<sym::LinearForm> arg(2);
  for (std::size_t i = 0; i < 2; ++i) {
    const sym::LinearForm g = ginn::equation_terms(ginn_[i].snapshot(params_), names);
    out.ginn_expressions[i] = g.render();
    arg[i] = norm_[i].alpha * g + sym::LinearForm(norm_[i].beta);
  }
  out.expression = kan::compose_symbolic(kan_, params_, std::move(arg), &out.edges).render();
  return out;
}

std::string extract_equation(const GinnKanModel& model, std::span<const std::string> names) {
  return model.extract(names).expression;
}

}  // namespace ginnkan::ginnkan_model
